import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tvcert.calibrate import Shape, rasterize
from tvcert.grid import (
    GridDomain,
    ScalarField,
    VectorField,
    boundary_flux_term,
    discrete_divergence,
    discrete_gradient,
    discrete_tv,
    flux_divergence,
    gradient_measure,
    vector_inner,
)


def _random_mask(rng, n):
    mask = np.ones((n, n), bool)
    mask[: rng.integers(0, 3), :] = False
    mask[:, n - rng.integers(0, 3) :] = False
    mask[rng.integers(2, n - 2), rng.integers(2, n - 2)] = False
    return mask


def test_domain_rejects_bad_input():
    with pytest.raises(ValueError, match="spacing"):
        GridDomain.full(4, 4, 0.0)
    with pytest.raises(ValueError, match="mask shape"):
        GridDomain(4, 4, 1.0, np.ones((3, 4), bool))
    with pytest.raises(ValueError, match="interior"):
        GridDomain(3, 3, 1.0, np.eye(3, dtype=bool))


def test_pixel_centers_and_component_order():
    d = GridDomain.full(3, 4, 0.5)
    X, Y = d.coordinates()
    assert X[0].tolist() == [0.25, 0.75, 1.25, 1.75]
    assert Y[:, 0].tolist() == [0.25, 0.75, 1.25]
    # u = x has gradient (1, 0) wherever the stencil stays inside
    grad = discrete_gradient(ScalarField(d, X))
    assert np.allclose(grad[:, :-1, 0], 1.0)
    assert np.all(grad[..., 1] == 0.0)


def test_field_validation_and_zeroing_off_mask():
    d = GridDomain(4, 4, 1.0, np.pad(np.ones((3, 3), bool), ((0, 1), (0, 1))))
    u = ScalarField(d, np.full((4, 4), 2.0))
    assert u.values[3, 3] == 0.0
    with pytest.raises(ValueError, match="non-finite"):
        ScalarField(d, np.full((4, 4), np.nan))
    with pytest.raises(ValueError, match="components shape"):
        VectorField(d, np.zeros((4, 4)))


@settings(max_examples=40, deadline=None)
@given(st.integers(5, 12), st.integers(0, 2**31 - 1))
def test_adjointness_on_masked_grids(n, seed):
    rng = np.random.default_rng(seed)
    d = GridDomain(n, n, 1.0 / n, _random_mask(rng, n))
    u = ScalarField(d, rng.standard_normal((n, n)))
    g = VectorField(d, rng.standard_normal((n, n, 2))).compatible_part()
    lhs = vector_inner(discrete_gradient(u), g.components, d)
    rhs = u.inner(discrete_divergence(g))
    assert abs(lhs + rhs) <= 1e-10 * u.norm() * np.linalg.norm(g.components) * d.h


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_flux_divergence_boundary_identity(seed):
    rng = np.random.default_rng(seed)
    d = GridDomain(9, 9, 0.1, _random_mask(rng, 9))
    u = ScalarField(d, rng.standard_normal((9, 9)))
    g = VectorField(d, rng.standard_normal((9, 9, 2)))
    lhs = u.inner(flux_divergence(g)) + vector_inner(discrete_gradient(u), g.components, d)
    assert lhs == pytest.approx(boundary_flux_term(u, g), abs=1e-10)
    # compatible fields carry no boundary flux
    gc = g.compatible_part()
    assert boundary_flux_term(u, gc) == 0.0
    assert np.array_equal(flux_divergence(gc).values, discrete_divergence(gc).values)


def test_divergence_cache_matches_recomputation():
    rng = np.random.default_rng(1)
    d = GridDomain.full(6, 7)
    g = VectorField(d, rng.standard_normal((6, 7, 2)))
    first = g.divergence()
    assert np.array_equal(first, VectorField(d, g.components).divergence())


def test_tv_of_step_and_homogeneity():
    d = GridDomain.full(8, 8, 0.125)
    u = np.zeros((8, 8))
    u[:, 4:] = 1.0
    f = ScalarField(d, u)
    # vertical unit jump across a side of length 1
    assert discrete_tv(f) == pytest.approx(1.0)
    rng = np.random.default_rng(0)
    v = ScalarField(d, rng.standard_normal((8, 8)))
    for t in (-3.0, 0.5, 7.0):
        assert discrete_tv(v * t) == pytest.approx(abs(t) * discrete_tv(v), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_tv_midpoint_convex(seed):
    rng = np.random.default_rng(seed)
    d = GridDomain.full(6, 6)
    a = ScalarField(d, rng.standard_normal((6, 6)))
    b = ScalarField(d, rng.standard_normal((6, 6)))
    mid = discrete_tv((a + b) * 0.5)
    assert mid <= 0.5 * (discrete_tv(a) + discrete_tv(b)) + 1e-12


def test_smoothed_disc_perimeter():
    d = GridDomain.unit_square(256)
    chi = rasterize(Shape.disc((0.5, 0.5), 0.3), d)
    assert discrete_tv(chi) == pytest.approx(2 * np.pi * 0.3, rel=0.05)


def test_gradient_measure_mass_and_direction():
    rng = np.random.default_rng(3)
    d = GridDomain.full(7, 7, 0.2)
    u = ScalarField(d, rng.standard_normal((7, 7)))
    mu = gradient_measure(u, eps_zero=0.0)
    assert mu.total_mass == pytest.approx(discrete_tv(u), rel=1e-14)
    s = mu.support
    assert np.allclose(np.hypot(mu.direction[s][:, 0], mu.direction[s][:, 1]), 1.0)
    assert np.all(np.isnan(mu.direction[~s]))
    assert mu.integrate(np.ones(d.shape)) == pytest.approx(mu.total_mass)
    with pytest.raises(ValueError):
        gradient_measure(u, eps_zero=-1.0)
