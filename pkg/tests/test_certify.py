import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import feasible_descent, forged_pair, jpeg_case, ramp_pair, tv_gradient_field
from tvcert.certify import (
    CERTIFIED,
    INCONCLUSIVE,
    REFUTED,
    BlockDCT,
    Tolerances,
    certify,
    certify_interval_constrained,
    certify_rof,
    classify_regions,
    default_spec,
    subgradient_oracle,
)
from tvcert.dual import project_unit_ball
from tvcert.grid import GridDomain, ScalarField, VectorField, discrete_tv, gradient_measure


def test_constant_triple_is_certified_with_zero_residuals():
    d = GridDomain.full(8, 8)
    u = ScalarField(d, np.full((8, 8), 1.5))
    cert = certify(u, ScalarField(d, np.zeros((8, 8))), VectorField.zeros(d))
    assert cert.verdict == CERTIFIED
    assert cert.feasibility == cert.div_match == cert.integral_residual == cert.fulltrace_residual == 0.0
    assert subgradient_oracle(u, ScalarField(d, np.zeros((8, 8)))) <= 0.0


def test_forged_field_is_refuted_and_oracle_finds_violation():
    u, ustar, g = forged_pair()
    cert = certify(u, ustar, g)
    assert cert.verdict == REFUTED
    assert cert.feasibility == pytest.approx(1.0)
    assert subgradient_oracle(u, ustar, 1000, seed=0) > 0


def test_ramp_field_fails_zero_extension():
    u, ustar, g = ramp_pair()
    cert = certify(u, ustar, g)
    assert not cert.zero_ext_ok
    assert cert.verdict == REFUTED
    # g does equal sigma_u, so only the boundary condition fails
    assert cert.feasibility == 0.0


def test_rejects_mixed_domains():
    d = GridDomain.full(8, 8)
    e = GridDomain.full(8, 8, 0.5)
    with pytest.raises(ValueError, match="share one domain"):
        certify(ScalarField(d, np.zeros((8, 8))), ScalarField(e, np.zeros((8, 8))), VectorField.zeros(d))


def test_rof_certificate_and_json():
    rng = np.random.default_rng(0)
    u0 = ScalarField(GridDomain.full(16, 16), rng.standard_normal((16, 16)))
    cert, res = certify_rof(u0, 1.0)
    assert cert.verdict == CERTIFIED and cert.characterizations_agree
    assert subgradient_oracle(cert.u, cert.u_star) <= 1e-8 * max(1.0, discrete_tv(cert.u))
    data = json.loads(cert.to_json())
    for key in ("verdict", "feasibility", "zero_ext_ok", "div_match", "integral_residual",
                "fulltrace_residual", "regions", "tolerances", "trace"):
        assert key in data
    assert cert.to_json() == certify_rof(u0, 1.0)[0].to_json()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_one_sided_inequality_for_feasible_fields(seed):
    rng = np.random.default_rng(seed)
    d = GridDomain.full(8, 8, 1 / 8)
    g = project_unit_ball(VectorField(d, 2 * rng.standard_normal((8, 8, 2)))).compatible_part()
    v = ScalarField(d, rng.standard_normal((8, 8)))
    assert v.inner(ScalarField(d, g.divergence())) <= discrete_tv(v) + 1e-9
    # so the signed integral residual is never negative
    cert = certify(v, ScalarField(d, -g.divergence()), g, spec=None)
    assert cert.integral_signed >= -1e-12


def test_oracle_includes_the_equality_sample():
    d = GridDomain.full(8, 8)
    u = ScalarField(d, np.random.default_rng(1).standard_normal((8, 8)))
    g = tv_gradient_field(u)
    ustar = ScalarField(d, -g.divergence())
    assert subgradient_oracle(u, ustar, samples=1) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        subgradient_oracle(u, ustar, samples=0)


def test_oracle_is_deterministic_per_seed():
    u, ustar, _ = forged_pair()
    assert subgradient_oracle(u, ustar, 200, 3) == subgradient_oracle(u, ustar, 200, 3)


def test_regions():
    d = GridDomain.full(8, 8, 1 / 8)
    const = ScalarField(d, np.ones((8, 8)))
    rep = classify_regions(const, gradient_measure(const), 0.5)
    assert rep.zero.all() and not rep.jump.any()
    step = np.zeros((8, 8))
    step[:, 4:] = 1.0
    u = ScalarField(d, step)
    rep = classify_regions(u, gradient_measure(u), 0.5)
    assert rep.jump[:, 3].all() and rep.jump.sum() == 8
    assert np.allclose(rep.jump_normals[:, 3], [1.0, 0.0])
    assert np.allclose(rep.jump_gaps[:, 3], 1.0)
    X, _ = d.coordinates()
    ramp = ScalarField(d, 0.01 * X)
    rep = classify_regions(ramp, gradient_measure(ramp), 0.5)
    assert rep.smooth[:, :-1].all() and not rep.jump.any()
    with pytest.raises(ValueError):
        classify_regions(u, gradient_measure(u), 0.0)


def test_default_spec_only_on_large_rectangles():
    assert default_spec(GridDomain.full(16, 16)) is None
    assert default_spec(GridDomain.unit_square(128)) is not None
    mask = np.ones((128, 128), bool)
    mask[0, 0] = False
    assert default_spec(GridDomain(128, 128, 1 / 128, mask)) is None


def test_tolerances_validate_and_scale():
    with pytest.raises(ValueError):
        Tolerances(integral=0.0)
    t = Tolerances().for_resolution(512)
    assert t.fulltrace == pytest.approx(2.5e-2) and t.integral == 1e-3


def test_unresolved_trace_without_integral_is_inconclusive():
    d = GridDomain.unit_square(64)
    rng = np.random.default_rng(2)
    u = ScalarField(d, rng.standard_normal((64, 64)))
    g = project_unit_ball(VectorField(d, rng.standard_normal((64, 64, 2)))).compatible_part()
    cert = certify(u, ScalarField(d, -g.divergence()), g)
    assert not cert.trace.converged and not cert.integral_ok
    assert cert.verdict == INCONCLUSIVE


def test_singleton_intervals_reduce_to_feasibility():
    rng = np.random.default_rng(0)
    d = GridDomain.full(8, 8, 1 / 8)
    u = ScalarField(d, rng.standard_normal((8, 8)))
    dct = BlockDCT(8)
    c = dct.forward(u.values)
    g = tv_gradient_field(u)
    cert = certify_interval_constrained(u, dct, c, c, g)
    assert cert.kkt["counts"]["singleton"] == 64 and cert.kkt["sign_ok"]
    assert cert.verdict == CERTIFIED
    bad = VectorField(d, 2 * g.components)
    assert certify_interval_constrained(u, dct, c, c, bad).verdict == REFUTED


def test_huge_intervals_force_zero_divergence():
    d = GridDomain.full(8, 8, 1 / 8)
    u = ScalarField(d, np.random.default_rng(1).standard_normal((8, 8)))
    dct = BlockDCT(8)
    big = np.full((8, 8), 1e6)
    cert = certify_interval_constrained(u, dct, -big, big, tv_gradient_field(u))
    assert cert.kkt["counts"]["interior"] == 64
    assert cert.verdict == REFUTED
    const = ScalarField(d, np.ones((8, 8)))
    assert certify_interval_constrained(const, dct, -big, big, VectorField.zeros(d)).verdict == CERTIFIED


def test_interval_violation_is_rejected():
    d = GridDomain.full(8, 8, 1 / 8)
    u = ScalarField(d, np.ones((8, 8)))
    dct = BlockDCT(8)
    c = dct.forward(u.values)
    with pytest.raises(ValueError, match="outside its interval"):
        certify_interval_constrained(u, dct, c + 1, c + 2, VectorField.zeros(d))
    with pytest.raises(ValueError, match="lower bound above"):
        certify_interval_constrained(u, dct, c + 1, c, VectorField.zeros(d))


def test_dct_is_orthonormal():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((16, 24))
    dct = BlockDCT(8)
    assert np.allclose(dct.inverse(dct.forward(a)), a)
    assert np.linalg.norm(dct.forward(a)) == pytest.approx(np.linalg.norm(a))
    with pytest.raises(ValueError, match="multiple"):
        dct.forward(np.zeros((10, 8)))


@pytest.mark.parametrize("kind", ["upper", "lower", "interior"])
def test_sign_conditions_match_directional_test(kind):
    verdicts = set()
    for seed in range(8):
        u, dct, lower, upper, g, n = jpeg_case(seed, kind)
        cert = certify_interval_constrained(u, dct, lower, upper, g)
        assert (cert.verdict == CERTIFIED) == (not feasible_descent(u, dct, n, kind))
        verdicts.add(cert.verdict)
    # the one-sided cases see both outcomes, the interior case only refutations
    assert verdicts == ({REFUTED} if kind == "interior" else {CERTIFIED, REFUTED})
