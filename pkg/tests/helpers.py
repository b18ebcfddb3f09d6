"""Fixture builders shared by the unit and acceptance tests."""
import numpy as np

from tvcert.calibrate import Shape, rasterize
from tvcert.certify import BlockDCT
from tvcert.grid import GridDomain, ScalarField, VectorField, discrete_gradient, discrete_tv

DISC = Shape.disc((0.5, 0.5), 0.3)
DISC_LAMBDA = 20.0

# criterion number -> (passed, detail), printed at the end of the session
ACCEPTANCE = {}


def disc_data(n: int) -> ScalarField:
    return rasterize(DISC, GridDomain.unit_square(n))


def smooth_field(d: GridDomain) -> VectorField:
    """Zero normal component on the unit-square boundary."""
    X, Y = d.coordinates()
    gx = np.sin(np.pi * X) * np.cos(np.pi * Y)
    gy = np.sin(np.pi * Y) * np.cos(np.pi * X)
    return VectorField(d, 0.5 * np.stack([gx, gy], -1)).compatible_part()


def forged_pair(n: int = 8):
    """``u* = -div g`` with ``|g| = 2`` on a block: not a subgradient anywhere."""
    d = GridDomain.unit_square(n)
    X, _ = d.coordinates()
    g = np.zeros((n, n, 2))
    g[n // 4 : 3 * n // 4, n // 4 : 3 * n // 4, 0] = 2.0
    field = VectorField(d, g)
    return ScalarField(d, X), ScalarField(d, -field.divergence()), field


def ramp_pair(n: int = 16):
    """``u = x`` with ``g = (1, 0)`` everywhere, including the last column."""
    d = GridDomain.unit_square(n)
    X, _ = d.coordinates()
    g = VectorField(d, np.broadcast_to([1.0, 0.0], (n, n, 2)))
    return ScalarField(d, X), ScalarField(d, -g.divergence()), g


def tv_gradient_field(u: ScalarField) -> VectorField:
    """``grad u / |grad u|`` (0 where the gradient vanishes): the TV gradient."""
    grad = discrete_gradient(u)
    norm = np.hypot(grad[..., 0], grad[..., 1])
    safe = np.where(norm > 0, norm, 1.0)
    return VectorField(u.domain, np.where(norm[..., None] > 0, grad / safe[..., None], 0.0))


def jpeg_case(seed: int, kind: str):
    """8x8 block where one coefficient sits at an active bound (or strictly inside).

    ``kind`` is ``"upper"``, ``"lower"`` or ``"interior"``. ``u`` has a
    nowhere-vanishing gradient, so TV is differentiable there and
    ``g = grad u / |grad u|`` is the only candidate field. Every other
    coefficient is pinned by a singleton interval.
    """
    rng = np.random.default_rng(seed)
    d = GridDomain.full(8, 8, 1.0 / 8)
    X, Y = d.coordinates()
    u = ScalarField(d, 2.0 * X + 1.3 * Y + 0.3 * rng.standard_normal((8, 8)))
    dct = BlockDCT(8)
    c = dct.forward(u.values)
    lower, upper = c.copy(), c.copy()
    n = np.unravel_index(int(rng.integers(1, 64)), (8, 8))
    if kind in ("upper", "interior"):
        lower[n] -= 1.0
    if kind in ("lower", "interior"):
        upper[n] += 1.0
    return u, dct, lower, upper, tv_gradient_field(u), n


def feasible_descent(u: ScalarField, dct: BlockDCT, n, kind: str) -> bool:
    """Does some feasible move of coefficient ``n`` decrease TV to first order?"""
    atom = dct.atom(n, u.domain.shape)
    moves = {"upper": [-atom], "lower": [atom], "interior": [atom, -atom]}[kind]
    return any(directional_derivative(u, m) < -1e-6 for m in moves)


def directional_derivative(u: ScalarField, direction: np.ndarray, t: float = 1e-7) -> float:
    """Central finite difference of TV along ``direction``."""
    d = u.domain
    plus = discrete_tv(ScalarField(d, u.values + t * direction))
    minus = discrete_tv(ScalarField(d, u.values - t * direction))
    return (plus - minus) / (2 * t)
