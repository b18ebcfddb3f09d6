"""Solvers for ``min_u TV_h(u) + lam * ||u - u0||^2`` on a masked grid.

Both backends return a dual field ``g`` that is projected onto the unit ball
and zero-extension compatible; the primal iterate handed back is always the
one induced by the dual, ``u = u0 + div_h g / (2 lam)``, so that the reported
duality gap is exactly the integral-identity residual ``TV_h(u) + <u, div_h g>``.
The exception is a solution that is constant up to solver noise: it is snapped
to the mean of ``u0`` when that keeps the gap within tolerance.

Pixels listed in ``pinned`` keep their value ``u0`` (a Dirichlet condition);
the gap formula is unchanged because the pinned block drops out of the dual.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .grid import GridDomain, ScalarField, VectorField, _div_array, _grad_array, discrete_tv


class SolverLimitError(RuntimeError):
    """Raised when the iteration budget runs out before the gap target."""

    def __init__(self, message, gap, u=None, g=None):
        super().__init__(message)
        self.gap = gap
        self.u = u
        self.g = g


@dataclass
class RofResult:
    u: ScalarField
    g: VectorField
    gap: float
    iterations: int
    method: str

    def __iter__(self):
        # lets callers write ``u, g = solve_rof(...)``
        yield self.u
        yield self.g


def project_components(comps: np.ndarray) -> np.ndarray:
    norm = np.hypot(comps[..., 0], comps[..., 1])
    return comps / np.maximum(1.0, norm)[..., None]


def dual_pair(u0: ScalarField, lam: float, g: np.ndarray, pinned: np.ndarray | None = None):
    """Primal point induced by ``g``, the absolute gap and the primal objective."""
    d = u0.domain
    g = project_components(g)
    vx, vy = d.valid_stencils()
    g[..., 0] *= vx
    g[..., 1] *= vy
    div = _div_array(g, d)
    u = u0.values + div / (2.0 * lam)
    if pinned is not None:
        u = np.where(pinned, u0.values, u)
    u = ScalarField(d, u)
    tv = discrete_tv(u)
    gap = tv + float(np.sum(u.values * div)) * d.cell_area
    primal = tv + lam * float(np.sum((u.values - u0.values) ** 2)) * d.cell_area
    return u, VectorField(d, g, divergence_cache=div), max(gap, 0.0), primal


def rounding_floor(u0: ScalarField) -> float:
    """Gap that floating-point evaluation of TV cannot resolve for data like ``u0``."""
    d = u0.domain
    return 64.0 * np.finfo(float).eps * float(np.sum(np.abs(u0.values))) * d.h


def relative_gap(gap: float, primal: float, floor: float = 0.0) -> float:
    """``gap / primal``; gaps at or below ``floor`` count as exact."""
    if gap <= floor:
        return 0.0
    return gap / max(primal, np.finfo(float).tiny)


def difference_matrix(domain: GridDomain) -> sp.csr_matrix:
    """Sparse ``2N x N`` matrix of masked forward differences (not divided by h).

    Row ``2p`` is the x-difference at flat pixel ``p``, row ``2p + 1`` the y one.
    """
    H, W = domain.shape
    idx = np.arange(H * W).reshape(H, W)
    vx, vy = domain.valid_stencils()
    rows, cols, vals = [], [], []
    for valid, (di, dj), offset in ((vx, (0, 1), 0), (vy, (1, 0), 1)):
        ii, jj = np.nonzero(valid)
        p = idx[ii, jj]
        rows += [2 * p + offset, 2 * p + offset]
        cols += [idx[ii + di, jj + dj], p]
        vals += [np.ones(p.size), -np.ones(p.size)]
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(2 * H * W, H * W),
    )


def _thread_cap() -> int:
    raw = os.environ.get("TVCERT_THREADS", "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"TVCERT_THREADS must be an integer, got {raw!r}") from None


def _solve_conic(u0, lam, tol_gap, max_iter, pinned):
    import clarabel

    d = u0.domain
    n = d.height * d.width
    vx, vy = d.valid_stencils()
    cone = (vx | vy).ravel()
    cp = np.nonzero(cone)[0]
    m = cp.size
    D = difference_matrix(d)

    # objective scaled by 1/h: sum |D u| + lam h sum (u - u0)^2, variables [u, t]
    c = lam * d.h
    f0 = u0.values.ravel()
    free = d.mask.ravel().astype(float)
    if pinned is not None:
        free = free * ~pinned.ravel()
    P = sp.block_diag([sp.diags(2 * c * free), sp.csc_matrix((m, m))], format="csc")
    q = np.concatenate([-2 * c * free * f0, np.ones(m)])

    zeros_mm = sp.csr_matrix((m, m))
    t_rows = sp.hstack([sp.csr_matrix((m, n)), -sp.identity(m, format="csr")])
    x_rows = sp.hstack([-D[2 * cp], zeros_mm])
    y_rows = sp.hstack([-D[2 * cp + 1], zeros_mm])
    soc = sp.vstack([t_rows, x_rows, y_rows]).tocsr()
    soc = soc[np.arange(3 * m).reshape(3, m).T.ravel()]

    # off-mask and pinned pixels are fixed through equality rows
    fixed = ~d.mask.ravel()
    if pinned is not None:
        fixed = fixed | pinned.ravel()
    fixed_idx = np.nonzero(fixed)[0]
    eq = sp.csr_matrix(
        (np.ones(fixed_idx.size), (np.arange(fixed_idx.size), fixed_idx)),
        shape=(fixed_idx.size, n + m),
    )
    A = sp.vstack([eq, soc]).tocsc()
    b = np.concatenate([np.where(d.mask.ravel(), f0, 0.0)[fixed_idx], np.zeros(3 * m)])
    cones = [clarabel.SecondOrderConeT(3)] * m
    if fixed_idx.size:
        cones = [clarabel.ZeroConeT(int(fixed_idx.size))] + cones

    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_iter = max_iter
    inner_tol = min(1e-10, tol_gap * 1e-2)
    settings.tol_gap_abs = inner_tol
    settings.tol_gap_rel = inner_tol
    settings.tol_feas = inner_tol
    settings.tol_ktratio = 1e-8
    threads = _thread_cap()
    if threads > 1:
        settings.direct_solve_method = "faer"
        settings.max_threads = threads
    else:
        settings.direct_solve_method = "qdldl"
    sol = clarabel.DefaultSolver(P, q, A, b, cones, settings).solve()

    z = np.asarray(sol.z)[fixed_idx.size:].reshape(m, 3)
    g = np.zeros((n, 2))
    g[cp] = -z[:, 1:]
    return g.reshape(d.shape + (2,)), int(sol.iterations)


def _solve_primal_dual(u0, lam, tol_gap, max_iter, pinned, g0, check_every=20):
    d = u0.domain
    h2 = d.cell_area
    free = d.mask if pinned is None else d.mask & ~pinned
    if g0 is None:
        g = np.zeros(d.shape + (2,))
        u = u0.values.copy()
    else:
        # start from the primal point the warm-start field induces
        g = project_components(np.array(g0, float))
        u = dual_pair(u0, lam, g, pinned)[0].values
    ubar = u.copy()
    tau = 0.25 * d.h
    sigma = 1.0 / (8.0 * tau) * h2
    gamma = 2.0 * lam
    floor = rounding_floor(u0)
    best = None
    for it in range(1, max_iter + 1):
        g = project_components(g + sigma * _grad_array(ubar, d))
        div = _div_array(g, d)
        u_new = (u + tau * div + 2 * lam * tau * u0.values) / (1 + 2 * lam * tau)
        u_new = np.where(free, u_new, u0.values)
        theta = 1.0 / np.sqrt(1.0 + gamma * tau)
        tau *= theta
        sigma /= theta
        ubar = u_new + theta * (u_new - u)
        u = u_new
        if it % check_every == 0 or it == max_iter:
            pair = dual_pair(u0, lam, g, pinned)
            rel = relative_gap(pair[2], pair[3], floor)
            if best is None or rel < best[0]:
                best = (rel, pair)
            if rel <= tol_gap:
                return pair, it
    rel, pair = best
    raise SolverLimitError(
        f"primal-dual iteration stopped at relative gap {rel:.3e} > {tol_gap:.1e}",
        rel,
        pair[0],
        pair[1],
    )


def solve_rof(
    u0: ScalarField,
    lam: float,
    tol_gap: float = 1e-8,
    max_iter: int | None = None,
    *,
    pinned: np.ndarray | None = None,
    g0: np.ndarray | None = None,
    method: str = "auto",
) -> RofResult:
    """Minimise ``TV_h(u) + lam ||u - u0||^2`` and return a certified pair.

    ``method`` is ``"conic"`` (interior point through clarabel), ``"primal_dual"``
    (accelerated first-order iteration, accepts a warm start ``g0``) or
    ``"auto"``, which picks the conic solver unless a warm start is given.
    The relative gap is measured against the primal objective.
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    if not tol_gap > 0:
        raise ValueError(f"tol_gap must be positive, got {tol_gap}")
    d = u0.domain
    if pinned is not None:
        pinned = np.asarray(pinned, dtype=bool) & d.mask
        if pinned.shape != d.shape:
            raise ValueError("pinned mask shape does not match the domain")

    vals = u0.values[d.mask]
    if np.ptp(vals) == 0.0:
        return RofResult(ScalarField(d, u0.values), VectorField.zeros(d), 0.0, 0, "exact")

    if method == "auto":
        method = "primal_dual" if g0 is not None else "conic"
    if method == "conic":
        g, iters = _solve_conic(u0, lam, tol_gap, max_iter or 200, pinned)
        u, g, gap, primal = dual_pair(u0, lam, g, pinned)
        rel = relative_gap(gap, primal, rounding_floor(u0))
        if rel > tol_gap:
            raise SolverLimitError(
                f"interior point stopped at relative gap {rel:.3e} > {tol_gap:.1e}", rel, u, g
            )
    elif method == "primal_dual":
        (u, g, gap, primal), iters = _solve_primal_dual(
            u0, lam, tol_gap, max_iter or 200_000, pinned, g0
        )
        rel = relative_gap(gap, primal, rounding_floor(u0))
    else:
        raise ValueError(f"unknown method {method!r}")
    if pinned is None:
        u, rel = _snap_constant(u0, lam, u, g, gap, primal, rel, tol_gap)
    return RofResult(u, g, rel, iters, method)


def _snap_constant(u0, lam, u, g, gap, primal, rel, tol_gap):
    """Replace a noisy constant solution by the exact mean of the data.

    Without this, ``TV_h(u)`` is itself noise and the relative integral
    identity of the returned pair means nothing.
    """
    d = u0.domain
    if np.ptp(u.values[d.mask]) > 1e-6 * np.ptp(u0.values[d.mask]):
        return u, rel
    mean = float(u0.values[d.mask].mean())
    flat = ScalarField(d, np.where(d.mask, mean, u0.values))
    flat_primal = lam * (flat - u0).norm() ** 2
    flat_gap = max(flat_primal - (primal - gap), 0.0)
    flat_rel = relative_gap(flat_gap, flat_primal, rounding_floor(u0))
    if flat_rel > tol_gap:
        return u, rel
    return flat, flat_rel
