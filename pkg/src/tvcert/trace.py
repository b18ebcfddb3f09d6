"""Normal and full traces of a dual field against ``|Du|``.

A trace is the limit of mollified fields along a dyadic epsilon schedule,
restricted to the support of ``|Du|``. The schedule is finite, so the limit is
replaced by the finest candidate together with a Cauchy diagnostic: the
``L1(|Du|)`` distance between the last two candidates, divided by the total
mass. Passing ``spec=None`` treats ``g`` as grid-continuous and uses it as is.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dual import MollifierSpec, mollify_boundary_aware
from .grid import GradientMeasure, ScalarField, VectorField, boundary_flux_term, flux_divergence

DEFAULT_TRACE_TOL = 1e-4


@dataclass(eq=False)
class TraceResult:
    kind: str
    values: np.ndarray = field(repr=False)
    support: np.ndarray = field(repr=False)
    convergence_log: list[tuple[float, float]]
    converged: bool
    tol: float
    total_mass: float

    @property
    def cauchy_gap(self) -> float:
        """Last consecutive distance relative to the total mass (0 without a schedule)."""
        if not self.convergence_log or self.total_mass == 0:
            return 0.0
        return self.convergence_log[-1][1] / self.total_mass

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "converged": self.converged,
            "tol": self.tol,
            "cauchy_gap": self.cauchy_gap,
            "total_mass": self.total_mass,
            "convergence_log": [[e, dist] for e, dist in self.convergence_log],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def trace_schedule(spec: MollifierSpec, h: float, eps_min: float | None = None) -> list[float]:
    eps_min = h if eps_min is None else eps_min
    out = [spec.epsilon]
    while out[-1] / 2.0 >= eps_min * (1 - 1e-12):
        out.append(out[-1] / 2.0)
    return out


def _candidates(g, mu, spec, eps_min):
    if spec is None:
        yield None, g.components
        return
    for eps in trace_schedule(spec, g.domain.h, eps_min):
        yield eps, mollify_boundary_aware(g, spec.with_epsilon(eps)).components


def _limit(kind, g, mu, spec, tol, eps_min, project):
    if not g.domain.same_as(mu.domain):
        raise ValueError("field and measure live on different domains")
    support = mu.support
    w = mu.weight
    log = []
    prev = None
    for eps, comps in _candidates(g, mu, spec, eps_min):
        cur = project(comps)
        if prev is not None:
            diff = cur - prev
            if diff.ndim == 3:
                diff = np.hypot(diff[..., 0], diff[..., 1])
            log.append((eps, float(np.sum(np.abs(diff)[support] * w[support]))))
        prev = cur
    mass = mu.total_mass
    if spec is None or mass == 0:
        converged = True
    else:
        converged = bool(log) and log[-1][1] <= tol * mass
    values = np.where(support[..., None] if prev.ndim == 3 else support, prev, 0.0)
    return TraceResult(kind, values, support, log, converged, tol, mass)


def normal_trace(
    g: VectorField,
    mu: GradientMeasure,
    spec: MollifierSpec | None,
    tol: float = DEFAULT_TRACE_TOL,
    eps_min: float | None = None,
) -> TraceResult:
    """Limit of ``g_eps . sigma_u`` on the support of ``|Du|``."""
    sigma = np.nan_to_num(mu.direction)
    return _limit("normal", g, mu, spec, tol, eps_min, lambda c: np.sum(c * sigma, axis=-1))


def full_trace(
    g: VectorField,
    mu: GradientMeasure,
    spec: MollifierSpec | None,
    tol: float = DEFAULT_TRACE_TOL,
    eps_min: float | None = None,
) -> TraceResult:
    """Limit of ``g_eps`` itself in ``L1(|Du|)``."""
    return _limit("full", g, mu, spec, tol, eps_min, lambda c: c)


def trace_alignment(trace: TraceResult, mu: GradientMeasure, target: np.ndarray | None = None) -> float:
    """``sum |Tg - target| weight / total_mass``; the target defaults to ``sigma_u``."""
    if trace.kind != "full":
        raise ValueError("alignment needs a full trace")
    if mu.total_mass == 0:
        return 0.0
    target = mu.direction if target is None else target
    s = mu.support
    diff = trace.values[s] - target[s]
    return float(np.sum(np.hypot(diff[:, 0], diff[:, 1]) * mu.weight[s]) / mu.total_mass)


def gauss_green_residual(u: ScalarField, g: VectorField, trace: TraceResult, mu: GradientMeasure) -> float:
    """``|<u, div g> + sum (Tg . sigma_u) weight - B|`` with the boundary-flux divergence.

    ``B`` is the flux of ``g`` through the outer faces weighted by the
    boundary values of ``u``; both it and the flux part of the divergence
    vanish for zero-extension compatible fields.
    """
    if trace.kind != "full":
        raise ValueError("Gauss-Green residual needs a full trace")
    if not trace.converged:
        raise ValueError(
            f"trace did not converge (Cauchy gap {trace.cauchy_gap:.1e} > {trace.tol:.0e})"
        )
    boundary = boundary_flux_term(u, g)
    s = mu.support
    pairing = float(np.sum(np.sum(trace.values[s] * mu.direction[s], axis=-1) * mu.weight[s]))
    volume = u.inner(flux_divergence(g))
    return abs(volume + pairing - boundary)
