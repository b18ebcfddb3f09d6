"""Total-variation flow by minimizing movements.

Each step is the proximal map ``u_next = argmin TV_h(v) + ||v - u||^2 / (2 tau)``,
i.e. an ROF solve with ``lam = 1 / (2 tau)``; the dual field of the step
satisfies ``(u_next - u) / tau = div_h g``. The difference quotient
``||(u - u_next) / tau||`` estimates the norm of the minimal section of the
subdifferential and is non-increasing along the exact scheme.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .certify import CERTIFIED, Certificate, Tolerances, certify
from .grid import ScalarField, VectorField, discrete_tv
from .solver import solve_rof


def amplitude(u: ScalarField) -> float:
    """``max u - mean u`` over the mask (the mean is conserved by the flow)."""
    v = u.values[u.domain.mask]
    return float(v.max() - v.mean())


@dataclass(eq=False)
class StepResult:
    u_next: ScalarField
    g: VectorField
    gap: float
    certificate: Certificate | None = None

    def __iter__(self):
        yield self.u_next
        yield self.g


def flow_step(
    u: ScalarField,
    tau: float,
    tol_gap: float = 1e-8,
    *,
    certify_step: bool = True,
    spec="auto",
    tols: Tolerances | None = None,
    **solver_kw,
) -> StepResult:
    """One implicit Euler step, optionally certified against ``dTV_h(u_next)``."""
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    res = solve_rof(u, 1.0 / (2.0 * tau), tol_gap, **solver_kw)
    cert = None
    if certify_step:
        u_star = (u - res.u) * (1.0 / tau)
        cert = certify(res.u, u_star, res.g, spec, tols)
    return StepResult(res.u, res.g, res.gap, cert)


@dataclass(eq=False)
class FlowTrajectory:
    times: list[float]
    states: list[ScalarField] = field(repr=False)
    duals: list[VectorField] = field(repr=False)
    minimal_section_norms: list[float]
    taus: list[float]
    gaps: list[float] = field(default_factory=list)
    verdicts: list[str] = field(default_factory=list)
    extinction_time: float | None = None

    @property
    def tv(self) -> list[float]:
        return [discrete_tv(u) for u in self.states]

    @property
    def amplitudes(self) -> list[float]:
        return [amplitude(u) for u in self.states]

    def rows(self):
        """``(t, TV, |A0| estimate, amplitude)`` per state; the last state has no quotient."""
        norms = self.minimal_section_norms + [float("nan")]
        return list(zip(self.times, self.tv, norms, self.amplitudes))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "tv", "min_section_norm", "amplitude"])
        for t, tv, a0, amp in self.rows():
            w.writerow([repr(float(t)), repr(float(tv)), "" if np.isnan(a0) else repr(float(a0)), repr(float(amp))])
        return buf.getvalue()

    def metadata(self) -> dict:
        return {
            "steps": len(self.taus),
            "taus": self.taus,
            "final_time": self.times[-1],
            "extinction_time": self.extinction_time,
            "minimal_section_norms": self.minimal_section_norms,
            "gaps": self.gaps,
            "verdicts": self.verdicts,
            "grid": {
                "height": self.states[0].domain.height,
                "width": self.states[0].domain.width,
                "h": self.states[0].domain.h,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.metadata(), sort_keys=True, indent=2)


def _extinction_estimate(times, amps, k):
    """Time at which the amplitude reaches zero during step ``k``.

    The last moving step may overshoot the exact extinction time, so its
    start is extended with the decay rate of the step before it.
    """
    if k == 0 or times[k] == times[k - 1]:
        return times[k + 1]
    rate = (amps[k - 1] - amps[k]) / (times[k] - times[k - 1])
    if rate <= 0:
        return times[k + 1]
    return min(times[k] + amps[k] / rate, times[k + 1])


def run_flow(
    u0: ScalarField,
    schedule,
    tol_gap: float = 1e-8,
    *,
    extinction_tol: float | None = None,
    certify_steps: bool = True,
    spec="auto",
    tols: Tolerances | None = None,
    **solver_kw,
) -> FlowTrajectory:
    """Iterate :func:`flow_step` over the step sizes in ``schedule``.

    The extinction time is recorded the first time the difference quotient
    drops below ``extinction_tol`` (default ``1e-8`` times the first
    quotient); later steps are stationary and cheap.
    """
    taus = [float(t) for t in schedule]
    if not taus or any(not t > 0 for t in taus):
        raise ValueError("schedule must be a non-empty list of positive step sizes")
    u = ScalarField(u0.domain, u0.values)
    traj = FlowTrajectory([0.0], [u], [], [], [])
    tol_abs = extinction_tol
    for tau in taus:
        step = flow_step(u, tau, tol_gap, certify_step=certify_steps, spec=spec, tols=tols, **solver_kw)
        norm = ((u - step.u_next) * (1.0 / tau)).norm()
        traj.times.append(traj.times[-1] + tau)
        traj.states.append(step.u_next)
        traj.duals.append(step.g)
        traj.minimal_section_norms.append(norm)
        traj.taus.append(tau)
        traj.gaps.append(step.gap)
        if step.certificate is not None:
            traj.verdicts.append(step.certificate.verdict)
        if tol_abs is None:
            tol_abs = 1e-8 * norm
        if traj.extinction_time is None and norm <= tol_abs:
            amps = traj.amplitudes
            moving = [i for i, a in enumerate(traj.minimal_section_norms) if a > tol_abs]
            traj.extinction_time = (
                0.0 if not moving else _extinction_estimate(traj.times, amps, moving[-1])
            )
        u = step.u_next
    return traj


def dyadic_partitions(traj: FlowTrajectory, levels: int) -> list[list[int]]:
    """Nested index partitions: level ``l`` keeps every ``2**(levels-1-l)``-th time."""
    n = len(traj.times) - 1
    out = []
    for level in range(levels):
        stride = 2 ** (levels - 1 - level)
        if n % stride:
            raise ValueError(f"{n} steps cannot be split with stride {stride}")
        out.append(list(range(0, n + 1, stride)))
    return out


@dataclass
class ApproximationLevel:
    breakpoints: list[int]
    sup_error: float
    identity_residual: float


def piecewise_constant_approx(traj: FlowTrajectory, nested_partitions) -> list[ApproximationLevel]:
    """Coarse piecewise-constant interpolants of a fine trajectory.

    On each coarse interval ``(t_a, t_b]`` the state is ``u(t_b)`` and the dual
    field is the step-length weighted mean of the fine duals, so that
    ``(u(t_b) - u(t_a)) / (t_b - t_a) = div_h g_eps`` still holds. Reported per
    level: the sup over fine times of the L2 distance to the fine trajectory,
    and ``sum_intervals len * (TV_h(u_eps) + <u_eps, div_h g_eps>)``.
    """
    n = len(traj.times) - 1
    parts = [list(p) for p in nested_partitions]
    for p in parts:
        if p != sorted(set(p)) or p[0] != 0 or p[-1] != n:
            raise ValueError("each partition must be increasing from 0 to the last step")
    for coarse, fine in zip(parts, parts[1:]):
        if not set(coarse) <= set(fine):
            raise ValueError("partitions are not nested")
    d = traj.states[0].domain
    out = []
    for p in parts:
        sup_err = 0.0
        resid = 0.0
        for a, b in zip(p, p[1:]):
            length = traj.times[b] - traj.times[a]
            ub = traj.states[b]
            for j in range(a + 1, b + 1):
                sup_err = max(sup_err, (traj.states[j] - ub).norm())
            comps = sum(traj.taus[j] * traj.duals[j].components for j in range(a, b)) / length
            g_eps = VectorField(d, comps)
            resid += length * (discrete_tv(ub) + ub.inner(ScalarField(d, g_eps.divergence())))
        out.append(ApproximationLevel(p, float(sup_err), float(resid)))
    return out
