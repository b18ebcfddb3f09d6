"""Certificates for ``u* in dTV_h(u)`` built from a dual field ``g``.

A pair is certified when ``g`` is feasible (``|g| <= 1``, zero-extension
compatible), reproduces ``u* = -div_h g`` and meets one of two equivalent
optimality tests: the integral identity ``TV_h(u) = -<u, div_h g>`` or the
pointwise full-trace condition ``Tg = sigma_u`` in ``L1(|Du|)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.fft

from .dual import MollifierSpec, dyadic_schedule
from .grid import (
    GradientMeasure,
    ScalarField,
    VectorField,
    discrete_tv,
    gradient_measure,
    pixel_gradient_norm,
)
from .solver import solve_rof
from .trace import DEFAULT_TRACE_TOL, TraceResult, full_trace, trace_alignment

CERTIFIED = "certified"
REFUTED = "refuted"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class Tolerances:
    feasibility: float = 1e-9
    div_match: float = 1e-6
    integral: float = 1e-3
    fulltrace: float = 5e-2
    cauchy: float = DEFAULT_TRACE_TOL
    oracle: float = 1e-8
    sign: float = 1e-8

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not v > 0:
                raise ValueError(f"tolerance {k} must be positive, got {v}")

    def for_resolution(self, n: int, reference: int = 256) -> "Tolerances":
        """Scale the full-trace tolerance linearly with the pixel size ``1/n``."""
        return Tolerances(**{**asdict(self), "fulltrace": self.fulltrace * reference / n})


MIN_SCHEDULE_LEVELS = 3


def default_spec(domain) -> MollifierSpec | None:
    """Mollifier for the trace schedule.

    Returns ``None`` (use ``g`` itself as its trace) when the mask is not a
    full rectangle or the grid is too small for a schedule of at least three
    levels; on such grids the boundary charts cover most pixels and the
    finite schedule says nothing about the limit.
    """
    if not domain.mask.all():
        return None
    schedule = dyadic_schedule(domain)
    if len(schedule) < MIN_SCHEDULE_LEVELS:
        return None
    return MollifierSpec.for_domain(domain, schedule[0])


@dataclass
class RegionReport:
    smooth: np.ndarray = field(repr=False)
    jump: np.ndarray = field(repr=False)
    zero: np.ndarray = field(repr=False)
    jump_normals: np.ndarray = field(repr=False)
    jump_gaps: np.ndarray = field(repr=False)
    jump_thresh: float
    stats: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "jump_thresh": self.jump_thresh,
            "counts": {
                "smooth": int(self.smooth.sum()),
                "jump": int(self.jump.sum()),
                "zero": int(self.zero.sum()),
            },
            "stats": self.stats,
        }


def default_jump_thresh(u: ScalarField) -> float:
    d = u.domain
    mean = float(np.mean(pixel_gradient_norm(u)[d.mask])) * d.h
    return 10.0 * mean if mean > 0 else 1.0


def classify_regions(u: ScalarField, mu: GradientMeasure, jump_thresh: float | None = None) -> RegionReport:
    """Split pixels into smooth, jump and zero-gradient parts.

    A pixel is a jump pixel when its two-pixel value gap ``h |grad_h u|``
    reaches ``jump_thresh``.
    """
    if jump_thresh is None:
        jump_thresh = default_jump_thresh(u)
    if not jump_thresh > 0:
        raise ValueError("jump_thresh must be positive")
    d = u.domain
    grad = pixel_gradient_norm(u)
    s = mu.support
    jump = s & (grad >= jump_thresh / d.h)
    smooth = s & ~jump
    zero = d.mask & ~s
    normals = np.where(jump[..., None], mu.direction, np.nan)
    gaps = np.where(jump, grad * d.h, 0.0)
    return RegionReport(smooth, jump, zero, normals, gaps, float(jump_thresh))


def _region_stats(report: RegionReport, mu: GradientMeasure, field_values: np.ndarray, label: str):
    target = mu.direction
    for name, region in (("smooth", report.smooth), ("jump", report.jump)):
        if not region.any():
            report.stats[f"{name}_{label}_mean"] = None
            report.stats[f"{name}_{label}_max"] = None
            continue
        diff = field_values[region] - target[region]
        err = np.hypot(diff[:, 0], diff[:, 1])
        w = mu.weight[region]
        report.stats[f"{name}_{label}_mean"] = float(np.sum(err * w) / np.sum(w))
        report.stats[f"{name}_{label}_max"] = float(err.max())


@dataclass(eq=False)
class Certificate:
    u: ScalarField = field(repr=False)
    u_star: ScalarField = field(repr=False)
    g: VectorField = field(repr=False)
    feasibility: float
    zero_ext_ok: bool
    div_match: float
    integral_signed: float
    integral_residual: float
    fulltrace_residual: float
    trace: TraceResult | None
    region_report: RegionReport | None
    tolerances: Tolerances
    verdict: str
    kkt: dict | None = None

    @property
    def integral_ok(self) -> bool:
        return self.integral_residual <= self.tolerances.integral

    @property
    def fulltrace_ok(self) -> bool:
        return self.fulltrace_residual <= self.tolerances.fulltrace

    @property
    def characterizations_agree(self) -> bool:
        return self.integral_ok == self.fulltrace_ok

    def to_dict(self) -> dict:
        out = {
            "verdict": self.verdict,
            "feasibility": self.feasibility,
            "zero_ext_ok": self.zero_ext_ok,
            "div_match": self.div_match,
            "integral_residual": self.integral_residual,
            "integral_signed": self.integral_signed,
            "fulltrace_residual": self.fulltrace_residual,
            "characterizations_agree": self.characterizations_agree,
            "trace": None if self.trace is None else self.trace.to_dict(),
            "regions": None if self.region_report is None else self.region_report.to_dict(),
            "tolerances": asdict(self.tolerances),
            "grid": {"height": self.u.domain.height, "width": self.u.domain.width, "h": self.u.domain.h},
        }
        if self.kkt is not None:
            out["kkt"] = self.kkt
        return out

    def to_json(self) -> str:
        return json.dumps(_finite(self.to_dict()), sort_keys=True, indent=2)


def _finite(obj):
    """Replace non-finite floats so the JSON stays standard."""
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_finite(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _relative(num: float, a: float, b: float) -> float:
    den = max(a, b)
    return 0.0 if den == 0 else num / den


def _base_checks(u, u_star, g, tols):
    d = u.domain
    feas = max(0.0, g.sup_norm() - 1.0)
    compatible = g.zero_extension_compatible()
    div = g.divergence()
    div_match = _relative(
        (u_star + ScalarField(d, div)).norm(), u_star.norm(), ScalarField(d, div).norm()
    )
    tv = discrete_tv(u)
    pairing = u.values * div * d.cell_area
    signed = tv + float(np.sum(pairing))
    # what summing <u, div g> in floating point cannot resolve
    floor = 64.0 * np.finfo(float).eps * (float(np.sum(np.abs(pairing))) + tv)
    integral = 0.0 if abs(signed) <= floor else abs(signed) / max(tv, np.finfo(float).tiny)
    return feas, compatible, div_match, signed, integral


def _decide(feas, compatible, div_match, integral, trace, fulltrace, tols, extra_ok=True):
    if feas > tols.feasibility or not compatible or div_match > tols.div_match or not extra_ok:
        return REFUTED
    trace_resolved = trace is None or trace.converged
    if integral <= tols.integral or (trace_resolved and fulltrace <= tols.fulltrace):
        return CERTIFIED
    if trace_resolved:
        return REFUTED
    return INCONCLUSIVE


def certify(
    u: ScalarField,
    u_star: ScalarField,
    g: VectorField,
    spec: MollifierSpec | None | str = "auto",
    tols: Tolerances | None = None,
    jump_thresh: float | None = None,
) -> Certificate:
    """Check ``u_star in dTV_h(u)`` with witness ``g``.

    ``spec="auto"`` builds the default mollifier when the grid admits one and
    otherwise treats ``g`` as grid-continuous; ``None`` forces the latter.
    """
    tols = tols or Tolerances()
    for f in (u_star, g):
        if not u.domain.same_as(f.domain):
            raise ValueError("u, u_star and g must share one domain")
    if spec == "auto":
        spec = default_spec(u.domain)
    feas, compatible, div_match, signed, integral = _base_checks(u, u_star, g, tols)
    mu = gradient_measure(u)
    trace = full_trace(g, mu, spec, tol=tols.cauchy)
    fulltrace = trace_alignment(trace, mu)
    regions = classify_regions(u, mu, jump_thresh)
    _region_stats(regions, mu, trace.values, "trace")
    _region_stats(regions, mu, g.components, "field")
    verdict = _decide(feas, compatible, div_match, integral, trace, fulltrace, tols)
    return Certificate(
        u, u_star, g, feas, compatible, div_match, signed, integral, fulltrace,
        trace, regions, tols, verdict,
    )


def certify_rof(
    u0: ScalarField, lam: float, tol_gap: float = 1e-8, spec="auto", tols=None, jump_thresh=None, **solver_kw
):
    """Solve the ROF problem and certify ``2 lam (u0 - u) in dTV_h(u)``."""
    res = solve_rof(u0, lam, tol_gap, **solver_kw)
    u_star = (u0 - res.u) * (2.0 * lam)
    return certify(res.u, u_star, res.g, spec, tols, jump_thresh), res


def oracle_scale(u: ScalarField) -> float:
    return max(1.0, discrete_tv(u))


def subgradient_oracle(u: ScalarField, u_star: ScalarField, samples: int = 1000, seed: int = 0) -> float:
    """Worst value of ``TV(u) + <u*, v - u> - TV(v)`` over sampled ``v``.

    Sample 0 is ``v = u``; the rest cycle through Gaussian fields, scaled
    copies ``t u``, piecewise-constant perturbations of ``u``, steps along
    ``u*`` and scaled copies of ``u*``.
    """
    if samples < 1:
        raise ValueError("samples must be at least 1")
    d = u.domain
    rng = np.random.default_rng(seed)
    tv_u = discrete_tv(u)
    ustar = u_star.values
    amp = max(float(np.std(u.values[d.mask])), 1.0)
    star_amp = float(np.abs(ustar).max()) or 1.0
    worst = -np.inf

    def violation(v):
        return tv_u + float(np.sum(ustar * (v - u.values))) * d.cell_area - discrete_tv(ScalarField(d, v))

    for k in range(samples):
        family = 0 if k == 0 else 1 + (k - 1) % 5
        if family == 0:
            v = u.values
        elif family == 1:
            v = amp * rng.standard_normal(d.shape)
        elif family == 2:
            v = rng.uniform(-2.0, 3.0) * u.values
        elif family == 3:
            v = u.values + _piecewise_constant(rng, d.shape, amp)
        elif family == 4:
            v = u.values + rng.uniform(-1.0, 1.0) * amp / star_amp * ustar
        else:
            v = rng.uniform(0.0, 3.0) * amp / star_amp * ustar
        worst = max(worst, violation(np.where(d.mask, v, 0.0)))
    return float(worst)


def _piecewise_constant(rng, shape, amp):
    H, W = shape
    out = np.zeros(shape)
    for _ in range(rng.integers(1, 4)):
        i0, i1 = np.sort(rng.integers(0, H + 1, 2))
        j0, j1 = np.sort(rng.integers(0, W + 1, 2))
        out[i0:i1, j0:j1] += rng.normal(0.0, amp)
    return out


# -- interval constraints on an orthonormal transform -------------------------


class BlockDCT:
    """Blockwise orthonormal 2-D DCT-II (``block x block`` tiles)."""

    def __init__(self, block: int = 8):
        self.block = block

    def _tiles(self, a):
        H, W = a.shape
        b = self.block
        if H % b or W % b:
            raise ValueError(f"grid {H}x{W} is not a multiple of the {b}x{b} block")
        return a.reshape(H // b, b, W // b, b)

    def forward(self, u: np.ndarray) -> np.ndarray:
        t = self._tiles(np.asarray(u, float))
        return scipy.fft.dctn(t, type=2, norm="ortho", axes=(1, 3)).reshape(u.shape)

    def inverse(self, c: np.ndarray) -> np.ndarray:
        t = self._tiles(np.asarray(c, float))
        return scipy.fft.idctn(t, type=2, norm="ortho", axes=(1, 3)).reshape(c.shape)

    def atom(self, index, shape) -> np.ndarray:
        """Image of the unit coefficient at ``index``."""
        e = np.zeros(shape)
        e[index] = 1.0
        return self.inverse(e)


def sign_multipliers(g: VectorField, transform) -> np.ndarray:
    """``(div_h g, a_n)`` in the ``h^2`` inner product, for every coefficient."""
    return transform.forward(g.divergence()) * g.domain.cell_area


def classify_coefficients(coeffs, lower, upper, tol):
    singleton = upper - lower <= tol
    at_upper = ~singleton & (np.abs(coeffs - upper) <= tol)
    at_lower = ~singleton & (np.abs(coeffs - lower) <= tol)
    interior = ~singleton & ~at_upper & ~at_lower
    return singleton, at_upper, at_lower, interior


def certify_interval_constrained(
    u: ScalarField,
    transform,
    lower: np.ndarray,
    upper: np.ndarray,
    g: VectorField,
    tols: Tolerances | None = None,
    spec="auto",
    active_tol: float = 1e-9,
) -> Certificate:
    """Optimality of ``u`` for ``min TV_h`` subject to ``lower <= A u <= upper``.

    On top of the unconstrained certificate for ``u* = -div_h g`` the
    multipliers ``k_n = (div_h g, a_n)`` must satisfy ``k_n >= 0`` at an
    active upper bound, ``k_n <= 0`` at an active lower bound and ``k_n = 0``
    for inactive coefficients; singleton intervals impose nothing.
    """
    tols = tols or Tolerances()
    d = u.domain
    lower = np.broadcast_to(np.asarray(lower, float), d.shape)
    upper = np.broadcast_to(np.asarray(upper, float), d.shape)
    if np.any(lower > upper):
        raise ValueError("interval with lower bound above upper bound")
    c = transform.forward(u.values)
    excess = np.maximum(lower - c, c - upper)
    if np.any(excess > active_tol):
        idx = np.unravel_index(int(np.argmax(excess)), d.shape)
        raise ValueError(f"coefficient {idx} lies outside its interval by {excess[idx]:.3e}")
    single, up, low, inner = classify_coefficients(c, lower, upper, active_tol)
    k = sign_multipliers(g, transform)
    scale = d.h * ScalarField(d, g.divergence()).norm()
    raw = np.zeros(d.shape)
    raw[up] = np.maximum(0.0, -k[up])
    raw[low] = np.maximum(0.0, k[low])
    raw[inner] = np.abs(k[inner])
    violation = 0.0 if scale == 0 else float(raw.max() / scale)

    u_star = ScalarField(d, -g.divergence())
    base = certify(u, u_star, g, spec, tols)
    sign_ok = violation <= tols.sign
    verdict = _decide(
        base.feasibility, base.zero_ext_ok, base.div_match, base.integral_residual,
        base.trace, base.fulltrace_residual, tols, extra_ok=sign_ok,
    )
    base.kkt = {
        "sign_violation": violation,
        "sign_ok": sign_ok,
        "counts": {
            "singleton": int(single.sum()),
            "active_upper": int(up.sum()),
            "active_lower": int(low.sum()),
            "interior": int(inner.sum()),
        },
    }
    base.verdict = verdict
    return base
