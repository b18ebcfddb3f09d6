"""Plain-text rendering of certificates and reports, one line per checked condition."""
from __future__ import annotations

import math

import numpy as np

from .calibrate import CalibrationReport
from .certify import Certificate
from .flow import FlowTrajectory


def fmt(x: float) -> str:
    """Short number: ``1.0``, ``0.25``, ``3.2e-2``, ``1e-4``."""
    x = float(x)
    if x == 0:
        return "0"
    if not math.isfinite(x):
        return str(x)
    if 0.1 <= abs(x) < 1000:
        s = f"{x:.3g}"
        return s if "." in s else s + ".0"
    mant, exp = f"{x:.1e}".split("e")
    mant = mant.removesuffix(".0")
    return f"{mant}e{int(exp)}"


def _check(name: str, value: float, tol: float, label: str = "residual") -> str:
    if value <= tol:
        return f"{name}: PASS ({label} {fmt(value)} <= {fmt(tol)})"
    return f"{name}: FAIL ({label} {fmt(value)} > {fmt(tol)})"


def _certificate_lines(cert: Certificate) -> list[str]:
    t = cert.tolerances
    lines = []
    if cert.feasibility <= t.feasibility:
        lines.append(f"sup-norm bound: PASS (excess {fmt(cert.feasibility)} <= {fmt(t.feasibility)})")
    else:
        lines.append(f"sup-norm bound: FAIL ({fmt(cert.feasibility)} excess)")
    lines.append(f"zero extension: {'PASS' if cert.zero_ext_ok else 'FAIL'}")
    lines.append(_check("divergence match", cert.div_match, t.div_match))
    lines.append(_check("integral identity", cert.integral_residual, t.integral))
    tr = cert.trace
    log = []
    if tr is not None and not tr.converged:
        lines.append(
            f"full trace: INCONCLUSIVE (Cauchy gap {fmt(tr.cauchy_gap)} > {fmt(tr.tol)})"
        )
        log = [f"  eps {fmt(e)}: distance {fmt(dist)}" for e, dist in tr.convergence_log]
    else:
        lines.append(_check("full trace Tg = σ_u", cert.fulltrace_residual, t.fulltrace))
    if cert.kkt is not None:
        lines.append(_check("sign conditions", cert.kkt["sign_violation"], t.sign, "violation"))
    lines.append(f"verdict: {cert.verdict}")
    if log:
        lines.append("convergence log:")
        lines.extend(log)
    return lines


def _flow_lines(traj: FlowTrajectory, tol_factor: float = 1e-6) -> list[str]:
    norms = np.asarray(traj.minimal_section_norms)
    tol = tol_factor * (norms[0] if norms.size else 0.0)
    rise = float(np.max(np.diff(norms), initial=0.0))
    lines = [
        f"steps: {len(traj.taus)}",
        f"final time: {fmt(traj.times[-1])}",
        _check("minimal section non-increasing", max(rise, 0.0), tol, "largest increase"),
    ]
    if traj.verdicts:
        bad = sum(v != "certified" for v in traj.verdicts)
        status = "PASS" if bad == 0 else "FAIL"
        lines.append(f"step certificates: {status} ({len(traj.verdicts) - bad}/{len(traj.verdicts)} certified)")
    ext = traj.extinction_time
    lines.append(f"extinction time: {'not reached' if ext is None else fmt(ext)}")
    return lines


def _calibration_lines(rep: CalibrationReport) -> list[str]:
    t = rep.tolerances
    return [
        f"shape: {rep.shape.kind}",
        f"Cheeger ratio: analytic {fmt(rep.lambda_analytic)}, discrete {fmt(rep.lambda_discrete)}",
        f"curvature condition: {rep.curvature}",
        _check("sup-norm bound", rep.feasibility, t["feasibility"], "excess"),
        _check("divergence identity (L2)", rep.divergence_l2, t["divergence_l2"], "relative error"),
        _check("divergence identity (sup)", rep.divergence_sup, t["divergence_sup"], "relative error"),
        _check("full trace alignment", rep.alignment, t["alignment"], "error"),
        f"verdict: {rep.verdict}",
        f"analytic and numerical verdicts {'agree' if rep.agreement else 'disagree'}",
    ]


def render_report(record) -> str:
    if isinstance(record, Certificate):
        lines = _certificate_lines(record)
    elif isinstance(record, FlowTrajectory):
        lines = _flow_lines(record)
    elif isinstance(record, CalibrationReport):
        lines = _calibration_lines(record)
    else:
        raise TypeError(f"cannot render {type(record).__name__}")
    return "\n".join(lines) + "\n"
