"""Dual vector fields: the W^q(div) norm, unit-ball projection and the
boundary-aware shifted mollification.

The mollifier works on rectangular masks. The boundary is covered by square
charts: one per corner (inward direction along the diagonal, where the
boundary is the graph of a slope-1 function, so ``Lip = 1``) and a row of
charts along each edge (``Lip = 0``). Chart ``i`` is smoothed with the bump
kernel recentred at ``eps * alpha_i * n_i`` where ``n_i`` is its inward
direction and ``alpha_i = Lip_i + 2``; the interior layer uses the plain
kernel. The layers are glued with a partition of unity at the output side,

    g_eps(y) = sum_i zeta_i(y) (K_i * g)(y),

so ``g_eps`` is a pointwise convex combination of kernel averages of ``g``.

All chart geometry is expressed in units of ``scale`` (the largest epsilon of
a schedule); the partition does not change as epsilon shrinks.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage, signal

from .grid import GridDomain, VectorField, _div_array

# chart layout, in units of ``scale``
CORNER_HALF_WIDTH = 10.0
EDGE_HALF_WIDTH = 7.0
EDGE_CORNER_CLEARANCE = 4.5
EDGE_MAX_SPACING = 5.25
INTERIOR_RAMP = (1.25, 2.5)
FLAT_FRACTION = 0.75
MIN_SIDE = 2 * EDGE_CORNER_CLEARANCE


@dataclass(frozen=True)
class WqDivNorm:
    q: float
    field_part: float
    div_part: float

    @property
    def value(self) -> float:
        return (self.field_part**self.q + self.div_part**self.q) ** (1.0 / self.q)

    def __float__(self):
        return self.value


def wq_div_norm(g: VectorField, q: float = 2.0) -> WqDivNorm:
    if q < 1:
        raise ValueError(f"q must be at least 1, got {q}")
    d = g.domain
    mag = g.magnitude()[d.mask]
    div = g.divergence()[d.mask]
    field_part = (np.sum(mag**q) * d.cell_area) ** (1.0 / q)
    div_part = (np.sum(np.abs(div) ** q) * d.cell_area) ** (1.0 / q)
    return WqDivNorm(q, float(field_part), float(div_part))


def wq_div_distance(a: VectorField, b: VectorField, q: float = 2.0) -> float:
    return wq_div_norm(VectorField(a.domain, a.components - b.components), q).value


def project_unit_ball(g: VectorField) -> VectorField:
    """Pixelwise ``g / max(1, |g|)``."""
    norm = g.magnitude()
    return VectorField(g.domain, g.components / np.maximum(1.0, norm)[..., None])


@dataclass(frozen=True)
class Chart:
    """Boundary cube with center ``(x, y)`` (length units) and half-width ``r``."""

    center: tuple[float, float]
    half_width: float
    inward: tuple[float, float]
    lipschitz: float = 0.0

    @property
    def alpha(self) -> float:
        return self.lipschitz + 2.0

    def max_epsilon(self) -> float:
        """Strict upper bound ``r / (2 (alpha + 1))`` on the kernel radius."""
        return self.half_width / (2.0 * (self.alpha + 1.0))

    def to_dict(self) -> dict:
        return {
            "center": list(self.center),
            "half_width": self.half_width,
            "inward": list(self.inward),
            "lipschitz": self.lipschitz,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Chart":
        return cls(
            tuple(float(v) for v in data["center"]),
            float(data["half_width"]),
            tuple(float(v) for v in data["inward"]),
            float(data.get("lipschitz", 0.0)),
        )


def _taper(t: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """1 below ``lo``, 0 above ``hi``, cosine in between."""
    s = np.clip((t - lo) / (hi - lo), 0.0, 1.0)
    return 0.5 * (1.0 + np.cos(np.pi * s))


def rectangle_charts(domain: GridDomain, scale: float) -> list[Chart]:
    """Corner and edge charts for the full rectangle ``[0, W h] x [0, H h]``."""
    Lx = domain.width * domain.h
    Ly = domain.height * domain.h
    if min(Lx, Ly) < MIN_SIDE * scale:
        raise ValueError(
            f"rectangle {Lx:g} x {Ly:g} too small for chart scale {scale:g} "
            f"(needs sides >= {MIN_SIDE * scale:g})"
        )
    s2 = 1.0 / math.sqrt(2.0)
    charts = [
        Chart((0.0, 0.0), CORNER_HALF_WIDTH * scale, (s2, s2), 1.0),
        Chart((Lx, 0.0), CORNER_HALF_WIDTH * scale, (-s2, s2), 1.0),
        Chart((0.0, Ly), CORNER_HALF_WIDTH * scale, (s2, -s2), 1.0),
        Chart((Lx, Ly), CORNER_HALF_WIDTH * scale, (-s2, -s2), 1.0),
    ]

    def stations(length):
        lo = EDGE_CORNER_CLEARANCE * scale
        hi = length - lo
        count = int(math.ceil((hi - lo) / (EDGE_MAX_SPACING * scale) - 1e-12)) + 1
        return np.linspace(lo, hi, count) if count > 1 else np.array([0.5 * length])

    r = EDGE_HALF_WIDTH * scale
    for x in stations(Lx):
        charts.append(Chart((float(x), 0.0), r, (0.0, 1.0)))
        charts.append(Chart((float(x), Ly), r, (0.0, -1.0)))
    for y in stations(Ly):
        charts.append(Chart((0.0, float(y)), r, (1.0, 0.0)))
        charts.append(Chart((Lx, float(y)), r, (-1.0, 0.0)))
    return charts


def partition_of_unity(domain: GridDomain, charts: list[Chart], scale: float) -> np.ndarray:
    """Layers ``zeta_0`` (interior) and ``zeta_i`` (charts) summing to 1 on the mask."""
    X, Y = domain.coordinates()
    Lx = domain.width * domain.h
    Ly = domain.height * domain.h
    dist = np.minimum.reduce([X, Lx - X, Y, Ly - Y]) / scale
    raw = [1.0 - _taper(dist, *INTERIOR_RAMP)]
    for c in charts:
        t = np.maximum(np.abs(X - c.center[0]), np.abs(Y - c.center[1])) / (0.5 * c.half_width)
        raw.append(_taper(t, FLAT_FRACTION, 1.0))
    raw = np.array(raw) * domain.mask
    total = raw.sum(axis=0)
    uncovered = domain.mask & (total <= 0)
    if uncovered.any():
        i, j = np.argwhere(uncovered)[0]
        raise ValueError(f"charts do not cover pixel ({i}, {j})")
    return np.divide(raw, total, out=np.zeros_like(raw), where=total > 0)


def bump_kernel(epsilon: float, h: float, shift=(0.0, 0.0)) -> tuple[np.ndarray, int]:
    """Sampled ``exp(1 / (r^2 - 1))`` bump of radius ``epsilon`` centred at ``shift``.

    Returns ``(weights, reach)`` with weights indexed ``[di + reach, dj + reach]``
    and normalised to unit sum.
    """
    sx, sy = shift[0] / h, shift[1] / h
    rad = epsilon / h
    reach = int(math.ceil(max(abs(sx), abs(sy)) + rad))
    o = np.arange(-reach, reach + 1)
    dj, di = np.meshgrid(o, o)
    r2 = ((dj - sx) ** 2 + (di - sy) ** 2) / rad**2
    k = np.zeros(r2.shape)
    inside = r2 < 1.0
    k[inside] = np.exp(1.0 / (r2[inside] - 1.0))
    if k.sum() == 0.0:
        # radius below one pixel: collapse onto the nearest sample
        k[int(round(sy)) + reach, int(round(sx)) + reach] = 1.0
    return k / k.sum(), reach


@dataclass(eq=False)
class MollifierSpec:
    epsilon: float
    scale: float
    charts: list[Chart]
    partition: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        for i, c in enumerate(self.charts):
            if not self.epsilon < c.max_epsilon():
                raise ValueError(
                    f"epsilon {self.epsilon:g} violates r/(2(alpha+1)) = "
                    f"{c.max_epsilon():g} for chart {i}"
                )

    @classmethod
    def for_domain(cls, domain: GridDomain, epsilon: float, scale: float | None = None):
        scale = epsilon if scale is None else scale
        if epsilon > scale * (1 + 1e-12):
            raise ValueError(f"epsilon {epsilon:g} exceeds the chart scale {scale:g}")
        _require_rectangle(domain)
        charts = rectangle_charts(domain, scale)
        spec = cls(epsilon, scale, charts)
        spec.partition = partition_of_unity(domain, charts, scale)
        return spec

    def with_epsilon(self, epsilon: float) -> "MollifierSpec":
        """Same charts and partition, smaller kernel."""
        return replace(self, epsilon=epsilon)

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "scale": self.scale,
            "alpha_rule": "lip_plus_2",
            "charts": [c.to_dict() for c in self.charts],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict, domain: GridDomain | None = None) -> "MollifierSpec":
        if data.get("alpha_rule", "lip_plus_2") != "lip_plus_2":
            raise ValueError(f"unsupported alpha rule {data['alpha_rule']!r}")
        charts = [Chart.from_dict(c) for c in data["charts"]]
        scale = float(data.get("scale", data["epsilon"]))
        spec = cls(float(data["epsilon"]), scale, charts)
        if domain is not None:
            spec.partition = partition_of_unity(domain, charts, scale)
        return spec


def _require_rectangle(domain: GridDomain):
    if not domain.mask.all():
        raise ValueError("boundary charts are only built for full rectangular masks")


def dyadic_schedule(domain: GridDomain, eps0: float | None = None, eps_min: float | None = None):
    """``eps0, eps0/2, ...`` down to ``eps_min`` (defaults ``8h`` and ``h``).

    ``eps0`` is capped so that the chart layout fits inside the rectangle.
    """
    h = domain.h
    eps0 = 8.0 * h if eps0 is None else eps0
    eps_min = h if eps_min is None else eps_min
    cap = min(domain.width, domain.height) * h / MIN_SIDE
    eps0 = min(eps0, cap)
    if eps0 < eps_min:
        return [eps0]
    out = [eps0]
    while out[-1] / 2.0 >= eps_min * (1 - 1e-12):
        out.append(out[-1] / 2.0)
    return out


def _check_inside(domain, support, kernel, reach, label):
    outside = ~np.pad(domain.mask, reach, constant_values=False)
    reads = kernel > 0
    hits = ndimage.correlate(outside.astype(np.uint8), reads.astype(np.uint8), mode="constant")
    hits = hits[reach : reach + domain.height, reach : reach + domain.width]
    bad = support & (hits > 0)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise ValueError(f"{label}: kernel leaves the domain at pixel ({i}, {j})")


def _smooth_layer(comps, weight, kernel, reach):
    rows, cols = np.nonzero(weight > 0)
    if rows.size == 0:
        return None
    i0, i1 = rows.min(), rows.max() + 1
    j0, j1 = cols.min(), cols.max() + 1
    out = np.zeros(comps.shape)
    padded = np.pad(comps, ((reach, reach), (reach, reach), (0, 0)))
    for c in range(2):
        patch = padded[i0 : i1 + 2 * reach, j0 : j1 + 2 * reach, c]
        out[i0:i1, j0:j1, c] = signal.correlate(patch, kernel, mode="valid")
    return out * weight[..., None]


def mollify_boundary_aware(g: VectorField, spec: MollifierSpec) -> VectorField:
    """Shifted, chart-wise mollification of ``g`` (see module docstring).

    The result satisfies ``|g_eps| <= ||g||_inf`` pixelwise up to rounding,
    reproduces constants exactly and only reads values inside the mask.
    """
    d = g.domain
    _require_rectangle(d)
    if spec.partition is None or spec.partition.shape[1:] != d.shape:
        spec.partition = partition_of_unity(d, spec.charts, spec.scale)
    zeta = spec.partition
    layers = [((0.0, 0.0), zeta[0], "interior")]
    for i, c in enumerate(spec.charts):
        shift = (spec.epsilon * c.alpha * c.inward[0], spec.epsilon * c.alpha * c.inward[1])
        layers.append((shift, zeta[i + 1], f"chart {i}"))

    out = np.zeros(g.components.shape)
    for shift, weight, label in layers:
        kernel, reach = bump_kernel(spec.epsilon, d.h, shift)
        _check_inside(d, weight > 0, kernel, reach, label)
        part = _smooth_layer(g.components, weight, kernel, reach)
        if part is not None:
            out += part
    return VectorField(d, out)


def mollified_divergence_residual(g: VectorField, spec: MollifierSpec) -> float:
    """L2 distance between ``div_h(g_eps)`` and the layered mollification of ``div_h g``."""
    d = g.domain
    g_eps = mollify_boundary_aware(g, spec)
    div = _div_array(g.components, d)
    stacked = np.stack([div, np.zeros_like(div)], axis=-1)
    div_eps = mollify_boundary_aware(VectorField(d, stacked), spec).components[..., 0]
    diff = g_eps.divergence() - div_eps
    return float(np.sqrt(np.sum(diff[d.mask] ** 2) * d.cell_area))
