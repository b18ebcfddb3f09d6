"""Shapes, the perimeter-to-area ratio and calibrability checks.

A set ``G`` is calibrable when some field ``xi`` with ``|xi| <= 1`` satisfies
``-div xi = lambda_G chi_G`` with ``lambda_G = P(G) / |G|`` and
``xi = -nu_out`` on the boundary of ``G``. For convex sets with C^{1,1}
boundary this is equivalent to ``sup curvature <= lambda_G``; that analytic
test is reported next to the numerical one.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .dual import project_unit_ball
from .grid import GridDomain, ScalarField, VectorField, discrete_tv, gradient_measure
from .solver import solve_rof
from .trace import full_trace

BAND_PIXELS = 3.0


@dataclass(frozen=True)
class Shape:
    """A disc, or a convex polygon whose corners are rounded with radius ``rounding``.

    ``stadium`` builds the axis-aligned rounded rectangle.
    """

    kind: str
    center: tuple[float, float] = (0.5, 0.5)
    radius: float = 0.0
    vertices: tuple[tuple[float, float], ...] = field(default=())
    rounding: float = 0.0

    def __post_init__(self):
        if self.kind == "disc":
            if not self.radius > 0:
                raise ValueError("disc radius must be positive")
        elif self.kind in ("polygon", "stadium"):
            if len(self.vertices) < 3:
                raise ValueError("polygon needs at least three vertices")
            if self.rounding < 0:
                raise ValueError("rounding radius must be non-negative")
            if self.rounding > 0 and self.inradius() * (1 + 1e-12) < self.rounding:
                raise ValueError("rounding radius exceeds what the polygon can hold")
        else:
            raise ValueError(f"unknown shape kind {self.kind!r}")

    @classmethod
    def disc(cls, center=(0.5, 0.5), radius=0.3) -> "Shape":
        return cls("disc", tuple(map(float, center)), float(radius))

    @classmethod
    def polygon(cls, vertices, rounding=0.0) -> "Shape":
        verts = tuple((float(x), float(y)) for x, y in vertices)
        c = tuple(np.mean(verts, axis=0))
        return cls("polygon", c, 0.0, verts, float(rounding))

    @classmethod
    def stadium(cls, center=(0.5, 0.5), width=0.5, height=0.5, rounding=0.0) -> "Shape":
        cx, cy = map(float, center)
        a, b = width / 2.0, height / 2.0
        verts = ((cx - a, cy - b), (cx + a, cy - b), (cx + a, cy + b), (cx - a, cy + b))
        return cls("stadium", (cx, cy), 0.0, verts, float(rounding))

    # -- geometry helpers -------------------------------------------------
    def _edges(self):
        v = np.array(self.vertices)
        w = np.roll(v, -1, axis=0)
        return v, w

    def _orientation(self) -> float:
        v, w = self._edges()
        return float(np.sum(v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]))

    def is_convex(self) -> bool:
        if self.kind == "disc":
            return True
        v = np.array(self.vertices)
        a = np.roll(v, -1, axis=0) - v
        b = np.roll(v, -2, axis=0) - np.roll(v, -1, axis=0)
        cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
        return bool(np.all(cross > 0) or np.all(cross < 0))

    def _half_planes(self):
        """Outward unit normals ``n`` and offsets ``c`` with ``G = {n . x <= c}``."""
        v, w = self._edges()
        t = w - v
        sign = 1.0 if self._orientation() > 0 else -1.0
        n = sign * np.stack([t[:, 1], -t[:, 0]], axis=1)
        n /= np.linalg.norm(n, axis=1)[:, None]
        return n, np.sum(n * v, axis=1)

    def _exterior_angles(self):
        n, _ = self._half_planes()
        nxt = np.roll(n, -1, axis=0)
        return np.arccos(np.clip(np.sum(n * nxt, axis=1), -1.0, 1.0))

    def inradius(self) -> float:
        n, c = self._half_planes()
        cx, cy = np.mean(self.vertices, axis=0)
        return float(np.min(c - n @ np.array([cx, cy])))

    def perimeter(self) -> float:
        if self.kind == "disc":
            return 2.0 * math.pi * self.radius
        v, w = self._edges()
        p0 = float(np.sum(np.linalg.norm(w - v, axis=1)))
        theta = self._exterior_angles()
        rho = self.rounding
        return p0 - 2.0 * rho * float(np.sum(np.tan(theta / 2))) + 2.0 * math.pi * rho

    def area(self) -> float:
        if self.kind == "disc":
            return math.pi * self.radius**2
        a0 = abs(self._orientation()) / 2.0
        theta = self._exterior_angles()
        rho = self.rounding
        return a0 - rho**2 * float(np.sum(np.tan(theta / 2))) + math.pi * rho**2

    def max_curvature(self) -> float:
        if self.kind == "disc":
            return 1.0 / self.radius
        return math.inf if self.rounding == 0 else 1.0 / self.rounding

    def signed_distance(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """Exact signed distance (negative inside)."""
        if self.kind == "disc":
            return np.hypot(X - self.center[0], Y - self.center[1]) - self.radius
        if not self.is_convex():
            raise ValueError("signed distance is only implemented for convex polygons")
        n, c = self._half_planes()
        c = c - self.rounding
        # vertices of the polygon shrunk by the rounding radius
        nxt = np.roll(n, -1, axis=0)
        cn = np.roll(c, -1)
        det = n[:, 0] * nxt[:, 1] - n[:, 1] * nxt[:, 0]
        vx = (c * nxt[:, 1] - cn * n[:, 1]) / det
        vy = (n[:, 0] * cn - nxt[:, 0] * c) / det
        core = np.stack([vx, vy], axis=1)
        pts = np.stack([X, Y], axis=-1)
        plane = np.max(pts @ n.T - c, axis=-1)
        seg = np.full(X.shape, np.inf)
        a = np.roll(core, 1, axis=0)
        for p, q in zip(a, core):
            d = q - p
            L2 = float(d @ d)
            t = np.clip(((pts - p) @ d) / L2, 0.0, 1.0) if L2 > 0 else np.zeros(X.shape)
            proj = p + t[..., None] * d
            seg = np.minimum(seg, np.linalg.norm(pts - proj, axis=-1))
        return np.where(plane <= 0, plane, seg) - self.rounding

    def scaled(self, t: float, about=(0.0, 0.0)) -> "Shape":
        ox, oy = about
        sc = lambda p: (ox + t * (p[0] - ox), oy + t * (p[1] - oy))
        if self.kind == "disc":
            return Shape.disc(sc(self.center), t * self.radius)
        return Shape(self.kind, sc(self.center), 0.0, tuple(sc(p) for p in self.vertices), t * self.rounding)

    def to_dict(self) -> dict:
        if self.kind == "disc":
            return {"kind": "disc", "center": list(self.center), "radius": self.radius}
        return {
            "kind": self.kind,
            "vertices": [list(p) for p in self.vertices],
            "rounding": self.rounding,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Shape":
        kind = data.get("kind")
        if kind == "disc":
            return cls.disc(data.get("center", (0.5, 0.5)), data["radius"])
        if kind == "stadium" and "width" in data:
            return cls.stadium(data.get("center", (0.5, 0.5)), data["width"], data["height"], data.get("rounding", 0.0))
        if kind in ("polygon", "stadium"):
            s = cls.polygon(data["vertices"], data.get("rounding", 0.0))
            return Shape(kind, s.center, 0.0, s.vertices, s.rounding)
        raise ValueError(f"unknown shape kind {kind!r}")


def cheeger_ratio(shape: Shape) -> float:
    """``lambda_G = P(G) / |G|`` from the closed-form perimeter and area."""
    return shape.perimeter() / shape.area()


def curvature_condition(shape: Shape) -> str:
    """``"holds"``, ``"fails"`` or ``"undefined"`` (sharp corners, not C^{1,1})."""
    if not shape.is_convex():
        return "fails"
    kappa = shape.max_curvature()
    if math.isinf(kappa):
        return "undefined"
    return "holds" if kappa <= cheeger_ratio(shape) * (1 + 1e-12) else "fails"


def critical_rounding(width: float, height: float) -> float:
    """Smallest corner radius for which the rounded ``width x height`` rectangle
    satisfies the curvature condition, ``1/rho = P/|G|``."""
    s = width + height
    k = 4.0 - math.pi
    return (s - math.sqrt(s * s - k * width * height)) / k


def rasterize(shape: Shape, domain: GridDomain, band: float = BAND_PIXELS) -> ScalarField:
    """Anti-aliased indicator ``clip(1/2 - sd / (band h), 0, 1)``."""
    X, Y = domain.coordinates()
    sd = shape.signed_distance(X, Y)
    return ScalarField(domain, np.clip(0.5 - sd / (band * domain.h), 0.0, 1.0))


def discrete_cheeger_ratio(chi: ScalarField) -> float:
    """``TV_h(chi) / <chi, 1>``."""
    return discrete_tv(chi) / (float(np.sum(chi.values)) * chi.domain.cell_area)


def _clearance(shape, domain):
    X, Y = domain.coordinates()
    sd = shape.signed_distance(X, Y)
    ring = np.zeros(domain.shape, dtype=bool)
    ring[0, :] = ring[-1, :] = ring[:, 0] = ring[:, -1] = True
    return float(sd[ring].min())


def outer_ring(domain: GridDomain, width: int = 1) -> np.ndarray:
    ring = np.zeros(domain.shape, dtype=bool)
    ring[:width, :] = ring[-width:, :] = True
    ring[:, :width] = ring[:, -width:] = True
    return ring & domain.mask


def disc_field(shape: Shape, domain: GridDomain) -> VectorField:
    """``-(x - c)/R`` inside the disc, ``-R (x - c)/|x - c|^2`` outside."""
    X, Y = domain.coordinates()
    dx, dy = X - shape.center[0], Y - shape.center[1]
    R = shape.radius
    r2 = dx * dx + dy * dy
    inside = r2 <= R * R
    scale = np.where(inside, 1.0 / R, R / np.where(inside, 1.0, r2))
    comps = np.stack([-scale * dx, -scale * dy], axis=-1)
    return project_unit_ball(VectorField(domain, comps)).compatible_part()


def calibration_field(shape: Shape, domain: GridDomain, tol_gap: float = 1e-6) -> VectorField:
    """Analytic field for discs, otherwise the dual field of the ROF problem for
    ``chi_G`` with ``lambda = lambda_G`` (outer ring of pixels held at 0 so the
    flux can leave the domain)."""
    margin = (BAND_PIXELS / 2 + 1) * domain.h
    if _clearance(shape, domain) <= margin:
        raise ValueError("shape touches the domain boundary")
    if shape.kind == "disc":
        return disc_field(shape, domain)
    chi = rasterize(shape, domain)
    res = solve_rof(chi, cheeger_ratio(shape), tol_gap, pinned=outer_ring(domain))
    return res.g


def away_from_boundary(shape: Shape, domain: GridDomain, band: float = BAND_PIXELS) -> np.ndarray:
    """Pixels farther than ``band`` pixels from the boundary of ``G`` and not on the outer ring."""
    X, Y = domain.coordinates()
    sd = shape.signed_distance(X, Y)
    return (np.abs(sd) > band * domain.h) & domain.mask & ~outer_ring(domain)


@dataclass
class CalibrationReport:
    shape: Shape
    lambda_analytic: float
    lambda_discrete: float
    curvature: str
    feasibility: float
    divergence_l2: float
    divergence_sup: float
    alignment: float
    cauchy_gap: float
    tolerances: dict
    numerical: bool
    agreement: bool

    @property
    def verdict(self) -> str:
        return "calibrable" if self.numerical else "not certified"

    def to_dict(self) -> dict:
        return {
            "shape": self.shape.to_dict(),
            "analytic": {
                "lambda_G": self.lambda_analytic,
                "curvature_condition": self.curvature,
            },
            "numerical": {
                "lambda_h": self.lambda_discrete,
                "feasibility": self.feasibility,
                "divergence_l2": self.divergence_l2,
                "divergence_sup": self.divergence_sup,
                "trace_alignment": self.alignment,
                "cauchy_gap": self.cauchy_gap,
                "certified": self.numerical,
            },
            "agreement": self.agreement,
            "tolerances": self.tolerances,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


DEFAULT_CALIBRATION_TOLS = {
    "feasibility": 1e-9,
    "divergence_l2": 0.05,
    "divergence_sup": 0.25,
    "alignment": 0.05,
}


def divergence_errors(xi: VectorField, shape: Shape, chi: ScalarField) -> tuple[float, float]:
    """Relative L2 and sup errors of ``-div xi - lambda_G chi`` away from the band."""
    lam = cheeger_ratio(shape)
    keep = away_from_boundary(shape, chi.domain)
    target = lam * chi.values
    diff = (-xi.divergence() - target)[keep]
    l2 = float(np.linalg.norm(diff) / np.linalg.norm(target[keep]))
    sup = float(np.abs(diff).max() / lam)
    return l2, sup


def calibrability_verdict(
    shape: Shape,
    domain: GridDomain,
    tols: dict | None = None,
    spec=None,
    xi: VectorField | None = None,
) -> CalibrationReport:
    """Analytic curvature test next to the numerical certificate of the field."""
    tols = {**DEFAULT_CALIBRATION_TOLS, **(tols or {})}
    if xi is None:
        xi = calibration_field(shape, domain)
    chi = rasterize(shape, domain)
    mu = gradient_measure(chi)
    # sigma_chi points into G on the band
    trace = full_trace(xi, mu, spec)
    s = mu.support
    inner = mu.direction
    normal_part = np.sum(trace.values[s] * inner[s], axis=-1)
    alignment = float(np.sum((1.0 - normal_part) * mu.weight[s]) / mu.total_mass)
    feas = max(0.0, xi.sup_norm() - 1.0)
    l2, sup = divergence_errors(xi, shape, chi)
    numerical = (
        feas <= tols["feasibility"]
        and xi.zero_extension_compatible()
        and l2 <= tols["divergence_l2"]
        and sup <= tols["divergence_sup"]
        and alignment <= tols["alignment"]
    )
    curv = curvature_condition(shape)
    analytic = curv == "holds"
    return CalibrationReport(
        shape,
        cheeger_ratio(shape),
        discrete_cheeger_ratio(chi),
        curv,
        feas,
        l2,
        sup,
        alignment,
        trace.cauchy_gap,
        tols,
        bool(numerical),
        analytic == bool(numerical),
    )
