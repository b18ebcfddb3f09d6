"""Command-line entry point ``tvcert``.

Exit status: 0 certified / holds, 2 refuted, 3 inconclusive, 1 for I/O or
configuration errors. Artifacts (FLD, CSV, JSON, text report, PNG figures)
go to the ``--output`` directory.
"""
from __future__ import annotations

import argparse
import csv
import io as _io
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import plots
from .calibrate import Shape, calibrability_verdict, calibration_field, rasterize
from .certify import (
    CERTIFIED,
    INCONCLUSIVE,
    REFUTED,
    Tolerances,
    certify,
    certify_rof,
    oracle_scale,
    subgradient_oracle,
)
from .dual import MollifierSpec, dyadic_schedule, mollify_boundary_aware, wq_div_distance
from .flow import run_flow
from .grid import GridDomain, ScalarField, VectorField
from .io import FormatError, read_fld, read_image, write_fld
from .report import render_report

log = logging.getLogger("tvcert")

EXIT_OK, EXIT_ERROR, EXIT_REFUTED, EXIT_INCONCLUSIVE = 0, 1, 2, 3
_VERDICT_EXIT = {CERTIFIED: EXIT_OK, REFUTED: EXIT_REFUTED, INCONCLUSIVE: EXIT_INCONCLUSIVE}
COMMANDS = ("denoise", "certify", "flow", "calibrate", "mollify", "oracle")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    output: Path
    inputs: dict = field(default_factory=dict)
    lam: float = 10.0
    tau: float = 0.01
    steps: int = 10
    grid: tuple[int, int] | None = None
    h: float | None = None
    tol_gap: float = 1e-8
    tol_trace: float = 1e-4
    eps0: float | None = None
    jump_thresh: float | None = None
    seed: int = 0
    samples: int = 1000
    shape: dict | None = None
    report_format: str = "text"

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        for name in ("lam", "tau", "tol_gap", "tol_trace"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("h", "eps0", "jump_thresh"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigError(f"{name} must be positive, got {v}")
        if self.steps < 1 or self.samples < 1:
            raise ConfigError("steps and samples must be at least 1")
        if self.report_format not in ("json", "csv", "text"):
            raise ConfigError(f"unknown report format {self.report_format!r}")

    def tolerances(self) -> Tolerances:
        return Tolerances(cauchy=self.tol_trace)


def _parse_grid(text: str) -> tuple[int, int]:
    parts = text.lower().split("x")
    try:
        dims = [int(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like 256 or 256x128, got {text!r}")
    if len(dims) == 1:
        dims = dims * 2
    if len(dims) != 2 or min(dims) < 3:
        raise argparse.ArgumentTypeError(f"grid must look like 256 or 256x128, got {text!r}")
    return dims[0], dims[1]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tvcert", description="Discrete TV subdifferential certificates")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--input", type=Path, help="FLD or PGM input (u, data, or a dual field for mollify)")
    p.add_argument("--ustar", type=Path, help="FLD candidate subgradient (certify, oracle)")
    p.add_argument("--field", type=Path, help="FLD dual field with two channels (certify)")
    p.add_argument("--output", type=Path, default=Path("tvcert_out"))
    p.add_argument("--lambda", dest="lam", type=float, default=10.0)
    p.add_argument("--tau", type=float, default=0.01)
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--grid", type=_parse_grid, help="HxW, or N for a square")
    p.add_argument("--h", type=float, help="pixel size (default 1/max(H, W))")
    p.add_argument("--tol-gap", type=float, default=1e-8)
    p.add_argument("--tol-trace", type=float, default=1e-4)
    p.add_argument("--eps0", type=float)
    p.add_argument("--jump-thresh", type=float, help="two-pixel value gap marking a jump (default 10 x mean gap)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--shape", choices=("disc", "stadium"))
    p.add_argument("--radius", type=float, help="disc radius or corner rounding")
    p.add_argument("--center", type=float, nargs=2, default=(0.5, 0.5))
    p.add_argument("--width", type=float, default=0.5)
    p.add_argument("--height", type=float, default=0.5)
    p.add_argument("--report", dest="report_format", choices=("json", "csv", "text"), default="text")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args) -> RunConfig:
    shape = None
    if args.shape == "disc":
        shape = {"kind": "disc", "center": list(args.center), "radius": args.radius or 0.3}
    elif args.shape == "stadium":
        shape = {
            "kind": "stadium",
            "center": list(args.center),
            "width": args.width,
            "height": args.height,
            "rounding": args.radius or 0.0,
        }
    inputs = {k: getattr(args, k) for k in ("input", "ustar", "field") if getattr(args, k) is not None}
    return RunConfig(
        command=args.command,
        output=args.output,
        inputs=inputs,
        lam=args.lam,
        tau=args.tau,
        steps=args.steps,
        grid=args.grid,
        h=args.h,
        tol_gap=args.tol_gap,
        tol_trace=args.tol_trace,
        eps0=args.eps0,
        jump_thresh=args.jump_thresh,
        seed=args.seed,
        samples=args.samples,
        shape=shape,
        report_format=args.report_format,
    )


# -- helpers -------------------------------------------------------------------


def _domain_for(cfg: RunConfig, shape2d) -> GridDomain:
    H, W = shape2d
    if cfg.grid is not None and cfg.grid != (H, W):
        raise ConfigError(f"--grid {cfg.grid} does not match input size {(H, W)}")
    return GridDomain.full(H, W, cfg.h if cfg.h is not None else 1.0 / max(H, W))


def _need(cfg: RunConfig, key: str) -> Path:
    if key not in cfg.inputs:
        raise ConfigError(f"{cfg.command} needs --{key}")
    return cfg.inputs[key]


def _scalar(a: np.ndarray, label: str) -> np.ndarray:
    if a.ndim != 2:
        raise ConfigError(f"{label} must have one channel, found {a.shape[-1]}")
    return a


def _write_text(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


def _dump_json(path: Path, data: dict) -> str:
    text = json.dumps(data, sort_keys=True, indent=2) + "\n"
    _write_text(path, text)
    return text


def _flat_csv(data: dict) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["key", "value"])

    def walk(prefix, obj):
        if isinstance(obj, dict):
            for k in sorted(obj):
                walk(f"{prefix}.{k}" if prefix else k, obj[k])
        elif not isinstance(obj, list):
            w.writerow([prefix, obj])

    walk("", data)
    return buf.getvalue()


def _emit(cfg: RunConfig, data: dict, text: str, csv_text: str | None = None) -> None:
    if cfg.report_format == "json":
        sys.stdout.write(json.dumps(data, sort_keys=True, indent=2) + "\n")
    elif cfg.report_format == "csv":
        sys.stdout.write(csv_text if csv_text is not None else _flat_csv(data))
    else:
        sys.stdout.write(text)


def _certificate_artifacts(cfg: RunConfig, cert, prefix: str) -> int:
    out = cfg.output
    data = json.loads(cert.to_json())
    _dump_json(out / f"{prefix}.json", data)
    text = render_report(cert)
    _write_text(out / f"{prefix}.txt", text)
    plots.plot_certificate(cert, out / f"{prefix}.png")
    _emit(cfg, data, text)
    return _VERDICT_EXIT[cert.verdict]


# -- commands ------------------------------------------------------------------


def cmd_denoise(cfg: RunConfig) -> int:
    data = _scalar(read_image(_need(cfg, "input")), "input")
    d = _domain_for(cfg, data.shape)
    cert, res = certify_rof(
        ScalarField(d, data), cfg.lam, cfg.tol_gap, tols=cfg.tolerances(), jump_thresh=cfg.jump_thresh
    )
    write_fld(cfg.output / "u.fld", res.u.values)
    write_fld(cfg.output / "g.fld", res.g.components)
    return _certificate_artifacts(cfg, cert, "certificate")


def cmd_certify(cfg: RunConfig) -> int:
    raw = read_fld(_need(cfg, "input"))
    if "ustar" in cfg.inputs or "field" in cfg.inputs:
        u = _scalar(raw, "--input")
        ustar = _scalar(read_fld(_need(cfg, "ustar")), "--ustar")
        g = read_fld(_need(cfg, "field"))
    elif raw.ndim == 3 and raw.shape[-1] == 4:
        # one file holding the triple as channels (u, u*, g_x, g_y)
        u, ustar, g = raw[..., 0], raw[..., 1], raw[..., 2:]
    else:
        raise ConfigError("certify needs --ustar and --field, or a 4-channel --input (u, u*, gx, gy)")
    if g.ndim != 3 or g.shape[-1] != 2:
        raise ConfigError("the dual field must have two channels")
    if not (u.shape == ustar.shape == g.shape[:2]):
        raise ConfigError(f"shape mismatch: u {u.shape}, u* {ustar.shape}, g {g.shape[:2]}")
    d = _domain_for(cfg, u.shape)
    cert = certify(
        ScalarField(d, u),
        ScalarField(d, ustar),
        VectorField(d, g),
        tols=cfg.tolerances(),
        jump_thresh=cfg.jump_thresh,
    )
    return _certificate_artifacts(cfg, cert, "certificate")


def cmd_flow(cfg: RunConfig) -> int:
    data = _scalar(read_image(_need(cfg, "input")), "input")
    d = _domain_for(cfg, data.shape)
    traj = run_flow(ScalarField(d, data), [cfg.tau] * cfg.steps, cfg.tol_gap, tols=cfg.tolerances())
    csv_text = traj.to_csv()
    _write_text(cfg.output / "flow.csv", csv_text)
    meta = traj.metadata()
    _dump_json(cfg.output / "flow.json", meta)
    text = render_report(traj)
    _write_text(cfg.output / "flow.txt", text)
    plots.plot_flow(traj, cfg.output / "flow.png")
    _emit(cfg, meta, text, csv_text)
    norms = traj.minimal_section_norms
    monotone = all(b <= a + 1e-6 * norms[0] for a, b in zip(norms, norms[1:]))
    if not monotone or REFUTED in traj.verdicts:
        return EXIT_REFUTED
    if INCONCLUSIVE in traj.verdicts:
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def cmd_calibrate(cfg: RunConfig) -> int:
    if cfg.shape is None:
        raise ConfigError("calibrate needs --shape")
    s = cfg.shape
    try:
        if s["kind"] == "disc":
            shape = Shape.disc(s["center"], s["radius"])
        else:
            shape = Shape.stadium(s["center"], s["width"], s["height"], s["rounding"])
        H, W = cfg.grid or (256, 256)
        d = GridDomain.full(H, W, cfg.h if cfg.h is not None else 1.0 / max(H, W))
        xi = calibration_field(shape, d)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    rep = calibrability_verdict(shape, d, xi=xi)
    data = rep.to_dict()
    _dump_json(cfg.output / "calibration.json", data)
    text = render_report(rep)
    _write_text(cfg.output / "calibration.txt", text)
    write_fld(cfg.output / "xi.fld", xi.components)
    plots.plot_calibration(rasterize(shape, d), xi, cfg.output / "calibration.png")
    _emit(cfg, data, text)
    return EXIT_OK if rep.numerical else EXIT_REFUTED


def cmd_mollify(cfg: RunConfig) -> int:
    g = read_fld(_need(cfg, "input"))
    if g.ndim != 3 or g.shape[-1] != 2:
        raise ConfigError("mollify needs a two-channel FLD field")
    d = _domain_for(cfg, g.shape[:2])
    field_ = VectorField(d, g)
    schedule = dyadic_schedule(d, cfg.eps0)
    try:
        spec = MollifierSpec.for_domain(d, schedule[0])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    bound = field_.sup_norm() + 1e-12
    levels = []
    for eps in schedule:
        ge = mollify_boundary_aware(field_, spec.with_epsilon(eps))
        levels.append({
            "epsilon": eps,
            "sup_norm": ge.sup_norm(),
            "distance": wq_div_distance(ge, field_),
        })
        write_fld(cfg.output / f"mollified_{len(levels) - 1}.fld", ge.components)
    holds = all(lv["sup_norm"] <= bound for lv in levels)
    data = {"spec": spec.to_dict(), "input_sup_norm": field_.sup_norm(), "levels": levels, "sup_norm_bound": holds}
    _dump_json(cfg.output / "mollify.json", data)
    lines = [f"eps {lv['epsilon']:.3e}: sup {lv['sup_norm']:.6f}, distance {lv['distance']:.3e}" for lv in levels]
    lines.append(f"sup-norm bound: {'PASS' if holds else 'FAIL'}")
    text = "\n".join(lines) + "\n"
    _write_text(cfg.output / "mollify.txt", text)
    plots.plot_mollify(levels, cfg.output / "mollify.png")
    _emit(cfg, data, text)
    return EXIT_OK if holds else EXIT_REFUTED


def cmd_oracle(cfg: RunConfig) -> int:
    u = _scalar(read_fld(_need(cfg, "input")), "--input")
    ustar = _scalar(read_fld(_need(cfg, "ustar")), "--ustar")
    if u.shape != ustar.shape:
        raise ConfigError(f"shape mismatch: u {u.shape}, u* {ustar.shape}")
    d = _domain_for(cfg, u.shape)
    uf = ScalarField(d, u)
    worst = subgradient_oracle(uf, ScalarField(d, ustar), cfg.samples, cfg.seed)
    scale = oracle_scale(uf)
    tol = cfg.tolerances().oracle * scale
    ok = worst <= tol
    data = {"samples": cfg.samples, "seed": cfg.seed, "worst_violation": worst, "scale": scale, "passed": ok}
    _dump_json(cfg.output / "oracle.json", data)
    status = "PASS" if ok else "FAIL"
    text = f"subgradient inequality: {status} (worst violation {worst:.3e}, tolerance {tol:.3e})\n"
    _write_text(cfg.output / "oracle.txt", text)
    _emit(cfg, data, text)
    return EXIT_OK if ok else EXIT_REFUTED


_COMMANDS = {
    "denoise": cmd_denoise,
    "certify": cmd_certify,
    "flow": cmd_flow,
    "calibrate": cmd_calibrate,
    "mollify": cmd_mollify,
    "oracle": cmd_oracle,
}


def run(cfg: RunConfig) -> int:
    try:
        cfg.output.mkdir(parents=True, exist_ok=True)
        return _COMMANDS[cfg.command](cfg)
    except (FormatError, ConfigError, OSError) as exc:
        print(f"tvcert: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = config_from_args(args)
    except ConfigError as exc:
        print(f"tvcert: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    log.info("config: %s", {k: str(v) for k, v in asdict(cfg).items()})
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
