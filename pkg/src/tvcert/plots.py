"""Figures written next to the CLI artifacts (PNG, Agg backend)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .grid import gradient_measure  # noqa: E402

_PNG_META = {"Software": None}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)
    return path


def _image(ax, values, title, cmap="gray"):
    im = ax.imshow(values, origin="lower", cmap=cmap, interpolation="nearest")
    ax.set_title(title)
    ax.set_xticks([])
    ax.set_yticks([])
    plt.colorbar(im, ax=ax, fraction=0.046, pad=0.04)


def plot_certificate(cert, path) -> Path:
    """Solution, dual-field magnitude and the pointwise trace mismatch."""
    fig, axes = plt.subplots(1, 3, figsize=(12, 4))
    _image(axes[0], cert.u.values, "u")
    _image(axes[1], np.hypot(*np.moveaxis(cert.g.components, -1, 0)), "|g|", "viridis")
    mismatch = np.zeros(cert.u.domain.shape)
    if cert.trace is not None:
        mu = gradient_measure(cert.u)
        s = mu.support
        diff = cert.trace.values[s] - mu.direction[s]
        mismatch[s] = np.hypot(diff[:, 0], diff[:, 1])
    _image(axes[2], mismatch, "|Tg - σ_u| on supp |Du|", "magma")
    return _save(fig, Path(path))


def plot_flow(traj, path) -> Path:
    t = np.asarray(traj.times)
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.5))
    axes[0].plot(t, traj.tv, "o-", ms=3)
    axes[0].set_xlabel("t")
    axes[0].set_ylabel("TV")
    axes[1].plot(t, traj.amplitudes, "o-", ms=3)
    axes[1].set_xlabel("t")
    axes[1].set_ylabel("max - mean")
    if traj.extinction_time is not None:
        axes[1].axvline(traj.extinction_time, color="k", ls="--", lw=0.8)
    axes[2].step(t[1:], traj.minimal_section_norms, where="pre")
    axes[2].set_xlabel("t")
    axes[2].set_ylabel("minimal section norm")
    return _save(fig, Path(path))


def plot_calibration(chi, xi, path) -> Path:
    fig, axes = plt.subplots(1, 2, figsize=(8, 4))
    _image(axes[0], chi.values, "χ_G")
    _image(axes[1], -xi.divergence(), "-div ξ", "coolwarm")
    return _save(fig, Path(path))


def plot_mollify(levels, path) -> Path:
    eps = [lv["epsilon"] for lv in levels]
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.5))
    axes[0].loglog(eps, [lv["distance"] for lv in levels], "o-")
    axes[0].set_xlabel("ε")
    axes[0].set_ylabel("W(div) distance to g")
    axes[1].semilogx(eps, [lv["sup_norm"] for lv in levels], "o-")
    axes[1].set_xlabel("ε")
    axes[1].set_ylabel("sup |g_ε|")
    return _save(fig, Path(path))
