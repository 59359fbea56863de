"""Matplotlib figures written next to the CSV outputs (the CSVs are the contract)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .bounds import chebyshev_bound  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def distribution_plot(dist, cert, chi, path) -> Path:
    """Measured distribution function against the Chebyshev envelope K / h(t)^m, and h itself."""
    fig, (ax, bx) = plt.subplots(1, 2, figsize=(9, 3.5))
    t = dist.t
    ax.step(t, dist.values, where="post", label="mu(phi < -t)")
    pos = t[t > 0]
    if pos.size:
        env = chebyshev_bound(cert.constants["K"], chi, cert.m)(pos)
        ax.plot(pos, np.minimum(env, 1.0), "--", label="K / h(t)^m (capped at 1)")
    ax.set_xlabel("t")
    ax.set_yscale("symlog", linthresh=1e-6)
    ax.legend(fontsize=8)
    ts = np.linspace(0.0, max(2.0 * chi.T0, float(t[-1])), 200)
    bx.plot(ts, chi.h(ts), label="h(t)")
    bx.plot(ts, ts, ":", label="t")
    bx.axvline(chi.T0, color="grey", lw=0.8)
    bx.set_xlabel("t")
    bx.legend(fontsize=8)
    return _save(fig, path)


def family_plot(report: dict, path) -> Path:
    rows = [r for r in report["rows"] if np.isfinite(r["oscillation"])]
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    ax.plot([r["t"] for r in rows], [r["oscillation"] for r in rows], "o-", label="Osc(phi_t)")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("t")
    ax.set_ylabel("oscillation")
    ax.set_title(f"certificate T = {report['T']:.3g}", fontsize=9)
    ax.set_ylim(bottom=0)
    ax.legend(fontsize=8)
    return _save(fig, path)


def stability_plot(report: dict, path) -> Path:
    rows = [r for r in report["rows"] if r["mass"] > 0 and r["lhs"] > 0]
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    mass = np.array([r["mass"] for r in rows])
    ax.loglog(mass, [r["lhs"] for r in rows], "o", label="sup (phihat - phi)_+")
    order = np.argsort(mass)
    ax.loglog(mass[order], np.array([r["bound"] for r in rows])[order], "-", label="T mass^tau")
    ax.set_xlabel("int (phihat - phi)_+ dmu")
    ax.legend(fontsize=8)
    return _save(fig, path)


def field_plot(values: np.ndarray, path, title: str = "") -> Path:
    """Heat map of a 2-D field (n = 1) or of the (x1, y1) slice through the origin (n = 2)."""
    v = values if values.ndim == 2 else values[:, :, 0, 0]
    fig, ax = plt.subplots(figsize=(4, 3.5))
    im = ax.imshow(v.T, origin="lower", extent=(0, 1, 0, 1))
    fig.colorbar(im, ax=ax)
    ax.set_title(title, fontsize=9)
    return _save(fig, path)
