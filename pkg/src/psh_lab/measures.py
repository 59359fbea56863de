"""Density classes on the torus and quasi-psh weights with log poles.

Log poles are periodized with the Jacobi theta function of the square
lattice: for n = 1

    G(z) = log |theta_1(pi z, e^-pi)| - pi y^2

is Z^2-periodic, behaves like log|z| + const near the lattice and satisfies
Lap G = 2 pi (delta - 1). In two dimensions
``G(z) = 1/2 log sum_j |theta_1(pi z_j)|^2 exp(-2 pi y_j^2)`` has Lelong number
one at the lattice points and is smooth elsewhere.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import FitUnstable, NonNormalizable, ParameterError
from .grid import GridFunction, GridMeasure, HermitianBackground, PeriodicGrid

_Q = math.exp(-math.pi)


def theta1(u: np.ndarray, q: float = _Q, terms: int = 8) -> np.ndarray:
    """Jacobi theta_1(u, q) = 2 sum_k (-1)^k q^((k+1/2)^2) sin((2k+1) u)."""
    u = np.asarray(u, dtype=complex)
    out = np.zeros_like(u)
    for k in range(terms):
        out += (-1) ** k * q ** ((k + 0.5) ** 2) * np.sin((2 * k + 1) * u)
    return 2.0 * out


def _wrap(x: np.ndarray, period: float) -> np.ndarray:
    return (x + 0.5 * period) % period - 0.5 * period


def log_pole(points: np.ndarray, center, period: float = 1.0) -> np.ndarray:
    """Periodic log pole G(z - center); ``points`` has shape (..., 2n) in real coordinates."""
    points = np.asarray(points, dtype=float)
    center = np.asarray(center, dtype=float)
    ndim = points.shape[-1]
    d = _wrap(points - center, period) / period
    n = ndim // 2
    with np.errstate(divide="ignore"):
        if n == 1:
            z = d[..., 0] + 1j * d[..., 1]
            return np.log(np.abs(theta1(np.pi * z))) - np.pi * d[..., 1] ** 2
        acc = 0.0
        for j in range(n):
            z = d[..., 2 * j] + 1j * d[..., 2 * j + 1]
            acc = acc + np.abs(theta1(np.pi * z)) ** 2 * np.exp(-2 * np.pi * d[..., 2 * j + 1] ** 2)
        return 0.5 * np.log(acc)


def _grid_points(grid: PeriodicGrid) -> np.ndarray:
    return np.stack(grid.coords(), axis=-1)


@dataclass
class QuasiPshWeight:
    """psi = sum_i c_i G(z - z_i) + smooth part (a trigonometric polynomial or zero)."""

    n: int
    lelong_data: list                      # [(center, c_i), ...]
    smooth: object = None                  # SmoothFunction or None
    period: float = 1.0
    ddc_factor: float = 2.0

    def __post_init__(self):
        self.lelong_data = [(np.asarray(c, dtype=float), float(v)) for c, v in self.lelong_data]
        for c, v in self.lelong_data:
            if c.size != 2 * self.n:
                raise ParameterError("center has wrong dimension")
            if v < 0:
                raise ParameterError("Lelong coefficients must be non-negative")

    @property
    def K(self) -> float:
        """Constant with dd^c psi >= -K beta_0 for beta_0 = identity, from the poles only.

        In one dimension dd^c G = (kappa/4) Lap G = (kappa pi / 2)(delta - 1), so each
        pole contributes kappa pi c_i / 2. The n = 2 value is the same per-plane bound.
        """
        return sum(self.ddc_factor * math.pi * v / 2.0 for _, v in self.lelong_data)

    def value(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        out = np.zeros(points.shape[:-1])
        for c, v in self.lelong_data:
            if v:
                out = out + v * log_pole(points, c, self.period)
        if self.smooth is not None:
            xs = [points[..., a] for a in range(points.shape[-1])]
            out = out + self.smooth.value(xs)
        return out

    def sample(self, grid: PeriodicGrid, cells: float = 1.0) -> GridFunction:
        """Grid values with each pole truncated at its value ``cells`` grid steps away."""
        pts = _grid_points(grid)
        vals = self.value(pts)
        for c, v in self.lelong_data:
            if not v:
                continue
            off = np.array(c, dtype=float)
            off[0] += cells * grid.spacing
            floor = float(self.value(off[None, :])[0])
            near = grid.torus_distance(c) < cells * grid.spacing
            vals = np.where(near | ~np.isfinite(vals), np.maximum(np.nan_to_num(vals, neginf=floor), floor), vals)
        return GridFunction(grid, vals)

    def to_dict(self) -> dict:
        return {"n": self.n, "period": self.period,
                "lelong_data": [[list(map(float, c)), v] for c, v in self.lelong_data]}

    @classmethod
    def from_dict(cls, d: dict) -> "QuasiPshWeight":
        return cls(int(d["n"]), [(c, v) for c, v in d["lelong_data"]], period=float(d.get("period", 1.0)))


def circle_max(psi: QuasiPshWeight, x, r: float, samples: int = 64) -> float:
    """max of psi over the circle of radius r around x in the first complex line (and diagonal for n=2)."""
    x = np.asarray(x, dtype=float)
    th = np.linspace(0, 2 * np.pi, samples, endpoint=False)
    pts = np.repeat(x[None, :], samples, axis=0)
    if psi.n == 1:
        pts[:, 0] += r * np.cos(th)
        pts[:, 1] += r * np.sin(th)
    else:
        s = r / math.sqrt(2.0)
        pts[:, 0] += s * np.cos(th)
        pts[:, 1] += s * np.sin(th)
        pts[:, 2] += s * np.cos(th + 0.3)
        pts[:, 3] += s * np.sin(th + 0.3)
    return float(np.max(psi.value(pts)))


def lelong_number(psi: QuasiPshWeight, x, radii=None, max_residual: float = 1e-2) -> float:
    """Slope of r -> max_{|z-x|=r} psi against log r over a dyadic range of small radii."""
    radii = 2.0 ** -np.arange(8, 15) if radii is None else np.asarray(radii, dtype=float)
    vals = np.array([circle_max(psi, x, r) for r in radii])
    if not np.all(np.isfinite(vals)):
        raise FitUnstable("psi is not finite on the sampling circles")
    A = np.column_stack([np.log(radii), np.ones_like(radii)])
    coef, *_ = np.linalg.lstsq(A, vals, rcond=None)
    resid = vals - A @ coef
    scale = max(1.0, float(np.abs(vals).max()))
    if float(np.max(np.abs(resid))) > max_residual * scale:
        raise FitUnstable(f"log-linear fit residual {np.abs(resid).max():.3g} too large")
    return max(float(coef[0]), 0.0)


def grid_lelong_slope(phi: GridFunction, center, r_min: float, r_max: float, bins: int = 8) -> float:
    """Slope of the annulus maxima of a grid function against log r (a grid Lelong estimate)."""
    d = phi.grid.torus_distance(center)
    edges = np.geomspace(r_min, r_max, bins + 1)
    rs, ms = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (d >= lo) & (d < hi)
        if sel.any():
            rs.append(math.sqrt(lo * hi))
            ms.append(float(phi.values[sel].max()))
    if len(rs) < 3:
        raise FitUnstable("not enough annuli for a slope fit")
    coef = np.polyfit(np.log(rs), ms, 1)
    return float(coef[0])


def singular_set(psi: QuasiPshWeight, c: float, grid: PeriodicGrid | None = None, fitted: bool = False):
    """Centers (or grid mask of nearest nodes) where the Lelong number is >= c."""
    if not c > 0:
        raise ParameterError("c must be positive")
    chosen = []
    for center, v in psi.lelong_data:
        nu = lelong_number(psi, center) if fitted else v
        if nu >= c:
            chosen.append(center)
    if grid is None:
        return chosen
    mask = np.zeros(grid.shape, dtype=bool)
    for center in chosen:
        mask[grid.node_index(center)] = True
    return mask


# ---------------------------------------------------------------------------
# density specifications


@dataclass
class DensitySpec:
    kind: str
    centers: list = field(default_factory=list)
    strengths: list = field(default_factory=list)   # 2a for |z|^-2a, or Lelong c for e^-psi
    truncation: float = 1.0                          # in grid cells
    p: float | None = None
    orlicz_m: float | None = None
    params: dict = field(default_factory=dict)

    KINDS = ("uniform", "manufactured", "lp-singular", "orlicz", "exp-singular")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ParameterError(f"unknown density kind {self.kind!r}")
        if len(self.centers) != len(self.strengths):
            raise ParameterError("one strength per center")
        if any(s < 0 for s in self.strengths):
            raise ParameterError("strengths must be non-negative")
        if self.truncation <= 0:
            raise ParameterError("truncation must be positive")

    def check_integrability(self, n: int) -> bool:
        """lp-singular: |z|^-2a is in L^p iff 2a p < 2n."""
        if self.kind != "lp-singular" or self.p is None:
            return True
        return all(s * self.p < 2 * n for s in self.strengths)

    @classmethod
    def from_dict(cls, d: dict) -> "DensitySpec":
        d = dict(d)
        known = {k: d.pop(k) for k in ("kind", "centers", "strengths", "truncation", "p", "orlicz_m", "params") if k in d}
        known.setdefault("params", {}).update(d)
        return cls(**known)

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    @classmethod
    def load(cls, path) -> "DensitySpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _smooth_factor(grid: PeriodicGrid, amp: float) -> np.ndarray:
    xs = grid.coords()
    g = np.ones(grid.shape)
    if amp:
        g = g + amp * np.prod([np.cos(2 * np.pi * x / grid.period) for x in xs[:2]], axis=0)
    return g


def build_density(spec: DensitySpec, grid: PeriodicGrid, bg: HermitianBackground | None = None) -> GridMeasure:
    """Probability measure for ``spec`` on ``grid``; truncation levels go into ``meta``."""
    bg = bg or HermitianBackground.identity(grid.n)
    meta = {"kind": spec.kind, "truncation_cells": spec.truncation}
    if spec.kind == "uniform":
        f = np.ones(grid.shape)
    elif spec.kind == "manufactured":
        from .solver import manufactured_instance
        params = dict(spec.params)
        family = params.pop("family", "sine")
        _, mu = manufactured_instance(family, grid, bg, **params)
        mu.meta.update(meta)
        return mu
    else:
        if not spec.centers:
            raise ParameterError(f"{spec.kind} density needs at least one center")
        amp = float(spec.params.get("g_amplitude", 0.0 if spec.kind != "exp-singular" else 0.5))
        logf = np.zeros(grid.shape)
        levels = []
        for c, s in zip(spec.centers, spec.strengths):
            single = QuasiPshWeight(grid.n, [(c, 1.0)], period=grid.period)
            Gv = single.sample(grid, cells=spec.truncation).values
            if spec.kind in ("lp-singular", "exp-singular"):
                logf += -s * Gv
                levels.append(float(math.exp(min(-s * Gv.min(), 709.0))))
            else:  # orlicz: (1 + |G|)^s, in every L^p but with logarithmic growth
                logf += s * np.log1p(np.abs(np.minimum(Gv, 0.0)))
                levels.append(float((1 + abs(min(Gv.min(), 0.0))) ** s))
        with np.errstate(over="ignore"):
            f = _smooth_factor(grid, amp) * np.exp(logf)
        meta.update({"truncation_levels": levels, "g_amplitude": amp})
    if not np.all(np.isfinite(f)):
        raise NonNormalizable("density is not finite after truncation")
    mass = float(np.sum(f) * grid.cell_volume)
    if not mass > 0 or not math.isfinite(mass):
        raise NonNormalizable(f"density mass {mass!r} cannot be normalized")
    meta["raw_mass"] = mass
    mu = GridMeasure(grid, f / mass, meta)
    return mu


def lp_norm(mu: GridMeasure, p: float) -> float:
    return float((np.sum(mu.weights ** p) * mu.grid.cell_volume) ** (1.0 / p))


# ---------------------------------------------------------------------------
# relative bounds near log poles


def relative_bound_check(phi: GridFunction, psi: QuasiPshWeight, alpha: float, beta: float, q: float,
                         radius: float | None = None, tol: float = 1e-9, cells: float = 1.0) -> dict:
    """Check phi >= alpha psi - beta node-wise and record minima away from E_{1/q}(psi)."""
    if phi.max() > 1e-8:
        raise ParameterError("phi must be sup-normalized")
    grid = phi.grid
    psi_v = psi.sample(grid, cells=cells).values
    margin = phi.values - (alpha * psi_v - beta)
    worst = float(margin.min())
    idx = np.unravel_index(int(np.argmin(margin)), margin.shape)
    centers = singular_set(psi, 1.0 / q)
    radius = 4 * grid.spacing if radius is None else radius
    far = np.ones(grid.shape, dtype=bool)
    for c in centers:
        far &= grid.torus_distance(c) >= radius
    return {
        "pass": bool(worst >= -tol),
        "worst_margin": worst,
        "worst_node": tuple(int(i) for i in idx),
        "alpha": alpha, "beta": beta, "q": q,
        "singular_centers": [list(map(float, c)) for c in centers],
        "masked_min": float(phi.values[far].min()) if far.any() else float("nan"),
        "full_min": float(phi.values.min()),
        "mask_radius": radius,
    }
