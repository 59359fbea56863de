"""Smooth periodic test functions with closed-form Hessians.

These back manufactured solutions and randomized property tests: every
function here can be sampled on a grid and also returns its exact real
Hessian, from which the continuum complex Hessian and Monge-Ampere density
follow without finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import GridFunction, HermitianBackground, PeriodicGrid, det_field, lambda_min_field


class SmoothFunction:
    ndim: int
    period: float = 1.0

    def value(self, xs):
        raise NotImplementedError

    def hessian(self, xs):
        """Real Hessian, shape ``xs[0].shape + (ndim, ndim)``."""
        raise NotImplementedError

    def __add__(self, other):
        return SumFunction([self, other])

    def __rmul__(self, c):
        return ScaledFunction(self, float(c))

    def sample(self, grid: PeriodicGrid) -> GridFunction:
        return GridFunction(grid, self.value(grid.coords()))


@dataclass
class SumFunction(SmoothFunction):
    parts: list

    def __post_init__(self):
        self.ndim = self.parts[0].ndim
        self.period = self.parts[0].period

    def value(self, xs):
        return sum(p.value(xs) for p in self.parts)

    def hessian(self, xs):
        return sum(p.hessian(xs) for p in self.parts)


@dataclass
class ScaledFunction(SmoothFunction):
    base: SmoothFunction
    scale: float

    def __post_init__(self):
        self.ndim = self.base.ndim
        self.period = self.base.period

    def value(self, xs):
        return self.scale * self.base.value(xs)

    def hessian(self, xs):
        return self.scale * self.base.hessian(xs)


@dataclass
class TrigPoly(SmoothFunction):
    """Sum of ``amp * cos(2 pi k.x / period + phase)`` over integer wave vectors."""

    ndim: int
    amps: list
    waves: list
    phases: list = field(default_factory=list)
    period: float = 1.0

    def __post_init__(self):
        self.amps = [float(a) for a in self.amps]
        self.waves = [np.asarray(k, dtype=float) for k in self.waves]
        if not self.phases:
            self.phases = [0.0] * len(self.amps)

    def _args(self, xs, k, ph):
        w = 2 * np.pi / self.period
        return w * sum(k[a] * xs[a] for a in range(self.ndim)) + ph

    def value(self, xs):
        out = np.zeros_like(np.asarray(xs[0], dtype=float))
        for A, k, ph in zip(self.amps, self.waves, self.phases):
            out = out + A * np.cos(self._args(xs, k, ph))
        return out

    def hessian(self, xs):
        w = 2 * np.pi / self.period
        out = np.zeros(np.shape(xs[0]) + (self.ndim, self.ndim))
        for A, k, ph in zip(self.amps, self.waves, self.phases):
            c = np.cos(self._args(xs, k, ph))
            out += (-A * w * w * c)[..., None, None] * np.outer(k, k)
        return out

    def hessian_bound(self) -> float:
        """Upper bound for the spectral norm of the real Hessian."""
        w = 2 * np.pi / self.period
        return float(sum(abs(A) * w * w * np.dot(k, k) for A, k in zip(self.amps, self.waves)))


@dataclass
class CosBump(SmoothFunction):
    """Periodic bump ``exp(sigma * sum_a (cos(2 pi (x_a - c_a) / period) - 1))``."""

    center: np.ndarray
    sigma: float = 4.0
    period: float = 1.0

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        self.ndim = self.center.size

    def _theta(self, xs):
        w = 2 * np.pi / self.period
        return [w * (xs[a] - self.center[a]) for a in range(self.ndim)]

    def value(self, xs):
        th = self._theta(xs)
        return np.exp(self.sigma * sum(np.cos(t) - 1 for t in th))

    def hessian(self, xs):
        w = 2 * np.pi / self.period
        th = self._theta(xs)
        b = self.value(xs)
        s = [np.sin(t) for t in th]
        c = [np.cos(t) for t in th]
        sg = self.sigma
        out = np.zeros(np.shape(xs[0]) + (self.ndim, self.ndim))
        for a in range(self.ndim):
            for bb in range(self.ndim):
                term = sg * sg * w * w * s[a] * s[bb]
                if a == bb:
                    term = term - sg * w * w * c[a]
                out[..., a, bb] = b * term
        return out


def complex_hessian_from_real(r: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(r.shape[:-2] + (n, n), dtype=complex)
    for j in range(n):
        xj, yj = 2 * j, 2 * j + 1
        for k in range(n):
            xk, yk = 2 * k, 2 * k + 1
            out[..., j, k] = 0.25 * (
                r[..., xj, xk] + r[..., yj, yk] + 1j * (r[..., xj, yk] - r[..., yj, xk])
            )
    return out


def analytic_form(f: SmoothFunction, grid: PeriodicGrid, bg: HermitianBackground) -> np.ndarray:
    """beta + kappa * u_{j kbar} evaluated exactly at the nodes."""
    h = complex_hessian_from_real(f.hessian(grid.coords()), grid.n)
    return bg.beta + bg.ddc_factor * h


def analytic_ma(f: SmoothFunction, grid: PeriodicGrid, bg: HermitianBackground) -> np.ndarray:
    return det_field(analytic_form(f, grid, bg))


def analytic_lambda_min(f: SmoothFunction, grid: PeriodicGrid, bg: HermitianBackground) -> np.ndarray:
    return lambda_min_field(analytic_form(f, grid, bg))


def random_trig(rng: np.random.Generator, ndim: int, n_terms: int = 4, kmax: int = 2,
                amp: float = 1.0, period: float = 1.0) -> TrigPoly:
    """Random trigonometric polynomial normalized so its Hessian norm is at most ``amp``."""
    waves = []
    while len(waves) < n_terms:
        k = rng.integers(-kmax, kmax + 1, size=ndim)
        if np.any(k):
            waves.append(k)
    amps = rng.uniform(-1, 1, size=n_terms)
    phases = rng.uniform(0, 2 * np.pi, size=n_terms)
    p = TrigPoly(ndim, list(amps), waves, list(phases), period)
    scale = amp / p.hessian_bound()
    return TrigPoly(ndim, list(amps * scale), waves, list(phases), period)
