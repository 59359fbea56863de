"""Concave weights chi: R^- -> R^- and their convex counterparts h(t) = -chi(-t).

A :class:`WeightChi` is described by the derivative data of g = (h')^p:
on ``[t_k, t_{k+1})`` the derivative is ``g'(t) = a_k * kernel(t)`` and past the
last knot ``g'(t) = tail_scale * tail_kernel(t)``, with g(0) = 1. Then
``h' = g^(1/p)`` and h(0) = 0, so chi(0) = 0 and chi'(0) = 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_legendre

from .errors import ParameterError

_KERNELS = {
    # name: (kernel, antiderivative)
    "inv-square": (lambda t: 1.0 / (1.0 + t) ** 2, lambda t: -1.0 / (1.0 + t)),
    "one": (lambda t: np.ones_like(t), lambda t: t),
    "inv-quad": (lambda t: 1.0 / (1.0 + t * t), np.arctan),
}

_GL_X, _GL_W = roots_legendre(12)


@dataclass
class WeightChi:
    knots: np.ndarray
    coeffs: np.ndarray
    power: float
    kernel: str = "inv-square"
    tail_kernel: str = "inv-square"
    tail_scale: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.knots = np.asarray(self.knots, dtype=float)
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.knots.ndim != 1 or self.knots.size < 1 or self.knots[0] != 0.0:
            raise ParameterError("knots must start at 0")
        if np.any(np.diff(self.knots) <= 0):
            raise ParameterError("knots must be strictly increasing")
        if self.coeffs.size != self.knots.size - 1:
            raise ParameterError("need one coefficient per knot interval")
        if np.any(self.coeffs < 0) or self.tail_scale < 0:
            raise ParameterError("g' must be non-negative")
        if not self.power > 0:
            raise ParameterError("power must be positive")
        for k in (self.kernel, self.tail_kernel):
            if k not in _KERNELS:
                raise ParameterError(f"unknown kernel {k!r}")
        _, F = _KERNELS[self.kernel]
        jumps = self.coeffs * (F(self.knots[1:]) - F(self.knots[:-1]))
        self._g_knots = 1.0 + np.concatenate([[0.0], np.cumsum(jumps)])
        # table of h on 16 panels per knot interval and a geometric grid over the tail;
        # g is smooth on every table interval, so Gauss-Legendre is accurate
        inner = [np.linspace(a, b, 17)[:-1] for a, b in zip(self.knots[:-1], self.knots[1:])]
        tail = self.knots[-1] + np.geomspace(1e-3, 1e7, 600)
        self._table = np.concatenate(inner + [self.knots[-1:], tail])
        pieces = self._h_piece(self._table[:-1], self._table[1:])
        self._h_table = np.concatenate([[0.0], np.cumsum(pieces)])

    @classmethod
    def identity(cls, power: float = 1.0) -> "WeightChi":
        """chi(t) = t."""
        return cls(np.array([0.0]), np.array([]), power, tail_scale=0.0)

    @property
    def T0(self) -> float:
        return float(self.knots[-1])

    def _segment(self, t):
        t = np.asarray(t, dtype=float)
        return np.clip(np.searchsorted(self.knots, t, side="right") - 1, 0, self.knots.size - 1), t

    def gprime(self, t):
        k, t = self._segment(t)
        inner = t < self.T0
        kin, _ = _KERNELS[self.kernel]
        ktail, _ = _KERNELS[self.tail_kernel]
        a = np.where(inner, self.coeffs[np.minimum(k, self.coeffs.size - 1)] if self.coeffs.size else 0.0, 0.0)
        return np.where(inner, a * kin(t), self.tail_scale * ktail(t))

    def g(self, t):
        k, t = self._segment(t)
        if np.any(t < 0):
            raise ParameterError("g is defined on t >= 0")
        _, Fin = _KERNELS[self.kernel]
        _, Ftail = _KERNELS[self.tail_kernel]
        inner = t < self.T0
        kk = np.minimum(k, max(self.coeffs.size - 1, 0))
        if self.coeffs.size:
            gin = self._g_knots[kk] + self.coeffs[kk] * (Fin(t) - Fin(self.knots[kk]))
        else:
            gin = np.ones_like(t)
        gtail = self._g_knots[-1] + self.tail_scale * (Ftail(t) - Ftail(self.T0))
        return np.where(inner, gin, gtail)

    def hprime(self, t):
        return self.g(t) ** (1.0 / self.power)

    def hsecond(self, t):
        g = self.g(t)
        return g ** (1.0 / self.power - 1.0) * self.gprime(t) / self.power

    def _h_piece(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        x = mid[..., None] + half[..., None] * _GL_X
        return half * np.sum(_GL_W * self.hprime(x), axis=-1)

    def h(self, t):
        """h(t) = int_0^t h'(s) ds for t >= 0."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ParameterError("h is defined on t >= 0")
        if np.any(t > self._table[-1]):
            raise ParameterError("t beyond the tabulated range")
        k = np.clip(np.searchsorted(self._table, t, side="right") - 1, 0, self._table.size - 2)
        out = self._h_table[k] + self._h_piece(self._table[k], t)
        return out if out.ndim else float(out)

    def chi(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s > 0):
            raise ParameterError("chi is defined on s <= 0")
        return -self.h(-s)

    def chi_prime(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s > 0):
            raise ParameterError("chi is defined on s <= 0")
        return self.hprime(-s)

    def check_invariants(self, t_max: float | None = None, samples: int = 400) -> dict:
        """chi(0) = 0, chi'(0) = 1, h convex with h' >= 1, h(1) >= 1."""
        t_max = t_max or max(2.0, 2 * self.T0)
        t = np.linspace(0.0, t_max, samples)
        hp = self.hprime(t)
        hv = self.h(t)
        d2 = hv[2:] - 2 * hv[1:-1] + hv[:-2]
        out = {
            "chi0": float(-self.h(0.0)),
            "chi_prime0": float(self.hprime(0.0)),
            "min_hprime": float(hp.min()),
            "min_second_difference": float(d2.min()),
            "h1": float(self.h(1.0)),
        }
        out["pass"] = bool(
            out["chi0"] == 0.0 and abs(out["chi_prime0"] - 1.0) <= 1e-14 and out["min_hprime"] >= 1.0 - 1e-14
            and out["min_second_difference"] >= -1e-12 and out["h1"] >= 1.0 - 1e-12
        )
        return out


@dataclass
class ReflectedLogWeight:
    """chi(t) = a log(1 + t / a) on [-T0 a, 0], extended linearly below -T0 a.

    For a = 1 this is the point reflection of t -> -log(1 - t); it is concave
    and increasing with chi(0) = 0 and chi'(0) = 1. The scale ``a`` places the
    curvature at the range of the arguments it will be applied to.
    """

    T0: float = 0.9
    scale: float = 1.0

    def __post_init__(self):
        if not 0 < self.T0 < 1:
            raise ParameterError("T0 must lie in (0, 1)")
        if not self.scale > 0:
            raise ParameterError("scale must be positive")

    def chi(self, s):
        a = self.scale
        s = np.asarray(s, dtype=float) / a
        edge = -self.T0
        inner = np.log1p(np.maximum(s, edge))
        return a * np.where(s >= edge, inner, np.log1p(edge) + (s - edge) / (1.0 + edge))

    def chi_prime(self, s):
        s = np.asarray(s, dtype=float) / self.scale
        return 1.0 / (1.0 + np.maximum(s, -self.T0))


@dataclass
class FunctionWeight:
    """Weight given by explicit callables; used to feed arbitrary candidates to checks."""

    value: object
    derivative: object

    def chi(self, s):
        return np.asarray(self.value(np.asarray(s, dtype=float)), dtype=float)

    def chi_prime(self, s):
        return np.asarray(self.derivative(np.asarray(s, dtype=float)), dtype=float)


def is_admissible_weight(weight, lower: float, samples: int = 2001, tol: float = 1e-12) -> tuple:
    """Check chi(0) = 0, chi'(0) >= 1 and concavity on [lower, 0] by sampling."""
    s = np.linspace(min(lower, -1e-6), 0.0, samples)
    d = weight.chi_prime(s)
    v = weight.chi(s)
    second = v[2:] - 2 * v[1:-1] + v[:-2]
    problems = []
    if abs(float(weight.chi(np.array(0.0)))) > tol:
        problems.append("chi(0) != 0")
    if float(weight.chi_prime(np.array(0.0))) < 1 - tol:
        problems.append("chi'(0) < 1")
    if np.any(np.diff(d) > tol * np.maximum(1.0, np.abs(d[1:]))):
        problems.append("chi' is not non-increasing (chi not concave)")
    if np.any(second > tol * np.maximum(1.0, np.abs(v[1:-1]))):
        problems.append("chi has positive second differences")
    if np.any(d < 0):
        problems.append("chi is not increasing")
    return not problems, problems
