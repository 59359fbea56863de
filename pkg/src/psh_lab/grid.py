"""Periodic lattice over C^n, discrete complex Hessians and Monge-Ampere densities.

Conventions
-----------
The torus C^n / Z^{2n} (scaled by ``period``) is sampled on ``res`` points per
real axis. Real axes are ordered ``(x1, y1, x2, y2)`` with ``z_j = x_j + i y_j``
and node arrays have shape ``(res,) * 2n`` in C (row-major) order; the flat
node index is ``numpy.ravel_multi_index`` of the axis indices. The cell volume
is ``spacing ** (2n)``.

The complex Hessian uses narrow second-order central differences::

    u_{j kbar} = 1/4 [u_{x_j x_k} + u_{y_j y_k} + i (u_{x_j y_k} - u_{y_j x_k})]

and ``dd^c u`` is represented by ``ddc_factor * u_{j kbar}`` (default 2, i.e.
``dd^c = 2i d dbar``). The discrete Monge-Ampere density of ``u`` is
``det(beta + ddc_factor * H(u))`` per node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import ParameterError


@dataclass(frozen=True)
class PeriodicGrid:
    n: int
    res: int
    period: float = 1.0

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ParameterError(f"complex dimension must be 1 or 2, got {self.n}")
        if self.res < 8 or self.res % 2:
            raise ParameterError(f"res must be even and >= 8, got {self.res}")
        if not self.period > 0:
            raise ParameterError("period must be positive")

    @property
    def ndim(self) -> int:
        return 2 * self.n

    @property
    def shape(self) -> tuple:
        return (self.res,) * self.ndim

    @property
    def size(self) -> int:
        return self.res ** self.ndim

    @property
    def spacing(self) -> float:
        return self.period / self.res

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.ndim

    @property
    def volume(self) -> float:
        return self.period ** self.ndim

    def axis(self) -> np.ndarray:
        return np.arange(self.res) * self.spacing

    def coords(self) -> list:
        """Coordinate arrays (x1, y1, ...) broadcast to the full grid shape."""
        return list(np.meshgrid(*([self.axis()] * self.ndim), indexing="ij"))

    def complex_coords(self) -> list:
        xs = self.coords()
        return [xs[2 * j] + 1j * xs[2 * j + 1] for j in range(self.n)]

    def node_index(self, point) -> tuple:
        """Multi-index of the node nearest to ``point`` (real coordinates, length 2n)."""
        point = np.asarray(point, dtype=float)
        idx = np.rint(point / self.spacing).astype(int) % self.res
        return tuple(int(i) for i in idx)

    def node_point(self, index) -> np.ndarray:
        return np.asarray(index, dtype=float) * self.spacing

    def torus_distance(self, point) -> np.ndarray:
        """Minimum-image Euclidean distance of every node to ``point``."""
        point = np.asarray(point, dtype=float)
        d2 = np.zeros(self.shape)
        for a, xa in enumerate(self.coords()):
            d = (xa - point[a] + self.period / 2) % self.period - self.period / 2
            d2 += d * d
        return np.sqrt(d2)


@dataclass(frozen=True)
class HermitianBackground:
    beta: np.ndarray
    ddc_factor: float = 2.0

    def __post_init__(self):
        beta = np.atleast_2d(np.asarray(self.beta, dtype=complex))
        if beta.shape[0] != beta.shape[1]:
            raise ParameterError("beta must be square")
        if not np.allclose(beta, beta.conj().T, atol=1e-14):
            raise ParameterError("beta must be Hermitian")
        if np.linalg.eigvalsh(beta).min() <= 0:
            raise ParameterError("beta must be positive definite")
        if not self.ddc_factor > 0:
            raise ParameterError("ddc_factor must be positive")
        object.__setattr__(self, "beta", beta)

    @classmethod
    def identity(cls, n: int, ddc_factor: float = 2.0) -> "HermitianBackground":
        return cls(np.eye(n), ddc_factor)

    @property
    def n(self) -> int:
        return self.beta.shape[0]

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.beta).real)

    @property
    def lambda_min(self) -> float:
        return float(np.linalg.eigvalsh(self.beta)[0])

    def volume(self, grid: PeriodicGrid) -> float:
        """Continuum volume det(beta) * period^(2n)."""
        return self.det * grid.volume

    def scaled(self, t: float) -> "HermitianBackground":
        return HermitianBackground(t * self.beta, self.ddc_factor)


@dataclass
class GridFunction:
    grid: PeriodicGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.size != self.grid.size:
            raise ParameterError(f"expected {self.grid.size} values, got {v.size}")
        v = v.reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise ParameterError("grid function values must be finite")
        self.values = v

    @classmethod
    def constant(cls, grid: PeriodicGrid, c: float = 0.0) -> "GridFunction":
        return cls(grid, np.full(grid.shape, float(c)))

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def __add__(self, other):
        if isinstance(other, GridFunction):
            return GridFunction(self.grid, self.values + other.values)
        return GridFunction(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, GridFunction):
            return GridFunction(self.grid, self.values - other.values)
        return GridFunction(self.grid, self.values - other)

    def __neg__(self):
        return GridFunction(self.grid, -self.values)

    def __mul__(self, c):
        return GridFunction(self.grid, self.values * c)

    __rmul__ = __mul__

    def max(self) -> float:
        return float(self.values.max())

    def min(self) -> float:
        return float(self.values.min())

    def sup_normalized(self) -> "GridFunction":
        return GridFunction(self.grid, self.values - self.values.max())


@dataclass
class HessianField:
    grid: PeriodicGrid
    matrices: np.ndarray  # shape grid.shape + (n, n), complex

    def is_hermitian(self, atol: float = 1e-12) -> bool:
        m = self.matrices
        return bool(np.allclose(m, np.conj(np.swapaxes(m, -1, -2)), atol=atol, rtol=0))


@dataclass
class GridMeasure:
    """Measure ``weights * dV`` on the lattice; ``weights`` is a density per node."""

    grid: PeriodicGrid
    weights: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(self.grid.shape)
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ParameterError("measure weights must be finite and non-negative")
        self.weights = w

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights) * self.grid.cell_volume)

    @property
    def node_masses(self) -> np.ndarray:
        return self.weights * self.grid.cell_volume

    def normalized(self) -> "GridMeasure":
        return GridMeasure(self.grid, self.weights / self.total_mass, dict(self.meta))

    @classmethod
    def uniform(cls, grid: PeriodicGrid) -> "GridMeasure":
        return cls(grid, np.full(grid.shape, 1.0 / grid.volume))


# ---------------------------------------------------------------------------
# stencils


def _shift(u: np.ndarray, axis: int, step: int) -> np.ndarray:
    """Array whose entry at i is u[i + step] along ``axis`` (periodic)."""
    return np.roll(u, -step, axis=axis)


def second_difference(u: np.ndarray, a: int, b: int, h: float) -> np.ndarray:
    """Central approximation of d^2 u / dx_a dx_b."""
    if a == b:
        return (_shift(u, a, 1) - 2.0 * u + _shift(u, a, -1)) / (h * h)
    upp = _shift(_shift(u, a, 1), b, 1)
    upm = _shift(_shift(u, a, 1), b, -1)
    ump = _shift(_shift(u, a, -1), b, 1)
    umm = _shift(_shift(u, a, -1), b, -1)
    return (upp - upm - ump + umm) / (4.0 * h * h)


def hessian_array(values: np.ndarray, grid: PeriodicGrid, kappa: float) -> np.ndarray:
    """kappa * u_{j kbar} at every node, shape grid.shape + (n, n)."""
    n, h = grid.n, grid.spacing
    u = values.reshape(grid.shape)
    out = np.zeros(grid.shape + (n, n), dtype=complex)
    for j in range(n):
        xj, yj = 2 * j, 2 * j + 1
        out[..., j, j] = 0.25 * kappa * (second_difference(u, xj, xj, h) + second_difference(u, yj, yj, h))
        for k in range(j + 1, n):
            xk, yk = 2 * k, 2 * k + 1
            re = second_difference(u, xj, xk, h) + second_difference(u, yj, yk, h)
            im = second_difference(u, xj, yk, h) - second_difference(u, yj, xk, h)
            out[..., j, k] = 0.25 * kappa * (re + 1j * im)
            out[..., k, j] = np.conj(out[..., j, k])
    return out


def det_field(m: np.ndarray) -> np.ndarray:
    """Determinant of a field of 1x1 or 2x2 Hermitian matrices (real part)."""
    n = m.shape[-1]
    if n == 1:
        return m[..., 0, 0].real.copy()
    return (m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]).real


def lambda_min_field(m: np.ndarray) -> np.ndarray:
    n = m.shape[-1]
    if n == 1:
        return m[..., 0, 0].real.copy()
    a, d = m[..., 0, 0].real, m[..., 1, 1].real
    b2 = np.abs(m[..., 0, 1]) ** 2
    return 0.5 * (a + d) - np.sqrt(0.25 * (a - d) ** 2 + b2)


def complex_hessian(u: GridFunction, bg: HermitianBackground) -> HessianField:
    return HessianField(u.grid, hessian_array(u.values, u.grid, bg.ddc_factor))


def form_field(u: GridFunction, bg: HermitianBackground) -> np.ndarray:
    """beta + dd^c u at every node."""
    return bg.beta + hessian_array(u.values, u.grid, bg.ddc_factor)


def ma_density(u: GridFunction, bg: HermitianBackground) -> GridFunction:
    return GridFunction(u.grid, det_field(form_field(u, bg)))


def is_omega_psh(u: GridFunction, bg: HermitianBackground, tol: float = 0.0):
    """Return ``(ok, worst_eigenvalue)`` for the node-wise cone test."""
    if tol < 0:
        raise ParameterError("tol must be non-negative")
    worst = float(lambda_min_field(form_field(u, bg)).min())
    return worst >= -tol, worst


def mixed_determinant(a: np.ndarray, b: np.ndarray, j: int) -> np.ndarray:
    """Polarized determinant with ``a`` taken j times and ``b`` taken n - j times."""
    n = a.shape[-1]
    if not 0 <= j <= n:
        raise ParameterError(f"j must lie in [0, {n}], got {j}")
    if j == n:
        return det_field(a)
    if j == 0:
        return det_field(b)
    # n == 2, j == 1
    return 0.5 * (
        a[..., 0, 0] * b[..., 1, 1] + a[..., 1, 1] * b[..., 0, 0]
        - a[..., 0, 1] * b[..., 1, 0] - a[..., 1, 0] * b[..., 0, 1]
    ).real


def mixed_ma(u: GridFunction, v: GridFunction, j: int, bg: HermitianBackground) -> GridFunction:
    return GridFunction(u.grid, mixed_determinant(form_field(u, bg), form_field(v, bg), j))


def demailly_check(phi: GridFunction, psi: GridFunction, bg: HermitianBackground, contact_tol: float = 1e-12,
                   ineq_tol: float = 1e-6) -> dict:
    """Check mixed_ma(phi, psi, j) <= ma_density(psi) on {|psi - phi| <= contact_tol} for every j.

    ``ineq_tol`` is relative to the largest value of ma_density(psi) on the contact set.
    """
    if np.any(phi.values - psi.values > contact_tol):
        raise ParameterError("phi must lie below psi")
    contact = np.abs(psi.values - phi.values) <= contact_tol
    rhs = ma_density(psi, bg).values
    out = {"contact_nodes": int(contact.sum()), "worst_excess": -math.inf, "worst_j": None, "worst_node": None}
    if not contact.any():
        out.update({"pass": True, "relative_excess": 0.0})
        return out
    scale = max(float(np.abs(rhs[contact]).max()), 1e-300)
    fp, fq = form_field(phi, bg), form_field(psi, bg)
    for j in range(1, phi.grid.n + 1):
        ex = np.where(contact, mixed_determinant(fp, fq, j) - rhs, -np.inf)
        k = int(np.argmax(ex))
        if ex.flat[k] > out["worst_excess"]:
            out.update({"worst_excess": float(ex.flat[k]), "worst_j": j,
                        "worst_node": tuple(int(i) for i in np.unravel_index(k, ex.shape))})
    out["relative_excess"] = out["worst_excess"] / scale
    out["pass"] = bool(out["relative_excess"] <= ineq_tol)
    return out


def oscillation(u: GridFunction) -> float:
    return float(u.values.max() - u.values.min())


def integrate(f: GridFunction, mu: GridMeasure) -> float:
    if f.grid != mu.grid:
        raise ParameterError("grid function and measure live on different grids")
    return float(np.sum(f.values * mu.weights) * mu.grid.cell_volume)


def integrate_dv(values: np.ndarray, grid: PeriodicGrid) -> float:
    """Integral against the Lebesgue measure of the lattice."""
    return float(np.sum(values) * grid.cell_volume)


# ---------------------------------------------------------------------------
# sparse operators (Newton Jacobians, active-set solves)


class StencilOperators:
    """Sparse matrices of the second differences d^2/dx_a dx_b on a grid."""

    def __init__(self, grid: PeriodicGrid):
        self.grid = grid
        self._cache = {}

    @cached_property
    def _index(self) -> np.ndarray:
        return np.arange(self.grid.size).reshape(self.grid.shape)

    def _shift_matrix(self, steps: dict) -> sp.csr_matrix:
        idx = self._index
        for axis, step in steps.items():
            idx = np.roll(idx, -step, axis=axis)
        N = self.grid.size
        return sp.csr_matrix((np.ones(N), (np.arange(N), idx.reshape(-1))), shape=(N, N))

    def d2(self, a: int, b: int) -> sp.csr_matrix:
        key = (min(a, b), max(a, b))
        if key not in self._cache:
            h2 = self.grid.spacing ** 2
            if a == b:
                N = self.grid.size
                m = (self._shift_matrix({a: 1}) + self._shift_matrix({a: -1}) - 2 * sp.identity(N)) / h2
            else:
                m = (
                    self._shift_matrix({a: 1, b: 1}) - self._shift_matrix({a: 1, b: -1})
                    - self._shift_matrix({a: -1, b: 1}) + self._shift_matrix({a: -1, b: -1})
                ) / (4 * h2)
            self._cache[key] = m.tocsr()
        return self._cache[key]

    def laplacian_plane(self, j: int) -> sp.csr_matrix:
        return (self.d2(2 * j, 2 * j) + self.d2(2 * j + 1, 2 * j + 1)).tocsr()

    def logdet_jacobian(self, m: np.ndarray, kappa: float) -> sp.csr_matrix:
        """Derivative of ``log det(beta + kappa H(u))`` with respect to u.

        ``m`` is the current form field beta + kappa H(u).
        """
        g = self.grid
        q = 0.25 * kappa
        if g.n == 1:
            w = 1.0 / m[..., 0, 0].real.reshape(-1)
            return (sp.diags(q * w) @ self.laplacian_plane(0)).tocsr()
        det = det_field(m).reshape(-1)
        w11 = (m[..., 1, 1].real.reshape(-1)) / det
        w22 = (m[..., 0, 0].real.reshape(-1)) / det
        w21 = -np.conj(m[..., 0, 1]).reshape(-1) / det
        jac = sp.diags(q * w11) @ self.laplacian_plane(0) + sp.diags(q * w22) @ self.laplacian_plane(1)
        re_part = self.d2(0, 2) + self.d2(1, 3)
        im_part = self.d2(0, 3) - self.d2(1, 2)
        jac = jac + sp.diags(2 * q * w21.real) @ re_part - sp.diags(2 * q * w21.imag) @ im_part
        return jac.tocsr()
