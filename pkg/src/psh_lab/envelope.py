"""Discrete omega-psh envelopes of obstacles and checks of their structure.

The envelope of an obstacle h is computed as the solution of the discrete
complementarity system

    u <= h,   lambda_min(beta + H(u)) >= 0,   min(h - u, lambda_min(beta + H(u))) = 0

node-wise. In one complex dimension beta + H(u) = beta + (kappa/4) Lap_h u is
linear with an M-matrix, and a primal-dual active set iteration terminates in
finitely many steps. In two dimensions a projected Gauss-Seidel sweep with a
fixed four-coloring is used: only the diagonal of the Hessian depends on the
center value, ``beta + H(u)(i) = M0 - (kappa u_i / h^2) I``, so the largest
admissible value at a node is ``h^2 lambda_min(M0) / kappa`` in closed form.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .errors import NonConvergence, ParameterError, PreconditionError
from .grid import (
    GridFunction, PeriodicGrid, HermitianBackground, StencilOperators, form_field, hessian_array,
    is_omega_psh, lambda_min_field, ma_density,
)
from .chi import is_admissible_weight

log = logging.getLogger(__name__)


@dataclass
class EnvelopeResult:
    u: GridFunction
    contact: np.ndarray
    iterations: int
    residual: float
    obstacle: GridFunction
    tol: float
    method: str = ""
    trace: list = field(default_factory=list)


def complementarity_residual(u: GridFunction, h: GridFunction, bg: HermitianBackground) -> float:
    lam = lambda_min_field(form_field(u, bg))
    return float(np.max(np.abs(np.minimum(h.values - u.values, lam))))


def contact_set(u: GridFunction, h: GridFunction, ctol: float) -> np.ndarray:
    if ctol < 0:
        raise ParameterError("ctol must be non-negative")
    return (h.values - u.values) <= ctol


def _coloring(grid) -> tuple:
    idx = np.indices(grid.shape)
    if grid.n == 1:
        return (idx[0] + idx[1]) % 2, 2
    if grid.res % 4:
        raise ParameterError("n = 2 envelopes need res divisible by 4")
    return (idx[0] + idx[1] + 2 * (idx[2] + idx[3])) % 4, 4


def _prolong(uc: np.ndarray) -> np.ndarray:
    """Periodic bilinear interpolation from a grid to its refinement by two."""
    rc = uc.shape[0]
    out = np.zeros((2 * rc, 2 * rc))
    out[::2, ::2] = uc
    out[1::2, ::2] = 0.5 * (uc + np.roll(uc, -1, axis=0))
    out[:, 1::2] = 0.5 * (out[:, ::2] + np.roll(out[:, ::2], -1, axis=1))
    return out


def _active_set(h: GridFunction, bg: HermitianBackground, tol: float, max_iter: int, nested: bool = True):
    """Primal-dual active set iteration for n = 1 (w = h - u >= 0, lam = beta + L u >= 0).

    The initial active set comes from the solution on the grid coarsened by two
    when the resolution allows it, which keeps the number of outer iterations
    nearly independent of the resolution.
    """
    grid = h.grid
    beta = float(bg.beta[0, 0].real)
    L = (0.25 * bg.ddc_factor) * StencilOperators(grid).laplacian_plane(0)
    c = bg.ddc_factor / grid.spacing ** 2
    hv = h.flat
    q = beta + L @ hv                        # lam = q - L w
    coarse_iters = 0
    if nested and grid.res >= 32 and grid.res % 4 == 0:
        cg = PeriodicGrid(1, grid.res // 2, grid.period)
        hc = GridFunction(cg, h.values[::2, ::2])
        uc, coarse_iters, _ = _active_set(hc, bg, tol, max_iter, nested)
        u_guess = _prolong(uc.reshape(cg.shape)).reshape(-1)
        w0 = np.maximum(hv - u_guess, 0.0)
        lam0 = beta + L @ u_guess
        active = (lam0 - c * w0) > 0
    else:
        active = q > 0
    trace = []
    res = np.inf
    for it in range(1, max_iter + 1):
        inactive = ~active
        w = np.zeros_like(hv)
        if inactive.any():
            A = L[inactive][:, inactive].tocsc()
            lu = spla.splu(A)
            wi = lu.solve(q[inactive])
            # one step of iterative refinement: lam carries the solve error times 1/h^2
            wi += lu.solve(q[inactive] - A @ wi)
            w[inactive] = wi
        lam = q - L @ w
        lam[inactive] = 0.0
        new_active = (lam - c * w) > 0
        u = hv - w
        res = float(np.max(np.abs(np.minimum(w, beta + L @ u))))
        trace.append({"iteration": it, "residual": res, "active": int(new_active.sum())})
        if np.array_equal(new_active, active):
            return u, it + coarse_iters, trace
        active = new_active
    raise NonConvergence("active set iteration did not settle", iterations=max_iter, residual=res)


def _gauss_seidel(h: GridFunction, bg: HermitianBackground, tol: float, max_iter: int, u0=None):
    grid = h.grid
    kappa = bg.ddc_factor
    h2 = grid.spacing ** 2
    colors, k = _coloring(grid)
    masks = [colors == c for c in range(k)]
    u = h.values.copy() if u0 is None else np.minimum(u0.values, h.values)
    eye = np.eye(grid.n)
    trace = []
    res = np.inf
    for it in range(1, max_iter + 1):
        for mask in masks:
            form = bg.beta + hessian_array(u, grid, kappa)
            m0 = form[mask] + (kappa * u[mask] / h2)[:, None, None] * eye
            cap = h2 * lambda_min_field(m0) / kappa
            u[mask] = np.minimum(h.values[mask], cap)
        if it % 10 == 0 or it == max_iter:
            lam = lambda_min_field(bg.beta + hessian_array(u, grid, kappa))
            res = float(np.max(np.abs(np.minimum(h.values - u, lam))))
            trace.append({"iteration": it, "residual": res})
            if res <= tol:
                return u, it, trace
    raise NonConvergence(f"projected Gauss-Seidel stalled at residual {res:.3e}",
                         iterations=max_iter, residual=res)


def psh_envelope(h: GridFunction, bg: HermitianBackground, tol: float = 1e-9, max_iter: int = 200000,
                 method: str = "auto", u0: GridFunction | None = None) -> EnvelopeResult:
    """Largest discrete omega-psh function below the obstacle ``h``."""
    if not tol > 0:
        raise ParameterError("tol must be positive")
    if bg.n != h.grid.n:
        raise ParameterError("background and grid dimensions differ")
    if method == "auto":
        method = "active-set" if h.grid.n == 1 else "gauss-seidel"
    if method == "active-set":
        if h.grid.n != 1:
            raise ParameterError("the active set solver is available for n = 1 only")
        u, it, trace = _active_set(h, bg, tol, max_iter=min(max_iter, 500))
    elif method == "gauss-seidel":
        u, it, trace = _gauss_seidel(h, bg, tol, max_iter, u0)
    else:
        raise ParameterError(f"unknown method {method!r}")
    u = GridFunction(h.grid, u)
    # exact contact: the complementarity solution coincides with h there
    res = complementarity_residual(u, h, bg)
    if res > tol:
        raise NonConvergence(f"envelope residual {res:.3e} exceeds tol", iterations=it, residual=res)
    contact = contact_set(u, h, 10 * tol)
    return EnvelopeResult(u, contact, it, res, h, tol, method, trace)


def interior_contact(contact: np.ndarray) -> np.ndarray:
    """Contact nodes whose whole stencil neighborhood is in contact too."""
    out = contact.copy()
    ndim = contact.ndim
    for a in range(ndim):
        for s in (1, -1):
            out &= np.roll(contact, s, axis=a)
            for b in range(a + 1, ndim):
                for t in (1, -1):
                    out &= np.roll(np.roll(contact, s, axis=a), t, axis=b)
    return out


def orthogonality_report(r: EnvelopeResult, bg: HermitianBackground) -> dict:
    """Share of Monge-Ampere mass off the contact set and the density check on it."""
    ma_u = ma_density(r.u, bg).values
    pos = np.clip(ma_u, 0.0, None)
    total = float(pos.sum())
    off = float(pos[~r.contact].sum())
    defect = off / total if total > 0 else 0.0
    ma_h = np.clip(ma_density(r.obstacle, bg).values, 0.0, None)
    inner = interior_contact(r.contact)
    dens_err = float(np.max(np.abs(ma_u[inner] - ma_h[inner]))) if inner.any() else 0.0
    off_max = float(pos[~r.contact].max()) if (~r.contact).any() else 0.0
    return {"defect": defect, "off_contact_max_density": off_max,
            "contact_density_error": dens_err, "interior_contact_nodes": int(inner.sum()),
            "contact_nodes": int(r.contact.sum())}


def orthogonality_defect(r: EnvelopeResult, bg: HermitianBackground) -> float:
    """Fraction of the Monge-Ampere mass of the envelope carried by off-contact nodes."""
    return orthogonality_report(r, bg)["defect"]


def key_lemma_check(phi: GridFunction, phihat: GridFunction, chi, bg: HermitianBackground,
                    tol: float = 1e-10, ineq_tol: float = 1e-6, psh_tol: float = 1e-8) -> dict:
    """Compare MA(P(psi)) with (chi'(phi - phihat))^n MA(phi) on the contact set.

    ``psi = phihat + chi(phi - phihat)``; the inequality is checked in relative
    form, ``ma(u) <= (chi')^n ma(phi) + ineq_tol * scale`` with scale the
    largest right-hand side.
    """
    w = phi.values - phihat.values
    if np.any(w > psh_tol):
        raise PreconditionError("phi must lie below phihat")
    for name, f in (("phi", phi), ("phihat", phihat)):
        ok, worst = is_omega_psh(f, bg, psh_tol)
        if not ok:
            raise PreconditionError(f"{name} is not omega-psh (worst eigenvalue {worst:.3g})")
    w = np.minimum(w, 0.0)
    ok, problems = is_admissible_weight(chi, float(w.min()))
    if not ok:
        raise PreconditionError("; ".join(problems))
    psi = GridFunction(phi.grid, phihat.values + chi.chi(w))
    env = psh_envelope(psi, bg, tol=tol)
    lhs = ma_density(env.u, bg).values
    rhs = chi.chi_prime(w) ** phi.grid.n * ma_density(phi, bg).values
    scale = max(float(np.abs(rhs).max()), 1e-300)
    contact = env.contact
    excess = np.where(contact, lhs - rhs, -np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(contact & (rhs > 0), lhs / rhs, 0.0)
    idx = np.unravel_index(int(np.argmax(excess)), excess.shape)
    worst_excess = float(excess[idx])
    return {
        "pass": bool(worst_excess <= ineq_tol * scale),
        "worst_node": tuple(int(i) for i in idx),
        "worst_excess": worst_excess,
        "worst_ratio": float(ratio.max()),
        "contact_nodes": int(contact.sum()),
        "envelope_residual": env.residual,
        "scale": scale,
    }
