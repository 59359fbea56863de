"""Monge-Ampere solvers: the periodic torus problem and the radial Dirichlet problem on the ball."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import roots_legendre

from .errors import (
    LossOfPositivity, NonConvergence, NonIntegrable, ParameterError, PositivityViolation,
)
from .grid import (
    GridFunction, GridMeasure, HermitianBackground, PeriodicGrid, StencilOperators,
    det_field, hessian_array, is_omega_psh, lambda_min_field, ma_density, second_difference,
)
from .smooth import CosBump, SmoothFunction, TrigPoly, analytic_lambda_min, analytic_ma

log = logging.getLogger(__name__)


@dataclass
class SolveConfig:
    newton_tol: float = 1e-9
    max_newton: int = 60
    damping: float = 1.0
    continuity_steps: int = 1
    normalization: str = "sup-zero"
    damping_floor: float = 1e-6
    linear_solver: str = "auto"

    def __post_init__(self):
        if not self.newton_tol > 0:
            raise ParameterError("newton_tol must be positive")
        if self.continuity_steps < 1:
            raise ParameterError("continuity_steps must be >= 1")
        if not 0 < self.damping <= 1:
            raise ParameterError("damping must lie in (0, 1]")
        if self.linear_solver not in ("auto", "direct", "gmres"):
            raise ParameterError(f"unknown linear solver {self.linear_solver!r}")
        if self.normalization not in ("sup-zero", "mean-zero"):
            raise ParameterError(f"unknown normalization {self.normalization!r}")


@dataclass
class TorusSolution:
    phi: GridFunction
    residual: float
    v_disc: float
    iterations: int
    trace: list = field(default_factory=list)


def torus_residual(phi: GridFunction, density: np.ndarray, bg: HermitianBackground):
    """Max-norm of det(beta + H(phi)) / V_disc - density, and V_disc."""
    det = ma_density(phi, bg).values
    v_disc = float(np.sum(det) * phi.grid.cell_volume)
    return float(np.max(np.abs(det / v_disc - density))), v_disc


def _log_residual(form: np.ndarray, log_f: np.ndarray, c: float) -> np.ndarray:
    return np.log(det_field(form)).reshape(-1) - log_f - c


def solve_torus(mu: GridMeasure, bg: HermitianBackground, cfg: SolveConfig | None = None,
                phi0: GridFunction | None = None) -> TorusSolution:
    """Solve det(beta + dd^c phi) / V_disc = density(mu) by damped log-det Newton.

    The density is reached along ``mu_s = (1 - s) uniform + s mu`` in
    ``cfg.continuity_steps`` stages. The unknown ``c = log V_disc`` is carried
    alongside phi and the mean-zero gauge closes the bordered Newton system.
    """
    cfg = cfg or SolveConfig()
    grid = mu.grid
    if bg.n != grid.n:
        raise ParameterError("background and grid dimensions differ")
    if abs(mu.total_mass - 1.0) > 1e-8:
        raise ParameterError(f"mu must be a probability measure (mass {mu.total_mass!r})")
    if np.any(mu.weights <= 0):
        raise ParameterError("density must be strictly positive on the grid")

    ops = StencilOperators(grid)
    N = grid.size
    kappa = bg.ddc_factor
    phi = np.zeros(N) if phi0 is None else phi0.flat - phi0.flat.mean()
    form = bg.beta + _hess(phi, grid, kappa)
    if lambda_min_field(form).min() <= 0:
        raise PositivityViolation("initial guess is not strictly omega-psh")
    c = math.log(float(np.sum(det_field(form)) * grid.cell_volume))
    target = mu.weights.reshape(-1)
    uniform = 1.0 / grid.volume
    trace = []
    total_iter = 0

    for stage in range(1, cfg.continuity_steps + 1):
        s = stage / cfg.continuity_steps
        dens = (1.0 - s) * uniform + s * target
        log_f = np.log(dens)
        final = stage == cfg.continuity_steps
        tol = cfg.newton_tol if final else max(cfg.newton_tol, 1e-6)
        F = _log_residual(form, log_f, c)
        for it in range(cfg.max_newton + 1):
            res, v_disc = torus_residual(GridFunction(grid, phi), dens.reshape(grid.shape), bg)
            trace.append({"stage": stage, "s": s, "iteration": it, "residual": res,
                          "log_residual": float(np.max(np.abs(F))), "v_disc": v_disc})
            if res <= tol:
                break
            if it == cfg.max_newton:
                raise NonConvergence(
                    f"Newton did not converge at stage {stage} (residual {res:.3e})",
                    iterations=total_iter, residual=res, stage=stage)
            J = ops.logdet_jacobian(form, kappa)
            step = _newton_step(J, F, form, grid, kappa, cfg.linear_solver)
            dphi, dc = step[:N], step[N]
            alpha = cfg.damping
            f_norm = float(np.max(np.abs(F)))
            while True:
                trial = phi + alpha * dphi
                tform = bg.beta + _hess(trial, grid, kappa)
                if lambda_min_field(tform).min() > 0:
                    tF = _log_residual(tform, log_f, c + alpha * dc)
                    if np.max(np.abs(tF)) <= (1.0 - 1e-4 * alpha) * f_norm or f_norm < 1e-13:
                        break
                    positivity = False
                else:
                    positivity = True
                alpha *= 0.5
                if alpha < cfg.damping_floor:
                    cls = LossOfPositivity if positivity else NonConvergence
                    raise cls(f"line search failed at stage {stage}, iteration {it}",
                              iterations=total_iter, residual=res, stage=stage, damping=alpha)
            phi, c, form, F = trial, c + alpha * dc, tform, tF
            total_iter += 1
            log.debug("stage %d it %d residual %.3e step %.3g", stage, it, res, alpha)

    if cfg.normalization == "sup-zero":
        phi = phi - phi.max()
    else:
        phi = phi - phi.mean()
    sol = GridFunction(grid, phi)
    res, v_disc = torus_residual(sol, target.reshape(grid.shape), bg)
    return TorusSolution(sol, res, v_disc, total_iter, trace)


def _symbol(grid: PeriodicGrid, a: int, b: int) -> np.ndarray:
    """Fourier symbol of the second difference d^2/dx_a dx_b."""
    h = grid.spacing
    theta = 2 * np.pi * np.fft.fftfreq(grid.res)
    shape = [1] * grid.ndim
    ta = theta.reshape([grid.res if i == a else 1 for i in range(grid.ndim)])
    tb = theta.reshape([grid.res if i == b else 1 for i in range(grid.ndim)])
    if a == b:
        return np.broadcast_to((2 * np.cos(ta) - 2) / (h * h), grid.shape)
    return np.broadcast_to(-np.sin(ta) * np.sin(tb) / (h * h), grid.shape)


def _coefficients(form: np.ndarray, kappa: float, n: int) -> dict:
    """Pointwise coefficients of the log-det Jacobian on each second difference."""
    q = 0.25 * kappa
    if n == 1:
        w = q / form[..., 0, 0].real
        return {(0, 0): w, (1, 1): w}
    det = det_field(form)
    w11 = q * form[..., 1, 1].real / det
    w22 = q * form[..., 0, 0].real / det
    w21 = -np.conj(form[..., 0, 1]) / det
    return {(0, 0): w11, (1, 1): w11, (2, 2): w22, (3, 3): w22,
            (0, 2): 2 * q * w21.real, (1, 3): 2 * q * w21.real,
            (0, 3): -2 * q * w21.imag, (1, 2): 2 * q * w21.imag}


def _fft_preconditioner(form, grid: PeriodicGrid, kappa: float):
    """Approximate inverse of the bordered Newton matrix.

    The Jacobian is modeled as ``diag(s) J0`` with J0 the constant-coefficient
    operator of the normalized coefficients, inverted exactly by FFT. For n = 1
    this model is exact.
    """
    N = grid.size
    coef = _coefficients(form, kappa, grid.n)
    scale = coef[(0, 0)] if grid.n == 1 else 0.5 * (coef[(0, 0)] + coef[(2, 2)])
    symbol = np.zeros(grid.shape)
    for (a, b), c in coef.items():
        symbol = symbol + np.mean(c / scale) * _symbol(grid, a, b)
    symbol = np.where(np.abs(symbol) < 1e-300, 1.0, symbol)
    zero = (0,) * grid.ndim
    inv_s = 1.0 / scale.reshape(-1)

    def apply(v):
        r, t = v[:N], v[N]
        dc = -np.dot(r, inv_s) / inv_s.sum()
        rhs = ((r + dc) * inv_s).reshape(grid.shape)
        fr = np.fft.fftn(rhs) / symbol
        fr[zero] = 0.0
        dphi = np.fft.ifftn(fr).real.reshape(-1) + t
        return np.concatenate([dphi, [dc]])

    return spla.LinearOperator((N + 1, N + 1), matvec=apply, dtype=float)


def _newton_step(J, F, form, grid: PeriodicGrid, kappa: float, method: str) -> np.ndarray:
    N = grid.size
    rhs = np.concatenate([-F, [0.0]])
    if method == "auto":
        method = "gmres"
    if method == "direct":
        A = sp.bmat([[J, sp.csr_matrix(-np.ones((N, 1)))],
                     [sp.csr_matrix(np.ones((1, N)) / N), None]], format="csc")
        return spla.spsolve(A, rhs)

    def matvec(v):
        return np.concatenate([J @ v[:N] - v[N], [v[:N].mean()]])

    A = spla.LinearOperator((N + 1, N + 1), matvec=matvec, dtype=float)
    M = _fft_preconditioner(form, grid, kappa)
    step, info = spla.gmres(A, rhs, M=M, rtol=1e-9, atol=0.0, restart=50, maxiter=6)
    if info < 0:
        raise NonConvergence("linear solve failed", diagnostics_info=info)
    return step


def _hess(flat: np.ndarray, grid: PeriodicGrid, kappa: float) -> np.ndarray:
    return hessian_array(flat.reshape(grid.shape), grid, kappa)


# ---------------------------------------------------------------------------
# manufactured instances


def manufactured_function(kind: str, grid: PeriodicGrid, **params) -> SmoothFunction | None:
    n = grid.n
    P = grid.period
    if kind == "flat":
        return None
    if kind == "sine":
        a = params.get("a", 0.05 if n == 1 else 0.02)
        if n == 1:
            return TrigPoly(2, [a], [(1, 0)], [-0.5 * np.pi], P)
        return TrigPoly(4, [a, 0.5 * a, 0.25 * a], [(1, 0, 0, 0), (0, 0, 0, 1), (1, 0, 1, 0)],
                        [-0.5 * np.pi, 0.0, 0.7], P)
    if kind == "two-bump":
        a = params.get("a", 0.01)
        sigma = params.get("sigma", 2.0)
        c1 = np.full(2 * n, 0.25 * P)
        c2 = np.full(2 * n, 0.7 * P)
        return a * CosBump(c1, sigma, P) + (-0.5 * a) * CosBump(c2, sigma, P)
    raise ParameterError(f"unknown manufactured kind {kind!r}")


def manufactured_instance(kind: str, grid: PeriodicGrid, bg: HermitianBackground,
                          discrete: bool = False, **params):
    """Return ``(phi_star, mu)`` with mu the normalized Monge-Ampere measure of phi_star.

    By default mu is built from the exact (continuum) complex Hessian, so the
    discrete solution differs from phi_star by the truncation error of the
    stencils. ``discrete=True`` uses the lattice operator instead, for which
    phi_star is an exact discrete solution.
    """
    f = manufactured_function(kind, grid, **params)
    if f is None:
        phi = GridFunction.constant(grid, 0.0)
        return phi, GridMeasure.uniform(grid)
    phi = f.sample(grid)
    if discrete:
        ok, worst = is_omega_psh(phi, bg)
        dens = ma_density(phi, bg).values
    else:
        worst = float(analytic_lambda_min(f, grid, bg).min())
        ok = worst > 0
        dens = analytic_ma(f, grid, bg)
    if not ok or worst <= 0 or np.any(dens <= 0):
        raise PositivityViolation(f"amplitude too large: worst eigenvalue {worst:.3g}")
    mu = GridMeasure(grid, dens).normalized()
    mu.meta.update({"kind": "manufactured", "family": kind, **params})
    return phi.sup_normalized(), mu


# ---------------------------------------------------------------------------
# domination principle


def domination_check(u: GridFunction, v: GridFunction, bg: HermitianBackground, tol: float = 1e-8,
                     mass_tol: float | None = None, C: float = 100.0) -> dict:
    """Discrete domination principle: u >= v on supp MA(u) implies u >= v everywhere.

    The report records both the hypothesis and the conclusion; ``pass`` is
    False only when the hypothesis holds, both functions lie in the cone and
    the conclusion fails.
    """
    ma_u = ma_density(u, bg).values
    if mass_tol is None:
        mass_tol = 1e-6 * bg.det
    support = ma_u > mass_tol
    gap = u.values - v.values
    hyp_margin = float(gap[support].min()) if support.any() else math.inf
    hypothesis = hyp_margin >= -tol
    worst = float(gap.min())
    conclusion = worst >= -C * tol
    u_psh, u_eig = is_omega_psh(u, bg, tol)
    v_psh, v_eig = is_omega_psh(v, bg, tol)
    applicable = u_psh and v_psh
    idx = np.unravel_index(int(np.argmin(gap)), gap.shape)
    return {
        "hypothesis": bool(hypothesis),
        "conclusion": bool(conclusion),
        "applicable": bool(applicable),
        "pass": bool(not (hypothesis and applicable) or conclusion),
        "hypothesis_margin": hyp_margin,
        "worst_violation": max(0.0, -worst),
        "worst_node": tuple(int(i) for i in idx),
        "u_worst_eigenvalue": u_eig,
        "v_worst_eigenvalue": v_eig,
        "support_fraction": float(support.mean()),
    }


# ---------------------------------------------------------------------------
# radial Dirichlet problem on the unit ball


def sphere_area(n: int) -> float:
    """Area of the unit sphere S^{2n-1} in C^n = R^{2n}."""
    return 2.0 * math.pi ** n / math.factorial(n - 1)


def radial_constant(n: int, kappa: float = 2.0) -> float:
    """c_n with (v')^n = c_n * M(e^s) for radial u(z) = v(log|z|)."""
    return n * 2.0 ** (n + 1) / (sphere_area(n) * kappa ** n)


@dataclass
class RadialProfile:
    n: int
    mesh: np.ndarray       # radii, increasing, mesh[-1] == 1
    v: np.ndarray          # potential at mesh radii (function of s = log r)
    dv: np.ndarray         # dv/ds
    mass: np.ndarray       # cumulative mass M(r) of the density
    center_value: float    # u(0)
    kappa: float = 2.0
    boundary_value: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def s(self) -> np.ndarray:
        return np.log(self.mesh)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        r0 = self.mesh[0]
        theta = self.meta.get("inner_exponent", 2.0)
        inner = self.v[0] - self.dv[0] / theta * (1.0 - (np.clip(r, 0, r0) / r0) ** theta)
        outer = np.interp(np.log(np.clip(r, r0, 1.0)), self.s, self.v)
        return np.where(r < r0, inner, outer)

    def sup_abs(self) -> float:
        return float(-min(self.center_value, self.v.min()))

    def is_convex_increasing(self, tol: float = 1e-12) -> bool:
        return bool(np.all(np.diff(self.dv) >= -tol) and np.all(self.dv >= -tol))

    def distribution(self, t):
        """mu(u < -t) for the probability measure defining the profile."""
        t = np.asarray(t, dtype=float)
        r_t = np.interp(-t, np.concatenate([[self.center_value], self.v]),
                        np.concatenate([[0.0], self.mesh]))
        m_ext = np.concatenate([[0.0], self.mass])
        r_ext = np.concatenate([[0.0], self.mesh])
        return np.interp(r_t, r_ext, m_ext) * (t < -self.center_value)


def _gauss_mass(density, a: float, b: float, n: int, order: int = 8) -> float:
    x, w = roots_legendre(order)
    s = 0.5 * (b - a) * x + 0.5 * (a + b)
    r = np.exp(s)
    vals = np.asarray(density(r), dtype=float) * sphere_area(n) * r ** (2 * n)
    return float(0.5 * (b - a) * np.dot(w, vals))


def solve_radial_ball(density, n: int, cfg: SolveConfig | None = None, r_min: float = 1e-6,
                      points: int = 3000, breakpoints=(), kappa: float = 2.0) -> RadialProfile:
    """Radial solution of det(kappa u_{j kbar}) = density(|z|) on the unit ball, u = 0 on the sphere.

    With u(z) = v(log|z|) the operator reduces to
    ``kappa^n (v')^{n-1} v'' / (2^{n+1} r^{2n})``, so that
    ``(v')^n = c_n M(r)`` with M the density mass of the ball of radius r.
    """
    if n < 1:
        raise ParameterError("n must be positive")
    s_nodes = np.linspace(math.log(r_min), 0.0, points)
    extra = [math.log(b) for b in breakpoints if r_min < b < 1.0]
    s_nodes = np.unique(np.concatenate([s_nodes, extra]))
    r_nodes = np.exp(s_nodes)
    f0 = float(density(np.array([r_min]))[0])
    f1 = float(density(np.array([2 * r_min]))[0])
    if f0 < 0 or f1 < 0:
        raise ParameterError("density must be non-negative")
    if f0 > 0 and f1 > 0:
        gamma = -math.log(f1 / f0) / math.log(2.0)
    else:
        gamma = 0.0
    if gamma >= 2 * n - 1e-3:
        raise NonIntegrable(f"density behaves like r^-{gamma:.3g} near 0; mass diverges")
    gamma = max(gamma, 0.0) if f0 > 0 else 0.0
    m0 = f0 * sphere_area(n) * r_min ** (2 * n) / (2 * n - gamma) if f0 > 0 else 0.0
    pieces = [_gauss_mass(density, s_nodes[k], s_nodes[k + 1], n) for k in range(len(s_nodes) - 1)]
    mass = m0 + np.concatenate([[0.0], np.cumsum(pieces)])
    if not np.all(np.isfinite(mass)):
        raise NonIntegrable("cumulative mass is not finite")
    cn = radial_constant(n, kappa)
    dv = (cn * mass) ** (1.0 / n)
    # v(s) = -int_s^0 v'(tau) d tau, trapezoid from the boundary inwards
    seg = 0.5 * (dv[1:] + dv[:-1]) * np.diff(s_nodes)
    v = -np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
    theta = (2 * n - gamma) / n
    center = float(v[0] - dv[0] / theta)
    return RadialProfile(n, r_nodes, v, dv, mass, center, kappa,
                         meta={"inner_exponent": theta, "r_min": r_min, "inner_mass": m0,
                               "total_mass": float(mass[-1])})


def radial_ma_on_grid(profile: RadialProfile, res: int, kappa: float | None = None):
    """Finite-difference det(kappa u_{j kbar}) of the radial profile sampled on [-1, 1]^{2n}.

    Returns ``(radii, ma)`` at interior nodes whose full stencil lies inside the ball.
    Used to cross-check the radial reduction against the lattice operator.
    """
    kappa = profile.kappa if kappa is None else kappa
    n = profile.n
    axis = np.linspace(-1.0, 1.0, res)
    h = axis[1] - axis[0]
    xs = np.meshgrid(*([axis] * (2 * n)), indexing="ij")
    r = np.sqrt(sum(x * x for x in xs))
    u = profile(r)
    m = np.zeros(u.shape + (n, n), dtype=complex)
    for j in range(n):
        xj, yj = 2 * j, 2 * j + 1
        m[..., j, j] = 0.25 * kappa * (second_difference(u, xj, xj, h) + second_difference(u, yj, yj, h))
        for k in range(j + 1, n):
            xk, yk = 2 * k, 2 * k + 1
            re = second_difference(u, xj, xk, h) + second_difference(u, yj, yk, h)
            im = second_difference(u, xj, yk, h) - second_difference(u, yj, xk, h)
            m[..., j, k] = 0.25 * kappa * (re + 1j * im)
            m[..., k, j] = np.conj(m[..., j, k])
    ma = det_field(m)
    inside = r + 2 * h * math.sqrt(2) < 1.0
    core = np.zeros(u.shape, dtype=bool)
    core[(slice(1, -1),) * (2 * n)] = True
    keep = inside & core
    return r[keep], ma[keep]


def solve_dirichlet_box(profile: RadialProfile, density, res: int, half_width: float | None = None,
                        tol: float = 1e-10, max_newton: int = 40):
    """Finite-difference Dirichlet solve of det(kappa u_{j kbar}) = density on the grid ball.

    The cube [-half_width, half_width]^{2n} is sampled with ``res`` nodes per
    axis; nodes with |z| < 1 are unknown, the others carry the maximal
    extension ``v'(0) log|z|`` of the radial profile as boundary data. Newton
    on the log-determinant starts from the psh guess ``c (|z|^2 - 1)``.
    Returns ``(radii, u_grid, u_radial)`` at the unknown nodes.
    """
    n = profile.n
    kappa = profile.kappa
    if half_width is None:
        half_width = 1.0 / (1.0 - 6.0 / res)
    period = 2 * half_width
    grid = PeriodicGrid(n, res, period)
    xs = [x - half_width for x in grid.coords()]
    r = np.sqrt(sum(x * x for x in xs))
    inside = r < 1.0
    if grid.spacing * 2 + 1.0 > half_width + 1e-12:
        raise ParameterError("box too small for the stencil margin")
    slope = float(profile.dv[-1])
    with np.errstate(divide="ignore"):
        u = np.where(inside, 0.0, slope * np.log(np.maximum(r, 1e-300)))
    f = np.asarray(density(r[inside]), dtype=float)
    if np.any(f <= 0):
        raise ParameterError("density must be positive inside the ball for the grid solve")
    # initial psh guess matching the boundary at |z| = 1
    u[inside] = 0.5 * slope * (r[inside] ** 2 - 1.0)
    ops = StencilOperators(grid)
    idx = np.flatnonzero(inside.reshape(-1))
    log_f = np.log(f)
    zero = np.zeros((n, n))
    for it in range(max_newton):
        form = zero + hessian_array(u, grid, kappa)
        det = det_field(form)[inside]
        if np.any(lambda_min_field(form)[inside] <= 0):
            raise LossOfPositivity("grid Dirichlet iterate left the cone", iterations=it)
        F = np.log(det) - log_f
        res_now = float(np.max(np.abs(F)))
        if res_now <= tol:
            break
        J = ops.logdet_jacobian(form, kappa)[idx][:, idx].tocsc()
        ilu = spla.spilu(J, drop_tol=1e-4, fill_factor=10)
        M = spla.LinearOperator(J.shape, ilu.solve)
        step, info = spla.gmres(J, -F, M=M, rtol=1e-10, restart=50, maxiter=20)
        if info < 0:
            raise NonConvergence("grid Dirichlet linear solve failed", iterations=it, residual=res_now)
        alpha = 1.0
        while True:
            trial = u.copy()
            trial.reshape(-1)[idx] += alpha * step
            tform = zero + hessian_array(trial, grid, kappa)
            if lambda_min_field(tform)[inside].min() > 0:
                tF = np.log(det_field(tform)[inside]) - log_f
                if np.max(np.abs(tF)) <= (1 - 1e-4 * alpha) * res_now:
                    break
            alpha *= 0.5
            if alpha < 1e-8:
                raise NonConvergence("grid Dirichlet line search failed", iterations=it, residual=res_now)
        u = trial
    else:
        raise NonConvergence("grid Dirichlet Newton did not converge", iterations=max_newton, residual=res_now)
    return r[inside], u[inside], profile(r[inside])
