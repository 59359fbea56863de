"""A priori sup-norm bounds as explicit certificates.

Every bound follows the same scheme. A concave weight chi is built from the
distribution function t -> mu(phi < -t); a Chebyshev inequality turns a moment
bound ``K`` into ``mu(phi < -t) <= K / h(t)^m`` with h(t) = -chi(-t); this
forces the differential inequality

    (h')^beta >= 1 + h^alpha / (alpha K (1 + t)^2),    h(0) = 0,

whose solutions blow up in finite time. The blow-up time of the extremal
equation bounds the depth of the sublevel sets, hence the oscillation.

Conventions: ``A_m`` denotes the normalized moment
``sup (int (-psi)^m dmu)^(1/m)`` over sup-normalized omega-psh psi, so the
Chebyshev numerator of the uniform bound is ``Atilde^m``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq
from scipy.special import beta as beta_fn

from .chi import WeightChi
from .errors import EmptyCandidates, NormalizationError, ParameterError, ZeroMass
from .grid import GridFunction, GridMeasure, HermitianBackground, PeriodicGrid, is_omega_psh

# ---------------------------------------------------------------------------
# distribution functions


@dataclass
class DistributionFunction:
    t: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.t.shape != self.values.shape or self.t.ndim != 1:
            raise ParameterError("t and values must be 1-D arrays of equal length")
        if np.any(np.diff(self.t) <= 0) or self.t[0] < 0:
            raise ParameterError("t must be non-negative and strictly increasing")
        if np.any(self.values < 0) or np.any(np.diff(self.values) > 1e-15) or self.values[0] > 1 + 1e-12:
            raise ParameterError("values must be non-increasing in [0, 1]")

    @property
    def t_max(self) -> float:
        pos = np.flatnonzero(self.values > 0)
        return float(self.t[pos[-1]]) if pos.size else 0.0

    def __call__(self, s):
        """Step interpolation from the left sample."""
        s = np.asarray(s, dtype=float)
        k = np.searchsorted(self.t, s, side="right") - 1
        out = np.where(k >= 0, self.values[np.clip(k, 0, None)], 1.0)
        return out

    def to_csv(self, path):
        path = Path(path)
        np.savetxt(path, np.column_stack([self.t, self.values]), delimiter=",",
                   header="t,value", comments="", fmt="%.17g")
        return path

    @classmethod
    def from_csv(cls, path) -> "DistributionFunction":
        data = np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=1))
        return cls(data[:, 0], data[:, 1])


def distribution_function(phi: GridFunction, mu: GridMeasure, t_grid, phihat: GridFunction | None = None,
                          sup_tol: float = 1e-8) -> DistributionFunction:
    """t -> mu(phi < -t), or mu(phi < phihat - t) when ``phihat`` is given."""
    t_grid = np.asarray(t_grid, dtype=float)
    if phihat is None:
        if phi.max() > sup_tol:
            raise NormalizationError(f"sup phi = {phi.max():.3g} > 0; normalize first")
        gap = -phi.flat
    else:
        gap = phihat.flat - phi.flat
    masses = mu.node_masses.reshape(-1)
    order = np.argsort(gap)
    gap_sorted = gap[order]
    tail = np.concatenate([np.cumsum(masses[order][::-1])[::-1], [0.0]])
    # mass of {gap > t}: first index with gap > t
    idx = np.searchsorted(gap_sorted, t_grid, side="right")
    values = np.minimum(tail[idx], 1.0)
    values = np.minimum.accumulate(values)
    return DistributionFunction(t_grid, values, {"kind": "measured" if phihat is None else "relative"})


# ---------------------------------------------------------------------------
# weights from distribution data

_MODES = {
    # mode: (inner kernel, tail kernel)
    "uniform": ("inv-square", "inv-square"),
    "local": ("inv-square", "inv-quad"),
    "stability": ("one", "one"),
}


def default_T0(dist: DistributionFunction) -> float:
    """Largest sampled t with positive mass, minus one step."""
    pos = np.flatnonzero(dist.values > 0)
    if pos.size < 2:
        return 0.0
    return float(dist.t[pos[-1] - 1])


def build_chi(dist: DistributionFunction, power: float, T0: float | None = None,
              mode: str = "uniform") -> WeightChi:
    """Weight with g'(t) = kernel(t) / mu(phi < -t) up to T0 and the mode's tail after.

    ``meta["B"]`` holds the bound on the integral of g(-phi) obtained from the
    Lebesgue formula with the step distribution, which dominates the true one.
    """
    if mode not in _MODES:
        raise ParameterError(f"unknown mode {mode!r}")
    if dist.t[0] != 0.0:
        raise ParameterError("distribution samples must start at t = 0")
    T0 = default_T0(dist) if T0 is None else float(T0)
    inner_k, tail_k = _MODES[mode]
    if T0 <= 0:
        chi = WeightChi(np.array([0.0]), np.array([]), power, inner_k, tail_k, 1.0)
    else:
        j = int(np.searchsorted(dist.t, T0, side="left"))
        knots = np.concatenate([dist.t[:j], [T0]]) if j >= dist.t.size or dist.t[j] != T0 else dist.t[: j + 1]
        vals = dist(knots[:-1])
        if np.any(vals <= 0):
            raise ZeroMass("distribution vanishes before T0")
        chi = WeightChi(knots, 1.0 / vals, power, inner_k, tail_k, 1.0)
    # Lebesgue formula with the step distribution
    from .chi import _KERNELS
    _, Fi = _KERNELS[inner_k]
    _, Ft = _KERNELS[tail_k]
    inner = float(Fi(np.array(T0)) - Fi(np.array(0.0))) if T0 > 0 else 0.0
    tail = 0.0
    t_hi = dist.t_max
    if t_hi > T0:
        grid_t = np.concatenate([[T0], dist.t[(dist.t > T0) & (dist.t < t_hi)], [t_hi]])
        # on [t_k, t_{k+1}) the step distribution equals its left sample
        lefts = dist(grid_t[:-1])
        tail = float(np.sum(lefts * (Ft(grid_t[1:]) - Ft(grid_t[:-1]))))
    if dist.values[-1] > 0:
        tail = math.inf if tail_k == "one" else tail + float(dist.values[-1]) * float(
            (np.pi / 2 if tail_k == "inv-quad" else 0.0) - Ft(np.array(dist.t[-1])))
    chi.meta.update({"mode": mode, "T0": T0, "B": 1.0 + inner + tail, "t_max": dist.t_max})
    return chi


def weight_integral(chi: WeightChi, phi: GridFunction, mu: GridMeasure,
                    phihat: GridFunction | None = None) -> float:
    """Direct quadrature of g(-(phi - phihat)) = (chi'(phi - phihat))^power against mu."""
    w = phi.values if phihat is None else phi.values - phihat.values
    return float(np.sum(chi.g(np.maximum(-w, 0.0)) * mu.weights) * mu.grid.cell_volume)


def chebyshev_bound(Atilde: float, chi: WeightChi, m: float):
    """t -> Atilde / h(t)^m, the Chebyshev bound for mu(phi < -t)."""
    if not Atilde > 0 or not m > 0:
        raise ParameterError("Atilde and m must be positive")

    def bound(t):
        h = np.asarray(chi.h(t), dtype=float)
        with np.errstate(divide="ignore"):
            return Atilde / h ** m
    return bound


# ---------------------------------------------------------------------------
# the differential inequality


def extremal_blowup(alpha: float, beta: float, K: float, rtol: float = 1e-12) -> float:
    """Blow-up time of (h')^beta = 1 + h^alpha / (alpha K (1 + t)^2), h(0) = 0.

    The inverse function t(h) solves dt/dh = (1 + h^alpha/(alpha K (1+t)^2))^(-1/beta).
    It is integrated on h in [0, 1] and continued in z = h^(-delta),
    delta = (alpha - beta)/beta, on z in [1, 0], where the equation stays regular.
    """
    if not alpha > beta > 1 or not K > 0:
        raise ParameterError("need alpha > beta > 1 and K > 0")
    aK = alpha * K
    delta = (alpha - beta) / beta

    def dt_dh(h, t):
        return (1.0 + h ** alpha / (aK * (1.0 + t[0]) ** 2)) ** (-1.0 / beta)

    first = solve_ivp(dt_dh, (0.0, 1.0), [0.0], rtol=rtol, atol=1e-14, method="DOP853")
    t1 = float(first.y[0, -1])

    def dt_dz(z, t):
        # h = z^(-1/delta); dh/dz = -(1/delta) z^(-1/delta - 1)
        one_plus = (1.0 + t[0]) ** 2
        # (1 + h^alpha/(aK(1+t)^2))^(-1/beta) * h^(alpha/beta) = ((h^-alpha + 1/(aK(1+t)^2)))^(-1/beta)
        # and h^(-alpha/beta) * z^(-1/delta - 1) = 1 since alpha/(beta delta) = 1/delta + 1
        h_neg_alpha = z ** (alpha / delta)
        return -(1.0 / delta) * (h_neg_alpha + 1.0 / (aK * one_plus)) ** (-1.0 / beta)

    second = solve_ivp(dt_dz, (1.0, 0.0), [t1], rtol=rtol, atol=1e-14, method="DOP853")
    return float(second.y[0, -1])


def closed_form_T(alpha: float, beta: float, K: float) -> float:
    """Bound from integrating (1+t)^(-2/beta) <= C h' h^(-alpha/beta) on [1, T] with h(1) >= 1."""
    C = (alpha * K) ** (1.0 / beta)
    rhs = C * beta / (alpha - beta)
    if abs(beta - 2.0) < 1e-14:
        T = 2.0 * math.exp(rhs) - 1.0
    elif beta > 2.0:
        T = (2.0 ** (1.0 - 2.0 / beta) + (beta - 2.0) / beta * rhs) ** (beta / (beta - 2.0)) - 1.0
    else:
        base = 2.0 ** (1.0 - 2.0 / beta) - (2.0 - beta) / beta * rhs
        T = math.inf if base <= 0 else base ** (-beta / (2.0 - beta)) - 1.0
    return max(T, 1.0)


@dataclass
class BoundCertificate:
    mode: str
    n: int
    m: float
    A_m: float
    constants: dict
    T: float
    trace: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    A_m_source: str = "input"

    @property
    def passed(self) -> bool:
        return all(e["pass"] for e in self.trace)

    def add(self, ident: str, lhs: float, rhs: float, rtol: float = 0.0):
        slack = rtol * abs(rhs) if rtol else 0.0
        ok = bool(lhs <= rhs + slack)
        self.trace.append({"id": ident, "lhs": float(lhs), "rhs": float(rhs), "pass": ok})
        return ok

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), default=float, **kw)


def integrate_ode_uniform(n: int, m: float, Atilde: float, power: float | None = None):
    """Horizon T of the differential inequality with Chebyshev numerator ``Atilde``.

    ``power`` is the exponent p with h' = g^(1/p); the default n + 2 eps with
    eps = (m - n)/3 is the uniform choice. Returns ``(T, trace)``.
    """
    T, trace, _ = _ode_horizon(n, m, Atilde, power)
    return T, trace


def _ode_horizon(n: int, m: float, Atilde: float, power: float | None = None):
    if not m > n:
        raise ParameterError(f"need m > n, got m={m}, n={n}")
    if not Atilde > 0:
        raise ParameterError("Atilde must be positive")
    eps = (m - n) / 3.0
    p = n + 2 * eps if power is None else float(power)
    alpha, beta = m + 1.0, p + 1.0
    C = (alpha * Atilde) ** (1.0 / beta)
    T = extremal_blowup(alpha, beta, Atilde)
    Tc = closed_form_T(alpha, beta, Atilde)
    trace = [
        {"id": "beta < alpha", "lhs": beta, "rhs": alpha, "pass": beta < alpha},
        {"id": "ode horizon <= closed form", "lhs": T, "rhs": Tc, "pass": T <= Tc * (1 + 1e-9)},
    ]
    if power is None:
        trace.insert(1, {"id": "2 < beta", "lhs": 2.0, "rhs": beta, "pass": 2.0 < beta})
    info = {"eps": eps, "power": p, "alpha": alpha, "beta": beta, "C": C, "T_closed": Tc}
    return T, trace, info


def uniform_bound(n: int, m: float, A_m: float, source: str = "input") -> BoundCertificate:
    """Oscillation bound for V^-1 (omega + dd^c phi)^n = mu from the normalized moment A_m."""
    if n < 1:
        raise ParameterError("n must be a positive integer")
    if not m > n:
        raise ParameterError(f"need m > n, got m={m}, n={n}")
    if not A_m > 0:
        raise ParameterError("A_m must be positive")
    eps = (m - n) / 3.0
    Atilde = (1.0 + 2.0 ** (1.0 / eps)) * A_m
    K = Atilde ** m
    T, trace, info = _ode_horizon(n, m, K)
    cert = BoundCertificate("uniform", n, m, A_m, {**info, "Atilde": Atilde, "K": K, "B": 2.0}, T,
                            A_m_source=source)
    cert.trace.extend(trace)
    cert.add("m = n + 3 eps", abs(n + 3 * eps - m), 1e-12)
    cert.add("T finite", T, math.inf)
    cert.notes.append("constants derived here; K = Atilde^m is the Chebyshev numerator")
    return cert


def local_moment_bound(Am_class: float, m: float, n: int) -> float:
    """Moment numerator for the local bound.

    The envelope has Monge-Ampere mass at most B <= 2, so 2^(-1/n) u belongs to
    the unit-mass class and int |u|^m dmu <= 2^(m/n) Am_class.
    """
    return max(1.0, 2.0 ** (m / n) * Am_class)


def local_bound(n: int, m: float, A_m: float) -> BoundCertificate:
    """Sup bound for the Dirichlet problem; ``A_m >= 1`` bounds int |u|^m dmu."""
    if not m > n:
        raise ParameterError(f"need m > n, got m={m}, n={n}")
    if not A_m >= 1:
        raise ParameterError("the local moment bound A_m must be >= 1")
    T, trace, info = _ode_horizon(n, m, A_m, power=float(n))
    cert = BoundCertificate("local", n, m, A_m, {**info, "K": A_m, "B": 2.0}, T)
    cert.trace.extend(trace)
    cert.add("T finite", T, math.inf)
    cert.notes.append("local normalization B <= 2; tail g'(t) = 1/(t^2 + 1)")
    return cert


def stability_exponents(n: int, m: float) -> dict:
    """Exponents (eps, a, b, c, q) for the stability bound at integrability m.

    The Chebyshev exponent is n + eps and the Holder exponent q must not exceed
    the available integrability m. With a = eps/20, b = 9 eps/20, c = 19 eps/40
    one gets q = 19 n / 8 + 171 eps / 160, and eps is chosen so that q sits
    halfway between 19 n / 8 and m.
    """
    floor = 19.0 * n / 8.0
    if not m > floor:
        raise ParameterError(f"stability exponents need m > 19 n / 8 = {floor}")
    eps = 80.0 * (m - floor) / 171.0
    a, b, c = eps / 20.0, 9.0 * eps / 20.0, 19.0 * eps / 40.0
    q = (eps - a) * (n + b) / (b - a)
    return {"eps": eps, "a": a, "b": b, "c": c, "q": q, "m_chebyshev": n + eps}


def stability_bound(n: int, m: float, A_m: float, phihat_sup: float, mass: float) -> BoundCertificate:
    """Bound sup (phihat - phi)_+ <= T * mass^tau with mass = int (phihat - phi)_+ dmu."""
    if not m > n:
        raise ParameterError(f"need m > n, got m={m}, n={n}")
    if mass < 0 or not math.isfinite(phihat_sup):
        raise ParameterError("mass must be >= 0 and phihat_sup finite")
    ex = stability_exponents(n, m)
    eps, a, b, c, q = ex["eps"], ex["a"], ex["b"], ex["c"], ex["q"]
    Mh = abs(float(phihat_sup))
    T_mu = uniform_bound(n, m, A_m).T
    Xmax = Mh + T_mu
    B = 1.0 + Xmax
    A1 = A_m + Mh
    S = A1 * B ** ((n + c) / (c * (n + 2 * c)))
    D = 2 * Mh + A_m + S
    r = (n + b) * (n + c) / (c - b)
    gamma = (c - b) * (n + a) / ((n + c) * (n + b))
    C2 = D ** (eps - a) * Xmax ** ((r - 1) * gamma) * B ** ((n + a) / (n + c))
    alpha = n + eps + 1.0
    beta = n + 2 * c + 1.0
    tau = gamma / alpha
    integral = beta_fn(1.0 / alpha, 1.0 / beta - 1.0 / alpha) / alpha
    T = (alpha * C2) ** (1.0 / alpha) * integral
    bound = T * mass ** tau if mass > 0 else 0.0
    consts = {**ex, "T_mu": T_mu, "Xmax": Xmax, "B": B, "S": S, "D": D, "r": r, "gamma": gamma,
              "C2": C2, "alpha": alpha, "beta": beta, "tau": tau, "T": T, "mass": mass,
              "delta": mass ** gamma if mass > 0 else 0.0, "bound": bound}
    cert = BoundCertificate("stability", n, m, A_m, consts, bound)
    cert.add("0 < a", 0.0, a)
    cert.add("a < b", a, b)
    cert.add("b < c", b, c)
    cert.add("2c < eps", 2 * c, eps)
    cert.add("q <= m", q, m)
    cert.add("n + eps <= m", n + eps, m)
    cert.add("q (b - a) = (eps - a)(n + b)", abs(q * (b - a) - (eps - a) * (n + b)), 1e-12 * q)
    cert.add("holder exponent q (b-a)/(n+b) = eps - a", abs(q * (b - a) / (n + b) - (eps - a)), 1e-12)
    cert.add("gamma < 1", gamma, 1.0)
    cert.add("beta < alpha", beta, alpha)
    cert.add("tau = gamma / alpha in (0, 1)", tau, 1.0)
    cert.notes.append("phihat_sup enters through sup |phihat|; T_mu from the uniform certificate")
    return cert


# ---------------------------------------------------------------------------
# self-consistency of the chain on measured data


def self_consistency(cert: BoundCertificate, phi: GridFunction, mu: GridMeasure, t_grid,
                     phihat: GridFunction | None = None) -> dict:
    """Run the bound chain on a solved instance with its own distribution function."""
    n, m = cert.n, cert.m
    dist = distribution_function(phi, mu, t_grid, phihat)
    if cert.mode == "stability":
        power = n + 2 * cert.constants["c"]
        K = cert.constants["C2"] * cert.constants["delta"]
        m_ch = cert.constants["m_chebyshev"]
    else:
        power = cert.constants["power"]
        K = cert.constants["K"]
        m_ch = m
    chi = build_chi(dist, power, mode=cert.mode)
    B_direct = weight_integral(chi, phi, mu, phihat)
    w = phi.values if phihat is None else np.minimum(phi.values - phihat.values, 0.0)
    moment = float(np.sum(np.abs(chi.chi(np.minimum(w, 0.0))) ** m_ch * mu.weights) * mu.grid.cell_volume)
    checks = []

    def add(ident, lhs, rhs, rtol=1e-9):
        checks.append({"id": ident, "lhs": float(lhs), "rhs": float(rhs),
                       "pass": bool(lhs <= rhs + rtol * abs(rhs))})

    B_cap = 2.0 if cert.mode != "stability" else 1.0 + dist.t_max
    add("B (direct) <= B (Lebesgue, step distribution)", B_direct, chi.meta["B"])
    add("B <= cap", chi.meta["B"], B_cap)
    add("int |chi(phi)|^m dmu <= K", moment, K)
    ts = dist.t[(dist.t > 0) & (dist.t <= chi.T0)]
    if ts.size:
        bound = chebyshev_bound(K, chi, m_ch)(ts)
        excess = float(np.max(dist(ts) - bound))
        add("distribution <= K / h^m", excess, 0.0)
        h = chi.h(ts)
        alpha, beta = m_ch + 1.0, power + 1.0
        lhs = h ** alpha / alpha
        rhs = K * (1 + ts) ** 2 * chi.hprime(ts) ** beta if cert.mode != "stability" else K * chi.hprime(ts) ** beta
        add("h^alpha / alpha <= K (1+t)^2 (h')^beta", float(np.max(lhs - rhs)), 0.0)
    add("T_max (measured) <= T", dist.t_max, cert.T)
    return {"pass": all(c["pass"] for c in checks), "checks": checks, "B": B_direct,
            "T0": chi.T0, "t_max": dist.t_max, "chi": chi, "dist": dist}


# ---------------------------------------------------------------------------
# moment estimates


def periodic_green(grid: PeriodicGrid, kappa: float = 2.0, center=None) -> np.ndarray:
    """Solution G of (kappa/4) Lap_h G = delta_center / cell - 1/volume in one complex dimension."""
    if grid.n != 1:
        raise ParameterError("periodic_green is defined for n = 1")
    res, h = grid.res, grid.spacing
    rhs = -np.full(grid.shape, 1.0 / grid.volume)
    idx = (0, 0) if center is None else grid.node_index(center)
    rhs[idx] += 1.0 / grid.cell_volume
    theta = 2 * np.pi * np.fft.fftfreq(res)
    sym = (0.25 * kappa) * ((2 * np.cos(theta)[:, None] - 2) + (2 * np.cos(theta)[None, :] - 2)) / (h * h)
    sym[0, 0] = 1.0
    f = np.fft.fft2(rhs) / sym
    f[0, 0] = 0.0
    return np.fft.ifft2(f).real


def green_candidates(grid: PeriodicGrid, bg: HermitianBackground, centers=None, fractions=(0.25, 0.5, 1.0)):
    """Sup-normalized discrete omega-psh candidates built from lattice Green functions.

    In one dimension c G is omega-psh for c <= beta; in two dimensions sums
    c (G(z1) + G(z2)) are used with c <= lambda_min(beta).
    """
    centers = [np.zeros(grid.ndim)] if centers is None else [np.asarray(c, float) for c in centers]
    kappa = bg.ddc_factor
    out = []
    line = PeriodicGrid(1, grid.res, grid.period)
    for c0 in centers:
        if grid.n == 1:
            G = periodic_green(line, kappa, c0)
        else:
            G1 = periodic_green(line, kappa, c0[:2])
            G2 = periodic_green(line, kappa, c0[2:])
            G = G1[:, :, None, None] + G2[None, None, :, :]
        for frac in fractions:
            cval = frac * bg.lambda_min
            f = GridFunction(grid, cval * G).sup_normalized()
            ok, _ = is_omega_psh(f, bg, 1e-9)
            if ok:
                f_meta = f
                out.append(f_meta)
    out.append(GridFunction.constant(grid, 0.0))
    return out


def log_candidate(grid: PeriodicGrid, c: float, M: float, center=None) -> GridFunction:
    """max(c log d(z, center), -M) with d the torus distance, sup-normalized."""
    center = np.zeros(grid.ndim) if center is None else np.asarray(center, float)
    d = grid.torus_distance(center)
    with np.errstate(divide="ignore"):
        v = np.maximum(c * np.log(d), -M)
    return GridFunction(grid, v).sup_normalized()


def estimate_Am(mu: GridMeasure, m: float, candidates, holder_input=None, safety: float = 10.0) -> dict:
    """Lower bound and Holder heuristic upper value for the normalized moment A_m(mu).

    ``holder_input`` is ``(p, norm_f_p)``; when omitted p = 2 and the norm is
    computed from the density of ``mu``.
    """
    if not candidates:
        raise EmptyCandidates("need at least one candidate")
    if m < 1:
        raise ParameterError("m must be >= 1")
    grid = mu.grid
    lows = []
    for psi in candidates:
        val = float(np.sum((-psi.values) ** m * mu.weights) * grid.cell_volume)
        lows.append(val ** (1.0 / m))
    if holder_input is None:
        p = 2.0
        fp = float((np.sum(mu.weights ** p) * grid.cell_volume) ** (1.0 / p))
    else:
        p, fp = holder_input[0], holder_input[1]
        if fp is None:
            fp = float((np.sum(mu.weights ** p) * grid.cell_volume) ** (1.0 / p))
    q = p / (p - 1.0)
    qm = q * m
    norms = [float(np.sum((-psi.values) ** qm) * grid.cell_volume) ** (1.0 / qm) for psi in candidates]
    # the Holder bound uses the normalized Lebesgue measure dV / vol
    vol = grid.volume
    upper = fp ** (1.0 / m) * vol ** (1.0 / (m * q)) * max(norms) * safety
    return {"lower": max(lows), "upper_heuristic": upper, "p": p, "norm_f_p": fp, "q": q,
            "safety": safety, "candidates": len(candidates), "per_candidate": lows}


def orlicz_check(f: GridFunction, m: float) -> tuple:
    """Luxemburg norm of f for w(t) = t log(e + t)^m and whether it is finite."""
    vals = f.values
    if np.any(vals < 0):
        raise ParameterError("f must be non-negative")
    cv = f.grid.cell_volume

    def excess(r):
        x = vals / r
        return float(np.sum(x * np.log(np.e + x) ** m) * cv) - 1.0

    if not np.any(vals > 0):
        return 0.0, True
    lo, hi = 1e-12, max(1.0, float(vals.max()) * f.grid.volume)
    while excess(hi) > 0:
        hi *= 2.0
        if hi > 1e300:
            return math.inf, False
    while excess(lo) < 0:
        lo *= 0.5
    r = brentq(excess, lo, hi, xtol=1e-14, rtol=1e-13)
    return r, bool(math.isfinite(r))
