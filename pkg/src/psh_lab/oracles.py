"""Independent reference computations used to cross-check the bound engine."""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
from scipy.integrate import solve_ivp


def blowup_forward(alpha: float, beta: float, K: float, t0: float = 1e-9, rtol: float = 1e-12) -> float:
    """Blow-up time of (h')^beta = 1 + h^alpha / (alpha K (1+t)^2), h(0) = 0, integrated forward in t.

    The unknown is L = log h, started at h(t0) = t0 (h' = 1 + O(h^alpha) near 0).
    The integration stops at a level L* where the remaining time is below
    1e-12 of the horizon; the rest is added from the dominant balance
    h' = (h^alpha / (alpha K (1+t)^2))^(1/beta) with t frozen.
    """
    r = alpha / beta
    logaK = math.log(alpha * K)
    L_star = 30.0 / (r - 1.0)

    def rhs(t, y):
        L = y[0]
        log_hp = np.logaddexp(0.0, alpha * L - logaK - 2.0 * math.log1p(t)) / beta
        # trial stages may overshoot far past L*; those steps are rejected anyway
        return [math.exp(min(log_hp - L, 700.0))]

    def reach(t, y):
        return y[0] - L_star
    reach.terminal = True
    reach.direction = 1

    sol = solve_ivp(rhs, (t0, 1e12), [math.log(t0)], method="DOP853", rtol=rtol, atol=1e-13, events=reach)
    if not sol.t_events[0].size:
        raise RuntimeError("forward integration did not reach the blow-up regime")
    t_star = float(sol.t_events[0][0])
    tail = math.exp(logaK / beta + 2.0 * math.log1p(t_star) / beta + (1.0 - r) * L_star) / (r - 1.0)
    return t_star + tail


def stability_exponents_exact(n: int, m: Fraction) -> dict:
    """Exponents of the stability bound in exact rational arithmetic."""
    m = Fraction(m)
    eps = Fraction(80) * (m - Fraction(19 * n, 8)) / 171
    a, b, c = eps / 20, 9 * eps / 20, 19 * eps / 40
    q = (eps - a) * (n + b) / (b - a)
    gamma = (c - b) * (n + a) / ((n + c) * (n + b))
    alpha = n + eps + 1
    return {"eps": eps, "a": a, "b": b, "c": c, "q": q, "gamma": gamma, "alpha": alpha,
            "beta": n + 2 * c + 1, "tau": gamma / alpha}
