import math

import numpy as np
import pytest
import sympy as sy
from hypothesis import given, strategies as st

from psh_lab.errors import ParameterError
from psh_lab.grid import (
    GridFunction, GridMeasure, HermitianBackground, PeriodicGrid, complex_hessian, demailly_check, det_field,
    form_field, integrate, integrate_dv, is_omega_psh, ma_density, mixed_determinant, mixed_ma, oscillation,
)
from psh_lab.smooth import analytic_form, random_trig


def test_grid_shape_and_volume():
    g = PeriodicGrid(2, 8, 2.0)
    assert g.shape == (8, 8, 8, 8)
    assert g.spacing == 0.25
    assert math.isclose(g.cell_volume * g.size, g.volume)


def test_grid_rejects_bad_parameters():
    with pytest.raises(ParameterError):
        PeriodicGrid(3, 8)
    with pytest.raises(ParameterError):
        PeriodicGrid(1, 6)


def test_background_must_be_positive_hermitian():
    with pytest.raises(ParameterError):
        HermitianBackground(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ParameterError):
        HermitianBackground(-np.eye(1))


def _symbolic_complex_hessian(expr, xs):
    """u_{j kbar} = 1/4 (u_{xj xk} + u_{yj yk} + i (u_{xj yk} - u_{yj xk})) by symbolic differentiation."""
    n = len(xs) // 2
    H = sy.zeros(n, n)
    for j in range(n):
        for k in range(n):
            xj, yj, xk, yk = xs[2 * j], xs[2 * j + 1], xs[2 * k], xs[2 * k + 1]
            H[j, k] = sy.Rational(1, 4) * (sy.diff(expr, xj, xk) + sy.diff(expr, yj, yk)
                                           + sy.I * (sy.diff(expr, xj, yk) - sy.diff(expr, yj, xk)))
    return H


@pytest.mark.parametrize("n", [1, 2])
def test_complex_hessian_matches_symbolic_oracle(n):
    xs = sy.symbols(f"x0:{2 * n}", real=True)
    k = [1, 2, -1, 1][: 2 * n]
    expr = sy.Rational(1, 50) * sy.cos(2 * sy.pi * sum(ki * x for ki, x in zip(k, xs)) + sy.Rational(1, 3))
    expr += sy.Rational(1, 80) * sy.sin(2 * sy.pi * xs[0]) * sy.cos(2 * sy.pi * xs[-1])
    H = _symbolic_complex_hessian(expr, xs)
    f = sy.lambdify(xs, expr, "numpy")
    Hf = [[sy.lambdify(xs, H[j, l], "numpy") for l in range(n)] for j in range(n)]
    errs = []
    for res in (16, 32):
        g = PeriodicGrid(n, res)
        coords = g.coords()
        u = GridFunction(g, f(*coords) + 0 * coords[0])
        num = complex_hessian(u, HermitianBackground.identity(n)).matrices / 2.0  # stored as kappa * H, kappa = 2
        err = 0.0
        for j in range(n):
            for l in range(n):
                ex = np.asarray(Hf[j][l](*coords), dtype=complex) + 0 * coords[0]
                err = max(err, float(np.abs(num[..., j, l] - ex).max()))
        errs.append(err)
    # second-order consistency; entries are O(5), so this is a relative error below 0.5%
    assert errs[1] < 2.5e-2
    assert errs[0] / errs[1] > 3.5


@pytest.mark.parametrize("n", [1, 2])
def test_hessian_is_hermitian(n, rng):
    g = PeriodicGrid(n, 8)
    u = GridFunction(g, rng.standard_normal(g.shape))
    assert complex_hessian(u, HermitianBackground.identity(n)).is_hermitian(1e-12)


@given(c=st.floats(-1e3, 1e3, allow_nan=False))
def test_translation_equivariance(c):
    rng = np.random.default_rng(0)
    g = PeriodicGrid(2, 8)
    bg = HermitianBackground.identity(2)
    u = GridFunction(g, 0.01 * rng.standard_normal(g.shape))
    a = ma_density(u, bg).values
    b = ma_density(GridFunction(g, u.values + c), bg).values
    assert np.allclose(a, b, rtol=0, atol=1e-9 * max(1.0, abs(c)))


def test_constant_has_background_density():
    bg = HermitianBackground(np.diag([2.0, 3.0]))
    g = PeriodicGrid(2, 8)
    dens = ma_density(GridFunction.constant(g, 5.0), bg).values
    assert np.allclose(dens, 6.0)


def test_polarization_identity(rng):
    """det(a + b) = det a + 2 mixed(a, b) + det b for 2 x 2 Hermitian matrices."""
    g = PeriodicGrid(2, 8)
    bg = HermitianBackground.identity(2)
    u = GridFunction(g, 0.002 * rng.standard_normal(g.shape))
    v = GridFunction(g, 0.002 * rng.standard_normal(g.shape))
    a, b = form_field(u, bg), form_field(v, bg)
    lhs = det_field(a + b)
    rhs = det_field(a) + 2 * mixed_determinant(a, b, 1) + det_field(b)
    assert np.allclose(lhs, rhs, atol=1e-12)
    assert np.allclose(mixed_ma(u, u, 1, bg).values, ma_density(u, bg).values)
    assert np.allclose(mixed_ma(u, v, 2, bg).values, ma_density(u, bg).values)
    assert np.allclose(mixed_ma(u, v, 0, bg).values, ma_density(v, bg).values)
    with pytest.raises(ParameterError):
        mixed_ma(u, v, 3, bg)


def test_omega_psh_test(rng):
    g = PeriodicGrid(1, 32)
    bg = HermitianBackground.identity(1)
    good = random_trig(rng, 2, amp=0.5).sample(g)
    ok, worst = is_omega_psh(good, bg)
    assert ok and worst > 0
    bad = random_trig(rng, 2, amp=5.0).sample(g)
    ok, worst = is_omega_psh(bad, bg)
    assert not ok and worst < 0


def test_analytic_form_matches_discrete_form(rng):
    g = PeriodicGrid(2, 32)
    bg = HermitianBackground.identity(2)
    f = random_trig(rng, 4, amp=0.4, kmax=1)
    err = np.abs(form_field(f.sample(g), bg) - analytic_form(f, g, bg)).max()
    assert err < 5e-3


def test_integration_and_oscillation():
    g = PeriodicGrid(1, 64)
    x, y = g.coords()
    u = GridFunction(g, np.cos(2 * np.pi * x) ** 2)
    assert math.isclose(integrate_dv(u.values, g), 0.5, rel_tol=1e-12)
    mu = GridMeasure.uniform(g)
    assert math.isclose(integrate(u, mu), 0.5, rel_tol=1e-12)
    assert math.isclose(oscillation(u), 1.0, rel_tol=1e-12)


def test_measure_validation():
    g = PeriodicGrid(1, 8)
    with pytest.raises(ParameterError):
        GridMeasure(g, -np.ones(g.shape))


def test_demailly_inequality_one_dimension(rng):
    """In one dimension the discrete inequality is exact: the Laplacian of psi - phi is >= 0 at its zeros."""
    g = PeriodicGrid(1, 64)
    bg = HermitianBackground.identity(1)
    for _ in range(10):
        psi = random_trig(rng, 2, amp=0.5).sample(g)
        w = 0.5 * np.maximum(random_trig(rng, 2, amp=1.0).sample(g).values, 0.0) ** 2
        rep = demailly_check(GridFunction(g, psi.values - w), psi, bg, ineq_tol=0.0)
        assert rep["contact_nodes"] > 0
        assert rep["pass"]


def test_demailly_requires_ordering(rng):
    g = PeriodicGrid(1, 8)
    bg = HermitianBackground.identity(1)
    with pytest.raises(ParameterError):
        demailly_check(GridFunction.constant(g, 1.0), GridFunction.constant(g, 0.0), bg)


def test_sine_hessian_example():
    """u = a sin(2 pi x1): kappa/4 Lap u = -kappa pi^2 a sin(2 pi x1) up to O(h^2)."""
    a = 0.3
    errs = []
    for res in (32, 64):
        g = PeriodicGrid(1, res)
        x, _ = g.coords()
        u = GridFunction(g, a * np.sin(2 * np.pi * x))
        num = complex_hessian(u, HermitianBackground.identity(1)).matrices[..., 0, 0].real
        errs.append(np.abs(num + 2 * np.pi ** 2 * a * np.sin(2 * np.pi * x)).max())
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.01)


def test_mass_is_cohomological():
    """int ma_density(u) dV = det(beta) vol up to O(h^2) (exact for n = 1)."""
    rng = np.random.default_rng(0)
    f1 = random_trig(rng, 2, amp=0.3)
    g = PeriodicGrid(1, 16)
    assert integrate_dv(ma_density(f1.sample(g), HermitianBackground.identity(1)).values, g) == pytest.approx(1.0, abs=1e-13)
    f2 = random_trig(rng, 4, amp=0.3, kmax=1)
    errs = []
    for res in (8, 16, 32):
        g = PeriodicGrid(2, res)
        errs.append(abs(integrate_dv(ma_density(f2.sample(g), HermitianBackground.identity(2)).values, g) - 1.0))
    assert errs[1] / errs[2] > 3.5
    assert errs[2] < 1e-4
