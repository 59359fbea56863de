import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from psh_lab.errors import NonNormalizable, ParameterError
from psh_lab.grid import PeriodicGrid
from psh_lab.measures import (
    DensitySpec, QuasiPshWeight, build_density, grid_lelong_slope, lelong_number, log_pole, lp_norm,
    relative_bound_check, singular_set,
)

pts = st.tuples(st.floats(-0.49, 0.49), st.floats(-0.49, 0.49))


@given(p=pts, shift=st.tuples(st.integers(-3, 3), st.integers(-3, 3)))
def test_log_pole_is_periodic(p, shift):
    a = np.array(p)
    b = a + np.array(shift, dtype=float)
    assert log_pole(a[None], [0.0, 0.0])[0] == pytest.approx(log_pole(b[None], [0.0, 0.0])[0], abs=1e-12)


@given(x=pts)
def test_log_pole_has_constant_laplacian_away_from_pole(x):
    """Lap G = -2 pi off the lattice (the delta mass sits at the pole)."""
    x = np.array(x)
    if np.linalg.norm(x) < 0.1:
        x = x + 0.3

    def lap(h):
        stencil = np.array([x, x + [h, 0], x - [h, 0], x + [0, h], x - [0, h]])
        v = log_pole(stencil, [0.0, 0.0])
        return (v[1:].sum() - 4 * v[0]) / h ** 2

    # Richardson extrapolation removes the O(h^2) stencil error
    assert (4 * lap(1e-3) - lap(2e-3)) / 3 == pytest.approx(-2 * math.pi, abs=1e-5)


def test_log_pole_flux_is_two_pi():
    """Circulation of grad G around the pole is 2 pi (unit Dirac mass)."""
    th = np.linspace(0, 2 * np.pi, 400, endpoint=False)
    r, h = 0.2, 1e-5
    ring = lambda rr: np.column_stack([rr * np.cos(th), rr * np.sin(th)])
    dr = (log_pole(ring(r + h), [0, 0]) - log_pole(ring(r - h), [0, 0])) / (2 * h)
    flux = float(np.mean(dr) * 2 * np.pi * r)
    # flux through the circle = 2 pi - 2 pi * (area of the disc)
    assert flux == pytest.approx(2 * math.pi * (1 - math.pi * r * r), rel=1e-6)


@pytest.mark.parametrize("n", [1, 2])
def test_log_pole_behaves_like_log(n):
    r = np.array([1e-3, 1e-5])
    pts_ = np.zeros((2, 2 * n))
    pts_[:, 0] = r
    diff = log_pole(pts_, np.zeros(2 * n)) - np.log(r)
    assert diff[0] == pytest.approx(diff[1], abs=1e-5)


@pytest.mark.parametrize("n,c", [(1, 1.0), (1, 3.0), (2, 1.0), (2, 2.5)])
def test_lelong_number_within_five_percent(n, c):
    psi = QuasiPshWeight(n, [(np.full(2 * n, 0.25), c)])
    assert lelong_number(psi, np.full(2 * n, 0.25)) == pytest.approx(c, rel=0.05)
    # away from the pole the weight is smooth
    assert lelong_number(psi, np.full(2 * n, 0.75)) == pytest.approx(0.0, abs=0.05)


def test_lelong_is_additive():
    x = [0.1, 0.2]
    a = lelong_number(QuasiPshWeight(1, [(x, 1.0), (x, 2.0)]), x)
    b = lelong_number(QuasiPshWeight(1, [(x, 3.0)]), x)
    assert a == pytest.approx(b, rel=1e-9)
    assert a == pytest.approx(3.0, rel=0.05)


def test_weight_constant_K():
    psi = QuasiPshWeight(1, [([0, 0], 3.0), ([0.5, 0.5], 1.0)])
    assert psi.K == pytest.approx(2 * math.pi * 4.0 / 2)


def test_singular_set():
    psi = QuasiPshWeight(1, [([0.0, 0.0], 3.0), ([0.5, 0.5], 0.4)])
    assert len(singular_set(psi, 1.0)) == 1
    assert len(singular_set(psi, 0.3)) == 2
    assert len(singular_set(psi, 0.5, fitted=True)) == 1
    g = PeriodicGrid(1, 16)
    mask = singular_set(psi, 1.0, g)
    assert mask.sum() == 1 and mask[0, 0]
    with pytest.raises(ParameterError):
        singular_set(psi, 0.0)


def test_sample_truncates_pole():
    g = PeriodicGrid(1, 32)
    psi = QuasiPshWeight(1, [([0.0, 0.0], 1.0)])
    v = psi.sample(g).values
    assert np.all(np.isfinite(v))
    assert v[0, 0] == pytest.approx(v[1, 0])


def test_grid_lelong_slope_of_sampled_pole():
    g = PeriodicGrid(1, 256)
    psi = QuasiPshWeight(1, [([0.5, 0.5], 2.0)])
    s = grid_lelong_slope(psi.sample(g), [0.5, 0.5], 4 * g.spacing, 0.1)
    assert s == pytest.approx(2.0, rel=0.05)


@pytest.mark.parametrize("kind", ["uniform", "lp-singular", "exp-singular", "orlicz"])
@pytest.mark.parametrize("n", [1, 2])
def test_densities_are_probability_measures(kind, n):
    g = PeriodicGrid(n, 16 if n == 1 else 8)
    spec = DensitySpec(kind, centers=[] if kind == "uniform" else [[0.5] * (2 * n)],
                       strengths=[] if kind == "uniform" else [1.0])
    mu = build_density(spec, g)
    assert mu.total_mass == pytest.approx(1.0, rel=1e-12)
    assert np.all(mu.weights >= 0)


def test_lp_singular_norm_grows_with_refinement():
    spec = DensitySpec("lp-singular", centers=[[0.0, 0.0]], strengths=[1.0], p=3.0)
    norms = [lp_norm(build_density(spec, PeriodicGrid(1, r)), 3.0) for r in (32, 64, 128)]
    assert norms[0] < norms[1] < norms[2]
    # 2a p = 3 >= 2n = 2: not in L^3
    assert not spec.check_integrability(1)
    assert DensitySpec("lp-singular", [[0, 0]], [1.5], p=1.5).check_integrability(1) is False
    assert DensitySpec("lp-singular", [[0, 0]], [0.5], p=1.5).check_integrability(1)


def test_density_spec_validation():
    with pytest.raises(ParameterError):
        DensitySpec("gaussian")
    with pytest.raises(ParameterError):
        DensitySpec("lp-singular", centers=[[0, 0]], strengths=[])
    with pytest.raises(ParameterError):
        DensitySpec("lp-singular", centers=[[0, 0]], strengths=[-1.0])
    with pytest.raises(ParameterError):
        build_density(DensitySpec("lp-singular"), PeriodicGrid(1, 8))


def test_non_normalizable_density():
    spec = DensitySpec("exp-singular", centers=[[0.0, 0.0]], strengths=[2000.0])
    with pytest.raises(NonNormalizable):
        build_density(spec, PeriodicGrid(1, 64))


def test_density_spec_json_round_trip(tmp_path):
    spec = DensitySpec("lp-singular", centers=[[0.1, 0.2]], strengths=[0.5], truncation=2.0, p=2.0,
                       params={"g_amplitude": 0.3})
    path = tmp_path / "d.json"
    path.write_text(json.dumps(spec.to_dict()))
    assert DensitySpec.load(path) == spec
    # unknown keys are kept as params
    assert DensitySpec.from_dict({"kind": "uniform", "seed": 3}).params == {"seed": 3}


def test_weight_json_round_trip():
    psi = QuasiPshWeight(2, [([0.1, 0.2, 0.3, 0.4], 1.5)], period=2.0)
    back = QuasiPshWeight.from_dict(json.loads(json.dumps(psi.to_dict())))
    assert back.n == 2 and back.period == 2.0
    assert np.array_equal(back.lelong_data[0][0], psi.lelong_data[0][0])


def test_relative_bound_check_detects_violation():
    g = PeriodicGrid(1, 32)
    psi = QuasiPshWeight(1, [([0.5, 0.5], 3.0)])
    phi = psi.sample(g)
    phi = type(phi)(g, phi.values - phi.values.max())
    ok = relative_bound_check(phi, psi, 1.0, 10.0, q=2.0)
    assert ok["pass"] and ok["singular_centers"]
    bad = relative_bound_check(phi, psi, 0.5, 0.0, q=2.0)
    assert not bad["pass"]
    with pytest.raises(ParameterError):
        relative_bound_check(type(phi)(g, phi.values + 1.0), psi, 1.0, 0.0, q=2.0)


def test_holder_exponent_integral_is_stable():
    """Lelong number 0.4 < 1/q = 1/2 and p = 2: int f^r dV with r = 2p/(p+1) settles under refinement."""
    p = 2.0
    r = 2 * p / (p + 1)
    assert 1 < r < p
    spec = DensitySpec("exp-singular", [[0.5, 0.5]], [0.4])
    vals = []
    for res in (64, 128, 256, 512):
        g = PeriodicGrid(1, res)
        mu = build_density(spec, g)
        vals.append(float(np.sum(mu.weights ** r) * g.cell_volume))
    diffs = np.abs(np.diff(vals))
    assert np.all(diffs[1:] < diffs[:-1])
    assert diffs[-1] < 1e-2 * vals[-1]


def test_lp_integral_is_flat_under_refinement():
    """2a = 1, p = 1.5: |z|^-1 is in L^1.5 in one complex dimension."""
    spec = DensitySpec("lp-singular", [[0.5, 0.5]], [1.0], p=1.5)
    vals = [lp_norm(build_density(spec, PeriodicGrid(1, r)), 1.5) for r in (64, 128, 256, 512)]
    diffs = np.abs(np.diff(vals))
    assert np.all(diffs[1:] < diffs[:-1])
    assert diffs[-1] < 0.05 * vals[-1]


def test_singular_sets_are_nested():
    psi = QuasiPshWeight(1, [([0.0, 0.0], 3.0), ([0.5, 0.5], 0.4), ([0.25, 0.75], 1.2)])
    key = lambda cs: {tuple(c) for c in cs}
    levels = [0.1, 0.5, 1.0, 2.0, 4.0]
    sets = [key(singular_set(psi, c)) for c in levels]
    assert all(b <= a for a, b in zip(sets, sets[1:]))
