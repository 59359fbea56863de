import numpy as np
import pytest
from hypothesis import given, strategies as st

from psh_lab.chi import FunctionWeight, ReflectedLogWeight
from psh_lab.errors import ParameterError, PreconditionError
from psh_lab.envelope import (
    complementarity_residual, key_lemma_check, orthogonality_report, psh_envelope,
)
from psh_lab.grid import GridFunction, HermitianBackground, PeriodicGrid, is_omega_psh
from psh_lab.smooth import random_trig

BG1 = HermitianBackground.identity(1)
BG2 = HermitianBackground.identity(2)


def _obstacle(seed, res=16, amp=3.0, n=1):
    g = PeriodicGrid(n, res)
    return random_trig(np.random.default_rng(seed), 2 * n, amp=amp).sample(g)


def test_psh_obstacle_is_its_own_envelope(rng):
    g = PeriodicGrid(1, 32)
    h = random_trig(rng, 2, amp=0.3).sample(g)
    assert is_omega_psh(h, BG1)[0]
    r = psh_envelope(h, BG1)
    assert np.allclose(r.u.values, h.values, atol=1e-12)
    assert r.contact.all()


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_active_set_and_gauss_seidel_agree(seed):
    """Two unrelated algorithms for the same discrete complementarity system."""
    h = _obstacle(seed)
    a = psh_envelope(h, BG1, method="active-set", tol=1e-10)
    b = psh_envelope(h, BG1, method="gauss-seidel", tol=1e-10)
    assert np.max(np.abs(a.u.values - b.u.values)) < 1e-7


@pytest.mark.parametrize("seed", [0, 1])
def test_envelope_complementarity(seed):
    h = _obstacle(seed)
    r = psh_envelope(h, BG1)
    assert np.all(r.u.values <= h.values + 1e-12)
    ok, worst = is_omega_psh(r.u, BG1, 1e-9)
    assert ok
    assert complementarity_residual(r.u, h, BG1) <= 1e-9
    rep = orthogonality_report(r, BG1)
    assert rep["defect"] < 1e-8


def test_envelope_n2_complementarity():
    h = _obstacle(3, res=8, amp=1.0, n=2)
    r = psh_envelope(h, BG2, tol=1e-8)
    assert np.all(r.u.values <= h.values + 1e-12)
    assert is_omega_psh(r.u, BG2, 1e-7)[0]
    assert complementarity_residual(r.u, h, BG2) <= 1e-8
    assert r.contact.any()


@given(seed=st.integers(0, 10**6), c=st.floats(-5, 5))
def test_envelope_commutes_with_constants(seed, c):
    h = _obstacle(seed)
    a = psh_envelope(h, BG1).u.values
    b = psh_envelope(GridFunction(h.grid, h.values + c), BG1).u.values
    assert np.allclose(b, a + c, atol=1e-8)


@given(seed=st.integers(0, 10**6))
def test_envelope_is_idempotent(seed):
    h = _obstacle(seed)
    u = psh_envelope(h, BG1).u
    assert np.allclose(psh_envelope(u, BG1).u.values, u.values, atol=1e-9)


@given(seed=st.integers(0, 10**6), bump=st.floats(0.0, 2.0))
def test_envelope_is_monotone(seed, bump):
    h = _obstacle(seed)
    extra = _obstacle(seed + 1, amp=1.0).values
    h2 = GridFunction(h.grid, h.values + bump * (extra - extra.min()))
    assert np.all(psh_envelope(h, BG1).u.values <= psh_envelope(h2, BG1).u.values + 1e-9)


def test_envelope_rejects_bad_arguments():
    h = _obstacle(0)
    with pytest.raises(ParameterError):
        psh_envelope(h, BG1, tol=0.0)
    with pytest.raises(ParameterError):
        psh_envelope(h, BG2)
    with pytest.raises(ParameterError):
        psh_envelope(h, BG1, method="magic")
    with pytest.raises(ParameterError):
        psh_envelope(_obstacle(0, res=8, n=2), BG2, method="active-set")


def _pair(rng, res=32):
    g = PeriodicGrid(1, res)
    phi = random_trig(rng, 2, amp=0.4).sample(g)
    gap = random_trig(rng, 2, amp=0.3).sample(g)
    phihat = GridFunction(g, phi.values + gap.values - gap.values.min())
    return phi, phihat


def test_key_lemma_holds_for_reflected_log(rng):
    for _ in range(5):
        phi, phihat = _pair(rng)
        rep = key_lemma_check(phi, phihat, ReflectedLogWeight(0.9, scale=0.5), BG1)
        assert rep["pass"]


def test_key_lemma_identity_weight_gives_equality(rng):
    phi, phihat = _pair(rng)
    ident = FunctionWeight(lambda s: s, lambda s: np.ones_like(s))
    rep = key_lemma_check(phi, phihat, ident, BG1)
    assert rep["pass"]
    assert rep["worst_ratio"] == pytest.approx(1.0, abs=1e-6)


def test_key_lemma_preconditions(rng):
    phi, phihat = _pair(rng)
    w = ReflectedLogWeight()
    with pytest.raises(PreconditionError):
        key_lemma_check(phihat, phi, w, BG1)
    convex = FunctionWeight(lambda s: -np.log1p(-s), lambda s: 1.0 / (1.0 - s))
    with pytest.raises(PreconditionError):
        key_lemma_check(phi, phihat, convex, BG1)
    bad = GridFunction(phi.grid, 10 * phi.values)
    with pytest.raises(PreconditionError):
        key_lemma_check(bad, GridFunction(phi.grid, bad.values + 100), w, BG1)


def _cos_obstacle(res):
    g = PeriodicGrid(1, res)
    x, _ = g.coords()
    return GridFunction(g, np.minimum(0.0, 0.2 - 2.0 * np.cos(2 * np.pi * x)))


def test_envelope_under_refinement():
    """Coarse envelopes match a run with the resolution doubled twice."""
    coarse = psh_envelope(_cos_obstacle(128), BG1)
    fine = psh_envelope(_cos_obstacle(512), BG1)
    assert np.max(np.abs(coarse.u.values - fine.u.values[::4, ::4])) < 1e-3
    # contact masks differ only next to the coarse free boundary
    mid = psh_envelope(_cos_obstacle(256), BG1)
    c, f = mid.contact, fine.contact[::2, ::2]
    boundary = np.zeros_like(c)
    for ax in (0, 1):
        for s in (1, -1):
            boundary |= c != np.roll(c, s, axis=ax)
    assert np.all(boundary[c != f])


def test_no_monge_ampere_off_contact():
    """A strictly concave pocket is cut off; the envelope carries no mass there."""
    g = PeriodicGrid(1, 64)
    x, y = g.coords()
    h = GridFunction(g, -4 * np.exp(-((x - 0.5) ** 2 + (y - 0.5) ** 2) / 0.02))
    r = psh_envelope(h, BG1)
    rep = orthogonality_report(r, BG1)
    assert (~r.contact).sum() > 100
    assert rep["off_contact_max_density"] <= 1e-9
    assert rep["defect"] <= 1e-9


@given(seed=st.integers(0, 10**6))
def test_envelope_is_a_contraction(seed):
    h1 = _obstacle(seed)
    h2 = _obstacle(seed + 7)
    d = np.max(np.abs(psh_envelope(h1, BG1).u.values - psh_envelope(h2, BG1).u.values))
    assert d <= np.max(np.abs(h1.values - h2.values)) + 2e-9
