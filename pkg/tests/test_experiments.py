import json
import math

import numpy as np
import pytest

from psh_lab.errors import ParameterError
from psh_lab.experiments import (
    Scenario, ScenarioError, default_perturbations, family_backgrounds, family_experiment, radial_Am,
    radial_density, radial_experiment, radial_moment, run_scenario, stability_experiment, write_rows,
)
from psh_lab.grid import HermitianBackground, PeriodicGrid, is_omega_psh, oscillation
from psh_lab.measures import DensitySpec, build_density
from psh_lab.solver import manufactured_instance, solve_torus


def test_scenario_validation():
    with pytest.raises(ParameterError):
        Scenario("x", model="sphere")
    with pytest.raises(ParameterError):
        Scenario("x", mode="global")
    with pytest.raises(ParameterError):
        Scenario("x", resolutions=[64, 32])
    with pytest.raises(ParameterError):
        Scenario("x", am_source="guess")
    with pytest.raises(ParameterError):
        Scenario("x", n=2, beta=[1.0]).background()
    assert Scenario("x", am_source=3.5).am_source == 3.5


def test_scenario_round_trip(tmp_path):
    s = Scenario("s1", density={"kind": "lp-singular", "centers": [[0.5, 0.5]], "strengths": [1.0]},
                 resolutions=[16, 32], m=3.0)
    path = tmp_path / "s.json"
    path.write_text(json.dumps(s.to_dict()))
    back = Scenario.load(path)
    assert back == s
    assert back.density_spec().kind == "lp-singular"


def test_scenario_relative_density_path(tmp_path):
    (tmp_path / "sub").mkdir()
    (tmp_path / "sub" / "d.json").write_text(json.dumps({"kind": "uniform"}))
    (tmp_path / "sub" / "s.json").write_text(json.dumps({"id": "rel", "density": "d.json"}))
    assert Scenario.load(tmp_path / "sub" / "s.json").density_spec().kind == "uniform"


def test_malformed_scenarios(tmp_path):
    with pytest.raises(ScenarioError):
        Scenario.load(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ScenarioError):
        Scenario.load(bad)
    s = Scenario("nodens", density=str(tmp_path / "nope.json"), resolutions=[16])
    with pytest.raises(ScenarioError):
        run_scenario(s, tmp_path / "out")
    assert not (tmp_path / "out" / "nodens").exists()


def test_flat_scenario(tmp_path):
    m = run_scenario(Scenario("flat", resolutions=[16, 32]), tmp_path)
    assert m["pass"]
    assert all(r["oscillation"] == 0.0 for r in m["results"])
    for name in ("distribution_res16.csv", "residual_trace_res32.csv", "certificate_trace_res16.csv",
                 "manifest.json"):
        assert (tmp_path / "flat" / name).is_file()


def test_scenario_rerun_is_bit_identical(tmp_path):
    s = Scenario("rep", density={"kind": "lp-singular", "centers": [[0.5, 0.5]], "strengths": [1.0]},
                 resolutions=[16, 32])
    run_scenario(s, tmp_path / "a")
    run_scenario(s, tmp_path / "b")
    for name in ("manifest.json", "distribution_res32.csv", "certificate_trace_res16.csv"):
        assert (tmp_path / "a" / "rep" / name).read_bytes() == (tmp_path / "b" / "rep" / name).read_bytes()


def test_refinement_of_singular_scenario(tmp_path):
    """Oscillation differences shrink under refinement, by a factor near 1.7 (the singular truncation
    limits the order)."""
    s = Scenario("ref", density={"kind": "lp-singular", "centers": [[0.5, 0.5]], "strengths": [1.0], "p": 1.5},
                 resolutions=[64, 128, 256, 512])
    m = run_scenario(s, tmp_path)
    assert m["pass"]
    assert all(r > 1.5 for r in m["difference_ratios"]), m["difference_ratios"]


def test_ball_scenario(tmp_path):
    m = run_scenario(Scenario("ball", model="ball", n=2, m=4.0), tmp_path)
    assert m["pass"]
    assert (tmp_path / "ball" / "manifest.json").is_file()


def test_radial_density_normalization():
    from scipy.integrate import quad
    from psh_lab.solver import sphere_area
    for n in (1, 2):
        for spec in (DensitySpec("uniform"), DensitySpec("lp-singular", [[0] * 2 * n], [1.0])):
            f = radial_density(spec, n)
            mass = quad(lambda r: float(f(r)) * sphere_area(n) * r ** (2 * n - 1), 0, 1)[0]
            assert mass == pytest.approx(1.0, rel=1e-8)
    with pytest.raises(ParameterError):
        radial_density(DensitySpec("lp-singular", [[0, 0]], [2.0]), 1)
    with pytest.raises(ParameterError):
        radial_density(DensitySpec("orlicz", [[0, 0]], [1.0]), 1)


def test_radial_moment_closed_form():
    """u = (r^2 - 1)/(2 pi), uniform density: int (-u)^1 dmu = int_0^1 (1 - r^2)/(2 pi) 2 r dr = 1/(4 pi)."""
    f = radial_density(DensitySpec("uniform"), 1)
    val = radial_moment(lambda r: (r * r - 1) / (2 * math.pi), f, 1, 1.0)
    assert val == pytest.approx(1 / (4 * math.pi), rel=1e-10)


def test_radial_Am_dominates_solution_moment():
    f = radial_density(DensitySpec("uniform"), 2)
    am = radial_Am(f, 2, 4.0)
    rep = radial_experiment(DensitySpec("uniform"), 2, 4.0, grid_res=None)
    assert rep["moment_of_solution"] <= am["Am_class"]
    assert rep["pass"] and rep["sup_abs"] <= rep["T"]


def test_family_backgrounds():
    theta = HermitianBackground.identity(2)
    bgs = family_backgrounds("anisotropic", [1.0, 0.5], theta)
    assert np.allclose(bgs[1].beta, np.diag([1.0, 0.5]))
    assert np.allclose(family_backgrounds("scaling", [0.25], theta)[0].beta, 0.25 * np.eye(2))
    with pytest.raises(ParameterError):
        family_backgrounds("anisotropic", [0.0], theta)
    with pytest.raises(ParameterError):
        family_backgrounds("twist", [0.5], theta)


def test_family_first_member_is_base_problem():
    theta = HermitianBackground.identity(2)
    g = PeriodicGrid(2, 8)
    _, mu = manufactured_instance("sine", g, theta)
    rep = family_experiment([1.0, 0.5], theta, mu)
    assert rep["rows"][0]["oscillation"] == pytest.approx(oscillation(solve_torus(mu, theta).phi), rel=1e-10)
    assert rep["pass"] and rep["all_theta_psh"]


def test_scaling_family_is_exactly_linear():
    """omega_t = t omega gives phi_t = t phi_1 for the same normalized measure (n = 1)."""
    theta = HermitianBackground.identity(1)
    g = PeriodicGrid(1, 32)
    _, mu = manufactured_instance("sine", g, theta)
    rep = family_experiment([1.0, 0.5, 0.25], theta, mu, m=3.0, kind="scaling")
    osc = [r["oscillation"] for r in rep["rows"]]
    assert osc[1] == pytest.approx(osc[0] / 2, rel=1e-8)
    assert osc[2] == pytest.approx(osc[0] / 4, rel=1e-8)


def _stability_setup():
    bg = HermitianBackground.identity(1)
    g = PeriodicGrid(1, 32)
    _, mu = manufactured_instance("sine", g, bg)
    phi = solve_torus(mu, bg).phi
    return bg, mu, phi


def test_stability_identity_and_shifts():
    bg, mu, phi = _stability_setup()
    perts = default_perturbations(phi, bg, np.random.default_rng(0))
    rep = stability_experiment(phi, mu, bg, 4.0, 8.0, perts)
    rows = {r["label"]: r for r in rep["rows"]}
    assert rows["identity"]["lhs"] == 0.0 and rows["identity"]["mass"] == 0.0
    # a constant shift c has sup gap c and mu-mass c
    assert rows["shift 0.1"]["lhs"] == pytest.approx(0.1)
    assert rows["shift 0.1"]["mass"] == pytest.approx(0.1)
    assert rep["pass"]
    assert 0 < rep["tau"] < 1
    # shrinking blends: the sup gap decays at least like mass^tau
    assert rep["slope_at_least_tau"], (rep["loglog_slope"], rep["tau"])


def test_stability_perturbations_are_admissible():
    bg, mu, phi = _stability_setup()
    perts = default_perturbations(phi, bg, np.random.default_rng(1))
    assert [p[0] for p in perts][:3] == ["identity", "shift 0.01", "shift 0.1"]
    for label, s, phihat in perts:
        assert is_omega_psh(phihat, bg, 1e-9)[0], label


def test_write_rows_exact_floats(tmp_path):
    p = write_rows(tmp_path / "r.csv", [{"a": 0.1, "b": np.float64(1 / 3)}])
    line = p.read_text().splitlines()[1]
    a, b = line.split(",")
    assert float(a) == 0.1 and float(b) == 1 / 3
