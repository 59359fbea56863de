"""Command line interface: ``psh-lab <verb> ...``.

The exit code is 0 iff every asserted certificate or check passed, 1 when a
check failed and 2 on invalid input or a solver error.
"""

from __future__ import annotations

import os

# thread count for the numerical libraries has to be fixed before numpy loads
if os.environ.get("PSHLAB_THREADS"):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, os.environ["PSHLAB_THREADS"])

import argparse  # noqa: E402
import json  # noqa: E402
import logging  # noqa: E402
import sys  # noqa: E402
from concurrent.futures import ProcessPoolExecutor  # noqa: E402
from pathlib import Path  # noqa: E402

import numpy as np  # noqa: E402

from .errors import PshLabError  # noqa: E402

log = logging.getLogger("psh_lab")


def _density(args, n: int):
    from .measures import DensitySpec
    if args.density:
        path = Path(args.density)
        if not path.is_file():
            raise PshLabError(f"density spec {path} does not exist")
        try:
            return DensitySpec.load(path)
        except json.JSONDecodeError as e:
            raise PshLabError(f"density spec {path} is not valid JSON: {e}") from e
    center = [0.5] * (2 * n)
    if args.kind == "uniform":
        return DensitySpec("uniform")
    if args.kind == "manufactured":
        return DensitySpec("manufactured", params={"family": "sine"})
    return DensitySpec(args.kind, [center], [args.strength], p=args.p)


def _background(n: int, diag):
    from .grid import HermitianBackground
    diag = diag or [1.0] * n
    if len(diag) != n:
        raise PshLabError("--beta needs one value per complex dimension")
    return HermitianBackground(np.diag(diag))


def cmd_solve(args) -> int:
    from .experiments import torus_pipeline, write_json, write_rows
    from .grid import PeriodicGrid
    from .io import save_binary, save_csv
    from .measures import build_density
    out = Path(args.out)
    bg = _background(args.n, args.beta)
    grid = PeriodicGrid(args.n, args.res)
    spec = _density(args, args.n)
    mu = build_density(spec, grid, bg)
    r = torus_pipeline(mu, bg, args.m, args.am_source, holder_p=spec.p)
    cert, sc, sol = r["certificate"], r["self_consistency"], r["solution"]
    save_csv(r["phi"], out / "phi.csv")
    save_binary(r["phi"], out / "phi.bin")
    write_rows(out / "residual_trace.csv", sol.trace)
    write_rows(out / "certificate_trace.csv", cert.trace + sc["checks"], ["id", "lhs", "rhs", "pass"])
    sc["dist"].to_csv(out / "distribution.csv")
    write_json(out / "manifest.json", {
        "command": "solve", "args": vars(args), "density": spec.to_dict(), "oscillation": r["oscillation"],
        "residual": sol.residual, "iterations": sol.iterations, "A_m": r["A_m"], "certificate": cert.to_dict(),
        "self_consistency": sc["checks"], "pass": r["pass"]})
    if args.plot:
        from . import plotting
        plotting.distribution_plot(sc["dist"], cert, sc["chi"], out / "distribution.svg")
        plotting.field_plot(r["phi"].values, out / "phi.svg", "phi")
    print(f"Osc(phi) = {r['oscillation']:.6g}, T = {cert.T:.6g}, residual {sol.residual:.2e}, "
          f"checks {'pass' if r['pass'] else 'FAIL'}")
    return 0 if r["pass"] else 1


def cmd_envelope(args) -> int:
    from .envelope import orthogonality_report, psh_envelope
    from .experiments import write_json, write_rows
    from .grid import GridFunction, PeriodicGrid
    from .io import save_csv
    from .smooth import random_trig
    out = Path(args.out)
    bg = _background(args.n, args.beta)
    grid = PeriodicGrid(args.n, args.res)
    xs = grid.coords()
    if args.obstacle == "cosine":
        h = GridFunction(grid, np.cos(2 * np.pi * xs[0]) * np.cos(2 * np.pi * xs[-1]))
    else:
        h = random_trig(np.random.default_rng(args.seed), grid.ndim, amp=args.amplitude).sample(grid)
    r = psh_envelope(h, bg, tol=args.tol)
    rep = orthogonality_report(r, bg)
    save_csv(r.u, out / "envelope.csv")
    write_rows(out / "residual_trace.csv", r.trace)
    ok = rep["defect"] <= args.max_defect
    write_json(out / "manifest.json", {"command": "envelope", "args": vars(args), "iterations": r.iterations,
                                       "residual": r.residual, "method": r.method, "orthogonality": rep, "pass": ok})
    if args.plot:
        from . import plotting
        plotting.field_plot(r.u.values, out / "envelope.svg", "envelope")
        plotting.field_plot(r.contact.astype(float), out / "contact.svg", "contact set")
    print(f"{r.method}: {r.iterations} iterations, residual {r.residual:.2e}, "
          f"off-contact MA fraction {rep['defect']:.2e}")
    return 0 if ok else 1


def cmd_bound(args) -> int:
    from .bounds import local_bound, stability_bound, uniform_bound
    from .experiments import write_json, write_rows
    if args.mode == "uniform":
        cert = uniform_bound(args.n, args.m, args.Am)
    elif args.mode == "local":
        cert = local_bound(args.n, args.m, args.Am)
    else:
        cert = stability_bound(args.n, args.m, args.Am, args.phihat_sup, args.mass)
    if args.out:
        out = Path(args.out)
        write_rows(out / "certificate_trace.csv", cert.trace, ["id", "lhs", "rhs", "pass"])
        write_json(out / "certificate.json", cert.to_dict())
    print(cert.to_json(indent=2))
    return 0 if cert.passed else 1


def cmd_stability(args) -> int:
    from .experiments import default_perturbations, stability_experiment, write_json, write_rows
    from .grid import PeriodicGrid
    from .measures import build_density
    from .solver import solve_torus
    out = Path(args.out)
    bg = _background(args.n, args.beta)
    grid = PeriodicGrid(args.n, args.res)
    spec = _density(args, args.n)
    mu = build_density(spec, grid, bg)
    phi = solve_torus(mu, bg).phi
    perts = default_perturbations(phi, bg, np.random.default_rng(args.seed))
    rep = stability_experiment(phi, mu, bg, args.m, args.Am, perts)
    write_rows(out / "stability.csv", rep["rows"])
    write_json(out / "manifest.json", {"command": "stability", "args": vars(args), **rep})
    if args.plot:
        from . import plotting
        plotting.stability_plot(rep, out / "stability.svg")
    print(f"tau = {rep['tau']:.4g}, log-log slope {rep['loglog_slope']:.3f}, "
          f"{sum(r['pass'] for r in rep['rows'])}/{len(rep['rows'])} perturbations within the bound")
    return 0 if rep["pass"] else 1


def cmd_family(args) -> int:
    from .experiments import family_experiment, write_json, write_rows
    from .grid import HermitianBackground, PeriodicGrid
    from .measures import build_density
    out = Path(args.out)
    theta = HermitianBackground.identity(args.n)
    grid = PeriodicGrid(args.n, args.res)
    spec = _density(args, args.n)
    mu = build_density(spec, grid, theta)
    rep = family_experiment(args.t, theta, mu, args.m, kind=args.family, holder_p=spec.p)
    write_rows(out / "family.csv", rep["rows"])
    write_json(out / "manifest.json", {"command": "family", "args": vars(args), **rep})
    if args.plot:
        from . import plotting
        plotting.family_plot(rep, out / "family.svg")
    for r in rep["rows"]:
        print(f"t = {r['t']:<8g} Osc = {r['oscillation']:.6g}")
    print(f"T = {rep['T']:.6g}; spread (max-min)/max = {rep['spread']:.3f}")
    return 0 if rep["pass"] else 1


def _accept_one(ident: str):
    from .acceptance import run_criterion
    r = run_criterion(ident)
    return r.id, r.passed, r.line()


def cmd_accept(args) -> int:
    from .acceptance import CRITERIA
    ids = [i.strip().upper() for i in args.only.split(",")] if args.only else list(CRITERIA)
    unknown = [i for i in ids if i not in CRITERIA]
    if unknown:
        raise PshLabError(f"unknown criteria {unknown}")
    results = _map(_accept_one, ids, args.jobs)
    for _, _, line in results:
        print(line, flush=True)
    return 0 if all(ok for _, ok, _ in results) else 1


def _run_one(job):
    from .experiments import Scenario, run_scenario
    path, out, plot = job
    s = Scenario.load(path)
    m = run_scenario(s, out, plot=plot)
    return s.id, m["pass"]


def cmd_run(args) -> int:
    jobs = [(p, args.out, args.plot) for p in args.scenarios]
    results = _map(_run_one, jobs, args.jobs)
    seen = set()
    for sid, ok in results:
        if sid in seen:
            raise PshLabError(f"scenario id {sid!r} is not unique")
        seen.add(sid)
        print(f"{sid}: {'pass' if ok else 'FAIL'}")
    return 0 if all(ok for _, ok in results) else 1


def _map(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="psh-lab", description="Monge-Ampere solvers, envelopes and a priori bounds")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--n", type=int, default=1, choices=(1, 2), help="complex dimension")
        sp.add_argument("--res", type=int, default=64, help="nodes per real axis")
        sp.add_argument("--beta", type=float, nargs="+", help="diagonal of the background form")
        if out:
            sp.add_argument("--out", default="runs/out", help="output directory")
        sp.add_argument("--plot", action="store_true", help="also write SVG figures")

    def density(sp):
        sp.add_argument("--density", help="DensitySpec JSON document")
        sp.add_argument("--kind", default="lp-singular",
                        choices=("uniform", "manufactured", "lp-singular", "exp-singular", "orlicz"))
        sp.add_argument("--strength", type=float, default=1.0, help="2a or the Lelong coefficient")
        sp.add_argument("--p", type=float, default=1.5, help="declared integrability exponent")
        sp.add_argument("--m", type=float, default=4.0, help="moment exponent")

    sp = sub.add_parser("solve", help="solve on the torus and certify the oscillation")
    common(sp)
    density(sp)
    sp.add_argument("--am-source", default="heuristic", choices=("heuristic", "lower"))
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("envelope", help="omega-psh envelope of an obstacle")
    common(sp)
    sp.add_argument("--obstacle", default="cosine", choices=("cosine", "random"))
    sp.add_argument("--amplitude", type=float, default=3.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--tol", type=float, default=1e-9)
    sp.add_argument("--max-defect", type=float, default=1e-3)
    sp.set_defaults(func=cmd_envelope)

    sp = sub.add_parser("bound", help="print a bound certificate")
    sp.add_argument("--mode", default="uniform", choices=("uniform", "local", "stability"))
    sp.add_argument("--n", type=int, default=1)
    sp.add_argument("--m", type=float, default=4.0)
    sp.add_argument("--Am", type=float, default=1.0)
    sp.add_argument("--phihat-sup", type=float, default=0.0)
    sp.add_argument("--mass", type=float, default=1e-3)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_bound)

    sp = sub.add_parser("stability", help="stability inequality on perturbations of a solution")
    common(sp)
    density(sp)
    sp.add_argument("--Am", type=float, default=8.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_stability)

    sp = sub.add_parser("family", help="collapsing family below a fixed form")
    common(sp)
    density(sp)
    sp.add_argument("--t", type=float, nargs="+", default=[1.0, 0.5, 0.25, 0.125])
    sp.add_argument("--family", default="anisotropic", choices=("anisotropic", "scaling"))
    sp.set_defaults(func=cmd_family, n=2, res=16, kind="manufactured")

    sp = sub.add_parser("accept", help="run the acceptance suite")
    sp.add_argument("--only", help="comma separated criteria, e.g. A1,A8")
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_accept)

    sp = sub.add_parser("run", help="run scenario JSON documents")
    sp.add_argument("scenarios", nargs="+")
    sp.add_argument("--out", default="runs")
    sp.add_argument("--plot", action="store_true")
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (PshLabError, ValueError) as e:
        print(f"psh-lab: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
