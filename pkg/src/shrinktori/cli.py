"""Command-line interface: seeded, manifest-stamped experiment runs.

Subcommands: seed, flow, piecewise, entropy, spectrum, lojasiewicz, maslov,
census, report.  Every run writes a `manifest.txt` (key = value lines: tool
version, config echo, input digests, wall times, result summary) next to its
outputs, including on failure.  Exit codes: 0 success, 2 usage, 3 numerical
failure; `piecewise` additionally exits 4 when the leg cap was reached.

All randomness in a run flows from the single 64-bit config seed through
counter-based generators, so reruns with identical inputs are byte-identical.
"""

import argparse
import hashlib
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ToolkitError
from .grid import ConformalStructure, GridSpec, TorusMap, area
from .functionals import entropy
from .lagrangian import maslov_numbers
from .seeds import (
    RunConfig,
    abresch_langer_curve,
    clifford_seed,
    product_torus_seed,
    read_snapshot,
    write_snapshot,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
EXIT_CAP = 4


def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


class Manifest:
    def __init__(self, outdir: Path, config: RunConfig, inputs):
        self.outdir = outdir
        self.entries = [("toolkit_version", __version__)]
        for line in config.to_text().splitlines():
            key, _, value = line.partition(" = ")
            self.entries.append((f"config.{key}", value))
        for p in inputs:
            self.entries.append((f"input.{Path(p).name}.sha256", _digest(p)))
        self.entries.append(("start_walltime", f"{time.time():.3f}"))

    def add(self, key, value):
        self.entries.append((str(key), str(value)))

    def write(self, status):
        self.entries.append(("end_walltime", f"{time.time():.3f}"))
        self.entries.append(("status", status))
        self.outdir.mkdir(parents=True, exist_ok=True)
        text = "\n".join(f"{k} = {v}" for k, v in self.entries)
        (self.outdir / "manifest.txt").write_text(text + "\n")


def _load_config(args):
    if getattr(args, "config", None):
        return RunConfig.from_file(args.config)
    return RunConfig()


def _outdir(args):
    return Path(getattr(args, "outdir", None) or ".")


def cmd_seed(args):
    cfg = _load_config(args)
    grid = GridSpec(args.n, args.n)
    if args.kind == "clifford":
        u = clifford_seed(grid)
        tau = ConformalStructure(0.0, 1.0)
    else:
        c1 = abresch_langer_curve(args.p1, args.q1)
        c2 = abresch_langer_curve(args.p2, args.q2)
        u, tau = product_torus_seed(c1, c2, grid)
    out = args.output or f"{args.kind}_{args.n}.snap"
    manifest = Manifest(_outdir(args), cfg, [])
    write_snapshot(out, u, tau, 0.0)
    manifest.add("result.snapshot", out)
    manifest.add("result.area", f"{area(u, cfg.backend):.17g}")
    manifest.write("ok")
    print(out)
    return EXIT_OK


def cmd_entropy(args):
    cfg = _load_config(args)
    manifest = Manifest(_outdir(args), cfg, [args.snapshot])
    u, tau, _t = read_snapshot(args.snapshot)
    rep = entropy(u, cfg.backend)
    line = ("%.12g %.12g %.12g %.12g %.12g %.12g %d" % (
        rep.lam, *rep.argmax.x0, rep.argmax.t0, int(rep.converged)))
    manifest.add("result.lambda", f"{rep.lam:.12g}")
    manifest.add("result.converged", rep.converged)
    manifest.write("ok")
    print(line)
    out = _outdir(args) / "entropy.txt"
    out.write_text(line + "\n")
    return EXIT_OK


def cmd_maslov(args):
    cfg = _load_config(args)
    manifest = Manifest(_outdir(args), cfg, [args.snapshot])
    u, _tau, _t = read_snapshot(args.snapshot)
    m1, m2 = maslov_numbers(u, cfg.backend)
    manifest.add("result.maslov", f"{m1} {m2}")
    manifest.write("ok")
    print(f"{m1} {m2}")
    (_outdir(args) / "maslov.txt").write_text(f"{m1} {m2}\n")
    return EXIT_OK


def cmd_spectrum(args):
    from .variational import assemble_L, spectrum_of

    cfg = _load_config(args)
    manifest = Manifest(_outdir(args), cfg, [args.snapshot])
    u, tau, _t = read_snapshot(args.snapshot)
    L, gram, _ = assemble_L(u, tau, n=args.n, backend=cfg.backend,
                            tol_crit=cfg.tol_crit)
    ev = spectrum_of(L, gram)
    out = _outdir(args) / "spectrum.csv"
    with open(out, "w") as fh:
        fh.write("index,eigenvalue\n")
        for k, v in enumerate(ev):
            fh.write(f"{k},{v:.17g}\n")
    manifest.add("result.n_eigenvalues", len(ev))
    manifest.add("result.min", f"{ev[0]:.12g}")
    manifest.add("result.max", f"{ev[-1]:.12g}")
    manifest.write("ok")
    print(out)
    return EXIT_OK


def cmd_lojasiewicz(args):
    from .variational import CriticalPoint, find_critical_point, lojasiewicz_fit
    from .functionals import energy as energy_of

    cfg = _load_config(args)
    manifest = Manifest(_outdir(args), cfg, [args.snapshot])
    u, tau, _t = read_snapshot(args.snapshot)
    cp = find_critical_point(u, tau, cfg.backend, tol_crit=cfg.tol_crit)
    rng = np.random.default_rng(np.random.Philox(cfg.seed))
    fit = lojasiewicz_fit(cp, cfg.backend, rng=rng)
    line = f"{fit.theta:.12g} {fit.C2:.12g} {fit.n_samples} {fit.max_violation:.12g}"
    out = _outdir(args) / "lojasiewicz.txt"
    out.write_text(line + "\n")
    scatter = _outdir(args) / "lojasiewicz_samples.csv"
    with open(scatter, "w") as fh:
        fh.write("abs_dE,grad_norm\n")
        for de, gn in fit.samples:
            fh.write(f"{de:.17g},{gn:.17g}\n")
    manifest.add("result.theta", f"{fit.theta:.12g}")
    manifest.add("result.slope", f"{fit.slope:.12g}")
    manifest.write("ok")
    print(line)
    return EXIT_OK


def cmd_flow(args):
    from .flow import FlowState, run_to_singularity, type1_rescale
    from .errors import NotCauchy

    cfg = _load_config(args)
    outdir = _outdir(args)
    manifest = Manifest(outdir, cfg, [args.snapshot])
    u, tau, t0 = read_snapshot(args.snapshot)
    traj, rep = run_to_singularity(
        FlowState(u, t0), cfg.backend, cfl=cfg.cfl, dt_min=cfg.dt_min,
        t_max=cfg.t_max, track_entropy=cfg.track_entropy)
    outdir.mkdir(parents=True, exist_ok=True)
    series = outdir / "series.csv"
    with open(series, "w") as fh:
        fh.write("t,area,maxA2,entropy,lag_residual\n")
        for k in range(len(traj.times)):
            ent = traj.entropies[k]
            fh.write("%.17g,%.17g,%.17g,%s,%.17g\n" % (
                traj.times[k], traj.areas[k], traj.maxA2[k],
                "" if ent is None else f"{ent:.17g}", traj.lag_residual[k]))
    if cfg.snap_every > 0:
        for k, (t, m) in enumerate(traj.snapshots):
            if k % cfg.snap_every == 0:
                write_snapshot(outdir / f"snapshot_{k:04d}.snap", m, tau, t)
    lines = [
        f"T0_est: {rep.T0_est:.12g}",
        f"type1_constant: {rep.type1_constant:.12g}",
        f"type1_limit: {rep.type1_limit:.12g}",
        f"fit_residual: {rep.fit_residual:.6g}",
        f"is_type1: {rep.is_type1}",
        f"q_est: {' '.join('%.12g' % v for v in rep.q_est)}",
    ]
    if rep.is_type1 and args.rescale:
        try:
            res = type1_rescale(traj, rep, cfg.backend)
            lines.append(f"model_residual: {res.model_residual:.6g}")
            lines.append(f"settled_time: {res.settled_time:.12g}")
            write_snapshot(outdir / "model.snap", res.model, tau, res.settled_time)
        except NotCauchy as exc:
            lines.append(f"rescale: NotCauchy: {exc}")
    report = outdir / "singularity.txt"
    report.write_text("\n".join(lines) + "\n")
    manifest.add("result.T0_est", f"{rep.T0_est:.12g}")
    manifest.add("result.is_type1", rep.is_type1)
    manifest.add("result.steps", len(traj.times) - 1)
    manifest.write("ok")
    print("\n".join(lines))
    return EXIT_OK


def cmd_piecewise(args):
    from .piecewise import run_piecewise

    cfg = _load_config(args)
    outdir = _outdir(args)
    manifest = Manifest(outdir, cfg, [args.snapshot])
    u, tau, _t = read_snapshot(args.snapshot)
    log = run_piecewise(
        u, Lambda=args.Lambda if args.Lambda is not None else cfg.Lambda,
        delta=args.delta if args.delta is not None else cfg.delta,
        backend=cfg.backend, k_max=cfg.k_max, c_min=cfg.c_min,
        k_exact=cfg.K_exact, seed=cfg.seed, t_max=cfg.t_max)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "piecewise.txt").write_text(log.text_report() + "\n")
    manifest.add("result.legs", len(log.legs))
    manifest.add("result.events", len(log.events))
    manifest.add("result.outcome", log.outcome)
    status = "ok" if log.outcome != "error" else "numerical-failure"
    manifest.write(status)
    print(log.text_report())
    if log.outcome == "error":
        return EXIT_NUMERICAL
    if log.outcome == "cap-reached":
        return EXIT_CAP
    return EXIT_OK


def cmd_census(args):
    from .piecewise import entropy_census
    from .lagrangian import OneForm, lagrangian_perturb
    from .variational import random_bandlimited_pair

    cfg = _load_config(args)
    manifest = Manifest(_outdir(args), cfg, list(args.snapshots))
    seeds, taus = [], []
    for p in args.snapshots:
        u, tau, _ = read_snapshot(p)
        seeds.append(u)
        taus.append(tau)
    if args.perturbations > 0:
        rng = np.random.default_rng(np.random.Philox(cfg.seed))
        base, base_tau = seeds[0], taus[0]
        for _ in range(args.perturbations):
            f = random_bandlimited_pair(base.grid, rng).phi[..., 0]
            alpha = OneForm.exact(f, base.grid)
            amp = float(rng.uniform(5e-4, 5e-3))
            seeds.append(lagrangian_perturb(base, alpha, amp, cfg.backend))
            taus.append(base_tau)
    rep = entropy_census(seeds, args.Lambda if args.Lambda is not None
                         else cfg.Lambda, cfg.backend,
                         tol_cluster=cfg.census_tol, tol_crit=cfg.tol_crit,
                         taus=taus)
    out = _outdir(args) / "census.txt"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(rep.text_report() + "\n")
    csv = _outdir(args) / "census.csv"
    with open(csv, "w") as fh:
        fh.write("seed,entropy,area,residual,embedded,converged\n")
        for e in rep.entries:
            fh.write(f"{e.seed_index},{e.entropy:.17g},{e.area:.17g},"
                     f"{e.residual:.17g},{int(e.embedded)},{int(e.converged)}\n")
    manifest.add("result.clusters", len(rep.clusters))
    manifest.write("ok")
    print(rep.text_report())
    return EXIT_OK


def cmd_report(args):
    run_dir = Path(args.run_dir)
    if not run_dir.is_dir():
        print(f"report: {run_dir} is not a directory", file=sys.stderr)
        return EXIT_USAGE
    pieces = [f"consolidated report for {run_dir}"]
    for name in ("manifest.txt", "entropy.txt", "maslov.txt", "singularity.txt",
                 "piecewise.txt", "lojasiewicz.txt", "census.txt"):
        p = run_dir / name
        if p.exists():
            pieces.append(f"--- {name} ---")
            pieces.append(p.read_text().rstrip())
    text = "\n".join(pieces)
    (run_dir / "report.txt").write_text(text + "\n")
    print(text)
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(
        prog="shrinktori",
        description="numerics for Lagrangian self-shrinking tori in R^4",
    )
    ap.add_argument("--config", help="run configuration file (key = value lines)")
    ap.add_argument("--outdir", help="output directory (default: cwd)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("seed", help="generate a seed snapshot")
    ps = p.add_subparsers(dest="kind", required=True)
    pc = ps.add_parser("clifford")
    pc.add_argument("n", type=int)
    pc.add_argument("-o", "--output")
    pp = ps.add_parser("product")
    for name in ("p1", "q1", "p2", "q2", "n"):
        pp.add_argument(name, type=int)
    pp.add_argument("-o", "--output")
    p.set_defaults(func=cmd_seed)

    p = sub.add_parser("entropy", help="entropy of a snapshot")
    p.add_argument("snapshot")
    p.set_defaults(func=cmd_entropy)

    p = sub.add_parser("maslov", help="Maslov pair of a snapshot")
    p.add_argument("snapshot")
    p.set_defaults(func=cmd_maslov)

    p = sub.add_parser("spectrum", help="eigenvalues of the linearization")
    p.add_argument("snapshot")
    p.add_argument("-n", type=int, default=16, help="assembly grid size")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("lojasiewicz", help="gradient-inequality fit")
    p.add_argument("snapshot")
    p.set_defaults(func=cmd_lojasiewicz)

    p = sub.add_parser("flow", help="mean curvature flow to singularity")
    p.add_argument("snapshot")
    p.add_argument("--rescale", action="store_true",
                   help="attempt the type-I rescaling after blow-up")
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("piecewise", help="piecewise Lagrangian MCF")
    p.add_argument("snapshot")
    p.add_argument("--Lambda", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.set_defaults(func=cmd_piecewise)

    p = sub.add_parser("census", help="entropy census over seed snapshots")
    p.add_argument("snapshots", nargs="+")
    p.add_argument("--Lambda", type=float, default=None)
    p.add_argument("--perturbations", type=int, default=0,
                   help="extra random Lagrangian perturbations of the first seed")
    p.set_defaults(func=cmd_census)

    p = sub.add_parser("report", help="consolidate prior outputs of a run directory")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0,) else 0
    try:
        return args.func(args)
    except ToolkitError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        try:
            cfg = _load_config(args)
            manifest = Manifest(_outdir(args), cfg, [])
            manifest.add("error", f"{type(exc).__name__}: {exc}")
            manifest.write("numerical-failure")
        except Exception:
            pass
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
