"""Command-line entry point.

``patchsir COMMAND CONFIG [flags]`` with COMMAND one of ``abm``, ``limit``,
``fk-check``, ``mckv``, ``coupling`` or ``convergence``.  CONFIG is a JSON
document (see ``patchsir preset --help`` for ready-made ones).  Every file
written to ``--out-dir`` is listed in its ``manifest.json``.

Exit codes: 0 success, 2 configuration error, 3 solver error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__, presets
from .config import load_config, to_document
from .errors import ConfigError, SolverError
from .io import Manifest, write_csv

log = logging.getLogger("patchsir")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4

PRESETS = {
    "markov-sir": presets.markov_sir,
    "two-by-two": presets.two_by_two,
    "acceptance-2x2": presets.acceptance_2x2,
}

TRAJ_HEADER = ("t", "k", "l", "S", "I", "R", "B", "Fbar", "Gammabar")
LIMIT_HEADER = ("t", "k", "l", "Sbar", "Fbar", "Ibar", "Rbar", "Bbar", "Gammabar")


def _sizes(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad size list {text!r}") from None


def build_parser():
    p = argparse.ArgumentParser(prog="patchsir", description="Patch SIR simulation, limit equations and checks.")
    p.add_argument("--version", action="version", version=f"patchsir {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="JSON config document")
    common.add_argument("--seed", type=int, help="master seed (default: config seed)")
    common.add_argument("--out-dir", default="out", help="output directory (created if missing)")
    common.add_argument("--grid-step", type=float, help="limit solver step (default: config grid_step)")
    common.add_argument("--horizon", type=float, help="time horizon (default: config horizon)")
    common.add_argument("--plots", action="store_true", help="also write SVG plots")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker processes")
    common.add_argument("-v", "--verbose", action="store_true")

    a = sub.add_parser("abm", parents=[common], help="one stochastic realisation")
    a.add_argument("--N", type=int, help="population size (default: config N)")
    a.add_argument("--scheme", choices=("exact", "euler"), default="exact")
    a.add_argument("--dt", type=float, default=0.01, help="step of the euler scheme")
    a.add_argument("--homogeneous", action="store_true", help="use the single-population simulator")

    sub.add_parser("limit", parents=[common], help="solve the limit system and check its bounds")

    f = sub.add_parser("fk-check", parents=[common], help="backward-equation and path-representation checks")
    f.add_argument("--mc-paths", type=int, default=100_000)
    f.add_argument("--times", default="2,5,10", help="checkpoints")

    m = sub.add_parser("mckv", parents=[common], help="fixed point of the mean-field map")
    m.add_argument("--tol", type=float, default=1e-10)
    m.add_argument("--max-iter", type=int, default=200)

    for name, hlp in (("coupling", "coupled N-system / limit particles"), ("convergence", "error against N")):
        c = sub.add_parser(name, parents=[common], help=hlp)
        c.add_argument("--sizes", type=_sizes, default=[250, 1000, 4000, 16000])
        c.add_argument("--replicas", type=int, default=20)

    pr = sub.add_parser("preset", help="write a ready-made config document")
    pr.add_argument("name", choices=sorted(PRESETS))
    pr.add_argument("path", help="output file")
    return p


def _load(args):
    cfg = load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.grid_step is not None:
        changes["grid_step"] = args.grid_step
    if args.horizon is not None:
        changes["horizon"] = args.horizon
    if getattr(args, "N", None) is not None:
        changes["N"] = args.N
    return cfg.replace(**changes) if changes else cfg


def _plot(fn, manifest, csv_name, svg_name):
    try:
        fn(os.path.join(manifest.out_dir, csv_name), manifest.path(svg_name))
    except ImportError:
        log.warning("matplotlib not installed; skipping %s", svg_name)
        manifest.outputs.remove(svg_name)


def cmd_abm(cfg, args, man):
    from .abm import simulate, simulate_homogeneous
    if args.homogeneous:
        traj = simulate_homogeneous(cfg, cfg.seed)
    else:
        traj = simulate(cfg, cfg.seed, scheme=args.scheme, dt=args.dt if args.scheme == "euler" else None)
    write_csv(man.path("trajectory.csv"), TRAJ_HEADER, traj.rows())
    man.details.update(events=traj.meta["n_events"], candidates=traj.meta["n_candidates"],
                       wall_time=traj.meta["wall_time"], scheme=traj.meta["scheme"], N=traj.N)
    if args.plots:
        from .harness import plot_compartments
        _plot(plot_compartments, man, "trajectory.csv", "trajectory.svg")


def cmd_limit(cfg, args, man):
    from .limit import check_bounds, solve_multipatch
    sol = solve_multipatch(cfg)
    write_csv(man.path("limit.csv"), LIMIT_HEADER, sol.rows())
    rep = check_bounds(sol, cfg)
    with open(man.path("bounds.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(rep.lines()) + "\n")
    man.details.update(bounds_ok=bool(rep.ok), sweeps=sol.meta.get("max_sweeps"), grid_step=sol.h)
    if args.plots:
        from .harness import plot_compartments
        _plot(plot_compartments, man, "limit.csv", "limit.svg")


def cmd_fk(cfg, args, man):
    from .feynman_kac import adjoint_gap, duality_residual, s_representation_check, solve_backward
    from .limit import solve_multipatch
    sol = solve_multipatch(cfg)
    times = [float(x) for x in args.times.split(",") if x.strip()]
    rows = []
    for k in range(cfg.K):
        for l in range(cfg.L):
            b = solve_backward(sol.t, sol.Gamma[:, k], cfg.mobility.schedule(k, "S"), float(sol.t[-1]), l)
            rows.append((k + 1, l + 1, float(sol.t[-1]), duality_residual(sol.S[:, k], b, sol.t),
                         adjoint_gap(sol, k, b)))
    write_csv(man.path("duality.csv"), ("k", "l", "t", "residual", "adjoint_gap"), rows)
    rep = s_representation_check(sol, cfg, args.mc_paths, np.random.default_rng(cfg.seed), times)
    write_csv(man.path("fk_residuals.csv"),
              ("k", "l", "t", "deterministic", "mc_estimate", "stderr", "zscore"), (r.row() for r in rep))
    man.details.update(max_duality_residual=max(r[3] for r in rows),
                       max_abs_zscore=max(abs(r.zscore) for r in rep), mc_paths=args.mc_paths)


def cmd_mckv(cfg, args, man):
    from .limit import solve_multipatch
    from .mckv import fixed_point_m
    fp = fixed_point_m(cfg, tol=args.tol, max_iter=args.max_iter)
    sol = solve_multipatch(cfg)
    K, L = cfg.K, cfg.L

    def rows():
        for i, t in enumerate(fp.t):
            for k in range(K):
                for l in range(L):
                    yield (t, k + 1, l + 1, fp.m[i, k, l], sol.F[i, k, l], fp.m[i, k, l] - sol.F[i, k, l])
    write_csv(man.path("fixed_point.csv"), ("t", "k", "l", "m", "Fbar", "difference"), rows())
    man.details.update(iterations=fp.iterations, last_update=fp.residual,
                       sup_difference=float(np.max(np.abs(fp.m - sol.F))))


def cmd_coupling(cfg, args, man):
    from .harness import coupling_study, plot_coupling
    rep = coupling_study(cfg, args.sizes, args.replicas, master_seed=cfg.seed, threads=args.threads)
    write_csv(man.path("coupling.csv"),
              ("N", "k", "replica", "mean_sup_mismatch", "tau_mismatch_fraction"), rep.rows())
    with open(man.path("coupling_summary.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(rep.summary_lines()) + "\n")
    man.details.update(mean_mismatch=rep.mean.tolist())
    if args.plots:
        _plot(plot_coupling, man, "coupling.csv", "coupling.svg")


def cmd_convergence(cfg, args, man):
    from .harness import convergence_study, plot_convergence
    rep = convergence_study(cfg, args.sizes, args.replicas, master_seed=cfg.seed, threads=args.threads)
    write_csv(man.path("convergence.csv"), ("N", "replica", "error", "min_Bbar", "floor_violation"), rep.rows())
    with open(man.path("convergence_summary.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(rep.summary_lines()) + "\n")
    man.details.update(slope=rep.slope, slope_ci=list(rep.slope_ci), mean_error=rep.mean.tolist())
    if args.plots:
        _plot(plot_convergence, man, "convergence.csv", "convergence.svg")


COMMANDS = {"abm": cmd_abm, "limit": cmd_limit, "fk-check": cmd_fk, "mckv": cmd_mckv,
            "coupling": cmd_coupling, "convergence": cmd_convergence}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "preset":
            with open(args.path, "w", encoding="utf-8") as fh:
                json.dump(to_document(PRESETS[args.name]()), fh, indent=2)
                fh.write("\n")
            return EXIT_OK
        cfg = _load(args)
        os.makedirs(args.out_dir, exist_ok=True)
        man = Manifest(args.command, cfg.digest, int(cfg.seed), args.out_dir)
        t0 = time.perf_counter()
        COMMANDS[args.command](cfg, args, man)
        man.details["elapsed"] = time.perf_counter() - t0
        man.write()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
