"""Command-line entry point: ``saiga simulate | convergence | flux-report``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from .config import RunConfig, parse_config
from .discretization import ConfigError
from .postproc import relative_error
from .splines import DomainError, GeometryError
from .timestepper import SolverError, run_simulation

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
log = logging.getLogger("saiga")


def _out_dir(cfg: RunConfig, args) -> Path:
    return Path(args.output_dir) if args.output_dir else cfg.base_dir / cfg.output.directory


def cmd_simulate(cfg: RunConfig, args) -> int:
    res = run_simulation(cfg, _out_dir(cfg, args), threads=args.threads)
    s = res.stats
    print(f"DOFs {s.n_dofs} (free {s.n_free}), elements {s.n_elements}, "
          f"l_min {s.l_min:.4g} m, l_e {s.l_e:.4g}")
    for name in res.probes:
        if len(res.probes[name]):
            t, v = res.probe_peak(name)
            print(f"probe {name}: peak T_hat {v:.6g} C at t = {t:.4g} s")
    for t, i_net, i_ana, ratio in res.metrics:
        print(f"t = {t:.4g} s: I_net {i_net:.6g}  I_ana {i_ana:.6g}  ratio "
              + ("n/a" if ratio is None else f"{100 * ratio:.3f} %"))
    tm = res.timings
    print(f"wall {res.wall_time:.2f} s (assembly {tm['assembly']:.2f}, flux {tm['flux']:.2f}, "
          f"solve {tm['solve']:.2f}, output {tm['output']:.2f})")
    return EXIT_OK


def convergence_study(cfg: RunConfig, levels, probe: str | None = None, time: float | None = None,
                      threads: int | None = None):
    """Correction field at one probe for each ``l_e``; the finest level is the reference.

    Returns rows ``(l_e_requested, l_e, n_dofs, T_hat, e_r)`` in input order.
    """
    levels = [float(v) for v in levels]
    if len(levels) < 2:
        raise ConfigError("a convergence study needs at least two levels")
    if not cfg.output.probes:
        raise ConfigError("a convergence study needs a probe in [output] probes")
    probe = probe or next(iter(cfg.output.probes))
    if probe not in cfg.output.probes:
        raise ConfigError(f"unknown probe {probe!r}")
    time = time if time is not None else (cfg.output.error_time or cfg.stepping.t_end)
    cfg.step_index(time, "error time")
    runs = []
    for le in levels:
        res = run_simulation(cfg, l_e=le, threads=threads, t_end=time, profile_times=(), write=False)
        rows = res.probes[probe]
        k = int(abs(rows[:, 0] - time).argmin())
        runs.append((le, res.stats.l_e, res.stats.n_dofs, float(rows[k, 2])))
        log.info("level l_e=%g: %d DOFs, T_hat=%.6g", le, res.stats.n_dofs, rows[k, 2])
    ref = runs[min(range(len(runs)), key=lambda i: runs[i][0])][3]
    return [r + (relative_error(r[3], ref),) for r in runs]


def cmd_convergence(cfg: RunConfig, args) -> int:
    rows = convergence_study(cfg, args.levels, args.probe, args.time, args.threads)
    odir = _out_dir(cfg, args)
    odir.mkdir(parents=True, exist_ok=True)
    print(f"{'l_e':>8} {'DOFs':>8} {'T_hat [C]':>14} {'e_r':>10}")
    for _, le, n, v, e in rows:
        print(f"{le:8.3f} {n:8d} {v:14.6f} {e:10.4%}")
    with open(odir / "convergence.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["l_e_requested", "l_e", "n_dofs", "T_hat_C", "e_r"])
        for r in rows:
            w.writerow([repr(r[0]), repr(r[1]), r[2], repr(r[3]), repr(r[4])])
    return EXIT_OK


def cmd_flux_report(cfg: RunConfig, args) -> int:
    times = sorted(set(args.times)) if args.times else list(cfg.output.profile_times)
    if not times:
        raise ConfigError("no profile times given (--times or [output] profile_times)")
    for t in times:
        cfg.step_index(t, "report time")
    res = run_simulation(cfg, _out_dir(cfg, args), threads=args.threads, t_end=max(times) or cfg.step,
                         profile_times=times)
    print(f"{'t [s]':>10} {'I_net':>14} {'I_ana':>14} {'ratio':>10}")
    for t, i_net, i_ana, ratio in res.metrics:
        print(f"{t:10.4g} {i_net:14.6g} {i_ana:14.6g} "
              + (f"{'-':>10}" if ratio is None else f"{ratio:10.4%}"))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="saiga", description="Semi-analytical thermal model of laser scans on NURBS parts.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="configuration file, or a bundled case name "
                                       "(single_source, contour_scan)")
    common.add_argument("--output-dir", help="override the configured output directory")
    common.add_argument("--threads", type=int, default=None, help="worker threads for analytic-field sums")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="run a configured case")
    p = sub.add_parser("convergence", parents=[common], help="probe error over a ladder of mesh levels")
    p.add_argument("--levels", type=float, nargs="+", required=True, help="l_e values; the smallest is the reference")
    p.add_argument("--probe", help="probe name (default: the first configured probe)")
    p.add_argument("--time", type=float, help="evaluation time (default: output.error_time)")
    p = sub.add_parser("flux-report", parents=[common], help="boundary heat-loss profiles and metrics")
    p.add_argument("--times", type=float, nargs="+", help="report times (default: output.profile_times)")
    return ap


COMMANDS = {"simulate": cmd_simulate, "convergence": cmd_convergence, "flux-report": cmd_flux_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = parse_config(args.config)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, DomainError, GeometryError, FloatingPointError, ArithmeticError,
            ValueError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
