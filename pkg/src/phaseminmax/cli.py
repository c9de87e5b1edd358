"""Command-line entry point: ``phaseminmax {solve,sweepout,spectrum,diagnose,run,report}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import acf1
from .config import ConfigError, ExperimentConfig, load_config
from .energy import EnergyReport, energy

EXIT_OK, EXIT_CERT, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _global_flags(p: argparse.ArgumentParser, suppress: bool):
    default = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=default, help="experiment config file (key = value)")
    p.add_argument("--out", default=default, help="output directory")
    p.add_argument("--seed", type=int, default=default, help="seed for all randomised steps")
    p.add_argument("--threads", type=int, default=default, help="worker threads (results do not depend on it)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="phaseminmax", description=__doc__)
    _global_flags(parser, suppress=False)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="mountain-pass solve at one eps (or the whole ladder)")
    _global_flags(s, True)
    s.add_argument("--eps", type=float, help="solve only at this eps, from a cold start")
    s.add_argument("--dump-path", action="store_true", help="also write the relaxed path nodes")

    s = sub.add_parser("sweepout", help="write the band-sweepout path")
    _global_flags(s, True)
    s.add_argument("--family", default="band", choices=["band"])
    s.add_argument("--axis", type=int)
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--delta", type=float)
    s.add_argument("--nodes", type=int)

    s = sub.add_parser("spectrum", help="lowest eigenvalues and Morse index of a field")
    _global_flags(s, True)
    s.add_argument("--in", dest="input", required=True, help="ACF1 field (its header supplies eps)")
    s.add_argument("--k", type=int, default=6)

    s = sub.add_parser("diagnose", help="recompute certificates from a run directory")
    _global_flags(s, True)
    s.add_argument("--in", dest="input", required=True)

    s = sub.add_parser("run", help="full pipeline over the eps ladder")
    _global_flags(s, True)

    s = sub.add_parser("report", help="summarise a run directory")
    _global_flags(s, True)
    s.add_argument("--in", dest="input", help="run directory (defaults to --out)")
    return parser


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads must be positive")
        cfg.threads = args.threads
    if args.out is not None:
        cfg.out = args.out
    return cfg


def _out(cfg: ExperimentConfig) -> Path:
    p = Path(cfg.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def cmd_run(args) -> int:
    from .pipeline import report, run_experiment

    cfg = _config(args)
    manifest = run_experiment(cfg, cfg.out)
    print(report(manifest.out), end="")
    return EXIT_OK if manifest.certified else EXIT_CERT


def cmd_solve(args) -> int:
    from .minmax import SaddleError, c_epsilon
    from .pipeline import cold_start_factory, save_path

    cfg = _config(args)
    well = cfg.make_well()
    params = cfg.solver_params()
    out = _out(cfg)
    if args.eps is not None:
        if args.eps <= 0:
            raise ConfigError("--eps must be positive")
        try:
            est, cp, relaxed = c_epsilon([cold_start_factory(cfg, well)(args.eps)], args.eps, params, well)
        except SaddleError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CERT
        path = relaxed[0]
    else:
        from .minmax import continuation_ladder

        rungs = continuation_ladder(cfg.domain, cfg.ladder, params, cold_start_factory(cfg, well), well)
        last = rungs[-1]
        if last.point is None:
            print(f"error: {last.error}", file=sys.stderr)
            return EXIT_CERT
        cp, path, est = last.point, last.path, last.estimate
    acf1.write_field(out / "solution.acf1", cp.u, cp.eps)
    (out / "report.csv").write_text(EnergyReport.csv_header() + "\n" + energy(cp.u, cp.eps, well).csv_row() + "\n")
    if args.dump_path:
        save_path(path, out)
    print(f"eps={cp.eps:g} c_estimate={est:.12g} c/(2sigma)={est / (2 * well.sigma):.10f} "
          f"residual={cp.residual:.3e}")
    return EXIT_OK


def cmd_sweepout(args) -> int:
    from .pipeline import save_path
    from .sweepout import SweepoutSpec, build_sweepout_path

    cfg = _config(args)
    well = cfg.make_well()
    axis = cfg.axis if args.axis is None else args.axis
    if not 0 <= axis < len(cfg.lengths):
        raise ConfigError("--axis out of range")
    center = cfg.sweep_center if args.axis is None else 0.5 * cfg.lengths[axis]
    spec = SweepoutSpec(cfg.domain, axis, center, args.family)
    delta = cfg.delta_for(args.eps) if args.delta is None else args.delta
    nodes = cfg.nodes if args.nodes is None else args.nodes
    try:
        path = build_sweepout_path(spec, args.eps, delta, nodes, cfg.cap_nodes, well)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = _out(cfg)
    save_path(path, out)
    lines = ["t,slice_measure,node_energy"]
    for t, m, e in zip(path.times, path.meta["slice_measure"], path.meta["node_energy"]):
        lines.append("%.17g,%.17g,%.17g" % (t, m, e))
    (out / "sweepout.csv").write_text("\n".join(lines) + "\n")
    meta = path.meta
    print(f"max node energy {max(meta['node_energy']):.12g} <= bound {meta['upper_bound']:.12g} "
          f"(eta={meta['eta']:.3g}, tail={meta['tail']:.3g})")
    return EXIT_OK


def cmd_spectrum(args) -> int:
    from .spectrum import EigenSolverError, lowest_eigenpairs

    cfg = _config(args)
    u, eps = acf1.read_field(args.input)
    if eps <= 0:
        raise ConfigError("field header carries no eps")
    try:
        rep = lowest_eigenpairs(u, eps, k=args.k, seed=cfg.seed, well=cfg.make_well())
    except EigenSolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CERT
    text = rep.csv_header() + "\n" + rep.csv_row() + "\n"
    if args.out is not None:
        (_out(cfg) / "spectrum.csv").write_text(text)
    print(text, end="")
    return EXIT_OK if rep.morse_index <= 1 else EXIT_CERT


def cmd_diagnose(args) -> int:
    from .pipeline import diagnose_directory

    cfg = _config(args)
    lines = diagnose_directory(args.input, cfg)
    target = Path(args.out) if args.out is not None else Path(args.input)
    target.mkdir(parents=True, exist_ok=True)
    (target / "diagnostics.csv").write_text("\n".join(lines) + "\n")
    failed = [ln for ln in lines[1:] if ln.endswith(",0") and ":info:" not in ln]
    for ln in failed:
        print("FAIL " + ln)
    return EXIT_OK if not failed else EXIT_CERT


def cmd_report(args) -> int:
    from .pipeline import report

    folder = args.input or args.out
    if folder is None:
        raise UsageError("report needs --in or --out")
    print(report(folder), end="")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run, "solve": cmd_solve, "sweepout": cmd_sweepout,
    "spectrum": cmd_spectrum, "diagnose": cmd_diagnose, "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, UsageError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, acf1.ACF1Error) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
