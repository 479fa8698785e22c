"""Command-line entry point.

Exit codes: 0 success, 1 usage/configuration error, 2 runtime error.
Failures print exactly one `error: ...` line to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys

from ..systems import SimulationError
from ..training import TrainingDiverged
from . import config as config_mod
from . import formats, pipeline


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2) with a usage dump
        raise _UsageError(message)


def _add_config_flags(sub):
    sub.add_argument("--preset", help="named experiment preset")
    sub.add_argument("--config", help="JSON config file merged over the preset")
    sub.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="dotted config override, e.g. --set train.epochs=300",
    )
    sub.add_argument(
        "--print-config",
        action="store_true",
        help="print the fully resolved config and exit",
    )


def _add_x0_flags(sub):
    sub.add_argument("--x0", help="comma-separated initial condition")
    sub.add_argument("--x0-from", dest="x0_from", help="trajectory CSV to take x0 from")
    sub.add_argument(
        "--x0-row", dest="x0_row", type=int, default=0, help="row of --x0-from (default 0)"
    )


def _parse_x0(args):
    if args.x0 is not None and args.x0_from is not None:
        raise _UsageError("--x0 and --x0-from are mutually exclusive")
    if args.x0 is not None:
        try:
            return [float(v) for v in args.x0.split(",")]
        except ValueError:
            raise _UsageError(f"--x0 must be comma-separated numbers, got {args.x0!r}") from None
    if args.x0_from is not None:
        traj, _meta = formats.read_trajectory(args.x0_from)
        if not -traj.states.shape[0] <= args.x0_row < traj.states.shape[0]:
            raise ValueError(
                f"--x0-row {args.x0_row} out of range for {traj.states.shape[0]} rows"
            )
        return traj.states[args.x0_row]
    return None


def _resolved(args) -> config_mod.ExperimentConfig:
    return config_mod.resolve(args.preset, args.config, args.overrides)


def _maybe_print_config(args, cfg) -> bool:
    if args.print_config:
        print(json.dumps(cfg.as_dict(), sort_keys=True, indent=2))
        return True
    return False


def _report(paths: dict) -> int:
    for path in paths.values():
        print(f"wrote {path}")
    return 0


def cmd_simulate(args) -> int:
    cfg = _resolved(args)
    if _maybe_print_config(args, cfg):
        return 0
    return _report(pipeline.run_simulate(cfg, args.out or cfg.out_dir))


def cmd_train(args) -> int:
    cfg = _resolved(args)
    if _maybe_print_config(args, cfg):
        return 0
    return _report(pipeline.run_train(cfg, args.data, args.out or cfg.out_dir))


def cmd_predict(args) -> int:
    return _report(
        pipeline.run_predict(
            args.checkpoint,
            args.steps,
            args.out,
            x0=_parse_x0(args),
            dt=args.dt,
            t0=args.t0,
            project=not args.no_project,
        )
    )


def cmd_baseline(args) -> int:
    return _report(
        pipeline.run_baseline(
            args.method,
            args.data,
            args.steps,
            args.out,
            x0=_parse_x0(args),
            degree=args.degree,
            dt=args.dt,
        )
    )


def cmd_evaluate(args) -> int:
    system = None
    if args.preset or args.config or args.overrides:
        cfg = _resolved(args)
        if _maybe_print_config(args, cfg):
            return 0
        system = cfg.system
    return _report(pipeline.run_evaluate(args.predicted, args.truth, args.out, system=system))


def cmd_discover(args) -> int:
    return _report(pipeline.run_discover(args.checkpoint, args.data, args.out, tol=args.tol))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hnko", description="Koopman autoencoder experiment pipeline")
    subs = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = subs.add_parser("simulate", help="integrate a system; write truth + noisy training data")
    _add_config_flags(sim)
    sim.add_argument("--out", help="output directory (default: config out_dir)")
    sim.set_defaults(handler=cmd_simulate)

    tr = subs.add_parser("train", help="train a model on a trajectory file")
    _add_config_flags(tr)
    tr.add_argument("--data", required=True, help="training trajectory CSV")
    tr.add_argument("--out", help="output directory (default: config out_dir)")
    tr.set_defaults(handler=cmd_train)

    pr = subs.add_parser("predict", help="roll a trained model forward")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--steps", required=True, type=int)
    pr.add_argument("--dt", type=float, default=None, help="default: checkpoint's dt")
    pr.add_argument("--t0", type=float, default=0.0)
    pr.add_argument(
        "--no-project",
        action="store_true",
        help="roll the bare decode(K^k encode(x0)) without projecting the latent "
        "path onto the learned sphere/hyperplane constraint set",
    )
    _add_x0_flags(pr)
    pr.add_argument("--out", default=".")
    pr.set_defaults(handler=cmd_predict)

    bl = subs.add_parser("baseline", help="fit + roll out a linear least-squares baseline")
    bl.add_argument("--method", required=True, choices=["dmd", "edmd"])
    bl.add_argument("--data", required=True)
    bl.add_argument("--steps", required=True, type=int)
    bl.add_argument("--degree", type=int, default=2, help="dictionary degree for edmd")
    bl.add_argument("--dt", type=float, default=None)
    _add_x0_flags(bl)
    bl.add_argument("--out", default=".")
    bl.set_defaults(handler=cmd_baseline)

    ev = subs.add_parser("evaluate", help="compare a prediction against a reference")
    ev.add_argument("--predicted", required=True)
    ev.add_argument("--truth", required=True)
    _add_config_flags(ev)
    ev.add_argument("--out", default=".")
    ev.set_defaults(handler=cmd_evaluate)

    di = subs.add_parser("discover", help="extract conserved-quantity candidates")
    di.add_argument("--checkpoint", required=True)
    di.add_argument("--data", required=True)
    di.add_argument("--tol", type=float, default=1e-3)
    di.add_argument("--out", default=".")
    di.set_defaults(handler=cmd_discover)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else 1
    try:
        return args.handler(args)
    except _UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return 1
    except config_mod.ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 1
    except formats.FormatError as exc:
        print(f"error: format: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc}", file=sys.stderr)
        return 2
    except TrainingDiverged as exc:
        print(f"error: training: {exc}", file=sys.stderr)
        return 2
    except SimulationError as exc:
        print(f"error: simulation: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
