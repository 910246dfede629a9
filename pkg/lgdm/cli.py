"""Command line interface

    lgdm run --problem sen2d --divisions 80 80 --out results/
    lgdm bench --problem sen2d --repeats 3 --backends loop,batched --out bench/
"""
import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .assembly import BACKENDS
from .benchmark import PhaseTimer, run_benchmark
from .config import echo_config, load_config
from .exceptions import LGDMError
from .output import write_results
from .problems import PROBLEMS, describe
from .solver import run_simulation

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(levelname)s: %(name)s: %(message)s"


def _backend_list(text: str):
    backends = [b.strip() for b in text.split(",") if b.strip()]
    unknown = [b for b in backends if b not in BACKENDS]
    if unknown or not backends:
        raise argparse.ArgumentTypeError(
            f"invalid backend list '{text}', choose from {', '.join(BACKENDS)}"
        )
    return backends


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lgdm", description="Localizing gradient damage fracture simulations"
    )
    parser.add_argument(
        "--version", action="version", version="%(prog)s {}".format(__version__)
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument(
        "-v", "--verbose", action="store_true", help="log every Newton iteration"
    )
    verbosity.add_argument("-q", "--quiet", action="store_true", help="log warnings only")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--problem", choices=PROBLEMS, help="benchmark problem (required without --config)"
    )
    common.add_argument(
        "--divisions", type=int, nargs="+", metavar="N", help="elements per axis"
    )
    common.add_argument("--config", type=Path, help="configuration file")
    common.add_argument(
        "--out", type=Path, default=Path("."), help="output directory (default: current)"
    )

    sub = parser.add_subparsers(dest="command", metavar="command")
    run = sub.add_parser("run", parents=[common], help="solve a problem and write results")
    run.add_argument("--backend", choices=BACKENDS, help="assembly backend")
    run.add_argument(
        "--snapshot-interval", type=int, metavar="STEPS", help="write fields every n steps"
    )
    run.add_argument(
        "--workers", type=int, help="worker processes of the loop backend (default: 1)"
    )

    bench = sub.add_parser("bench", parents=[common], help="time assembly backends")
    bench.add_argument("--repeats", type=int, default=1, help="runs per backend (default: 1)")
    bench.add_argument(
        "--backends",
        type=_backend_list,
        default=list(BACKENDS),
        help="comma separated backends, the first is the speedup reference "
        "(default: loop,batched)",
    )
    return parser


def _resolve(args, **extra):
    overrides = {
        "Problem/problem": args.problem,
        "Geometry/divisions": args.divisions,
        **extra,
    }
    return load_config(args.config, overrides)


def run_command(args) -> None:
    spec, newton, output = _resolve(
        args,
        **{
            "Solver/backend": args.backend,
            "Solver/workers": args.workers,
            "Output/snapshot_interval": args.snapshot_interval,
        },
    )
    logger.info(describe(spec))
    timer = PhaseTimer()
    result = run_simulation(
        spec, newton, snapshot_interval=output.snapshot_interval, timer=timer
    )
    write_results(
        result,
        args.out,
        config_ini=echo_config(spec, newton, output),
        timer=timer,
        write_vtk=output.write_vtk,
    )
    logger.info(
        f"{result}, maximum damage {float(np.max(result.state.D)):.4f}"
    )


def bench_command(args) -> None:
    spec, newton, output = _resolve(args)
    logger.info(describe(spec))
    report = run_benchmark(spec, args.backends, args.repeats, newton)
    args.out.mkdir(parents=True, exist_ok=True)
    echo_config(spec, newton, output).write(args.out / "config.ini")
    report.to_ini().write(args.out / "benchmark.ini")
    print(report)


def cli_main(argv=None) -> int:
    """Run the command line interface

    Args:
        argv (list of str, optional): arguments, defaults to `sys.argv[1:]`

    Returns:
        int: exit code, 0 on success, 1 on errors, 2 on usage errors
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return err.code
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(format=LOG_FORMAT, level=level)

    try:
        if args.command == "run":
            run_command(args)
        else:
            bench_command(args)
    except (LGDMError, OSError) as err:
        print(f"lgdm {args.command}: {err}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
