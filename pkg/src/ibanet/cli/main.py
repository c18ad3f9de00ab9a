"""`ibanet` command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical divergence.
"""

import argparse
import dataclasses
import logging
import sys
import typing
from collections import abc
from pathlib import Path

import pydantic

from ibanet import fields
from ibanet.cli import ablate, angles, cv, etf_check, grid, synth, train
from ibanet.config import Flat, RunConfig, effective_config, resolve
from ibanet.errors import ConfigError, DataError, DimensionError, NumericalError, ParameterError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


@dataclasses.dataclass(frozen=True)
class Command:
    name: fields.Command
    run: abc.Callable[[RunConfig], str]
    help: str


commands = (
    Command(name="synth", run=synth.main, help="write a seeded synthetic benchmark as CSV"),
    Command(name="train", run=train.main, help="train and evaluate on the first fold"),
    Command(name="cv", run=cv.main, help="cross-validate the configured model"),
    Command(name="grid", run=grid.main, help="grid search over the router temperature and blend weight"),
    Command(name="ablate", run=ablate.main, help="run one of the ablation studies"),
    Command(name="etf-check", run=etf_check.main, help="verify the simplex ETF Gram matrix"),
    Command(name="angles", run=angles.main, help="pairwise angles between ETF prototypes"),
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ibanet", description=__doc__.splitlines()[0])
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in commands:
        sub = subparsers.add_parser(command.name, help=command.help)
        sub.add_argument("--config", type=Path, help="flat section.key=value file")
        sub.add_argument("--profile", action="append", default=[], help="named profile, may repeat")
        sub.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
        sub.add_argument("--seed", type=int, help="seed for data, split, training and ETF")
        sub.add_argument("--jobs", type=int)
        sub.add_argument("--out", type=Path)
        sub.add_argument("--variant", help="iba_net, single_rate:<hz> or fusion:<mode>")
        sub.add_argument("--ablation", choices=typing.get_args(fields.AblationKind))
        sub.add_argument("--classes", type=int)
        sub.add_argument("--dim", type=int)
        sub.add_argument("--print-effective-config", action="store_true")
    return parser


def flags_from(args: argparse.Namespace) -> Flat:
    flags: Flat = {}
    if args.seed is not None:
        for key in ("data.seed", "split.seed", "train.seed", "etf.seed"):
            flags[key] = str(args.seed)
    bindings = {
        "jobs": "output.jobs",
        "out": "output.dir",
        "variant": "train.variant",
        "ablation": "ablation.kind",
        "classes": "etf.classes",
        "dim": "etf.dim",
    }
    for attr, key in bindings.items():
        if (value := getattr(args, attr)) is not None:
            flags[key] = str(value)
    return flags


def main(argv: abc.Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    command = next(c for c in commands if c.name == args.command)
    try:
        config = resolve(
            profiles=args.profile,
            config_file=args.config,
            overrides=args.overrides,
            flags=flags_from(args),
        )
        if args.print_effective_config:
            print(effective_config(config), end="")
        summary = command.run(config)
    except (ConfigError, ParameterError, DimensionError, pydantic.ValidationError) as e:
        logging.error(f"configuration error: {e}")
        return EXIT_CONFIG
    except DataError as e:
        logging.error(f"data error: {e}")
        return EXIT_DATA
    except NumericalError as e:
        logging.error(f"numerical divergence at epoch {e.epoch}, batch {e.batch}: {e}")
        return EXIT_NUMERICAL
    print(summary)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
