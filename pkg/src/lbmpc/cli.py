"""Command-line entry points.

Exit status is 0 on success, 2 for configuration or input-format errors and
3 when a pipeline stage fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from . import occupancy as occ
from .errors import ConfigError, LbmpcError, ParseError, SchemaError, StageError
from .log import import_csv
from .sysid import identify, save_models

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3


def _cmd_simulate(args):
    result = harness.run_experiment(args.config, args.out_dir, seed=args.seed, days=args.days)
    print(result.report.to_json())


def _cmd_train(args):
    cfg = harness.load_config(args.config)
    plant = harness._stage("config", harness.build_plant, cfg)
    _, _, weather, schedule = harness._stage("inputs", harness.prepare_inputs, cfg, plant)
    net, report = harness._stage("train-occupancy", harness.train_occupancy, cfg, weather, schedule)
    occ.save_narx(net, args.out)
    print(json.dumps({"mse_train": report.mse_train, "mse_val": report.mse_val, "mse_test": report.mse_test,
                      "epochs_run": report.epochs_run, "stop_reason": report.stop_reason}, indent=1))


def _cmd_identify(args):
    cfg = harness.load_config(args.config)
    plant = harness.build_plant(cfg)
    log = import_csv(args.log)
    if len(log) == 0:
        raise ConfigError(f"{args.log} holds no data rows")
    caps = {z.name: z.capacitance for z in plant.zones}
    missing = [z for z in log.zones if z not in caps]
    if missing:
        raise ConfigError(f"zones {missing} are not in the building description")
    lam = cfg["identification"]["lambda"]
    f0 = cfg["identification"]["f0_scale"]
    entries = []
    for name in log.zones:
        model, rms = harness._stage("identify", identify, log, name, caps[name], lam, f0)
        entries.append(model.to_dict(name, rms, lam))
    save_models(entries, args.out)
    print(json.dumps(entries, indent=1))


def _cmd_report(args):
    report = harness._stage("report", harness.compute_report, import_csv(args.learn), import_csv(args.conv))
    print(report.to_json())


def build_parser():
    parser = argparse.ArgumentParser(prog="lbmpc", description="Learning-based building MPC experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log stage progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="train, identify and run both controllers for the configured period")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out-dir", required=True, type=Path)
    p.add_argument("--seed", type=int)
    p.add_argument("--days", type=int)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("train-occupancy", help="fit the occupancy forecaster on the training window")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("identify", help="identify zone models from a logged run")
    p.add_argument("--log", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--config", type=Path, help="experiment config naming the building (default: reference)")
    p.set_defaults(func=_cmd_identify)

    p = sub.add_parser("report", help="compare a learning-mode log against a conventional-mode log")
    p.add_argument("--learn", required=True, type=Path)
    p.add_argument("--conv", required=True, type=Path)
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except (ConfigError, ParseError, SchemaError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StageError, LbmpcError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
