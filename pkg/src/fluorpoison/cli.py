"""Command-line entry point: ``fluorpoison <stage> [--config FILE] [--field VALUE ...]``."""

import argparse
import json
import logging
import sys
from dataclasses import fields

import yaml

from fluorpoison.config import PipelineConfig
from fluorpoison.data import convert_native_annotations
from fluorpoison.errors import FluorPoisonError, InvalidSpecError
from fluorpoison.pipeline import STAGE_FUNCS, STAGES

EXIT_IO = 5


def _add_config_flags(parser):
    parser.add_argument("--config", help="YAML config file; flags override its values")
    group = parser.add_argument_group("config overrides (values parsed as YAML)")
    for f in fields(PipelineConfig):
        group.add_argument("--" + f.name.replace("_", "-"), dest=f"cfg_{f.name}", metavar="VALUE")


def build_config(args):
    data = {}
    if args.config:
        with open(args.config) as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise InvalidSpecError(f"{args.config}: config must be a mapping")
    for f in fields(PipelineConfig):
        raw = getattr(args, f"cfg_{f.name}", None)
        if raw is None:
            continue
        value = raw if f.type is str else yaml.safe_load(raw)
        data[f.name] = value
    return PipelineConfig.from_dict(data)


def make_parser():
    parser = argparse.ArgumentParser(prog="fluorpoison", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for stage in STAGES:
        _add_config_flags(sub.add_parser(stage, help=f"run the {stage} stage"))
    _add_config_flags(sub.add_parser("config", help="print the effective configuration"))
    ingest = sub.add_parser("ingest", help="convert GTSRB/TSRD-style annotations to annotations.csv")
    ingest.add_argument("native_csv")
    ingest.add_argument("output_csv")
    ingest.add_argument("--delimiter", default=";")
    ingest.add_argument("--image-prefix", default="")
    return parser


def main(argv=None):
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "ingest":
            n = convert_native_annotations(args.native_csv, args.output_csv, delimiter=args.delimiter,
                                           image_prefix=args.image_prefix)
            print(json.dumps({"rows": n}))
            return 0
        cfg = build_config(args)
        if args.command == "config":
            sys.stdout.write(cfg.to_yaml())
            return 0
        result = STAGE_FUNCS[args.command](cfg)
        print(json.dumps(result, sort_keys=True))
        return 0
    except FluorPoisonError as exc:
        print(f"error [{exc.category}]: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error [io]: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
