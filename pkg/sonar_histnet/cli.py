"""Command-line entry point: ``sonar-histnet <command> [--config file] [--key value ...]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from pydantic import ValidationError

from . import __version__
from .config import STAGES, RunConfig, load_config, worker_count
from .errors import ConfigError, MissingStageError, SonarHistnetError
from .types import FeatureKind, ModelKind

_log = logging.getLogger("sonar_histnet")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

COMMANDS = STAGES


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    """One subcommand per stage, each taking the same options; ``--key value`` overrides pass through."""
    parser = _Parser(prog="sonar-histnet", description="Passive-sonar vessel classification pipeline.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} stage")
        p.add_argument("--config", type=Path, help="JSON config file")
        p.add_argument("--model", choices=[m.value for m in ModelKind])
        p.add_argument("--feature", choices=[f.value for f in FeatureKind])
        p.add_argument("--out", help="output directory (overrides output_dir)")
        p.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    return parser


def parse_overrides(extra: Sequence[str]) -> Dict[str, str]:
    """``["--hp.lr", "0.01", "--data_dir=x"]`` -> ``{"hp.lr": "0.01", "data_dir": "x"}``."""
    out: Dict[str, str] = {}
    i = 0
    while i < len(extra):
        token = extra[i]
        if not token.startswith("--") or len(token) == 2:
            raise UsageError(f"expected --key value, got '{token}'")
        key = token[2:]
        if "=" in key:
            key, value = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise UsageError(f"missing value for '--{key}'")
            value = extra[i + 1]
            i += 2
        out[key] = value
    return out


def resolve_config(args: argparse.Namespace, extra: Sequence[str]) -> RunConfig:
    overrides: Dict[str, object] = dict(parse_overrides(extra))
    if args.model:
        overrides["models"] = [args.model]
    if args.feature:
        overrides["features"] = [args.feature]
    if args.out:
        overrides["output_dir"] = args.out
    return load_config(args.config, overrides, stage=args.command)


def cmd_synth(cfg: RunConfig, workers: int) -> int:
    from .synth import generate, sanity_probe

    manifest = generate(cfg.synth, Path(cfg.data_dir), workers)
    if not cfg.synth.probe:
        return EXIT_OK
    probe = sanity_probe(manifest, cfg.synth, cfg.feature.segment_s, workers)
    probe.save(Path(cfg.data_dir) / "probe.json")
    return EXIT_OK if probe.passed else EXIT_RUNTIME


def cmd_ingest(cfg: RunConfig, workers: int) -> int:
    from .pipeline import ingest

    ingest(cfg, workers)
    return EXIT_OK


def cmd_extract(cfg: RunConfig, workers: int) -> int:
    from .pipeline import extract_features

    extract_features(cfg, cfg.features, workers)
    return EXIT_OK


def cmd_train(cfg: RunConfig, workers: int) -> int:
    from .pipeline import train_all

    summaries = train_all(cfg, cfg.models, cfg.features, workers)
    return EXIT_OK if all(not s.failed for s in summaries) else EXIT_RUNTIME


def cmd_evaluate(cfg: RunConfig, workers: int) -> int:
    from .pipeline import evaluate_all

    evaluate_all(cfg, cfg.models, cfg.features, workers)
    return EXIT_OK


def cmd_report(cfg: RunConfig, workers: int) -> int:
    from .pipeline import report

    report(cfg)
    return EXIT_OK


HANDLERS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "extract": cmd_extract,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def main(argv: Optional[List[str]] = None) -> int:
    """
    Run one pipeline stage.

    Args:
        argv: arguments without the program name; defaults to ``sys.argv[1:]``

    Returns:
        ``EXIT_OK``, ``EXIT_USAGE`` for usage and config errors, or
        ``EXIT_RUNTIME`` for missing stages and runtime failures
    """
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
        logging.basicConfig(level=args.log_level, format="%(asctime)s %(levelname)s %(message)s")
        cfg = resolve_config(args, extra)
        workers = worker_count()
    except UsageError as e:
        print(f"sonar-histnet: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ValidationError) as e:
        print(f"sonar-histnet: invalid configuration: {e}", file=sys.stderr)
        return EXIT_USAGE
    except MissingStageError as e:
        print(f"sonar-histnet: {e}", file=sys.stderr)
        return EXIT_RUNTIME

    _log.debug("sonar-histnet: resolved config %s", json.dumps(cfg.model_dump(mode="json")))
    try:
        return HANDLERS[args.command](cfg, workers)
    except SonarHistnetError as e:
        print(f"sonar-histnet: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, ValueError) as e:
        print(f"sonar-histnet: {args.command} failed: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
