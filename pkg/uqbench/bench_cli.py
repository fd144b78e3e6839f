"""Command-line surface for the benchmark lab.

Flow:
1. Parse the subcommand and shared flags
2. Resolve the config: defaults <- --config file <- flag shortcuts <- --set overrides
3. Run the command from the registry and log its summary
4. Map failures to exit codes (1 usage, 2 data, 3 numeric)
"""
import argparse
import json
import logging
import sys
from typing import Dict, List, Optional

from .bench import COMMANDS, configure_logging
from .prompts.prompts import CLI_DESCRIPTION, COMMAND_HELP, TABLE_CHOICES
from .tools.utils.bench_config import TRACKS, BenchConfig
from .tools.utils.errors import EXIT_OK, EXIT_USAGE, BenchError, ConfigurationError, exit_code_for

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uqbench", description=CLI_DESCRIPTION,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in COMMAND_HELP.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="JSON config file (full or partial)")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="Dotted config override, repeatable")
        p.add_argument("--output", help="Output root directory")
        p.add_argument("--seed", type=int, help="Root seed")
        p.add_argument("--workers", type=int, help="Parallel jobs")
        p.add_argument("--force", action="store_true", help="Recompute even when outputs are cached")
        p.add_argument("--log-level", help="Logging level name")
        if name == "generate":
            p.add_argument("--track", choices=TRACKS, help="Which benchmark data to write")
        if name == "train-eval":
            p.add_argument("--table", choices=("2", "4"), default="2")
        if name == "reproduce":
            p.add_argument("--table", choices=TABLE_CHOICES, required=True)
    return parser


def parse_overrides(pairs: List[str]) -> Dict[str, str]:
    overrides = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key.strip():
            raise ConfigurationError(f"Override must look like key.path=value, got '{pair}'")
        overrides[key.strip()] = value.strip()
    return overrides


def resolve_config(args: argparse.Namespace) -> BenchConfig:
    cfg = BenchConfig.from_json(args.config) if args.config else BenchConfig()
    shortcuts = {"output_dir": args.output, "seed": args.seed, "workers": args.workers,
                 "track": getattr(args, "track", None)}
    cfg = cfg.with_overrides({k: v for k, v in shortcuts.items() if v is not None})
    return cfg.with_overrides(parse_overrides(args.overrides)).validate()


def run(argv: Optional[List[str]] = None) -> int:
    """Run one command; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    configure_logging(args.log_level)
    try:
        cfg = resolve_config(args)
        kwargs = {"force": args.force}
        if args.command in ("train-eval", "reproduce"):
            kwargs["table"] = args.table
        logger.info(f"Running {args.command} (config {cfg.fingerprint()}) -> {cfg.output_dir}")
        summary = COMMANDS[args.command](cfg, **kwargs)
    except (BenchError, OSError, ValueError, ArithmeticError) as e:
        code = exit_code_for(e)
        logger.error(f"❌ {args.command} failed: {e}")
        return code
    logger.info(f"✅ {summary['response']}")
    print(json.dumps({k: v for k, v in summary.items() if k != "artifacts"}, indent=2, default=str))
    return EXIT_OK


def main() -> None:
    sys.exit(run())


__all__ = ['build_parser', 'parse_overrides', 'resolve_config', 'run', 'main']
