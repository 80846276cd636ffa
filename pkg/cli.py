"""
HybridNet command line
Entry point wiring logging, configuration and the gen/train/eval/predict
commands, plus replay of recorded runs.
"""

import argparse
import asyncio
import logging
import sys
from argparse import Namespace
from typing import List, Optional

from artifacts import RunManifest
from commands import data_commands, model_commands
from config import Config
from errors import ERROR_CODES, HybridNetError, MetricFormatter, get_user_error_message

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

logger = logging.getLogger(__name__)


def setup_logging(level: str, log_file: Optional[str] = None):
    """Configure root logging once: stdout plus an optional log file."""
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stdout)]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(level=getattr(logging, level.upper(), logging.INFO), format=LOG_FORMAT, handlers=handlers, force=True)

    # Shorten long float reprs in every handler's output
    formatter = MetricFormatter(LOG_FORMAT)
    for handler in logging.getLogger().handlers:
        handler.setFormatter(formatter)


async def run_replay(args: Namespace):
    """Re-run a recorded command with the exact flag values it resolved."""
    manifest = RunManifest.load(args.manifest)
    replayed = build_parser().parse_args(manifest.argv)
    for key, value in manifest.flags.items():
        setattr(replayed, key, value)
    replayed.argv = list(manifest.argv)
    logger.info(f"🔁 Replaying '{manifest.command}' from {args.manifest}")
    await replayed.handler(replayed)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hybridnet", description="Multi-view graph learning for placement congestion prediction")
    parser.add_argument("--seed", type=int, default=Config.SEED, help="random seed for generation and training")
    parser.add_argument("--out-dir", default=Config.OUT_DIR, help="root directory for all outputs")
    parser.add_argument("--jobs", type=int, default=Config.JOBS, help="worker processes for graph construction")
    parser.add_argument("--log-level", default=Config.LOG_LEVEL, help="DEBUG, INFO, WARNING, ERROR or CRITICAL")
    parser.add_argument("--log-file", default=Config.LOG_FILE, help="log file path (empty disables file logging)")

    subparsers = parser.add_subparsers(dest="command", required=True)
    data_commands.setup(subparsers)
    model_commands.setup(subparsers)

    replay_parser = subparsers.add_parser("replay", help="re-run a command from its manifest.json")
    replay_parser.add_argument("manifest", help="path to a run manifest")
    replay_parser.set_defaults(handler=run_replay)
    return parser


async def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run one command and return the process exit status."""
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    args.argv = argv
    setup_logging(args.log_level, args.log_file)

    try:
        Config.validate()
        if args.jobs < 1:
            raise ValueError("Configuration errors:\n  - --jobs must be >= 1")
        await args.handler(args)
    except ValueError as e:
        logger.error(f"Configuration error: {e}")
        print(get_user_error_message(ERROR_CODES["CLI_USAGE"], str(e)), file=sys.stderr)
        return 1
    except HybridNetError as e:
        logger.debug(f"Command '{args.command}' failed", exc_info=True)
        print(get_user_error_message(e.code, e.message), file=sys.stderr)
        return 1
    return 0


def run_argv(argv: List[str]) -> int:
    """Blocking entry point, picklable for worker processes."""
    return asyncio.run(main(argv))


def run():
    sys.exit(run_argv(sys.argv[1:]))


if __name__ == "__main__":
    run()
