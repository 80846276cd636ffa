"""
Shared helpers for HybridNet commands
Design discovery, parallel sample loading and run manifest bookkeeping.
"""

import asyncio
import logging
from argparse import Namespace
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional

from artifacts import RunManifest, read_json
from errors import ArtifactError, UsageError
from multiview import FEATURE_COARSENING
from training import DesignSample, load_sample

logger = logging.getLogger(__name__)

SPLIT_FILE = "split.json"
SPLITS = ("train", "test", "all")


def resolved_flags(args: Namespace) -> Dict[str, Any]:
    """Every parsed flag value, JSON-friendly, without internal entries."""
    flags = {}
    for key, value in sorted(vars(args).items()):
        if key in ("handler", "argv"):
            continue
        flags[key] = str(value) if isinstance(value, Path) else value
    return flags


def start_manifest(args: Namespace, command: str) -> RunManifest:
    return RunManifest(command=command, argv=list(getattr(args, "argv", [])), flags=resolved_flags(args), seed=args.seed)


def designs_root(args: Namespace) -> Path:
    return Path(args.designs_dir) if getattr(args, "designs_dir", None) else Path(args.out_dir) / "designs"


def design_dirs(root: Path, split: str = "train") -> List[Path]:
    """Design directories of a split, in the order recorded by gen."""
    root = Path(root)
    if split not in SPLITS:
        raise UsageError(f"unknown split {split!r}, expected one of {SPLITS}")
    if not root.is_dir():
        raise ArtifactError(f"design directory not found: {root}")

    split_file = root / SPLIT_FILE
    if split_file.exists():
        recorded = read_json(split_file)
        names = recorded["train"] + recorded["test"] if split == "all" else recorded.get(split, [])
        dirs = [root / name for name in names]
    elif split == "all":
        dirs = sorted(p for p in root.iterdir() if (p / "netlist.json").exists())
    else:
        raise ArtifactError(f"{split_file} not found; run gen first or use --split all")

    missing = [str(d) for d in dirs if not (d / "netlist.json").exists()]
    if missing:
        raise ArtifactError(f"missing design files: {', '.join(missing)}")
    if not dirs:
        raise ArtifactError(f"no {split} designs under {root}")
    return dirs


async def load_samples(dirs: List[Path], clique_cap: int, jobs: int = 1, coarsening: int = FEATURE_COARSENING) -> List[DesignSample]:
    """Build design samples, in a process pool when jobs > 1. Order follows dirs."""
    if jobs <= 1 or len(dirs) <= 1:
        return [load_sample(d, clique_cap, coarsening) for d in dirs]

    loop = asyncio.get_running_loop()
    logger.info(f"Building graphs for {len(dirs)} designs with {jobs} workers")
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [loop.run_in_executor(pool, load_sample, d, clique_cap, coarsening) for d in dirs]
        return list(await asyncio.gather(*futures))


def model_dir(args: Namespace) -> Path:
    return Path(args.model) if getattr(args, "model", None) else Path(args.out_dir) / "model"


def checkpoint_dir(directory: Path, epoch: Optional[int] = None) -> Path:
    if epoch is None:
        return Path(directory) / "checkpoint"
    return Path(directory) / "checkpoints" / f"epoch_{epoch:04d}"
