#!/usr/bin/env python3
"""
Ablation sweep: full model against single-pathway models.

This script:
1. Generates the default synthetic benchmark (9 designs, 6 train / 3 test) once
2. Trains full, topology-only and geometry-only models for each training seed,
   in parallel worker processes when --jobs > 1
3. Evaluates each model on the test designs
4. Reports whether the full model beats both ablations
"""

import argparse
import asyncio
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional

# Add parent directory to path to import the package modules
sys.path.insert(0, str(Path(__file__).parent.parent))

import cli  # noqa: E402

logger = logging.getLogger(__name__)

MODES = ("full", "topo", "geo")
DEFAULT_SEEDS = (7, 8, 9)


async def _run(argv: List[str], pool: Optional[ProcessPoolExecutor] = None):
    if pool is None:
        status = await cli.main(argv)
    else:
        status = await asyncio.get_running_loop().run_in_executor(pool, cli.run_argv, argv)
    if status != 0:
        raise RuntimeError(f"command failed with status {status}: {' '.join(argv)}")


async def _train_and_eval(out_dir: Path, seed: int, mode: str, epochs: int, profile: Optional[str], pool: Optional[ProcessPoolExecutor]) -> float:
    base = ["--out-dir", str(out_dir), "--jobs", "1", "--log-file", "", "--seed", str(seed)]
    model = out_dir / f"model_{mode}_s{seed}"
    train_args = ["train", "--mode", mode, "--epochs", str(epochs), "--model-dir", str(model)]
    if profile:
        train_args += ["--profile", profile]
    await _run(base + train_args, pool)
    await _run(base + ["eval", "--model-dir", str(model)], pool)
    report = json.loads((model / "report_test.json").read_text(encoding="utf-8"))
    logger.info(f"seed={seed} mode={mode} pearson={report['pearson']}")
    return report["pearson"]


async def run_sweep(
    out_dir: Path,
    seeds=DEFAULT_SEEDS,
    epochs: int = 200,
    cells: int = 2000,
    designs: int = 9,
    data_seed: int = 7,
    jobs: int = 1,
    profile: Optional[str] = None,
) -> Dict[int, Dict[str, float]]:
    """
    Train and evaluate every mode for every seed.
    With jobs > 1 the (seed, mode) runs go to a process pool of that size.

    Returns:
        {seed: {mode: pooled test pearson}}
    """
    out_dir = Path(out_dir)
    designs_dir = out_dir / "designs"
    if not (designs_dir / "split.json").exists():
        gen = ["--out-dir", str(out_dir), "--jobs", str(jobs), "--log-file", "", "--seed", str(data_seed)]
        await _run(gen + ["gen", "--cells", str(cells), "--designs", str(designs)])

    runs = [(seed, mode) for seed in seeds for mode in MODES]
    if jobs <= 1:
        scores = [await _train_and_eval(out_dir, seed, mode, epochs, profile, None) for seed, mode in runs]
    else:
        logger.info(f"Running {len(runs)} train/eval jobs on {jobs} workers")
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            scores = await asyncio.gather(*(_train_and_eval(out_dir, seed, mode, epochs, profile, pool) for seed, mode in runs))

    results: Dict[int, Dict[str, float]] = {seed: {} for seed in seeds}
    for (seed, mode), score in zip(runs, scores):
        results[seed][mode] = score
    return results


def claim_holds(scores: Dict[str, float], floor: float = 0.5, margin: float = 0.02) -> bool:
    """Full model reaches the floor and beats both ablations by the margin."""
    full = scores.get("full")
    if full is None or full < floor:
        return False
    return all(scores.get(m) is not None and full - scores[m] >= margin for m in ("topo", "geo"))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[1])
    parser.add_argument("--out-dir", default="runs/ablation")
    parser.add_argument("--seeds", type=int, nargs="+", default=list(DEFAULT_SEEDS))
    parser.add_argument("--epochs", type=int, default=200)
    parser.add_argument("--cells", type=int, default=2000)
    parser.add_argument("--jobs", type=int, default=1, help="concurrent train/eval runs")
    parser.add_argument("--profile", default=None)
    args = parser.parse_args()

    results = asyncio.run(run_sweep(Path(args.out_dir), args.seeds, args.epochs, args.cells, jobs=args.jobs, profile=args.profile))

    print(f"{'seed':>6} {'full':>8} {'topo':>8} {'geo':>8}  claim")
    wins = 0
    for seed, scores in results.items():
        holds = claim_holds(scores)
        wins += holds
        row = " ".join(f"{scores[m]:>8.4f}" if scores[m] is not None else f"{'nan':>8}" for m in MODES)
        print(f"{seed:>6} {row}  {'yes' if holds else 'no'}")
    print(f"Full model wins on {wins}/{len(results)} seeds")
    sys.exit(0 if wins >= min(2, len(results)) else 1)


if __name__ == "__main__":
    main()
