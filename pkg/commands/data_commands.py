"""
Data commands for HybridNet
`gen`: synthetic placed designs with RUDY labels and a train/test split.
"""

import logging
import math
from argparse import Namespace
from typing import Optional, Tuple

from artifacts import write_json
from circuit import generate_synthetic, make_design, save_design
from commands.common import SPLIT_FILE, designs_root, start_manifest
from config import Config
from errors import UsageError

logger = logging.getLogger(__name__)

UTILIZATION = 0.6
MEAN_CELL_WIDTH = 1.4
SEED_STRIDE = 1000


def default_die_side(n_cells: int) -> float:
    """Square die sized for about 60% row utilization."""
    return float(max(8, math.ceil(math.sqrt(n_cells * MEAN_CELL_WIDTH / UTILIZATION))))


def parse_split(text: Optional[str], n_designs: int) -> Tuple[int, int]:
    """'train/test' counts; defaults to two thirds for training."""
    if text is None:
        n_train = max(1, round(n_designs * 2 / 3))
        if n_designs >= 2:
            n_train = min(n_train, n_designs - 1)
        return n_train, n_designs - n_train
    try:
        n_train, n_test = (int(v) for v in text.split("/"))
    except ValueError as e:
        raise UsageError(f"--split must look like TRAIN/TEST, got {text!r}") from e
    if n_train < 1 or n_test < 0 or n_train + n_test != n_designs:
        raise UsageError(f"--split {text} does not partition {n_designs} designs")
    return n_train, n_test


async def run_gen(args: Namespace):
    """Generate designs/<name>/{netlist.json, placement.json, labels.grid} plus split.json."""
    if args.designs_count < 1:
        raise UsageError("--designs must be >= 1")
    manifest = start_manifest(args, "gen")
    n_train, _ = parse_split(args.split, args.designs_count)
    die_side = args.die if args.die is not None else default_die_side(args.cells)
    root = designs_root(args)

    names = []
    for i in range(args.designs_count):
        name = f"design_{i:02d}"
        seed = args.seed * SEED_STRIDE + i
        netlist, placement = generate_synthetic(seed, args.cells, args.rent_p, die_side)
        design = make_design(netlist, placement, name=name, tiles_per_side=Config.TILES_PER_SIDE, tile=args.tile)
        save_design(design, root / name)
        names.append(name)
        manifest.outputs.append(str(root / name))
        logger.info(f"Generated {name} ({netlist.name}, {len(netlist.nets)} nets, grid {design.labels.grid.nx}x{design.labels.grid.ny})")

    write_json(root / SPLIT_FILE, {"train": names[:n_train], "test": names[n_train:]})
    manifest.outputs.append(str(root / SPLIT_FILE))
    manifest.finish()
    manifest.write(root)
    logger.info(f"✅ Wrote {len(names)} designs to {root} ({n_train} train / {len(names) - n_train} test)")


def setup(subparsers):
    """Register the data commands."""
    parser = subparsers.add_parser("gen", help="generate synthetic placed designs with congestion labels")
    parser.add_argument("--cells", type=int, default=2000, help="cells per design")
    parser.add_argument("--designs", dest="designs_count", type=int, default=9, help="number of designs")
    parser.add_argument("--die", type=float, default=None, help="die side length (default: sized for ~60%% utilization)")
    parser.add_argument("--tile", type=float, default=None, help="tile side length (default: die / HYBRIDNET_TILES_PER_SIDE)")
    parser.add_argument("--rent-p", type=float, default=0.6, help="Rent exponent controlling the fanout tail")
    parser.add_argument("--split", default=None, help="TRAIN/TEST design counts (default: two thirds train)")
    parser.add_argument("--designs-dir", dest="designs_dir", default=None, help="output directory (default: OUT_DIR/designs)")
    parser.set_defaults(handler=run_gen)
