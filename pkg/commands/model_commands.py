"""
Model commands for HybridNet
`train`, `eval` and `predict`: fit a checkpoint on the training designs,
score it on a split, and export per-cell predictions with heatmaps.
"""

import csv
import logging
from argparse import Namespace
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, Tuple

from artifacts import read_json, tile_means, write_json, write_loss_csv, write_pgm
from checkpoint import MANIFEST_FILE, load_checkpoint, save_checkpoint
from circuit import load_design
from commands.common import checkpoint_dir, design_dirs, designs_root, load_samples, model_dir, start_manifest
from config import Config, load_model_profile
from errors import ArtifactError, CheckpointError, TensorError, UsageError
from hybridnet import HybridNetConfig, HybridNetParams
from metrics import evaluate, format_report, predict
from multiview import write_graph_text, write_matrix_text
from training import Standardizer, TrainConfig, destandardize, prepare_sample, train

logger = logging.getLogger(__name__)

MODE_FLAGS = {"full": "full", "topo": "topo_only", "geo": "geo_only"}
MODEL_CONFIG_FILE = "model_config.json"
TRAIN_CONFIG_FILE = "train_config.json"
STANDARDIZER_FILE = "standardizer.json"


def build_model_config(args: Namespace, tile_w: float) -> HybridNetConfig:
    """Profile values, then explicit flags, then the cutoff resolved for the tile width."""
    config = HybridNetConfig.from_dict(load_model_profile(args.profile) or {})
    overrides = {
        "l": args.layers,
        "d": args.hidden,
        "heads": args.heads,
        "K": args.rbf,
        "cutoff_tiles": args.cutoff_tiles,
        "fourier_bands": args.fourier_bands,
    }
    config = replace(config, **{k: v for k, v in overrides.items() if v is not None})
    if args.raw_coords:
        config = replace(config, pe_fourier=False)
    config = config.resolve_cutoff(tile_w)
    try:
        config.validate()
    except ValueError as e:
        raise UsageError(str(e)) from e
    return config


def load_model(directory: Path) -> Tuple[HybridNetParams, HybridNetConfig, Standardizer, Dict[str, Any]]:
    """Checkpoint, model config, feature statistics and training settings of a trained model."""
    directory = Path(directory)
    ckpt = checkpoint_dir(directory)
    if not (ckpt / MANIFEST_FILE).exists():
        raise ArtifactError(f"checkpoint not found: {ckpt}")
    config = HybridNetConfig.load(directory / MODEL_CONFIG_FILE)
    params = HybridNetParams.from_arrays(load_checkpoint(ckpt))
    try:
        params.check_shapes(config)
    except TensorError as e:
        raise CheckpointError(f"checkpoint does not match {MODEL_CONFIG_FILE}: {e.message}") from e
    standardizer = Standardizer.load(directory / STANDARDIZER_FILE)
    if len(standardizer.mean) != config.f_t:
        raise CheckpointError(f"feature statistics have {len(standardizer.mean)} columns, model expects {config.f_t}")
    return params, config, standardizer, read_json(directory / TRAIN_CONFIG_FILE)


# ============= TRAIN =============


async def run_train(args: Namespace):
    manifest = start_manifest(args, "train")
    mode = MODE_FLAGS[args.mode]
    dirs = design_dirs(designs_root(args), "train")
    samples = await load_samples(dirs, args.clique_cap, args.jobs, args.feature_coarsening)

    tile_widths = {s.grid.tile_w for s in samples}
    if len(tile_widths) > 1:
        logger.warning(f"Training designs use {len(tile_widths)} different tile widths; cutoff follows {samples[0].name}")
    model_config = build_model_config(args, samples[0].grid.tile_w)
    train_config = TrainConfig(
        epochs=args.epochs,
        lr=args.lr,
        weight_decay=args.weight_decay,
        seed=args.seed,
        grad_clip_norm=args.grad_clip,
        log_every=args.log_every,
    )
    try:
        train_config.validate()
    except ValueError as e:
        raise UsageError(str(e)) from e

    standardizer = Standardizer.fit([s.graph for s in samples])
    train_set = [standardizer.apply(s) for s in samples]
    out = model_dir(args)
    out.mkdir(parents=True, exist_ok=True)

    def save_periodic(epoch: int, loss: float, params: HybridNetParams):
        if epoch % train_config.log_every == 0 and epoch != train_config.epochs:
            save_checkpoint(params.tensors, checkpoint_dir(out, epoch))

    params, curve = train(train_set, model_config, train_config, mode, on_epoch_end=save_periodic)

    save_checkpoint(params.tensors, checkpoint_dir(out))
    model_config.save(out / MODEL_CONFIG_FILE)
    meta = {"mode": mode, "clique_cap": args.clique_cap, "feature_coarsening": args.feature_coarsening}
    write_json(out / TRAIN_CONFIG_FILE, {**train_config.to_dict(), **meta})
    standardizer.save(out / STANDARDIZER_FILE)
    write_loss_csv(out / "loss.csv", curve)

    manifest.inputs = [str(d) for d in dirs]
    manifest.outputs = [str(out / name) for name in ("checkpoint", MODEL_CONFIG_FILE, TRAIN_CONFIG_FILE, STANDARDIZER_FILE, "loss.csv")]
    manifest.finish()
    manifest.write(out)
    logger.info(f"✅ Saved {mode} model to {out} (final loss {curve[-1]})")


# ============= EVAL =============


async def run_eval(args: Namespace):
    manifest = start_manifest(args, "eval")
    directory = model_dir(args)
    params, config, standardizer, meta = load_model(directory)
    mode = MODE_FLAGS[args.mode] if args.mode else meta.get("mode", "full")

    dirs = design_dirs(designs_root(args), args.split)
    samples = await load_samples(
        dirs, meta.get("clique_cap", Config.CLIQUE_CAP), args.jobs, meta.get("feature_coarsening", Config.FEATURE_COARSENING)
    )
    report = evaluate(params, config, [standardizer.apply(s) for s in samples], mode)

    report_path = directory / f"report_{args.split}.json"
    report.save(report_path, include_per_design=args.per_design)
    print(format_report(report, per_design=args.per_design))

    manifest.inputs = [str(checkpoint_dir(directory))] + [str(d) for d in dirs]
    manifest.outputs = [str(report_path)]
    manifest.finish()
    manifest.write(directory, f"manifest_eval_{args.split}.json")
    logger.info(f"✅ Evaluated {mode} model on {len(samples)} {args.split} designs: pearson={report.pearson}")


# ============= PREDICT =============


def _default_design(root: Path) -> Path:
    try:
        return design_dirs(root, "test")[0]
    except ArtifactError:
        return design_dirs(root, "all")[0]


async def run_predict(args: Namespace):
    manifest = start_manifest(args, "predict")
    directory = model_dir(args)
    params, config, standardizer, meta = load_model(directory)
    mode = MODE_FLAGS[args.mode] if args.mode else meta.get("mode", "full")

    root = designs_root(args)
    design_path = root / args.design if args.design else _default_design(root)
    if not (design_path / "netlist.json").exists():
        raise ArtifactError(f"design not found: {design_path}")
    design = load_design(design_path)
    sample = prepare_sample(design, meta.get("clique_cap", Config.CLIQUE_CAP), meta.get("feature_coarsening", Config.FEATURE_COARSENING))
    ready = standardizer.apply(sample)
    pred = destandardize(predict(ready, params, config, mode), sample.targets)

    out = Path(args.out_dir) / "predict" / design.name
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "pred.csv", "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["cell", "x", "y", "target", "pred"])
        for cell, (x, y), target, value in zip(design.netlist.cells, sample.centers, sample.targets, pred):
            writer.writerow([cell.name, repr(float(x)), repr(float(y)), repr(float(target)), repr(float(value))])

    write_pgm(out / "pred.pgm", tile_means(sample.grid, sample.centers, pred))
    write_pgm(out / "target.pgm", design.labels.values)
    manifest.outputs = [str(out / name) for name in ("pred.csv", "pred.pgm", "target.pgm")]

    if args.export_graphs:
        exports = {
            "topo.edges": write_graph_text(sample.graph.topo),
            "geo.edges": write_graph_text(sample.graph.geo),
            "x_t.mat": write_matrix_text(sample.graph.x_t),
            "x_g.mat": write_matrix_text(sample.graph.x_g),
        }
        for name, text in exports.items():
            (out / name).write_text(text, encoding="utf-8")
            manifest.outputs.append(str(out / name))

    manifest.inputs = [str(checkpoint_dir(directory)), str(design_path)]
    manifest.finish()
    manifest.write(out)
    logger.info(f"✅ Wrote predictions for {design.name} ({design.netlist.num_cells} cells) to {out}")


def setup(subparsers):
    """Register the model commands."""
    common = dict(default=None)

    train_parser = subparsers.add_parser("train", help="train a HybridNet model on the training designs")
    train_parser.add_argument("--designs-dir", dest="designs_dir", help="design directory (default: OUT_DIR/designs)", **common)
    train_parser.add_argument("--model-dir", dest="model", help="output model directory (default: OUT_DIR/model)", **common)
    train_parser.add_argument("--mode", choices=sorted(MODE_FLAGS), default="full", help="full model or single-pathway ablation")
    train_parser.add_argument("--epochs", type=int, default=Config.EPOCHS)
    train_parser.add_argument("--lr", type=float, default=Config.LEARNING_RATE)
    train_parser.add_argument("--weight-decay", type=float, default=0.01)
    train_parser.add_argument("--grad-clip", type=float, default=5.0)
    train_parser.add_argument("--log-every", type=int, default=50, help="epochs between progress logs and checkpoints")
    train_parser.add_argument("--clique-cap", type=int, default=Config.CLIQUE_CAP, help="largest net expanded as a clique")
    train_parser.add_argument(
        "--feature-coarsening", type=int, default=Config.FEATURE_COARSENING, help="label tiles per density-feature tile side"
    )
    train_parser.add_argument("--profile", default=Config.PROFILE, help="model profile under configs/")
    train_parser.add_argument("--layers", type=int, help="layers per pathway", **common)
    train_parser.add_argument("--hidden", type=int, help="hidden width", **common)
    train_parser.add_argument("--heads", type=int, help="attention heads", **common)
    train_parser.add_argument("--rbf", type=int, help="radial basis functions", **common)
    train_parser.add_argument("--cutoff-tiles", type=float, help="distance cutoff in tile widths", **common)
    train_parser.add_argument("--fourier-bands", type=int, help="positional encoding frequency bands", **common)
    train_parser.add_argument("--raw-coords", action="store_true", help="feed raw coordinates to the positional encoding")
    train_parser.set_defaults(handler=run_train)

    eval_parser = subparsers.add_parser("eval", help="evaluate a trained model")
    eval_parser.add_argument("--designs-dir", dest="designs_dir", help="design directory (default: OUT_DIR/designs)", **common)
    eval_parser.add_argument("--model-dir", dest="model", help="model directory (default: OUT_DIR/model)", **common)
    eval_parser.add_argument("--split", choices=("train", "test", "all"), default="test")
    eval_parser.add_argument("--mode", choices=sorted(MODE_FLAGS), help="override the trained mode", **common)
    eval_parser.add_argument("--per-design", action="store_true", help="include per-design rows")
    eval_parser.set_defaults(handler=run_eval)

    predict_parser = subparsers.add_parser("predict", help="export per-cell predictions and heatmaps for one design")
    predict_parser.add_argument("--designs-dir", dest="designs_dir", help="design directory (default: OUT_DIR/designs)", **common)
    predict_parser.add_argument("--model-dir", dest="model", help="model directory (default: OUT_DIR/model)", **common)
    predict_parser.add_argument("--design", help="design name (default: first test design)", **common)
    predict_parser.add_argument("--mode", choices=sorted(MODE_FLAGS), help="override the trained mode", **common)
    predict_parser.add_argument("--export-graphs", action="store_true", help="also write graph and feature debug files")
    predict_parser.set_defaults(handler=run_predict)
