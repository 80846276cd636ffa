"""
Training for HybridNet
MSE loss, AdamW with decoupled weight decay, gradient clipping, feature
standardization and the full-graph training loop over designs.
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from autodiff import Tensor, backward, mean, mul, sub, tape
from circuit import Design, GridSpec, cell_centers, load_design, sample_labels_at_cells
from errors import NonFiniteError, TrainingError
from hybridnet import HybridNetConfig, HybridNetParams, active_parameter_names, forward, init_params, is_bias
from multiview import FEATURE_COARSENING, MultiViewGraph, assemble_multiview, feature_grid

logger = logging.getLogger(__name__)

EpochCallback = Callable[[int, float, HybridNetParams], None]


@dataclass
class TrainConfig:
    epochs: int = 500
    lr: float = 2e-4
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01
    seed: int = 7
    grad_clip_norm: Optional[float] = 5.0
    log_every: int = 50

    def validate(self):
        errors = []
        if self.epochs < 1:
            errors.append(f"epochs must be >= 1, got {self.epochs}")
        if self.lr <= 0:
            errors.append(f"lr must be > 0, got {self.lr}")
        if not all(0.0 <= b < 1.0 for b in self.betas):
            errors.append(f"betas must lie in [0, 1), got {self.betas}")
        if self.eps <= 0:
            errors.append("eps must be > 0")
        if self.weight_decay < 0:
            errors.append("weight_decay must be >= 0")
        if self.grad_clip_norm is not None and self.grad_clip_norm <= 0:
            errors.append("grad_clip_norm must be > 0 when set")
        if self.log_every < 1:
            errors.append("log_every must be >= 1")
        if errors:
            raise ValueError("Training configuration errors:\n" + "\n".join(f"  - {e}" for e in errors))
        return True

    def to_dict(self) -> Dict[str, Any]:
        values = asdict(self)
        values["betas"] = list(self.betas)
        return values

    @classmethod
    def from_dict(cls, values: Mapping[str, Any]) -> "TrainConfig":
        values = dict(values)
        if "betas" in values:
            values["betas"] = tuple(values["betas"])
        return cls(**values)


@dataclass
class OptimizerState:
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    @classmethod
    def zeros_like(cls, params: HybridNetParams) -> "OptimizerState":
        return cls(
            m={name: np.zeros_like(p.data) for name, p in params.items()},
            v={name: np.zeros_like(p.data) for name, p in params.items()},
        )


def mse_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    target = np.asarray(target)
    if pred.shape != target.shape or pred.size == 0:
        raise TrainingError(f"mse_loss: prediction shape {pred.shape} vs target shape {target.shape}")
    diff = sub(pred, Tensor(target, dtype=pred.data.dtype))
    return mean(mul(diff, diff))


def clip_grad_norm(params: HybridNetParams, names: Sequence[str], max_norm: float) -> float:
    """Scale gradients so their global L2 norm is at most max_norm. Returns the norm before clipping."""
    total = 0.0
    for name in names:
        g = params[name].grad
        if g is not None:
            total += float(np.sum(np.square(g, dtype=np.float64)))
    norm = float(np.sqrt(total))
    if norm > max_norm:
        factor = max_norm / norm
        for name in names:
            p = params[name]
            if p.grad is not None:
                p.grad = (p.grad * factor).astype(p.data.dtype)
    return norm


def adamw_step(params: HybridNetParams, state: OptimizerState, config: TrainConfig, names: Optional[Sequence[str]] = None):
    """
    One in-place AdamW update of the named parameters (all by default).
    Weight decay is decoupled and skipped for bias tensors.
    """
    names = params.names() if names is None else list(names)
    missing = [name for name in names if params[name].grad is None]
    if missing:
        raise TrainingError(f"missing gradient for {', '.join(missing[:5])}")

    state.t += 1
    beta1, beta2 = config.betas
    correction1 = 1.0 - beta1**state.t
    correction2 = 1.0 - beta2**state.t
    for name in names:
        p = params[name]
        g = p.grad
        dtype = p.data.dtype.type
        m = state.m.setdefault(name, np.zeros_like(p.data))
        v = state.v.setdefault(name, np.zeros_like(p.data))
        m *= dtype(beta1)
        m += dtype(1.0 - beta1) * g
        v *= dtype(beta2)
        v += dtype(1.0 - beta2) * g * g
        m_hat = m / dtype(correction1)
        v_hat = v / dtype(correction2)
        update = m_hat / (np.sqrt(v_hat) + dtype(config.eps))
        if config.weight_decay and not is_bias(name):
            update = update + dtype(config.weight_decay) * p.data
        p.data -= dtype(config.lr) * update


# ============= DATA PREPARATION =============


@dataclass(eq=False)
class DesignSample:
    """One design ready for the model: graph views, per-cell targets, and layout context."""

    name: str
    graph: MultiViewGraph
    targets: np.ndarray
    grid: GridSpec
    centers: np.ndarray


def prepare_sample(design: Design, clique_cap: int = 16, coarsening: int = FEATURE_COARSENING) -> DesignSample:
    features = feature_grid(design.labels.grid, coarsening)
    graph = assemble_multiview(design.netlist, design.placement, features, clique_cap)
    targets = sample_labels_at_cells(design.labels, design.placement, design.netlist)
    centers = cell_centers(design.netlist, design.placement)
    return DesignSample(design.name, graph, targets, design.labels.grid, centers)


def load_sample(directory: Path, clique_cap: int = 16, coarsening: int = FEATURE_COARSENING) -> DesignSample:
    """Load a design directory and build its sample (picklable entry point for worker pools)."""
    return prepare_sample(load_design(directory), clique_cap, coarsening)


def standardize_targets(targets: np.ndarray) -> np.ndarray:
    """Zero mean, unit variance within one design; constant targets map to zeros."""
    targets = np.asarray(targets, dtype=np.float64)
    std = targets.std()
    if std == 0:
        return np.zeros_like(targets)
    return (targets - targets.mean()) / std


def destandardize(values: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Map standardized values back onto the scale of reference (the raw targets of the same design)."""
    reference = np.asarray(reference, dtype=np.float64)
    return reference.mean() + np.asarray(values, dtype=np.float64) * reference.std()


@dataclass(eq=False)
class Standardizer:
    """Column statistics of X_t frozen from the training designs."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, graphs: Sequence[MultiViewGraph]) -> "Standardizer":
        if not graphs:
            raise TrainingError("cannot fit feature statistics without designs")
        stacked = np.vstack([g.x_t for g in graphs]).astype(np.float64)
        std = stacked.std(axis=0)
        return cls(stacked.mean(axis=0), np.where(std > 0, std, 1.0))

    def transform(self, graph: MultiViewGraph) -> MultiViewGraph:
        """Standardize X_t; X_g gets the standardized base columns and the untouched coordinates."""
        x_t = (graph.x_t - self.mean) / self.std
        return graph.with_features(x_t, np.hstack([x_t, graph.coords]))

    def apply(self, sample: DesignSample) -> DesignSample:
        return DesignSample(sample.name, self.transform(sample.graph), standardize_targets(sample.targets), sample.grid, sample.centers)

    def to_dict(self) -> Dict[str, List[float]]:
        return {"mean": [float(v) for v in self.mean], "std": [float(v) for v in self.std]}

    @classmethod
    def from_dict(cls, values: Mapping[str, Sequence[float]]) -> "Standardizer":
        return cls(np.asarray(values["mean"], dtype=np.float64), np.asarray(values["std"], dtype=np.float64))

    def save(self, path: Path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "Standardizer":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# ============= TRAINING LOOP =============


def train_step(sample: DesignSample, params: HybridNetParams, model_config: HybridNetConfig, mode: str) -> float:
    """Forward, loss and backward for one design. Gradients are left on the parameters."""
    params.zero_grad()
    with tape():
        pred = forward(sample.graph, params, model_config, mode)
        loss = mse_loss(pred, sample.targets)
    backward(loss)
    return float(loss.data)


def train(
    designs: Sequence[DesignSample],
    model_config: HybridNetConfig,
    train_config: TrainConfig,
    mode: str = "full",
    on_epoch_end: Optional[EpochCallback] = None,
) -> Tuple[HybridNetParams, List[float]]:
    """
    Full-graph training, one optimizer step per design per epoch.
    Design order is reshuffled every epoch from the training seed.

    Returns:
        Tuple of (trained parameters, mean loss per epoch)
    """
    train_config.validate()
    model_config.validate()
    if not designs:
        raise TrainingError("no training designs")

    params = init_params(model_config, train_config.seed)
    names = active_parameter_names(params, mode)
    state = OptimizerState.zeros_like(params)
    rng = np.random.default_rng(train_config.seed)
    curve: List[float] = []

    logger.info(f"🚀 Training {mode} model on {len(designs)} designs for {train_config.epochs} epochs")
    for epoch in range(1, train_config.epochs + 1):
        losses = []
        for idx in rng.permutation(len(designs)):
            sample = designs[idx]
            try:
                loss = train_step(sample, params, model_config, mode)
            except NonFiniteError as e:
                raise TrainingError(f"non-finite value during training: {e.message}", epoch, sample.name) from e
            if not np.isfinite(loss):
                raise TrainingError("non-finite loss", epoch, sample.name)
            if train_config.grad_clip_norm is not None:
                clip_grad_norm(params, names, train_config.grad_clip_norm)
            adamw_step(params, state, train_config, names)
            params.zero_grad()
            losses.append(loss)

        curve.append(float(np.mean(losses)))
        if epoch == 1 or epoch % train_config.log_every == 0 or epoch == train_config.epochs:
            logger.info(f"Epoch {epoch}/{train_config.epochs} loss={curve[-1]}")
        else:
            logger.debug(f"Epoch {epoch}/{train_config.epochs} loss={curve[-1]}")
        if on_epoch_end is not None:
            on_epoch_end(epoch, curve[-1], params)

    logger.info(f"✅ Training finished, final loss {curve[-1]}")
    return params, curve
