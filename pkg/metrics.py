"""
Correlation metrics and evaluation reports for HybridNet
Pearson, Spearman (mid-ranks) and Kendall tau-b, computed pooled across
designs and per design.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
from scipy.stats import rankdata

from errors import MetricError
from hybridnet import HybridNetConfig, HybridNetParams, forward
from training import DesignSample

logger = logging.getLogger(__name__)

METRIC_NAMES = ("pearson", "spearman", "kendall")


def _as_pair(a: Sequence[float], b: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise MetricError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 2:
        raise MetricError(f"need at least 2 samples, got {a.size}")
    return a, b


def pearson(a: Sequence[float], b: Sequence[float]) -> float:
    """Linear correlation; NaN (with a warning) when either input is constant."""
    a, b = _as_pair(a, b)
    da = a - a.mean()
    db = b - b.mean()
    denom = math.sqrt(float(np.dot(da, da)) * float(np.dot(db, db)))
    if denom == 0.0:
        logger.warning("Pearson correlation undefined for a constant input; reporting NaN")
        return float("nan")
    return float(np.clip(np.dot(da, db) / denom, -1.0, 1.0))


def spearman(a: Sequence[float], b: Sequence[float]) -> float:
    """Pearson correlation of average ranks."""
    a, b = _as_pair(a, b)
    return pearson(rankdata(a), rankdata(b))


def kendall_counts(a: Sequence[float], b: Sequence[float]) -> Tuple[int, int, int, int]:
    """
    Pair counts for tau-b.

    Returns:
        Tuple of (concordant, discordant, tied only in a, tied only in b)
    """
    a, b = _as_pair(a, b)
    concordant = discordant = tied_a = tied_b = 0
    for i in range(a.size - 1):
        sa = np.sign(a[i + 1 :] - a[i])
        sb = np.sign(b[i + 1 :] - b[i])
        product = sa * sb
        concordant += int(np.count_nonzero(product > 0))
        discordant += int(np.count_nonzero(product < 0))
        tied_a += int(np.count_nonzero((sa == 0) & (sb != 0)))
        tied_b += int(np.count_nonzero((sb == 0) & (sa != 0)))
    return concordant, discordant, tied_a, tied_b


def kendall(a: Sequence[float], b: Sequence[float]) -> float:
    """Kendall tau-b; NaN (with a warning) when all pairs are tied in either input."""
    c, d, ta, tb = kendall_counts(a, b)
    denom = (c + d + ta) * (c + d + tb)
    if denom == 0:
        logger.warning("Kendall tau undefined when every pair is tied; reporting NaN")
        return float("nan")
    return (c - d) / math.sqrt(denom)


def correlations(a: Sequence[float], b: Sequence[float]) -> Dict[str, float]:
    return {"pearson": pearson(a, b), "spearman": spearman(a, b), "kendall": kendall(a, b)}


# ============= EVALUATION =============


@dataclass
class EvalReport:
    pearson: float
    spearman: float
    kendall: float
    n: int
    per_design: List[Dict[str, Any]] = field(default_factory=list)
    design_mean: Dict[str, float] = field(default_factory=dict)
    flagged: List[str] = field(default_factory=list)

    def to_dict(self, include_per_design: bool = True) -> Dict[str, Any]:
        values = {
            "pearson": _json_float(self.pearson),
            "spearman": _json_float(self.spearman),
            "kendall": _json_float(self.kendall),
            "n": self.n,
            "design_mean": {k: _json_float(v) for k, v in self.design_mean.items()},
            "flagged": list(self.flagged),
        }
        if include_per_design:
            values["per_design"] = [{k: _json_float(v) if isinstance(v, float) else v for k, v in row.items()} for row in self.per_design]
        return values

    def to_json(self, include_per_design: bool = True) -> str:
        return json.dumps(self.to_dict(include_per_design), indent=2, sort_keys=True) + "\n"

    def save(self, path: Path, include_per_design: bool = True):
        Path(path).write_text(self.to_json(include_per_design), encoding="utf-8")


def _json_float(value: float):
    return None if value is None or math.isnan(value) else value


def _nan_mean(values: Sequence[float]) -> float:
    finite = [v for v in values if not math.isnan(v)]
    return float(np.mean(finite)) if finite else float("nan")


def predict(sample: DesignSample, params: HybridNetParams, config: HybridNetConfig, mode: str = "full") -> np.ndarray:
    return forward(sample.graph, params, config, mode).data.astype(np.float64)


def evaluate(params: HybridNetParams, config: HybridNetConfig, designs: Sequence[DesignSample], mode: str = "full") -> EvalReport:
    """Metrics on the pooled predictions of all designs, plus a per-design breakdown."""
    if not designs:
        raise MetricError("evaluation needs at least one design")

    preds, targets, rows, flagged = [], [], [], []
    for sample in designs:
        pred = predict(sample, params, config, mode)
        target = np.asarray(sample.targets, dtype=np.float64)
        scores = correlations(target, pred)
        if any(math.isnan(v) for v in scores.values()):
            flagged.append(sample.name)
        rows.append({"design": sample.name, "n": int(target.size), **scores})
        preds.append(pred)
        targets.append(target)
        logger.debug(f"Evaluated {sample.name}: {scores}")

    pooled = correlations(np.concatenate(targets), np.concatenate(preds))
    design_mean = {name: _nan_mean([row[name] for row in rows]) for name in METRIC_NAMES}
    return EvalReport(
        pearson=pooled["pearson"],
        spearman=pooled["spearman"],
        kendall=pooled["kendall"],
        n=int(sum(t.size for t in targets)),
        per_design=rows,
        design_mean=design_mean,
        flagged=flagged,
    )


def format_report(report: EvalReport, per_design: bool = False) -> str:
    """Human-readable table of an evaluation report."""
    header = f"{'design':<16} {'n':>7} {'pearson':>9} {'spearman':>9} {'kendall':>9}"
    lines = [header, "-" * len(header)]

    def row(name: str, n: Any, values: Dict[str, float]) -> str:
        cells = " ".join(f"{values[m]:>9.4f}" for m in METRIC_NAMES)
        return f"{name:<16} {str(n):>7} {cells}"

    if per_design:
        for entry in report.per_design:
            lines.append(row(entry["design"], entry["n"], entry))
        lines.append("-" * len(header))
    lines.append(row("pooled", report.n, {"pearson": report.pearson, "spearman": report.spearman, "kendall": report.kendall}))
    if report.design_mean:
        lines.append(row("design mean", len(report.per_design), report.design_mean))
    return "\n".join(lines)
