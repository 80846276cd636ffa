"""
Run artifacts for HybridNet
Run manifests, loss curves, JSON outputs and PGM heatmaps written next to
every command's results.
"""

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from circuit import GridSpec, tile_index
from config import TOOL_VERSION
from errors import ArtifactError

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def write_json(path: Path, payload: Any):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_json(path: Path) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ArtifactError(f"file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ArtifactError(f"invalid JSON in {path}: {e}") from e


@dataclass
class RunManifest:
    """What a command ran with and what it produced."""

    command: str
    argv: List[str]
    flags: Dict[str, Any]
    seed: int
    inputs: List[str] = field(default_factory=list)
    outputs: List[str] = field(default_factory=list)
    tool_version: str = TOOL_VERSION
    duration_s: Optional[float] = None
    _started: float = field(default_factory=time.monotonic, repr=False, compare=False)

    def finish(self):
        self.duration_s = round(time.monotonic() - self._started, 3)

    def to_dict(self) -> Dict[str, Any]:
        values = asdict(self)
        values.pop("_started")
        return values

    def write(self, directory: Path, name: str = MANIFEST_NAME) -> Path:
        path = Path(directory) / name
        write_json(path, self.to_dict())
        logger.debug(f"Wrote run manifest {path}")
        return path

    @classmethod
    def load(cls, path: Path) -> "RunManifest":
        values = read_json(path)
        try:
            return cls(**{k: v for k, v in values.items() if k != "_started"})
        except TypeError as e:
            raise ArtifactError(f"not a run manifest: {path}") from e


def write_loss_csv(path: Path, curve: Sequence[float]):
    lines = ["epoch,loss"]
    lines.extend(f"{epoch},{float(loss)!r}" for epoch, loss in enumerate(curve, start=1))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def tile_means(grid: GridSpec, points: np.ndarray, values: np.ndarray) -> np.ndarray:
    """
    Average of per-point values inside each tile (ny, nx).
    Tiles without points take the smallest value so they render darkest.
    """
    values = np.asarray(values, dtype=np.float64)
    ix, iy = tile_index(grid, points)
    totals = np.zeros((grid.ny, grid.nx))
    counts = np.zeros((grid.ny, grid.nx))
    np.add.at(totals, (iy, ix), values)
    np.add.at(counts, (iy, ix), 1.0)
    fill = values.min() if values.size else 0.0
    return np.where(counts > 0, totals / np.maximum(counts, 1.0), fill)


def write_pgm(path: Path, image: np.ndarray):
    """
    Plain-text graymap (P2) min-max scaled to 0-255.
    Row 0 of the input is the bottom of the die, so rows are written top first.
    """
    image = np.asarray(image, dtype=np.float64)
    lo, hi = float(image.min()), float(image.max())
    if hi > lo:
        pixels = np.rint((image - lo) / (hi - lo) * 255.0).astype(np.int64)
    else:
        pixels = np.zeros(image.shape, dtype=np.int64)
    ny, nx = pixels.shape
    lines = ["P2", f"{nx} {ny}", "255"]
    lines.extend(" ".join(str(v) for v in row) for row in pixels[::-1])
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_pgm(path: Path) -> np.ndarray:
    """Inverse of write_pgm: returns pixel values with row 0 at the bottom."""
    tokens = Path(path).read_text(encoding="utf-8").split()
    if not tokens or tokens[0] != "P2":
        raise ArtifactError(f"not a P2 graymap: {path}")
    nx, ny = int(tokens[1]), int(tokens[2])
    pixels = np.array([int(t) for t in tokens[4 : 4 + nx * ny]], dtype=np.int64).reshape(ny, nx)
    return pixels[::-1]
