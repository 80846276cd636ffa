"""
Circuit data model for HybridNet
Netlist/placement parsing and serialization, synthetic design generation,
and RUDY proxy congestion labels on a tile grid.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from errors import GeneratorError, GridError, NetlistFormatError, PlacementError

logger = logging.getLogger(__name__)

ROW_HEIGHT = 1.0
MAX_FANOUT = 32
LONG_NET_PROBABILITY = 0.1  # chance that a sink is drawn from the whole die


@dataclass(frozen=True)
class Cell:
    id: int
    name: str
    width: float
    height: float
    pin_offsets: Tuple[Tuple[float, float], ...]
    fixed: bool = False

    @property
    def area(self) -> float:
        return self.width * self.height


@dataclass(frozen=True)
class Net:
    id: int
    name: str
    pins: Tuple[Tuple[int, int], ...]  # (cell_id, pin_index)


@dataclass
class Netlist:
    name: str
    cells: List[Cell] = field(default_factory=list)
    nets: List[Net] = field(default_factory=list)

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    def cell_sizes(self) -> np.ndarray:
        """(N, 2) array of cell widths and heights."""
        return np.array([[c.width, c.height] for c in self.cells], dtype=np.float64).reshape(-1, 2)


@dataclass(eq=False)
class Placement:
    positions: np.ndarray  # (N, 2) lower-left corners
    die: Tuple[float, float, float, float]

    @property
    def die_width(self) -> float:
        return self.die[2] - self.die[0]

    @property
    def die_height(self) -> float:
        return self.die[3] - self.die[1]


@dataclass(frozen=True)
class GridSpec:
    x0: float
    y0: float
    tile_w: float
    tile_h: float
    nx: int
    ny: int

    def __post_init__(self):
        finite = all(math.isfinite(v) for v in (self.x0, self.y0, self.tile_w, self.tile_h))
        if not finite or self.nx < 1 or self.ny < 1 or self.tile_w <= 0 or self.tile_h <= 0:
            raise GridError(f"Invalid grid: nx={self.nx} ny={self.ny} tile={self.tile_w}x{self.tile_h}")

    @property
    def tile_area(self) -> float:
        return self.tile_w * self.tile_h

    def x_edges(self) -> np.ndarray:
        return self.x0 + self.tile_w * np.arange(self.nx + 1, dtype=np.float64)

    def y_edges(self) -> np.ndarray:
        return self.y0 + self.tile_h * np.arange(self.ny + 1, dtype=np.float64)


@dataclass(eq=False)
class LabelGrid:
    grid: GridSpec
    values: np.ndarray  # (ny, nx), row 0 = bottom

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.grid.ny, self.grid.nx):
            raise GridError(f"Label grid shape {self.values.shape} does not match grid {(self.grid.ny, self.grid.nx)}")
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise GridError("Label grid values must be finite and non-negative")


@dataclass(eq=False)
class Design:
    """A placed design with its proxy congestion labels."""

    name: str
    netlist: Netlist
    placement: Placement
    labels: LabelGrid


# ============= NETLIST / PLACEMENT FILES =============


def _require(obj: Dict[str, Any], key: str, where: str) -> Any:
    if not isinstance(obj, dict) or key not in obj:
        raise NetlistFormatError(f"missing field '{key}' in {where}")
    return obj[key]


def _number(obj: Dict[str, Any], key: str, where: str, error: type = NetlistFormatError) -> float:
    value = _require(obj, key, where)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise NetlistFormatError(f"field '{key}' in {where} must be a number, got {value!r}")
    try:
        number = float(value)
    except OverflowError:
        number = math.inf
    if not math.isfinite(number):
        raise error(f"field '{key}' in {where} must be finite, got {value!r}")
    return number


def _integer(obj: Dict[str, Any], key: str, where: str) -> int:
    value = _require(obj, key, where)
    if isinstance(value, float) and value.is_integer():
        return int(value)
    if isinstance(value, bool) or not isinstance(value, int):
        raise NetlistFormatError(f"field '{key}' in {where} must be an integer, got {value!r}")
    return value


def _load_json(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise NetlistFormatError(f"syntax error: {e.msg}", line=e.lineno) from e


def parse_netlist(text: str) -> Netlist:
    """Parse netlist JSON; ids are assigned in file order."""
    doc = _load_json(text)
    name = str(_require(doc, "name", "netlist"))

    cells: List[Cell] = []
    index_by_name: Dict[str, int] = {}
    for i, raw in enumerate(_require(doc, "cells", "netlist")):
        where = f"cell {i}"
        cell_name = str(_require(raw, "name", where))
        if cell_name in index_by_name:
            raise NetlistFormatError(f"duplicate cell '{cell_name}'")
        width = _number(raw, "w", where)
        height = _number(raw, "h", where)
        if width <= 0 or height <= 0:
            raise NetlistFormatError(f"cell '{cell_name}' must have positive width and height")
        pins = []
        for pin in _require(raw, "pins", where):
            dx = _number(pin, "dx", f"pin of cell '{cell_name}'")
            dy = _number(pin, "dy", f"pin of cell '{cell_name}'")
            if not (0 <= dx <= width and 0 <= dy <= height):
                raise NetlistFormatError(f"pin offset ({dx}, {dy}) outside cell '{cell_name}'")
            pins.append((dx, dy))
        if not pins:
            raise NetlistFormatError(f"cell '{cell_name}' has no pins")
        index_by_name[cell_name] = i
        cells.append(Cell(i, cell_name, width, height, tuple(pins), bool(raw.get("fixed", False))))

    nets: List[Net] = []
    for j, raw in enumerate(_require(doc, "nets", "netlist")):
        net_name = str(_require(raw, "name", f"net {j}"))
        refs = []
        seen = set()
        for ref in _require(raw, "pins", f"net '{net_name}'"):
            cell_name = str(_require(ref, "cell", f"pin of net '{net_name}'"))
            pin_index = _integer(ref, "pin", f"pin of net '{net_name}'")
            if cell_name not in index_by_name:
                raise NetlistFormatError(f"unknown cell '{cell_name}' in net '{net_name}'")
            cell_id = index_by_name[cell_name]
            if not 0 <= pin_index < len(cells[cell_id].pin_offsets):
                raise NetlistFormatError(f"unknown pin {pin_index} of cell '{cell_name}' in net '{net_name}'")
            if (cell_id, pin_index) in seen:
                raise NetlistFormatError(f"duplicate pin {cell_name}:{pin_index} in net '{net_name}'")
            seen.add((cell_id, pin_index))
            refs.append((cell_id, pin_index))
        if len(refs) < 2:
            raise NetlistFormatError(f"net arity < 2 for net '{net_name}'")
        nets.append(Net(j, net_name, tuple(refs)))

    return Netlist(name, cells, nets)


def serialize_netlist(netlist: Netlist) -> str:
    """Render a netlist in the JSON file format."""
    doc = {
        "name": netlist.name,
        "cells": [
            {
                "name": c.name,
                "w": float(c.width),
                "h": float(c.height),
                "pins": [{"dx": float(dx), "dy": float(dy)} for dx, dy in c.pin_offsets],
                **({"fixed": True} if c.fixed else {}),
            }
            for c in netlist.cells
        ],
        "nets": [
            {"name": n.name, "pins": [{"cell": netlist.cells[cid].name, "pin": int(p)} for cid, p in n.pins]}
            for n in netlist.nets
        ],
    }
    return json.dumps(doc, indent=1)


def parse_placement(text: str, netlist: Netlist) -> Placement:
    """Parse placement JSON; positions are index-aligned to netlist.cells."""
    doc = _load_json(text)
    die_raw = _require(doc, "die", "placement")
    if not isinstance(die_raw, list) or len(die_raw) != 4:
        raise NetlistFormatError("die must be [x0, y0, x1, y1]")
    die = dict(zip(("x0", "y0", "x1", "y1"), die_raw))
    x0, y0, x1, y1 = (_number(die, key, "die", PlacementError) for key in die)
    if not (x1 > x0 and y1 > y0):
        raise PlacementError(f"empty die {die_raw}")

    index_by_name = {c.name: c.id for c in netlist.cells}
    positions = np.full((netlist.num_cells, 2), np.nan, dtype=np.float64)
    seen = set()
    for i, row in enumerate(_require(doc, "cells", "placement")):
        name = str(_require(row, "name", f"placement row {i}"))
        if name not in index_by_name:
            raise PlacementError(f"unknown cell '{name}' in placement")
        if name in seen:
            raise PlacementError(f"duplicate cell row '{name}'")
        seen.add(name)
        positions[index_by_name[name]] = (_number(row, "x", name, PlacementError), _number(row, "y", name, PlacementError))

    if len(seen) != netlist.num_cells:
        missing = [c.name for c in netlist.cells if c.name not in seen]
        raise PlacementError(f"placement incomplete: {len(missing)} cells missing (first: '{missing[0]}')")

    placement = Placement(positions, (x0, y0, x1, y1))
    check_inside_die(netlist, placement)
    return placement


def check_inside_die(netlist: Netlist, placement: Placement):
    """Raise PlacementError for the first cell not fully inside the die."""
    x0, y0, x1, y1 = placement.die
    if not all(math.isfinite(v) for v in placement.die):
        raise PlacementError(f"die must be finite, got {placement.die}")
    tol = 1e-9 * max(placement.die_width, placement.die_height)
    sizes = netlist.cell_sizes()
    lo = placement.positions
    finite = np.all(np.isfinite(lo), axis=1)
    if not np.all(finite):
        cell = netlist.cells[int(np.argmin(finite))]
        raise PlacementError(f"cell '{cell.name}' has a non-finite position")
    hi = lo + sizes
    bad = (lo[:, 0] < x0 - tol) | (lo[:, 1] < y0 - tol) | (hi[:, 0] > x1 + tol) | (hi[:, 1] > y1 + tol)
    if np.any(bad):
        cell = netlist.cells[int(np.argmax(bad))]
        raise PlacementError(f"cell '{cell.name}' lies outside die")


def serialize_placement(netlist: Netlist, placement: Placement) -> str:
    doc = {
        "die": [float(v) for v in placement.die],
        "cells": [
            {"name": c.name, "x": float(placement.positions[c.id, 0]), "y": float(placement.positions[c.id, 1])}
            for c in netlist.cells
        ],
    }
    return json.dumps(doc, indent=1)


def cell_centers(netlist: Netlist, placement: Placement) -> np.ndarray:
    """(N, 2) cell center coordinates."""
    return placement.positions + 0.5 * netlist.cell_sizes()


def pin_positions(netlist: Netlist, placement: Placement) -> Tuple[np.ndarray, np.ndarray]:
    """Absolute location of every pin of every cell, with the owning cell id."""
    coords = []
    owners = []
    for cell in netlist.cells:
        offsets = np.asarray(cell.pin_offsets, dtype=np.float64)
        coords.append(placement.positions[cell.id] + offsets)
        owners.append(np.full(len(offsets), cell.id, dtype=np.int64))
    if not coords:
        return np.zeros((0, 2)), np.zeros(0, dtype=np.int64)
    return np.concatenate(coords), np.concatenate(owners)


def net_pin_coordinates(netlist: Netlist, placement: Placement) -> List[np.ndarray]:
    """Per net, the (p, 2) absolute coordinates of its pins."""
    result = []
    for net in netlist.nets:
        pts = [placement.positions[cid] + netlist.cells[cid].pin_offsets[pin] for cid, pin in net.pins]
        result.append(np.asarray(pts, dtype=np.float64))
    return result


# ============= SYNTHETIC DESIGNS =============


def _row_assignment(widths: np.ndarray, n_rows: int, row_width: float) -> Optional[List[List[int]]]:
    """Balanced split of cells (in order) into rows; None if a row would overflow."""
    total = float(widths.sum())
    target = total / n_rows
    rows: List[List[int]] = [[] for _ in range(n_rows)]
    cumulative = 0.0
    row = 0
    for i, w in enumerate(widths):
        if cumulative >= target * (row + 1) and row < n_rows - 1:
            row += 1
        rows[row].append(i)
        cumulative += float(w)
    for members in rows:
        if float(widths[members].sum()) > row_width:
            return None
    return rows


def _first_fit_rows(widths: np.ndarray, n_rows: int, row_width: float) -> Optional[List[List[int]]]:
    rows: List[List[int]] = [[] for _ in range(n_rows)]
    used = 0.0
    row = 0
    for i, w in enumerate(widths):
        if used + w > row_width:
            row += 1
            used = 0.0
            if row >= n_rows:
                return None
        rows[row].append(i)
        used += float(w)
    return rows


def generate_synthetic(seed: int, n_cells: int, rent_p: float, die_side: float) -> Tuple[Netlist, Placement]:
    """
    Generate a deterministic synthetic placed design.

    Cells are unit-height with 2-6 pins; nets have heavy-tailed fanout (2-32 pins)
    whose sinks are drawn mostly from cells near the driver; placement is a legal
    row-based, non-overlapping placement.

    Args:
        seed: Random seed; the output is a pure function of the arguments
        n_cells: Number of cells (>= 4)
        rent_p: Rent exponent in (0, 1); larger values give heavier fanout tails
        die_side: Side length of the square die

    Returns:
        Tuple of (netlist, placement)
    """
    if n_cells < 4:
        raise GeneratorError(f"n_cells must be >= 4, got {n_cells}")
    if not 0 < rent_p < 1:
        raise GeneratorError(f"rent_p must be in (0, 1), got {rent_p}")
    n_rows = int(math.floor(die_side / ROW_HEIGHT))
    if n_rows < 1:
        raise GeneratorError(f"die too small: side {die_side} holds no rows")

    rng = np.random.default_rng(seed)
    widths = np.round(rng.uniform(0.8, 2.0, n_cells), 2)
    pin_counts = rng.integers(2, 7, n_cells)

    cells = []
    for i in range(n_cells):
        dx = np.round(rng.uniform(0.0, widths[i], pin_counts[i]), 3)
        dy = np.round(rng.uniform(0.0, ROW_HEIGHT, pin_counts[i]), 3)
        dx = np.minimum(dx, widths[i])
        offsets = tuple((float(a), float(b)) for a, b in zip(dx, dy))
        cells.append(Cell(i, f"c{i}", float(widths[i]), ROW_HEIGHT, offsets))

    # Rows are filled in a random cell order so ids carry no spatial meaning
    order = rng.permutation(n_cells)
    if float(widths.sum()) > n_rows * die_side:
        raise GeneratorError(f"die too small: {n_cells} cells need width {widths.sum():.1f}, rows offer {n_rows * die_side:.1f}")
    rows = _row_assignment(widths[order], n_rows, die_side) or _first_fit_rows(widths[order], n_rows, die_side)
    if rows is None:
        raise GeneratorError(f"die too small to place {n_cells} cells")

    positions = np.zeros((n_cells, 2), dtype=np.float64)
    for r, members in enumerate(rows):
        if not members:
            continue
        ids = order[members]
        slack = die_side - float(widths[ids].sum())
        gaps = rng.dirichlet(np.ones(len(ids) + 1)) * slack
        x = 0.0
        for k, cid in enumerate(ids):
            x += gaps[k]
            positions[cid] = (x, r * ROW_HEIGHT)
            x += widths[cid]
    placement = Placement(positions, (0.0, 0.0, float(die_side), float(die_side)))

    centers = positions + np.column_stack([widths, np.full(n_cells, ROW_HEIGHT)]) * 0.5
    tree = cKDTree(centers)
    drivers = rng.permutation(n_cells)
    nets = []
    for j in range(n_cells):
        fanout = int(min(MAX_FANOUT, n_cells, 2 + math.floor(rng.pareto(1.0 / rent_p))))
        driver = int(drivers[j])
        k = min(n_cells, max(4 * fanout, 8))
        _, nearest = tree.query(centers[driver], k=k)
        candidates = [int(c) for c in nearest if int(c) != driver]
        sinks = [int(c) for c in rng.choice(candidates, size=fanout - 1, replace=False)]
        members = {driver, *sinks}
        for s in range(len(sinks)):
            if rng.random() < LONG_NET_PROBABILITY:
                replacement = int(rng.integers(n_cells))
                if replacement not in members:
                    members.discard(sinks[s])
                    members.add(replacement)
                    sinks[s] = replacement
        pins = tuple((cid, int(rng.integers(pin_counts[cid]))) for cid in [driver] + sinks)
        nets.append(Net(j, f"n{j}", pins))

    netlist = Netlist(f"synth_s{seed}_n{n_cells}", cells, nets)
    logger.debug(f"Generated {netlist.name}: {n_cells} cells, {len(nets)} nets, {n_rows} rows")
    return netlist, placement


# ============= GRID / LABELS =============


def grid_for_die(die: Sequence[float], tiles_per_side: Optional[int] = None, tile: Optional[float] = None) -> GridSpec:
    """Tile grid covering the die; the last row/column may be clipped by the die edge."""
    x0, y0, x1, y1 = (float(v) for v in die)
    if tile is None:
        tiles_per_side = tiles_per_side or 32
        tile_w = (x1 - x0) / tiles_per_side
        tile_h = (y1 - y0) / tiles_per_side
    else:
        tile_w = tile_h = float(tile)
    if tile_w <= 0 or tile_h <= 0:
        raise GridError(f"tile size must be positive, got {tile_w}x{tile_h}")
    nx = max(1, int(math.ceil((x1 - x0) / tile_w - 1e-9)))
    ny = max(1, int(math.ceil((y1 - y0) / tile_h - 1e-9)))
    return GridSpec(x0, y0, tile_w, tile_h, nx, ny)


def tile_index(grid: GridSpec, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Tile (ix, iy) containing each point.
    A coordinate exactly on a boundary belongs to the higher-index tile;
    points on the far grid edge fall in the last tile.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if not np.all(np.isfinite(points)):
        raise GridError("non-finite point coordinates")
    fx = (points[:, 0] - grid.x0) / grid.tile_w
    fy = (points[:, 1] - grid.y0) / grid.tile_h
    tol = 1e-9
    if np.any(fx < -tol) or np.any(fy < -tol) or np.any(fx > grid.nx + tol) or np.any(fy > grid.ny + tol):
        raise GridError("cell center outside grid")
    ix = np.clip(np.floor(fx).astype(np.int64), 0, grid.nx - 1)
    iy = np.clip(np.floor(fy).astype(np.int64), 0, grid.ny - 1)
    return ix, iy


def _interval_overlap(lo: float, hi: float, edges: np.ndarray) -> np.ndarray:
    return np.clip(np.minimum(hi, edges[1:]) - np.maximum(lo, edges[:-1]), 0.0, None)


def rasterize_box(grid: GridSpec, box: Sequence[float]) -> np.ndarray:
    """(ny, nx) fraction of each tile's area covered by an axis-aligned box."""
    bx0, by0, bx1, by1 = box
    ox = _interval_overlap(bx0, bx1, grid.x_edges())
    oy = _interval_overlap(by0, by1, grid.y_edges())
    return np.outer(oy, ox) / grid.tile_area


def rudy_net_contribution(grid: GridSpec, pins: np.ndarray) -> np.ndarray:
    """
    RUDY map of one net: (w + h) / a spread over the pin bounding box.
    Each bbox dimension is clamped below at one tile width, both in the area
    and in the rasterized box (expanded about its center).
    """
    eps = grid.tile_w
    lo = pins.min(axis=0)
    hi = pins.max(axis=0)
    w, h = float(hi[0] - lo[0]), float(hi[1] - lo[1])
    ew, eh = max(w, eps), max(h, eps)
    density = (w + h) / (ew * eh)
    cx, cy = 0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])
    box = (cx - 0.5 * ew, cy - 0.5 * eh, cx + 0.5 * ew, cy + 0.5 * eh)
    return density * rasterize_box(grid, box)


def rudy_label_grid(netlist: Netlist, placement: Placement, grid: GridSpec) -> LabelGrid:
    """Sum of per-net RUDY contributions over the grid."""
    values = np.zeros((grid.ny, grid.nx), dtype=np.float64)
    for pins in net_pin_coordinates(netlist, placement):
        values += rudy_net_contribution(grid, pins)
    return LabelGrid(grid, values)


def sample_labels_at_cells(labels: LabelGrid, placement: Placement, netlist: Netlist) -> np.ndarray:
    """Per-cell target: the label of the tile containing each cell center."""
    ix, iy = tile_index(labels.grid, cell_centers(netlist, placement))
    return labels.values[iy, ix].copy()


def write_label_grid(labels: LabelGrid) -> str:
    g = labels.grid
    lines = [f"grid {g.x0!r} {g.y0!r} {g.tile_w!r} {g.tile_h!r} {g.nx} {g.ny}"]
    for row in labels.values:
        lines.append(" ".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def read_label_grid(text: str) -> LabelGrid:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise NetlistFormatError("empty label grid file", line=1)
    header = lines[0].split()
    if len(header) != 7 or header[0] != "grid":
        raise NetlistFormatError("expected header 'grid x0 y0 tile_w tile_h nx ny'", line=1)
    try:
        x0, y0, tw, th = (float(v) for v in header[1:5])
        nx, ny = int(header[5]), int(header[6])
    except ValueError as e:
        raise NetlistFormatError(f"bad grid header: {e}", line=1) from e
    grid = GridSpec(x0, y0, tw, th, nx, ny)
    if len(lines) - 1 != ny:
        raise NetlistFormatError(f"expected {ny} value rows, found {len(lines) - 1}")
    values = np.zeros((ny, nx), dtype=np.float64)
    for r, line in enumerate(lines[1:]):
        parts = line.split()
        if len(parts) != nx:
            raise NetlistFormatError(f"expected {nx} values, found {len(parts)}", line=r + 2)
        try:
            values[r] = [float(p) for p in parts]
        except ValueError as e:
            raise NetlistFormatError(f"bad value: {e}", line=r + 2) from e
    return LabelGrid(grid, values)


# ============= DESIGN DIRECTORIES =============


def make_design(
    netlist: Netlist, placement: Placement, name: Optional[str] = None, tiles_per_side: Optional[int] = None, tile: Optional[float] = None
) -> Design:
    grid = grid_for_die(placement.die, tiles_per_side=tiles_per_side, tile=tile)
    return Design(name or netlist.name, netlist, placement, rudy_label_grid(netlist, placement, grid))


def save_design(design: Design, directory: Path):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "netlist.json").write_text(serialize_netlist(design.netlist), encoding="utf-8")
    (directory / "placement.json").write_text(serialize_placement(design.netlist, design.placement), encoding="utf-8")
    (directory / "labels.grid").write_text(write_label_grid(design.labels), encoding="utf-8")


def load_design(directory: Path) -> Design:
    directory = Path(directory)
    netlist = parse_netlist((directory / "netlist.json").read_text(encoding="utf-8"))
    placement = parse_placement((directory / "placement.json").read_text(encoding="utf-8"), netlist)
    labels = read_label_grid((directory / "labels.grid").read_text(encoding="utf-8"))
    return Design(directory.name, netlist, placement, labels)
