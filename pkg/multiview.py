"""
Multi-view graph construction for HybridNet
Builds the topology graph (from nets) and the geometry graph (Delaunay over
cell centers) together with their node feature matrices.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from circuit import (
    GridSpec,
    Netlist,
    Placement,
    cell_centers,
    pin_positions,
    rasterize_box,
    rudy_label_grid,
    tile_index,
)
from delaunay import delaunay_triangulate, triangle_edges
from errors import GeometryError, GridError

logger = logging.getLogger(__name__)

TOPOLOGY_FEATURES = (
    "pin_density",
    "cell_density",
    "net_density",
    "cell_area",
    "pin_count",
    "degree",
    "fanout_sum",
)
JITTER_SCALE = 1e-6
MIN_DISTANCE_SCALE = 1e-9
FEATURE_COARSENING = 4  # density-feature tiles span this many label tiles per side


@dataclass(eq=False)
class Graph:
    n_nodes: int
    edges: np.ndarray  # (E, 2) directed (src, dst)
    edge_attr: Optional[np.ndarray] = None  # (E, A)

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if len(self.edges):
            if self.edges.min() < 0 or self.edges.max() >= self.n_nodes:
                raise GeometryError(f"edge endpoint out of range for {self.n_nodes} nodes")
            if np.any(self.edges[:, 0] == self.edges[:, 1]):
                raise GeometryError("self-loops are not stored in graphs")
        if self.edge_attr is not None:
            self.edge_attr = np.asarray(self.edge_attr, dtype=np.float64).reshape(len(self.edges), -1)

    @property
    def src(self) -> np.ndarray:
        return self.edges[:, 0]

    @property
    def dst(self) -> np.ndarray:
        return self.edges[:, 1]

    @property
    def num_edges(self) -> int:
        return len(self.edges)


@dataclass(eq=False)
class MultiViewGraph:
    topo: Graph
    x_t: np.ndarray  # (N, F_t)
    geo: Graph  # edge_attr = distance
    x_g: np.ndarray  # (N, F_g)
    coords: np.ndarray  # (N, 2) in [0, 1]^2

    @property
    def n_nodes(self) -> int:
        return self.topo.n_nodes

    def permuted(self, order: Sequence[int]) -> "MultiViewGraph":
        """Relabel nodes so that new node i is old node order[i]."""
        order = np.asarray(order, dtype=np.int64)
        inverse = np.empty_like(order)
        inverse[order] = np.arange(len(order))

        def relabel(graph: Graph) -> Graph:
            return Graph(graph.n_nodes, inverse[graph.edges], None if graph.edge_attr is None else graph.edge_attr.copy())

        return MultiViewGraph(relabel(self.topo), self.x_t[order], relabel(self.geo), self.x_g[order], self.coords[order])

    def with_features(self, x_t: np.ndarray, x_g: np.ndarray) -> "MultiViewGraph":
        return MultiViewGraph(self.topo, x_t, self.geo, x_g, self.coords)


def feature_grid(label_grid: GridSpec, coarsening: int = FEATURE_COARSENING) -> GridSpec:
    """
    Grid for the density features: same origin as the label grid, each tile
    covering coarsening x coarsening label tiles. coarsening=1 returns the label grid.
    """
    if coarsening < 1:
        raise GridError(f"feature coarsening must be >= 1, got {coarsening}")
    return GridSpec(
        label_grid.x0,
        label_grid.y0,
        label_grid.tile_w * coarsening,
        label_grid.tile_h * coarsening,
        math.ceil(label_grid.nx / coarsening),
        math.ceil(label_grid.ny / coarsening),
    )


def density_grids(netlist: Netlist, placement: Placement, grid: GridSpec) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Pin, cell and net density maps over the grid.

    Returns:
        Tuple of (pin_density, cell_density, net_density), each (ny, nx)
    """
    pin_density = np.zeros((grid.ny, grid.nx), dtype=np.float64)
    pins, _ = pin_positions(netlist, placement)
    if len(pins):
        ix, iy = tile_index(grid, pins)
        np.add.at(pin_density, (iy, ix), 1.0)

    cell_density = np.zeros((grid.ny, grid.nx), dtype=np.float64)
    sizes = netlist.cell_sizes()
    for (x, y), (w, h) in zip(placement.positions, sizes):
        cell_density += rasterize_box(grid, (x, y, x + w, y + h))

    net_density = rudy_label_grid(netlist, placement, grid).values
    return pin_density, cell_density, net_density


def topology_node_features(
    netlist: Netlist, placement: Placement, grid: GridSpec, grids: Tuple[np.ndarray, np.ndarray, np.ndarray]
) -> np.ndarray:
    """Per-cell handcrafted features, columns as in TOPOLOGY_FEATURES."""
    n = netlist.num_cells
    ix, iy = tile_index(grid, cell_centers(netlist, placement)) if n else (np.zeros(0, int), np.zeros(0, int))
    pin_density, cell_density, net_density = grids

    degree = np.zeros(n, dtype=np.float64)
    fanout_sum = np.zeros(n, dtype=np.float64)
    for net in netlist.nets:
        for cid in dict.fromkeys(cid for cid, _ in net.pins):
            degree[cid] += 1
            fanout_sum[cid] += len(net.pins)

    x_t = np.column_stack(
        [
            pin_density[iy, ix],
            cell_density[iy, ix],
            net_density[iy, ix],
            np.array([c.area for c in netlist.cells], dtype=np.float64),
            np.array([len(c.pin_offsets) for c in netlist.cells], dtype=np.float64),
            degree,
            fanout_sum,
        ]
    )
    return x_t.reshape(n, len(TOPOLOGY_FEATURES))


def build_topology_edges(netlist: Netlist, clique_cap: int = 16) -> Graph:
    """
    Expand every net into directed cell-cell edges.
    Nets with at most clique_cap pins become cliques; larger nets become stars
    around their first-listed cell (the driver).
    """
    if clique_cap < 2:
        raise ValueError(f"clique_cap must be >= 2, got {clique_cap}")
    pairs: List[Tuple[int, int]] = []
    for net in netlist.nets:
        cells = list(dict.fromkeys(cid for cid, _ in net.pins))
        if len(net.pins) <= clique_cap:
            pairs.extend(itertools.permutations(cells, 2))
        else:
            driver = cells[0]
            for cid in cells[1:]:
                pairs.append((driver, cid))
                pairs.append((cid, driver))
    edges = np.unique(np.asarray(pairs, dtype=np.int64).reshape(-1, 2), axis=0)
    return Graph(netlist.num_cells, edges)


def _jitter(cell_id: int, magnitude: float) -> np.ndarray:
    return np.random.default_rng(cell_id).uniform(-1.0, 1.0, 2) * magnitude


def geometry_points(netlist: Netlist, placement: Placement) -> np.ndarray:
    """Cell centers with every repeated center after the first jittered (deterministically per cell id)."""
    centers = cell_centers(netlist, placement)
    points = centers.copy()
    _, first, inverse = np.unique(centers, axis=0, return_index=True, return_inverse=True)
    duplicates = [i for i in range(len(centers)) if first[inverse.reshape(-1)[i]] != i]
    for i in duplicates:
        points[i] += _jitter(i, JITTER_SCALE * placement.die_width)
    if duplicates:
        logger.warning(f"Jittered {len(duplicates)} coincident cell centers in {netlist.name}")
    return points


def build_geometry_graph(netlist: Netlist, placement: Placement) -> Graph:
    """
    Delaunay graph over cell centers with Euclidean distance edge attributes.
    Coincident centers are jittered before triangulation; distances always
    come from the original centers.
    """
    n = netlist.num_cells
    if n < 3:
        raise GeometryError(f"geometry graph needs at least 3 cells, got {n}")
    centers = cell_centers(netlist, placement)
    magnitude = JITTER_SCALE * placement.die_width
    points = geometry_points(netlist, placement)

    try:
        triangles = delaunay_triangulate(points)
    except GeometryError:
        logger.warning(f"Degenerate cell centers in {netlist.name}; jittering all points")
        points = centers + np.array([_jitter(i, magnitude) for i in range(n)])
        triangles = delaunay_triangulate(points)

    undirected = np.asarray(triangle_edges(triangles), dtype=np.int64).reshape(-1, 2)
    edges = np.concatenate([undirected, undirected[:, ::-1]])
    edges = edges[np.lexsort((edges[:, 1], edges[:, 0]))]
    dist = np.linalg.norm(centers[edges[:, 0]] - centers[edges[:, 1]], axis=1)
    dist = np.maximum(dist, MIN_DISTANCE_SCALE * placement.die_width)
    return Graph(n, edges, dist[:, None])


def normalized_coords(netlist: Netlist, placement: Placement) -> np.ndarray:
    x0, y0, _, _ = placement.die
    coords = (cell_centers(netlist, placement) - (x0, y0)) / (placement.die_width, placement.die_height)
    return np.clip(coords, 0.0, 1.0)


def assemble_multiview(netlist: Netlist, placement: Placement, grid: GridSpec, clique_cap: int = 16) -> MultiViewGraph:
    """Both graph views plus X_t and X_g = [X_t | normalized coords]."""
    grids = density_grids(netlist, placement, grid)
    x_t = topology_node_features(netlist, placement, grid, grids)
    coords = normalized_coords(netlist, placement)
    topo = build_topology_edges(netlist, clique_cap)
    geo = build_geometry_graph(netlist, placement)
    x_g = np.hstack([x_t, coords])
    logger.debug(f"Built multi-view graph for {netlist.name}: N={netlist.num_cells}, |E_t|={topo.num_edges}, |E_g|={geo.num_edges}")
    return MultiViewGraph(topo, x_t, geo, x_g, coords)


def write_graph_text(graph: Graph) -> str:
    """Debug export: one 'edge src dst [dist]' line per edge."""
    lines = []
    for k, (s, d) in enumerate(graph.edges):
        if graph.edge_attr is None:
            lines.append(f"edge {s} {d}")
        else:
            lines.append(f"edge {s} {d} {float(graph.edge_attr[k, 0])!r}")
    return "\n".join(lines) + ("\n" if lines else "")


def write_matrix_text(matrix: np.ndarray) -> str:
    """Debug export of a feature matrix: header 'mat N F' then one row per line."""
    matrix = np.asarray(matrix, dtype=np.float64)
    n, f = matrix.shape
    lines = [f"mat {n} {f}"]
    lines.extend(" ".join(repr(float(v)) for v in row) for row in matrix)
    return "\n".join(lines) + "\n"
