"""
Shared fixtures for the HybridNet test suite.
"""

import os

import numpy as np
import pytest

from circuit import Cell, Net, Netlist, Placement, generate_synthetic, make_design
from hybridnet import HybridNetConfig
from multiview import Graph, MultiViewGraph


def pytest_collection_modifyitems(config, items):
    if os.getenv("HYBRIDNET_RUN_SLOW") == "1":
        return
    skip_slow = pytest.mark.skip(reason="set HYBRIDNET_RUN_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def make_netlist(cell_specs, nets, name="toy"):
    """cell_specs: list of (width, height, n_pins); nets: list of [(cell_id, pin), ...]."""
    cells = []
    for i, (w, h, n_pins) in enumerate(cell_specs):
        offsets = tuple((w * (k + 1) / (n_pins + 1), h / 2) for k in range(n_pins))
        cells.append(Cell(i, f"c{i}", float(w), float(h), offsets))
    return Netlist(name, cells, [Net(j, f"n{j}", tuple(pins)) for j, pins in enumerate(nets)])


@pytest.fixture
def two_cell_design():
    """Two unit cells joined by one 2-pin net on a 4x4 die."""
    netlist = make_netlist([(1.0, 1.0, 2), (1.0, 1.0, 2)], [[(0, 0), (1, 0)]])
    placement = Placement(np.array([[0.0, 0.0], [2.0, 2.0]]), (0.0, 0.0, 4.0, 4.0))
    return netlist, placement


@pytest.fixture(scope="session")
def small_design():
    netlist, placement = generate_synthetic(seed=3, n_cells=60, rent_p=0.6, die_side=14.0)
    return make_design(netlist, placement, name="small", tiles_per_side=7)


@pytest.fixture
def tiny_config():
    return HybridNetConfig(l=1, d=4, heads=2, K=4, cutoff=2.0, fourier_bands=2, out_mlp_width=4)


def random_multiview(n, seed, f_t=7, extra_edges=4):
    """Random connected-ish graph pair with features, for model-level tests."""
    rng = np.random.default_rng(seed)
    ring = [(i, (i + 1) % n) for i in range(n)]
    chords = [tuple(rng.choice(n, 2, replace=False)) for _ in range(extra_edges)]
    pairs = {(int(a), int(b)) for a, b in ring + chords}
    pairs |= {(b, a) for a, b in pairs}
    topo = Graph(n, np.array(sorted(pairs)))

    coords = rng.uniform(0.0, 1.0, (n, 2))
    geo_pairs = {(i, j) for i in range(n) for j in range(n) if i != j and np.linalg.norm(coords[i] - coords[j]) < 0.6}
    geo_edges = np.array(sorted(geo_pairs), dtype=np.int64).reshape(-1, 2)
    dist = np.linalg.norm(coords[geo_edges[:, 0]] - coords[geo_edges[:, 1]], axis=1) if len(geo_edges) else np.zeros(0)
    geo = Graph(n, geo_edges, dist[:, None])

    x_t = rng.normal(size=(n, f_t))
    x_g = np.hstack([x_t, coords])
    return MultiViewGraph(topo, x_t, geo, x_g, coords)


@pytest.fixture
def toy_graph():
    return random_multiview(6, seed=11)
