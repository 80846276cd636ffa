"""
Tests for the HybridNet layers, forward pass and gradients.
"""

from dataclasses import replace

import numpy as np
import pytest

from autodiff import Tensor, grad_check, precision
from circuit import generate_synthetic, grid_for_die
from errors import TensorError
from hybridnet import (
    MODES,
    HybridNetConfig,
    active_parameter_names,
    cfconv_layer,
    forward,
    fourier_features,
    fusion_head,
    gat_layer,
    init_params,
    parameter_shapes,
    positional_encoding,
    rbf_expand,
)
from multiview import Graph, assemble_multiview
from tests.conftest import random_multiview
from training import mse_loss

LN2 = np.log(2.0)


def ssp(x):
    return np.logaddexp(0.0, x) - LN2


def leaky(x, slope=0.2):
    return np.where(x > 0, x, slope * x)


@pytest.fixture(autouse=True)
def double_precision():
    with precision(np.float64):
        yield


@pytest.fixture
def tiny_params(tiny_config):
    return init_params(tiny_config, seed=0)


def dense_gat(h, edges, params, layer, config, last):
    """Reference attention with an explicit N x N mask."""
    n = h.shape[0]
    p = f"gat.{layer}"
    z = h @ params[f"{p}.W"].data
    mask = np.eye(n, dtype=bool)
    for s, d in edges:
        mask[s, d] = True
    dh = config.head_dim
    out = np.zeros((n, config.d))
    for k in range(config.heads):
        zk = z[:, k * dh : (k + 1) * dh]
        s_src = zk @ params[f"{p}.a_src"].data[k]
        s_dst = zk @ params[f"{p}.a_dst"].data[k]
        for j in range(n):
            incoming = np.nonzero(mask[:, j])[0]
            e = leaky(s_src[incoming] + s_dst[j], config.leaky_slope)
            alpha = np.exp(e - e.max())
            alpha /= alpha.sum()
            out[j, k * dh : (k + 1) * dh] = alpha @ zk[incoming]
    out = out + params[f"{p}.b"].data
    return out if last else leaky(out, config.leaky_slope)


def loop_cfconv(h, edges, rbf, params, layer, pe=None):
    """Reference continuous-filter convolution, one edge at a time."""
    p = f"cf.{layer}"
    m = h @ params[f"{p}.W_in"].data + params[f"{p}.b_in"].data
    if pe is not None:
        m = m + pe
    agg = np.zeros((h.shape[0], m.shape[1]))
    for (s, d), r in zip(edges, rbf):
        hidden = ssp(r @ params[f"{p}.filter.W1"].data + params[f"{p}.filter.b1"].data)
        filt = hidden @ params[f"{p}.filter.W2"].data + params[f"{p}.filter.b2"].data
        agg[d] += m[s] * filt
    skip = h @ params[f"{p}.W_res"].data if f"{p}.W_res" in params.tensors else h
    return ssp(agg @ params[f"{p}.W_out"].data + params[f"{p}.b_out"].data + skip)


class TestInitParams:
    def test_deterministic_per_seed(self, tiny_config):
        a = init_params(tiny_config, seed=3)
        b = init_params(tiny_config, seed=3)
        c = init_params(tiny_config, seed=4)
        for name in a:
            np.testing.assert_array_equal(a[name].data, b[name].data)
        assert any(not np.array_equal(a[name].data, c[name].data) for name in a)

    def test_default_shapes(self):
        shapes = parameter_shapes(HybridNetConfig(cutoff=1.0))
        assert shapes["gat.0.W"] == (7, 64)
        assert shapes["gat.1.W"] == (64, 64)
        assert shapes["gat.0.a_src"] == (4, 16)
        assert shapes["cf.0.W_in"] == (9, 64)
        assert shapes["pe.W1"] == (18, 64)
        assert shapes["out.W1"] == (128, 64)
        assert shapes["out.W2"] == (64, 1)

    def test_glorot_bounds_and_zero_biases(self, tiny_config, tiny_params):
        for name, t in tiny_params.items():
            if t.ndim == 1:
                assert not t.data.any(), name
            else:
                s = np.sqrt(6.0 / (t.shape[0] + t.shape[1]))
                assert np.all(np.abs(t.data) <= s), name

    def test_invalid_config(self):
        with pytest.raises(ValueError, match="divisible by heads"):
            init_params(HybridNetConfig(d=6, heads=4), seed=0)

    def test_active_names_by_mode(self, tiny_params):
        topo = active_parameter_names(tiny_params, "topo_only")
        geo = active_parameter_names(tiny_params, "geo_only")
        assert all(not n.startswith(("cf.", "pe.", "fuse_g.")) for n in topo)
        assert all(not n.startswith(("gat.", "fuse_t.")) for n in geo)
        assert set(topo) & set(geo) == {"out.W1", "out.b1", "out.W2", "out.b2"}
        assert active_parameter_names(tiny_params, "full") == tiny_params.names()


class TestGatLayer:
    def test_isolated_node_keeps_own_embedding(self, tiny_config, tiny_params):
        h = np.random.default_rng(0).normal(size=(3, 7))
        out = gat_layer(Tensor(h), Graph(3, np.zeros((0, 2))), tiny_params, 0, tiny_config, last=True)
        np.testing.assert_allclose(out.data, h @ tiny_params["gat.0.W"].data, atol=1e-12)

    def test_identical_neighbors_get_equal_attention(self, tiny_config, tiny_params):
        h = np.random.default_rng(1).normal(size=(3, 7))
        h[2] = h[1]
        edges = np.array([[1, 0], [2, 0]])
        out = gat_layer(Tensor(h), Graph(3, edges), tiny_params, 0, tiny_config, last=True)
        np.testing.assert_allclose(out.data, dense_gat(h, edges, tiny_params, 0, tiny_config, True), atol=1e-12)
        np.testing.assert_allclose(out.data[1], out.data[2], atol=1e-12)

    def test_matches_dense_reference(self, tiny_config, tiny_params, toy_graph):
        for last in (False, True):
            out = gat_layer(Tensor(toy_graph.x_t), toy_graph.topo, tiny_params, 0, tiny_config, last=last)
            expected = dense_gat(toy_graph.x_t, toy_graph.topo.edges, tiny_params, 0, tiny_config, last)
            np.testing.assert_allclose(out.data, expected, atol=1e-10)


class TestRbfExpand:
    def test_endpoints(self, tiny_config):
        rbf = rbf_expand(np.array([0.0, tiny_config.cutoff]), tiny_config).data
        assert rbf[0, 0] == pytest.approx(1.0)
        assert rbf[1, -1] == pytest.approx(1.0)

    def test_three_centers(self):
        config = HybridNetConfig(K=3, cutoff=2.0)
        np.testing.assert_allclose(rbf_expand(np.array([1.0]), config).data[0], [np.exp(-1), 1.0, np.exp(-1)])

    def test_no_dead_zones(self):
        config = HybridNetConfig(K=16, cutoff=5.0)
        rbf = rbf_expand(np.linspace(0.0, 5.0, 1001), config).data
        assert np.all(rbf.max(axis=1) >= np.exp(-1))

    def test_beyond_cutoff_is_clipped(self, tiny_config):
        rbf = rbf_expand(np.array([tiny_config.cutoff, 10 * tiny_config.cutoff]), tiny_config).data
        np.testing.assert_array_equal(rbf[0], rbf[1])

    def test_unresolved_cutoff(self):
        with pytest.raises(TensorError, match="cutoff"):
            rbf_expand(np.array([1.0]), HybridNetConfig())


class TestCfconvLayer:
    def test_node_without_neighbors_keeps_skip(self, tiny_config, tiny_params):
        h = np.random.default_rng(2).normal(size=(3, 9))
        geo = Graph(3, np.array([[0, 1], [1, 0]]), np.array([[1.0], [1.0]]))
        out = cfconv_layer(Tensor(h), geo, rbf_expand(geo.edge_attr[:, 0], tiny_config), tiny_params, 0, tiny_config)
        np.testing.assert_allclose(out.data[2], ssp(h[2] @ tiny_params["cf.0.W_res"].data), atol=1e-12)

    def test_all_ones_filter_sums_neighbors(self, tiny_config, tiny_params):
        tiny_params["cf.0.filter.W2"].data[:] = 0.0
        tiny_params["cf.0.filter.b2"].data[:] = 1.0
        h = np.random.default_rng(3).normal(size=(4, 9))
        edges = np.array([[0, 1], [2, 1], [3, 0], [1, 3]])
        geo = Graph(4, edges, np.ones((4, 1)))
        out = cfconv_layer(Tensor(h), geo, rbf_expand(geo.edge_attr[:, 0], tiny_config), tiny_params, 0, tiny_config)

        m = h @ tiny_params["cf.0.W_in"].data
        agg = np.zeros_like(m)
        for s, d in edges:
            agg[d] += m[s]
        expected = ssp(agg @ tiny_params["cf.0.W_out"].data + h @ tiny_params["cf.0.W_res"].data)
        np.testing.assert_allclose(out.data, expected, atol=1e-12)

    def test_matches_loop_reference(self, tiny_config, tiny_params, toy_graph):
        rng = np.random.default_rng(4)
        for name in ("cf.0.b_in", "cf.0.filter.b1", "cf.0.filter.b2", "cf.0.b_out"):
            tiny_params[name].data[:] = rng.normal(size=tiny_params[name].shape)
        rbf = rbf_expand(toy_graph.geo.edge_attr[:, 0], tiny_config)
        pe = rng.normal(size=(toy_graph.n_nodes, tiny_config.d))
        out = cfconv_layer(Tensor(toy_graph.x_g), toy_graph.geo, rbf, tiny_params, 0, tiny_config, pe=Tensor(pe))
        expected = loop_cfconv(toy_graph.x_g, toy_graph.geo.edges, rbf.data, tiny_params, 0, pe=pe)
        np.testing.assert_allclose(out.data, expected, atol=1e-10)

    def test_rbf_rows_must_match_edges(self, tiny_config, tiny_params, toy_graph):
        with pytest.raises(TensorError, match="rbf rows"):
            cfconv_layer(Tensor(toy_graph.x_g), toy_graph.geo, Tensor(np.ones((1, 4))), tiny_params, 0, tiny_config)


class TestPositionalEncoding:
    def test_fourier_features_at_origin(self):
        np.testing.assert_allclose(fourier_features(np.zeros((1, 2)), 2)[0], [0, 0, 0, 1, 0, 1, 0, 1, 0, 1], atol=1e-15)

    def test_raw_coords_switch(self):
        assert fourier_features(np.full((3, 2), 0.5), 4, enabled=False).shape == (3, 2)

    def test_identical_coords_identical_rows(self, tiny_config, tiny_params):
        coords = np.array([[0.3, 0.7], [0.3, 0.7], [0.9, 0.1]])
        pe = positional_encoding(coords, tiny_params, tiny_config).data
        np.testing.assert_array_equal(pe[0], pe[1])

    def test_matches_matrix_form(self, tiny_config, tiny_params):
        rng = np.random.default_rng(5)
        tiny_params["pe.b1"].data[:] = rng.normal(size=tiny_config.d)
        coords = rng.uniform(size=(6, 2))
        f = fourier_features(coords, tiny_config.fourier_bands)
        hidden = leaky(f @ tiny_params["pe.W1"].data + tiny_params["pe.b1"].data)
        expected = hidden @ tiny_params["pe.W2"].data + tiny_params["pe.b2"].data
        np.testing.assert_allclose(positional_encoding(coords, tiny_params, tiny_config).data, expected, atol=1e-12)

    def test_coords_out_of_range(self, tiny_config, tiny_params):
        with pytest.raises(TensorError, match=r"\[0, 1\]"):
            positional_encoding(np.array([[0.5, 1.1]]), tiny_params, tiny_config)


class TestFusionHead:
    def test_zero_output_weights_give_bias(self, tiny_config, tiny_params):
        tiny_params["out.W2"].data[:] = 0.0
        tiny_params["out.b2"].data[:] = 0.75
        rng = np.random.default_rng(6)
        y = fusion_head(
            Tensor(rng.normal(size=(5, 4))), Tensor(rng.normal(size=(5, 4))), Tensor(rng.normal(size=(5, 7))), Tensor(rng.normal(size=(5, 9))), tiny_params, tiny_config
        )
        np.testing.assert_array_equal(y.data, np.full(5, 0.75))

    def test_single_node(self, tiny_config, tiny_params):
        y = fusion_head(Tensor(np.ones((1, 4))), Tensor(np.ones((1, 4))), Tensor(np.ones((1, 7))), Tensor(np.ones((1, 9))), tiny_params, tiny_config)
        assert y.shape == (1,)

    def test_matches_recomputation(self, tiny_config, tiny_params):
        rng = np.random.default_rng(7)
        h_t, h_g, x_t, x_g = rng.normal(size=(5, 4)), rng.normal(size=(5, 4)), rng.normal(size=(5, 7)), rng.normal(size=(5, 9))
        p = {name: t.data for name, t in tiny_params.items()}
        z_t = leaky(np.hstack([h_t, x_t]) @ p["fuse_t.W"] + p["fuse_t.b"])
        z_g = leaky(np.hstack([h_g, x_g]) @ p["fuse_g.W"] + p["fuse_g.b"])
        expected = (leaky(np.hstack([z_t, z_g]) @ p["out.W1"] + p["out.b1"]) @ p["out.W2"] + p["out.b2"])[:, 0]
        y = fusion_head(Tensor(h_t), Tensor(h_g), Tensor(x_t), Tensor(x_g), tiny_params, tiny_config)
        np.testing.assert_allclose(y.data, expected, atol=1e-12)

    def test_row_mismatch(self, tiny_config, tiny_params):
        with pytest.raises(TensorError, match="rows"):
            fusion_head(None, None, Tensor(np.ones((2, 7))), Tensor(np.ones((3, 9))), tiny_params, tiny_config)


class TestForward:
    @pytest.mark.parametrize("mode", MODES)
    def test_output_length(self, tiny_config, tiny_params, toy_graph, mode):
        assert forward(toy_graph, tiny_params, tiny_config, mode).shape == (toy_graph.n_nodes,)

    def test_raw_coordinate_encoding(self, tiny_config, toy_graph):
        config = replace(tiny_config, pe_fourier=False)
        params = init_params(config, seed=0)
        assert params["pe.W1"].shape == (2, config.d)
        assert np.all(np.isfinite(forward(toy_graph, params, config).data))

    def test_unknown_mode(self, tiny_config, tiny_params, toy_graph):
        with pytest.raises(ValueError, match="unknown mode"):
            forward(toy_graph, tiny_params, tiny_config, "both")

    def test_feature_width_mismatch(self, tiny_config, tiny_params):
        graph = random_multiview(5, seed=1, f_t=6)
        with pytest.raises(TensorError, match="feature widths"):
            forward(graph, tiny_params, tiny_config)

    def test_permutation_equivariance(self):
        config = HybridNetConfig(l=2, d=8, heads=2, K=6, cutoff=0.6, fourier_bands=2, out_mlp_width=8)
        params = init_params(config, seed=1)
        graph = random_multiview(12, seed=4, extra_edges=10)
        order = np.random.default_rng(9).permutation(12)
        for mode in MODES:
            base = forward(graph, params, config, mode).data
            permuted = forward(graph.permuted(order), params, config, mode).data
            np.testing.assert_allclose(permuted, base[order], atol=1e-5)

    def test_topo_only_ignores_geometry(self, tiny_config, tiny_params, toy_graph):
        base = forward(toy_graph, tiny_params, tiny_config, "topo_only").data
        moved = random_multiview(6, seed=99)
        mixed = type(toy_graph)(toy_graph.topo, toy_graph.x_t, moved.geo, np.hstack([toy_graph.x_t, moved.coords]), moved.coords)
        np.testing.assert_array_equal(forward(mixed, tiny_params, tiny_config, "topo_only").data, base)

    def test_geo_only_ignores_nets(self, tiny_config, tiny_params, toy_graph):
        base = forward(toy_graph, tiny_params, tiny_config, "geo_only").data
        rewired = type(toy_graph)(Graph(6, np.array([[0, 5], [5, 0]])), toy_graph.x_t, toy_graph.geo, toy_graph.x_g, toy_graph.coords)
        np.testing.assert_array_equal(forward(rewired, tiny_params, tiny_config, "geo_only").data, base)

    def test_ablation_differs_from_full(self, tiny_config, tiny_params, toy_graph):
        y = forward(toy_graph, tiny_params, tiny_config, "geo_only").data
        assert np.all(np.isfinite(y))
        assert not np.allclose(y, forward(toy_graph, tiny_params, tiny_config, "full").data)


class TestGradients:
    def test_every_parameter_block(self, tiny_config, toy_graph):
        params = init_params(tiny_config, seed=5)
        rng = np.random.default_rng(8)
        for name, t in params.items():
            if t.ndim == 1:
                t.data[:] = rng.normal(scale=0.1, size=t.shape)
        target = rng.normal(size=toy_graph.n_nodes)

        def loss(_):
            return mse_loss(forward(toy_graph, params, tiny_config), target)

        for name in params:
            err = grad_check(loss, params[name], eps=1e-5)
            assert err <= 1e-4, f"{name}: {err}"



class TestEquivarianceOnDesigns:
    def test_generated_designs(self):
        config = HybridNetConfig(l=2, d=8, heads=2, K=6, cutoff=4.0, fourier_bands=2, out_mlp_width=8)
        params = init_params(config, seed=0)
        rng = np.random.default_rng(21)
        for seed in range(10):
            n = int(rng.integers(20, 201))
            netlist, placement = generate_synthetic(seed=seed, n_cells=n, rent_p=0.6, die_side=float(max(8, np.ceil(np.sqrt(n * 1.4 / 0.6)))))
            graph = assemble_multiview(netlist, placement, grid_for_die(placement.die, tiles_per_side=8))
            order = rng.permutation(n)
            for mode in MODES:
                base = forward(graph, params, config, mode).data
                permuted = forward(graph.permuted(order), params, config, mode).data
                np.testing.assert_allclose(permuted, base[order], atol=1e-5)
