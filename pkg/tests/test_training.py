"""
Tests for loss, optimizer, standardization and the training loop.
"""

import numpy as np
import pytest

from autodiff import Tensor, precision
from errors import TrainingError
from hybridnet import HybridNetConfig, HybridNetParams, init_params
from multiview import TOPOLOGY_FEATURES
from training import (
    DesignSample,
    OptimizerState,
    Standardizer,
    TrainConfig,
    adamw_step,
    clip_grad_norm,
    destandardize,
    mse_loss,
    prepare_sample,
    standardize_targets,
    train,
)


def single_param(values, grad):
    with precision(np.float64):
        t = Tensor(values, requires_grad=True)
    t.grad = np.asarray(grad, dtype=np.float64)
    return HybridNetParams({"w": t})


@pytest.fixture(scope="module")
def small_sample(small_design):
    sample = prepare_sample(small_design)
    return Standardizer.fit([sample.graph]).apply(sample)


@pytest.fixture
def small_model(small_sample):
    return HybridNetConfig(l=1, d=8, heads=2, K=4, fourier_bands=2, out_mlp_width=8).resolve_cutoff(small_sample.grid.tile_w)


class TestMseLoss:
    def test_equal_is_zero(self):
        assert mse_loss(Tensor([1.0, 2.0]), np.array([1.0, 2.0])).item() == 0.0

    def test_example(self):
        assert mse_loss(Tensor([0.0, 0.0]), np.array([1.0, 3.0])).item() == pytest.approx(5.0)

    def test_matches_loop(self):
        rng = np.random.default_rng(0)
        pred, target = rng.normal(size=20), rng.normal(size=20)
        with precision(np.float64):
            loss = mse_loss(Tensor(pred), target).item()
        assert loss == pytest.approx(sum((p - t) ** 2 for p, t in zip(pred, target)) / 20, rel=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(TrainingError, match="shape"):
            mse_loss(Tensor([1.0, 2.0]), np.array([1.0]))


class TestAdamW:
    def test_first_step_on_scalar(self):
        params = single_param([0.0], [1.0])
        adamw_step(params, OptimizerState.zeros_like(params), TrainConfig())
        assert params["w"].data[0] == pytest.approx(-2e-4 / (1.0 + 1e-8), abs=1e-12)

    def test_zero_gradient_is_noop(self):
        params = single_param([0.0, 0.0], [0.0, 0.0])
        adamw_step(params, OptimizerState.zeros_like(params), TrainConfig())
        np.testing.assert_array_equal(params["w"].data, [0.0, 0.0])

    def test_zero_gradient_no_decay_keeps_weights(self):
        params = single_param([0.3, -1.2, 2.0], [0.0, 0.0, 0.0])
        adamw_step(params, OptimizerState.zeros_like(params), TrainConfig(weight_decay=0.0))
        np.testing.assert_array_equal(params["w"].data, [0.3, -1.2, 2.0])

    def test_matches_adam_without_decay(self):
        config = TrainConfig(lr=1e-2, weight_decay=0.0)
        params = single_param([0.5, -0.5, 1.0], [0.0, 0.0, 0.0])
        state = OptimizerState.zeros_like(params)
        theta = np.array([0.5, -0.5, 1.0])
        m = np.zeros(3)
        v = np.zeros(3)
        grads = [np.array([0.1, -0.2, 0.3]), np.array([0.4, 0.0, -0.1]), np.array([-0.3, 0.2, 0.2])]
        for t, g in enumerate(grads, start=1):
            params["w"].grad = g.copy()
            adamw_step(params, state, config)
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            theta = theta - 1e-2 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        np.testing.assert_allclose(params["w"].data, theta, rtol=1e-12, atol=1e-15)
        assert state.t == 3

    def test_decay_skips_biases(self):
        with precision(np.float64):
            params = HybridNetParams({"out.W2": Tensor([1.0], requires_grad=True), "out.b2": Tensor([1.0], requires_grad=True)})
        for t in params.tensors.values():
            t.grad = np.zeros(1)
        adamw_step(params, OptimizerState.zeros_like(params), TrainConfig(lr=0.1, weight_decay=0.5))
        assert params["out.W2"].data[0] == pytest.approx(0.95)
        assert params["out.b2"].data[0] == 1.0

    def test_missing_gradient(self):
        params = single_param([1.0], [1.0])
        params["w"].grad = None
        with pytest.raises(TrainingError, match="missing gradient"):
            adamw_step(params, OptimizerState.zeros_like(params), TrainConfig())


class TestClipGradNorm:
    def test_clips_to_max_norm(self):
        params = single_param([0.0, 0.0], [3.0, 4.0])
        norm = clip_grad_norm(params, ["w"], 1.0)
        assert norm == pytest.approx(5.0)
        assert np.linalg.norm(params["w"].grad) <= 1.0 + 1e-6

    def test_small_gradient_untouched(self):
        params = single_param([0.0, 0.0], [0.3, 0.4])
        clip_grad_norm(params, ["w"], 1.0)
        np.testing.assert_array_equal(params["w"].grad, [0.3, 0.4])


class TestConfigs:
    def test_zero_epochs_rejected(self):
        with pytest.raises(ValueError, match="epochs must be >= 1"):
            TrainConfig(epochs=0).validate()

    def test_round_trip(self):
        config = TrainConfig(epochs=3, betas=(0.8, 0.99))
        assert TrainConfig.from_dict(config.to_dict()) == config


class TestStandardization:
    def test_targets_zero_mean_unit_std(self):
        out = standardize_targets([1.0, 2.0, 3.0, 6.0])
        assert out.mean() == pytest.approx(0.0, abs=1e-12)
        assert out.std() == pytest.approx(1.0)

    def test_constant_targets(self):
        np.testing.assert_array_equal(standardize_targets([2.0, 2.0]), [0.0, 0.0])

    def test_destandardize_restores_targets(self):
        targets = np.array([1.0, 2.0, 3.0, 6.0])
        np.testing.assert_allclose(destandardize(standardize_targets(targets), targets), targets, rtol=1e-12)

    def test_destandardize_constant_reference(self):
        np.testing.assert_array_equal(destandardize([0.5, -1.0], [2.0, 2.0]), [2.0, 2.0])

    def test_features_and_coords(self, small_design, tmp_path):
        sample = prepare_sample(small_design)
        standardizer = Standardizer.fit([sample.graph])
        graph = standardizer.transform(sample.graph)
        np.testing.assert_allclose(graph.x_t.mean(axis=0), 0.0, atol=1e-9)
        np.testing.assert_array_equal(graph.x_g[:, -2:], sample.graph.coords)
        standardizer.save(tmp_path / "std.json")
        loaded = Standardizer.load(tmp_path / "std.json")
        np.testing.assert_array_equal(loaded.mean, standardizer.mean)


class TestPrepareSample:
    def test_net_density_is_not_the_target(self, small_design):
        sample = prepare_sample(small_design)
        column = sample.graph.x_t[:, TOPOLOGY_FEATURES.index("net_density")]
        assert not np.allclose(column, sample.targets)
        assert sample.grid == small_design.labels.grid

    def test_unit_coarsening_restates_target(self, small_design):
        sample = prepare_sample(small_design, coarsening=1)
        column = sample.graph.x_t[:, TOPOLOGY_FEATURES.index("net_density")]
        np.testing.assert_allclose(column, sample.targets)


class TestTrain:
    def test_deterministic_per_seed(self, small_sample, small_model):
        config = TrainConfig(epochs=3, lr=1e-3)
        params_a, curve_a = train([small_sample], small_model, config)
        params_b, curve_b = train([small_sample], small_model, config)
        assert curve_a == curve_b
        for name in params_a:
            np.testing.assert_array_equal(params_a[name].data, params_b[name].data)

    def test_overfits_single_design(self, small_sample, small_model):
        _, curve = train([small_sample], small_model, TrainConfig(epochs=100, lr=5e-3, log_every=100))
        assert len(curve) == 100
        assert curve[-1] <= 0.5 * curve[0]

    def test_topo_only_freezes_geometric_parameters(self, small_sample, small_model):
        initial = init_params(small_model, TrainConfig().seed)
        params, _ = train([small_sample], small_model, TrainConfig(epochs=2, lr=1e-2), mode="topo_only")
        for name in params:
            same = np.array_equal(params[name].data, initial[name].data)
            assert same == name.startswith(("cf.", "pe.", "fuse_g.")), name

    def test_epoch_callback(self, small_sample, small_model):
        seen = []
        train([small_sample], small_model, TrainConfig(epochs=2), on_epoch_end=lambda epoch, loss, params: seen.append(epoch))
        assert seen == [1, 2]

    def test_non_finite_loss_reports_location(self, small_sample, small_model):
        bad = DesignSample("blowup", small_sample.graph, np.full(small_sample.targets.shape, 1e30), small_sample.grid, small_sample.centers)
        with pytest.raises(TrainingError, match=r"epoch 1, design blowup"):
            train([bad], small_model, TrainConfig(epochs=1))

    def test_no_designs(self, small_model):
        with pytest.raises(TrainingError, match="no training designs"):
            train([], small_model, TrainConfig(epochs=1))
