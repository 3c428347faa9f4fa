"""Tests for the TDNN and HLTDNN classifiers."""

import numpy as np
import pytest
from pydantic import ValidationError

from sonar_histnet.autodiff import Tape, Tensor, softmax_cross_entropy
from sonar_histnet.config import ModelConfig
from sonar_histnet.errors import ShapeError
from sonar_histnet.models import build_hltdnn, build_model, build_tdnn, embed, forward
from sonar_histnet.types import ModelKind

from .conftest import numeric_grad


def conv_params(cin, cout, k=3):
    return cin * cout * k * k + cout


def batch(rng, n, cfg):
    return rng.normal(size=(n, 1, cfg.in_freq, cfg.in_time)).astype(np.float32)


class TestShapes:
    def test_stft_block4_map(self, rng):
        model = build_tdnn(ModelConfig(), rng)
        z = model.trunk(Tensor(np.zeros((1, 1, 48, 48), dtype=np.float32)))
        assert z.shape == (1, 128, 48, 3)

    def test_mfcc_block4_map(self, rng):
        model = build_tdnn(ModelConfig(in_freq=16), rng)
        z = model.trunk(Tensor(np.zeros((1, 1, 16, 48), dtype=np.float32)))
        assert z.shape == (1, 128, 16, 3)

    def test_logits_shape(self, rng, tiny_model_cfg):
        for kind in ModelKind:
            model = build_model(kind, tiny_model_cfg, rng)
            assert forward(model, batch(rng, 3, tiny_model_cfg)).shape == (3, 4)

    def test_embedding_dims_default(self, rng):
        cfg = ModelConfig()
        assert build_tdnn(cfg, rng).embed_dim == 128
        assert build_hltdnn(cfg, rng).embed_dim == 128 + 16 * 128

    def test_windowed_histogram_descriptor(self, rng, tiny_model_cfg):
        cfg = tiny_model_cfg.model_copy(update={"hist_window": (4, 1), "hist_stride": (2, 1)})
        model = build_hltdnn(cfg, rng)
        e = embed(model, batch(rng, 2, cfg))
        assert cfg.hist_grid == (3, 1)
        assert e.shape == (2, cfg.embed_dim + cfg.bins * 4 * 3)
        assert e.shape[1] == model.embed_dim

    def test_wrong_input_shape(self, rng, tiny_model_cfg):
        model = build_tdnn(tiny_model_cfg, rng)
        with pytest.raises(ShapeError):
            forward(model, np.zeros((2, 1, 9, 16), dtype=np.float32))

    def test_zero_input_is_finite(self, rng):
        model = build_hltdnn(ModelConfig(), rng)
        logits = forward(model, np.zeros((1, 1, 48, 48), dtype=np.float32))
        assert np.all(np.isfinite(logits.values))


class TestConfig:
    def test_too_many_pools(self):
        with pytest.raises(ValidationError):
            ModelConfig(in_time=8)

    def test_window_exceeds_map(self):
        with pytest.raises(ValidationError):
            ModelConfig(hist_window=(49, 1))

    def test_even_kernel(self):
        with pytest.raises(ValidationError):
            ModelConfig(conv_kernel=2)


class TestParameters:
    def test_tdnn_count(self, rng):
        expected = (
            conv_params(1, 16) + conv_params(16, 32) + conv_params(32, 64) + conv_params(64, 128)
            + 128 * 48 * 128 + 128
            + 128 * 4 + 4
        )
        assert build_tdnn(ModelConfig(), rng).parameter_count() == expected

    def test_hltdnn_count(self, rng):
        cfg = ModelConfig()
        tdnn = build_tdnn(cfg, rng).parameter_count()
        extra = 2 * 16 * 128 + 2048 * 4
        assert build_hltdnn(cfg, rng).parameter_count() == tdnn + extra

    def test_names(self, rng, tiny_model_cfg):
        names = list(build_hltdnn(tiny_model_cfg, rng).parameters())
        assert names[:2] == ["block1.conv.weight", "block1.conv.bias"]
        assert "head.conv1d.weight" in names
        assert names[-4:] == ["hist.centers", "hist.widths", "classifier.weight", "classifier.bias"]

    def test_init_ranges(self, rng):
        model = build_tdnn(ModelConfig(), rng)
        w = model.block2.conv.weight.values
        assert np.abs(w).max() <= np.sqrt(6.0 / (16 * 9))
        assert np.all(model.block2.conv.bias.values == 0)

    def test_same_seed_same_weights(self, tiny_model_cfg):
        a = build_hltdnn(tiny_model_cfg, np.random.default_rng(5)).state_dict()
        b = build_hltdnn(tiny_model_cfg, np.random.default_rng(5)).state_dict()
        assert all(np.array_equal(a[k], b[k]) for k in a)


class TestBehaviour:
    def test_eval_is_deterministic(self, rng, tiny_model_cfg):
        cfg = tiny_model_cfg.model_copy(update={"dropout_p": 0.5})
        model = build_hltdnn(cfg, rng)
        x = batch(rng, 4, cfg)
        assert np.array_equal(forward(model, x).values, forward(model, x).values)

    def test_training_dropout_changes_logits(self, rng, tiny_model_cfg):
        cfg = tiny_model_cfg.model_copy(update={"dropout_p": 0.5})
        model = build_tdnn(cfg, rng)
        x = batch(rng, 4, cfg)
        a = forward(model, x, training=True, rng=np.random.default_rng(1)).values
        b = forward(model, x, training=False).values
        assert not np.allclose(a, b)

    def test_batch_invariance(self, rng, tiny_model_cfg):
        model = build_hltdnn(tiny_model_cfg, rng)
        x = batch(rng, 5, tiny_model_cfg)
        together = forward(model, x).values
        alone = np.concatenate([forward(model, x[i : i + 1]).values for i in range(5)])
        np.testing.assert_allclose(together, alone, atol=1e-5)

    def test_tdnn_embedding_in_unit_interval(self, rng, tiny_model_cfg):
        e = embed(build_tdnn(tiny_model_cfg, rng), batch(rng, 6, tiny_model_cfg))
        assert np.all((e > 0) & (e < 1))

    def test_hltdnn_embedding_tail_is_histogram(self, rng, tiny_model_cfg):
        model = build_hltdnn(tiny_model_cfg, rng)
        x = batch(rng, 3, tiny_model_cfg)
        e = embed(model, x)
        hist = model.histogram_descriptor(Tensor(x)).values
        np.testing.assert_allclose(e[:, tiny_model_cfg.embed_dim :], hist, atol=1e-7)

    def test_zero_histogram_weights_reduce_to_tdnn(self, rng, tiny_model_cfg):
        tdnn = build_tdnn(tiny_model_cfg, np.random.default_rng(0))
        hl = build_hltdnn(tiny_model_cfg, np.random.default_rng(1))
        hl_params = hl.parameters()
        for name, p in tdnn.parameters().items():
            if name == "classifier.weight":
                hl_params[name].values[...] = 0.0
                hl_params[name].values[:, : tiny_model_cfg.embed_dim] = p.values
            else:
                hl_params[name].values[...] = p.values
        x = batch(rng, 4, tiny_model_cfg)
        np.testing.assert_allclose(forward(hl, x).values, forward(tdnn, x).values, atol=1e-6)

    def test_every_parameter_gets_gradient(self, rng, tiny_model_cfg):
        for kind in ModelKind:
            model = build_model(kind, tiny_model_cfg, np.random.default_rng(3))
            model.eval()
            x = Tensor(batch(rng, 6, tiny_model_cfg))
            with Tape() as tape:
                loss = softmax_cross_entropy(model(x), np.array([0, 1, 2, 3, 0, 1]))
                tape.backward(loss)
            for name, p in model.parameters().items():
                assert p.grad is not None, name
                assert np.abs(p.grad).max() > 0, name


class TestFullGradient:
    def test_hltdnn_matches_finite_differences(self, small_model_cfg):
        rng = np.random.default_rng(11)
        model = build_hltdnn(small_model_cfg, rng).astype(np.float64)
        model.eval()
        x = Tensor(rng.normal(size=(3, 1, small_model_cfg.in_freq, small_model_cfg.in_time)))
        labels = np.array([0, 2, 3])

        with Tape() as tape:
            tape.backward(softmax_cross_entropy(model(x), labels))

        def loss() -> float:
            return float(softmax_cross_entropy(model(x), labels).values)

        checked = 0
        for name, p in model.parameters().items():
            indices = [np.unravel_index(i, p.shape) for i in range(p.size)]
            expected = numeric_grad(loss, p.values, h=1e-6, indices=indices)
            for idx in indices:
                a, n = p.grad[idx], expected[idx]
                assert abs(a - n) <= 1e-4 * max(abs(a), abs(n)) + 1e-8, f"{name}{idx}: {a} vs {n}"
                checked += 1
        assert checked == model.parameter_count()
        assert checked >= 200
