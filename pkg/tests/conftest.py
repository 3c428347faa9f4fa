"""Shared test fixtures for sonar-histnet tests."""

from pathlib import Path
from typing import Callable, List, Sequence

import numpy as np
import pytest

from sonar_histnet.autodiff import Tape, Tensor, linear, reshape
from sonar_histnet.config import FeatureConfig, ModelConfig
from sonar_histnet.training import DataSplits, FeatureData
from sonar_histnet.types import FeatureKind, FeatureStats, Segment


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def feature_cfg():
    return FeatureConfig()


@pytest.fixture
def tone_segment(feature_cfg):
    """3 s of a 1084 Hz sine at 16 kHz."""
    t = np.arange(feature_cfg.segment_samples) / feature_cfg.sample_rate
    return Segment(record_id="tone", index=0, samples=0.5 * np.sin(2 * np.pi * 1084.0 * t), label=0)


@pytest.fixture
def small_model_cfg():
    """A model small enough for finite-difference checks."""
    return ModelConfig(
        block_channels=(2, 3, 2, 2), embed_dim=3, bins=2, in_freq=4, in_time=16, dropout_p=0.0
    )


@pytest.fixture
def tiny_model_cfg():
    """A model small enough to train for hundreds of steps inside a test."""
    return ModelConfig(block_channels=(4, 4, 4, 4), embed_dim=8, bins=4, in_freq=8, in_time=16, dropout_p=0.0)


def make_separable(n_per_class: int, rng: np.random.Generator, freq: int = 8, time: int = 16,
                   noise: float = 0.5) -> FeatureData:
    """Each class lights up its own pair of frequency rows."""
    xs, ys = [], []
    for c in range(4):
        x = rng.normal(0.0, noise, size=(n_per_class, freq, time))
        x[:, 2 * c : 2 * c + 2, :] += 3.0
        xs.append(x)
        ys += [c] * n_per_class
    x = np.concatenate(xs).astype(np.float32)
    y = np.asarray(ys, dtype=np.int64)
    return FeatureData(x=x, y=y, segment_ids=[f"s{i:04d}" for i in range(y.size)])


@pytest.fixture
def separable_splits(rng):
    stats = FeatureStats(kind=FeatureKind.STFT, mean=0.0, std=1.0, count=1)
    return DataSplits(
        train=make_separable(16, rng),
        val=make_separable(4, rng),
        test=make_separable(4, rng),
        stats=stats,
    )


def weighted_sum(y: Tensor, w: np.ndarray) -> Tensor:
    """Scalar <y, w> built from recorded ops."""
    flat = reshape(y, (1, y.size))
    return linear(flat, Tensor(w.reshape(1, -1)))


def numeric_grad(loss_fn: Callable[[], float], values: np.ndarray, h: float = 1e-6,
                 indices: Sequence = None) -> np.ndarray:
    """Central differences of ``loss_fn`` w.r.t. ``values`` (perturbed in place)."""
    grad = np.zeros_like(values, dtype=np.float64)
    idx_iter: List = list(indices) if indices is not None else list(np.ndindex(values.shape))
    for idx in idx_iter:
        orig = values[idx]
        values[idx] = orig + h
        fp = loss_fn()
        values[idx] = orig - h
        fm = loss_fn()
        values[idx] = orig
        grad[idx] = (fp - fm) / (2 * h)
    return grad


@pytest.fixture
def gradcheck():
    """
    Compare tape gradients of ``<fn(*inputs), w>`` against central
    differences for every input that requires grad.
    """

    def check(fn, inputs: Sequence[Tensor], seed: int = 0, h: float = 1e-6,
              rtol: float = 1e-4, atol: float = 1e-7) -> None:
        out = fn(*inputs)
        w = np.random.default_rng(seed).normal(size=out.size)
        for t in inputs:
            t.grad = None
        with Tape() as tape:
            loss = weighted_sum(fn(*inputs), w)
            tape.backward(loss)

        def value() -> float:
            return float(np.sum(fn(*inputs).values.astype(np.float64).ravel() * w))

        for t in inputs:
            if not t.requires_grad:
                continue
            expected = numeric_grad(value, t.values, h=h)
            assert t.grad is not None, f"no gradient reached {t.name or 'input'}"
            np.testing.assert_allclose(t.grad, expected, rtol=rtol, atol=atol)

    return check


@pytest.fixture
def wav_dir(tmp_path) -> Path:
    d = tmp_path / "audio"
    d.mkdir()
    return d
