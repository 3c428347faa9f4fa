"""Training with Adagrad and early stopping, evaluation, and multi-seed experiments."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import Field

from .autodiff import Adagrad, Tape, Tensor, save_checkpoint, softmax_cross_entropy
from .batching import BatchLoader
from .config import FeatureConfig, ModelConfig, RunConfig
from .errors import MissingStageError, TrainingError
from .features import normalize, read_feature
from .features.cache import read_index
from .features.normalize import compute_stats
from .logger import RunLogger
from .metrics import Aggregate, build_report, export_embeddings, metric_stat, write_confusion_csv
from .models import TDNN, build_model
from .types import (
    EpochRecord,
    ExperimentSummary,
    FeatureKind,
    FeatureStats,
    HyperParams,
    MetricsReport,
    MetricStat,
    ModelKind,
    RunResult,
    _ArrayRecord,
)

_log = logging.getLogger("sonar_histnet")

SUMMARY_METRICS = ("accuracy", "precision", "recall", "f1", "mcc", "log_fdr")


class FeatureData(_ArrayRecord):
    """One partition: normalized features N x F x T, labels and segment ids."""

    x: np.ndarray
    y: np.ndarray
    segment_ids: List[str] = Field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.y)


class DataSplits(_ArrayRecord):
    """Normalized train, validation and test features of one kind."""

    train: FeatureData
    val: FeatureData
    test: FeatureData
    stats: Optional[FeatureStats] = None


class EarlyStopping:
    """
    Tracks the best validation loss.

    An epoch improves when ``val < best - min_delta``; training stops
    after ``patience`` consecutive epochs without improvement.
    """

    def __init__(self, patience: int = 10, min_delta: float = 1e-6):
        self.patience = patience
        self.min_delta = min_delta
        self.best = float("inf")
        self.best_epoch = 0
        self.bad_epochs = 0
        self.stopped_epoch: Optional[int] = None

    def step(self, epoch: int, val_loss: float) -> bool:
        """Record one epoch; returns True when it improved."""
        if val_loss < self.best - self.min_delta:
            self.best = val_loss
            self.best_epoch = epoch
            self.bad_epochs = 0
            return True
        self.bad_epochs += 1
        if self.bad_epochs >= self.patience:
            self.stopped_epoch = epoch
        return False

    @property
    def should_stop(self) -> bool:
        return self.stopped_epoch is not None


# --------------------------------------------------------------------------
# Data
# --------------------------------------------------------------------------


def model_config_for(kind: FeatureKind, features: FeatureConfig, base: ModelConfig, hp: HyperParams) -> ModelConfig:
    """Fit the model input extent to the padded feature shape and apply hp bins/dropout."""
    f, t = features.padded_shape(kind)
    return ModelConfig.model_validate(
        {**base.model_dump(), "in_freq": f, "in_time": t, "bins": hp.bins, "dropout_p": hp.dropout}
    )


def load_feature_data(cfg: RunConfig, kind: FeatureKind, workers: int = 1) -> DataSplits:
    """
    Read the cached features of one kind and z-score them with train statistics.

    Raises:
        MissingStageError: the cache for ``kind`` has not been built
    """
    kind = FeatureKind(kind)
    root = Path(cfg.cache_dir) / "features" / kind.value
    index_path = root / "index.csv"
    if not index_path.exists():
        raise MissingStageError("extract", f"no feature cache at {index_path}")
    rows = read_index(index_path)

    def _load(row):
        feature, label = read_feature(root / row.path, cfg.feature)
        return feature, label

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        loaded = list(pool.map(_load, rows))

    train_feats = [f for (f, _), r in zip(loaded, rows) if r.partition == "train"]
    if not train_feats:
        raise TrainingError(f"feature cache for '{kind.value}' has no training segments")
    stats = compute_stats(train_feats)

    parts: Dict[str, Tuple[List[np.ndarray], List[int], List[str]]] = {
        name: ([], [], []) for name in ("train", "val", "test")
    }
    for (feature, label), row in zip(loaded, rows):
        xs, ys, ids = parts[row.partition]
        xs.append(normalize(feature, stats).data)
        ys.append(label)
        ids.append(row.segment_id)

    def _split(name: str) -> FeatureData:
        xs, ys, ids = parts[name]
        f, t = cfg.feature.padded_shape(kind)
        x = np.stack(xs).astype(np.float32) if xs else np.zeros((0, f, t), dtype=np.float32)
        return FeatureData(x=x, y=np.asarray(ys, dtype=np.int64), segment_ids=ids)

    splits = DataSplits(train=_split("train"), val=_split("val"), test=_split("test"), stats=stats)
    _log.info(
        "sonar-histnet: loaded %s features %d/%d/%d (mean=%.4f std=%.4f)",
        kind.value, splits.train.size, splits.val.size, splits.test.size, stats.mean, stats.std,
    )
    return splits


# --------------------------------------------------------------------------
# Training
# --------------------------------------------------------------------------


def _check_nonempty(data: FeatureData, name: str) -> None:
    if data.size == 0:
        raise TrainingError(f"{name} partition is empty")


def mean_loss(model: TDNN, data: FeatureData, batch_size: int) -> float:
    """Eval-mode cross-entropy, sample-weighted over batches."""
    model.eval()
    total = 0.0
    for xb, yb, _ in BatchLoader(data.x, data.y, batch_size, prefetch=0).epoch():
        loss = softmax_cross_entropy(model(Tensor(xb)), yb)
        total += loss.item() * len(yb)
    return total / data.size


class FitResult:
    def __init__(self, best_epoch: int, stopped_epoch: int, records: List[EpochRecord], accumulators):
        self.best_epoch = best_epoch
        self.stopped_epoch = stopped_epoch
        self.records = records
        self.accumulators = accumulators


def fit(
    model: TDNN,
    train_data: FeatureData,
    val_data: FeatureData,
    hp: HyperParams,
    seed: int,
    run_log: Optional[RunLogger] = None,
) -> FitResult:
    """
    Adagrad on shuffled mini-batches with validation-loss early stopping.

    On return the model holds the parameters of the best validation epoch.

    Raises:
        TrainingError: empty partition or a non-finite training loss
    """
    _check_nonempty(train_data, "train")
    _check_nonempty(val_data, "val")
    run_log = run_log or RunLogger()
    shuffle_rng = np.random.default_rng([seed, 1])
    dropout_rng = np.random.default_rng([seed, 2])
    optimizer = Adagrad(model.parameters(), lr=hp.lr)
    loader = BatchLoader(train_data.x, train_data.y, hp.batch, shuffle=True)
    stopper = EarlyStopping(hp.patience, hp.min_delta)

    best_state = model.state_dict()
    best_accums = optimizer.state_dict()
    epoch = 0
    for epoch in range(1, hp.epochs + 1):
        model.train()
        total = 0.0
        for step, (xb, yb, _) in enumerate(loader.epoch(shuffle_rng)):
            with Tape() as tape:
                loss = softmax_cross_entropy(model(Tensor(xb), rng=dropout_rng), yb)
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingError(f"non-finite training loss {value} at epoch {epoch}, batch {step}")
            optimizer.zero_grad()
            tape.backward(loss)
            optimizer.step()
            total += value * len(yb)
            _log.debug("sonar-histnet: epoch %d batch %d loss=%.5f", epoch, step, value)

        record = EpochRecord(
            epoch=epoch,
            train_loss=total / train_data.size,
            val_loss=mean_loss(model, val_data, hp.batch),
        )
        if not np.isfinite(record.val_loss):
            raise TrainingError(f"non-finite validation loss at epoch {epoch}")
        improved = stopper.step(epoch, record.val_loss)
        run_log.log(record, improved=improved)
        if improved:
            best_state = model.state_dict()
            best_accums = optimizer.state_dict()
        if hp.early_stopping and stopper.should_stop:
            _log.info(
                "sonar-histnet: %s early stop at epoch %d (best epoch %d, val_loss=%.5f)",
                run_log.tag, epoch, stopper.best_epoch, stopper.best,
            )
            break
    run_log.close()

    model.load_state_dict(best_state)
    model.eval()
    return FitResult(stopper.best_epoch, epoch, run_log.records, best_accums)


# --------------------------------------------------------------------------
# Evaluation
# --------------------------------------------------------------------------


def predict(
    model: TDNN,
    x: np.ndarray,
    batch_size: int = 128,
    order: Optional[Sequence[int]] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Eval-mode ``(logits, embeddings)`` for every sample, in sample order.

    ``order`` only changes the order batches are formed in.
    """
    model.eval()
    n = len(x)
    order = np.arange(n) if order is None else np.asarray(order)
    logits = np.zeros((n, model.cfg.num_classes), dtype=np.float32)
    embeddings = np.zeros((n, model.embed_dim), dtype=np.float32)
    for start in range(0, n, batch_size):
        idx = order[start : start + batch_size]
        emb = model.features(Tensor(x[idx][:, None].astype(np.float32, copy=False)))
        logits[idx] = model.classifier(emb).values
        embeddings[idx] = emb.values
    return logits, embeddings


def evaluate(
    model: TDNN,
    data: FeatureData,
    batch_size: int = 128,
    aggregate: Aggregate = "sum",
    order: Optional[Sequence[int]] = None,
) -> MetricsReport:
    """Metrics on one partition; independent of ``order``."""
    return evaluate_with_embeddings(model, data, batch_size, aggregate, order)[0]


def evaluate_with_embeddings(model, data, batch_size, aggregate, order=None) -> Tuple[MetricsReport, np.ndarray]:
    """
    Score ``model`` on ``data`` in eval mode.

    Args:
        model: a built TDNN or HLTDNN
        data: features and labels to score
        batch_size: inference batch size
        aggregate: how per-class Fisher ratios combine into the overall value
        order: optional row order; the report does not depend on it

    Returns:
        The metrics report and the N x embed_dim penultimate features
    """
    logits, embeddings = predict(model, data.x, batch_size, order)
    preds = logits.argmax(axis=1)
    return build_report(preds, data.y, embeddings, aggregate, model.cfg.num_classes), embeddings


def train(
    model_kind: ModelKind,
    feature_kind: FeatureKind,
    data: DataSplits,
    hp: HyperParams,
    seed: int,
    model_cfg: ModelConfig,
    out_dir: Optional[Path] = None,
    aggregate: Aggregate = "sum",
) -> RunResult:
    """
    One seeded run: build, fit, restore the best epoch, then score the test partition.

    With ``out_dir`` the run writes checkpoint.bin, curves.csv,
    metrics.json, embeddings.csv and confusion.csv there.
    """
    model_kind = ModelKind(model_kind)
    feature_kind = FeatureKind(feature_kind)
    _check_nonempty(data.test, "test")
    tag = f"{model_kind.value}/{feature_kind.value} seed={seed}"
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    model = build_model(model_kind, model_cfg, np.random.default_rng(seed))
    _log.info("sonar-histnet: %s training %d parameters", tag, model.parameter_count())
    run_log = RunLogger(out_dir / "curves.csv" if out_dir else None, tag=tag)
    result = fit(model, data.train, data.val, hp, seed, run_log)

    report, embeddings = evaluate_with_embeddings(model, data.test, hp.batch, aggregate)
    _log.info(
        "sonar-histnet: %s test accuracy=%.4f f1=%.4f mcc=%.4f",
        tag, report.accuracy, report.f1, report.mcc,
    )

    checkpoint = ""
    if out_dir is not None:
        checkpoint = str(out_dir / "checkpoint.bin")
        save_checkpoint(Path(checkpoint), model.state_dict(), result.accumulators)
        (out_dir / "metrics.json").write_text(report.model_dump_json(indent=2))
        export_embeddings(embeddings, data.test.y, out_dir / "embeddings.csv")
        write_confusion_csv(report.confusion, out_dir / "confusion.csv")

    return RunResult(
        seed=seed,
        best_epoch=result.best_epoch,
        stopped_epoch=result.stopped_epoch,
        train_loss=[r.train_loss for r in result.records],
        val_loss=[r.val_loss for r in result.records],
        test=report,
        checkpoint=checkpoint,
    )


# --------------------------------------------------------------------------
# Experiments
# --------------------------------------------------------------------------


def _stat(values: List[Optional[float]]) -> MetricStat:
    present = [v for v in values if v is not None]
    if not present:
        return MetricStat(mean=float("nan"), std=float("nan"))
    return metric_stat(present)


def summarize(
    model_kind: ModelKind,
    feature_kind: FeatureKind,
    seeds: Sequence[int],
    results: Dict[int, MetricsReport],
    failed: Dict[int, str],
) -> ExperimentSummary:
    """Mean and population std of every metric over the completed runs, keyed by seed."""
    if not results:
        raise TrainingError(f"every run failed: {failed}")
    reports = list(results.values())
    metrics = {
        name: _stat([r.overall_fdr if name == "log_fdr" else getattr(r, name) for r in reports])
        for name in SUMMARY_METRICS
    }
    n_classes = len(reports[0].confusion)
    per_class = [_stat([r.per_class_fdr[c] for r in reports]) for c in range(n_classes)]
    mean_cm = np.mean([np.asarray(r.confusion, dtype=np.float64) for r in reports], axis=0)
    return ExperimentSummary(
        model=ModelKind(model_kind),
        feature=FeatureKind(feature_kind),
        seeds=list(seeds),
        completed=list(results),
        failed=failed,
        metrics=metrics,
        per_class_fdr=per_class,
        mean_confusion=mean_cm.tolist(),
    )


def experiment_dir(output_dir: Path, model_kind: ModelKind, feature_kind: FeatureKind) -> Path:
    """``<output_dir>/<model>_<feature>``, e.g. ``runs/hltdnn_stft``."""
    return Path(output_dir) / f"{ModelKind(model_kind).value}_{FeatureKind(feature_kind).value}"


def run_experiment(
    model_kind: ModelKind,
    feature_kind: FeatureKind,
    hp: HyperParams,
    data: DataSplits,
    model_cfg: ModelConfig,
    out_dir: Optional[Path] = None,
    aggregate: Aggregate = "sum",
    workers: int = 1,
) -> ExperimentSummary:
    """
    Train one model per seed and aggregate mean and population std.

    A failing seed is logged and listed in ``failed``; the remaining
    seeds are still aggregated. Seeds run concurrently on up to
    ``workers`` threads and share only read-only data.
    """
    out_dir = Path(out_dir) if out_dir is not None else None

    def _one(seed: int):
        run_dir = out_dir / f"run_{seed}" if out_dir is not None else None
        try:
            return train(model_kind, feature_kind, data, hp, seed, model_cfg, run_dir, aggregate), None
        except Exception as e:
            _log.warning("sonar-histnet: run seed=%d aborted: %s", seed, e)
            return None, f"{type(e).__name__}: {e}"

    with ThreadPoolExecutor(max_workers=max(1, min(workers, len(hp.seeds)))) as pool:
        outcomes = list(pool.map(_one, hp.seeds))

    runs = [r for r, _ in outcomes if r is not None]
    failed = {seed: err for seed, (_, err) in zip(hp.seeds, outcomes) if err is not None}
    summary = summarize(model_kind, feature_kind, hp.seeds, {r.seed: r.test for r in runs}, failed)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "summary.json").write_text(summary.model_dump_json(indent=2))
    return summary
