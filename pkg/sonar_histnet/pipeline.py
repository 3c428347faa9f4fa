"""Pipeline stages: ingest, extract, train, evaluate, report."""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel

from .audio import load_record, partition, read_manifest
from .autodiff import load_checkpoint
from .config import RunConfig
from .errors import MissingStageError
from .features import extract
from .features.cache import IndexRow, write_feature, write_index
from .metrics import export_embeddings, write_confusion_csv, write_results_csv
from .models import build_model
from .training import (
    evaluate_with_embeddings,
    experiment_dir,
    load_feature_data,
    model_config_for,
    run_experiment,
    summarize,
)
from .types import ExperimentSummary, FeatureKind, ManifestEntry, MetricsReport, ModelKind, Segment

_log = logging.getLogger("sonar_histnet")

SEGMENTS_HEADER = ("segment_id", "record_id", "index", "label", "partition")


class SegmentRow(BaseModel):
    """One line of ``segments.csv``."""

    segment_id: str
    record_id: str
    index: int
    label: int
    partition: str


def _segments_dir(cfg: RunConfig) -> Path:
    return Path(cfg.cache_dir) / "segments"


def save_segments(path: Path, segments: Sequence[Segment]) -> None:
    """Store one record's segments as an n x samples float32 array."""
    np.save(path, np.stack([s.samples for s in segments]).astype(np.float32))


def ingest(cfg: RunConfig, workers: int = 1) -> List[SegmentRow]:
    """
    Partition the manifest by signal, then decode, resample and segment it.

    Each worker decodes one recording, writes
    ``segments/<record_id>.npy`` (n x samples, float32) and keeps only its
    index rows, so at most ``workers`` recordings are in memory at once.
    ``segments.csv`` and ``partition.json`` are written at the end.
    """
    if not cfg.manifest_path.exists():
        raise MissingStageError("synth", f"no manifest at {cfg.manifest_path}")
    manifest = read_manifest(cfg.manifest_path)
    split = partition(manifest, cfg.ratios, cfg.partition_seed)

    seg_dir = _segments_dir(cfg)
    seg_dir.mkdir(parents=True, exist_ok=True)

    def _record(entry: ManifestEntry) -> List[SegmentRow]:
        segs = load_record(entry, cfg.feature.segment_s)
        if not segs:
            _log.warning("sonar-histnet: %s is shorter than one segment; skipped", entry.record_id)
            return []
        save_segments(seg_dir / f"{entry.record_id}.npy", segs)
        part = split.membership(entry.record_id)
        return [
            SegmentRow(segment_id=s.segment_id, record_id=s.record_id, index=s.index, label=s.label, partition=part)
            for s in segs
        ]

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        rows = [row for part in pool.map(_record, manifest.entries) for row in part]

    root = Path(cfg.cache_dir)
    with open(root / "segments.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SEGMENTS_HEADER)
        for r in rows:
            writer.writerow([r.segment_id, r.record_id, r.index, r.label, r.partition])
    split.save(root / "partition.json")
    _log.info("sonar-histnet: ingested %d segments", len(rows))
    return rows


def read_segment_rows(cfg: RunConfig) -> List[SegmentRow]:
    """
    Read the segment table written by :func:`ingest`.

    Raises:
        MissingStageError: ingest has not run
    """
    path = Path(cfg.cache_dir) / "segments.csv"
    if not path.exists():
        raise MissingStageError("ingest", f"no segment table at {path}")
    with open(path, newline="") as fh:
        return [SegmentRow.model_validate(row) for row in csv.DictReader(fh)]


def extract_features(cfg: RunConfig, kinds: Sequence[FeatureKind], workers: int = 1) -> Dict[FeatureKind, int]:
    """Compute every requested feature for every ingested segment; returns files written per kind."""
    rows = read_segment_rows(cfg)
    by_record: Dict[str, List[SegmentRow]] = {}
    for r in rows:
        by_record.setdefault(r.record_id, []).append(r)
    seg_dir = _segments_dir(cfg)

    def _record(record_id: str, kind: FeatureKind, root: Path) -> List[IndexRow]:
        samples = np.load(seg_dir / f"{record_id}.npy")
        out = []
        for r in by_record[record_id]:
            seg = Segment(record_id=record_id, index=r.index, samples=samples[r.index], label=r.label)
            name = f"{r.segment_id}.tff"
            write_feature(root / name, extract(seg, kind, cfg.feature), r.label)
            out.append(IndexRow(segment_id=r.segment_id, kind=kind, path=name, label=r.label, partition=r.partition))
        return out

    counts: Dict[FeatureKind, int] = {}
    for kind in kinds:
        kind = FeatureKind(kind)
        root = Path(cfg.cache_dir) / "features" / kind.value
        root.mkdir(parents=True, exist_ok=True)
        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            parts = list(pool.map(lambda rid: _record(rid, kind, root), sorted(by_record)))
        index = [row for part in parts for row in part]
        write_index(index, root / "index.csv")
        counts[kind] = len(index)
        _log.info("sonar-histnet: extracted %d %s features", len(index), kind.value)
    return counts


def train_all(
    cfg: RunConfig,
    models: Sequence[ModelKind],
    features: Sequence[FeatureKind],
    workers: int = 1,
) -> List[ExperimentSummary]:
    """
    Train every model on every feature kind and write one experiment directory each.

    Args:
        cfg: resolved run configuration; ``config.json`` is saved beside each experiment
        models: model kinds to train
        features: feature kinds whose caches must already exist
        workers: threads for feature loading and for concurrent seeds

    Returns:
        One summary per (feature, model) pair, features outermost
    """
    summaries = []
    for feature in features:
        data = load_feature_data(cfg, feature, workers)
        model_cfg = model_config_for(feature, cfg.feature, cfg.model, cfg.hp)
        for model in models:
            out = experiment_dir(Path(cfg.output_dir), model, feature)
            out.mkdir(parents=True, exist_ok=True)
            (out / "config.json").write_text(cfg.model_dump_json(indent=2))
            summaries.append(
                run_experiment(model, feature, cfg.hp, data, model_cfg, out, cfg.fdr_aggregate, workers)
            )
    return summaries


def evaluate_all(
    cfg: RunConfig,
    models: Sequence[ModelKind],
    features: Sequence[FeatureKind],
    workers: int = 1,
) -> List[ExperimentSummary]:
    """Re-score saved checkpoints on the test partition and rebuild each summary."""
    summaries = []
    for feature in features:
        data = None
        model_cfg = model_config_for(feature, cfg.feature, cfg.model, cfg.hp)
        for model_kind in models:
            out = experiment_dir(Path(cfg.output_dir), model_kind, feature)
            results: Dict[int, MetricsReport] = {}
            failed: Dict[int, str] = {}
            for seed in cfg.hp.seeds:
                run_dir = out / f"run_{seed}"
                ckpt = run_dir / "checkpoint.bin"
                if not ckpt.exists():
                    failed[seed] = f"no checkpoint at {ckpt}"
                    continue
                if data is None:
                    data = load_feature_data(cfg, feature, workers)
                params, _ = load_checkpoint(ckpt)
                model = build_model(model_kind, model_cfg, np.random.default_rng(seed))
                model.load_state_dict(params)
                report, embeddings = evaluate_with_embeddings(model, data.test, cfg.hp.batch, cfg.fdr_aggregate)
                (run_dir / "metrics.json").write_text(report.model_dump_json(indent=2))
                export_embeddings(embeddings, data.test.y, run_dir / "embeddings.csv")
                write_confusion_csv(report.confusion, run_dir / "confusion.csv")
                results[seed] = report
            if not results:
                raise MissingStageError("train", f"no checkpoints under {out}")
            summary = summarize(model_kind, feature, cfg.hp.seeds, results, failed)
            (out / "summary.json").write_text(summary.model_dump_json(indent=2))
            summaries.append(summary)
    return summaries


def report(cfg: RunConfig, out_path: Optional[Path] = None) -> Path:
    """Collect every ``summary.json`` into a results table plus mean confusion CSVs."""
    root = Path(cfg.output_dir)
    paths = sorted(root.glob("*/summary.json"))
    if not paths:
        raise MissingStageError("train", f"no summary.json under {root}")
    summaries = [ExperimentSummary.model_validate_json(p.read_text()) for p in paths]
    for path, summary in zip(paths, summaries):
        write_confusion_csv(np.asarray(summary.mean_confusion), path.parent / "confusion_mean.csv")
    out_path = Path(out_path) if out_path is not None else root / "report.csv"
    write_results_csv(summaries, out_path)
    _log.info("sonar-histnet: wrote %d experiments to %s", len(summaries), out_path)
    return out_path
