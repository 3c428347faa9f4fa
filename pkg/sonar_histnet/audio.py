"""Recording ingestion: decode, resample, segment and partition."""

from __future__ import annotations

import csv
import logging
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import soundfile as sf
from scipy.signal import resample_poly

from .errors import AudioDecodeError, PartitionError
from .types import (
    NUM_CLASSES,
    SEGMENT_RATE,
    AudioSignal,
    DatasetManifest,
    ManifestEntry,
    PartitionSpec,
    Segment,
)

_log = logging.getLogger("sonar_histnet")

SUPPORTED_SUBTYPES = ("PCM_16", "PCM_24", "PCM_32", "FLOAT")
MANIFEST_HEADER = ("record_id", "path", "label", "duration_s")


def _check_data_chunk(path: Path) -> None:
    """Reject WAV files whose data chunk claims more bytes than the file holds."""
    with open(path, "rb") as fh:
        header = fh.read(12)
        if len(header) < 12 or header[:4] != b"RIFF" or header[8:12] != b"WAVE":
            raise AudioDecodeError(f"{path}: missing RIFF/WAVE header")
        size = path.stat().st_size
        offset = 12
        while offset + 8 <= size:
            fh.seek(offset)
            chunk_id, chunk_len = struct.unpack("<4sI", fh.read(8))
            if chunk_id == b"data":
                available = size - offset - 8
                if chunk_len > available:
                    raise AudioDecodeError(
                        f"{path}: data chunk declares {chunk_len} bytes but only {available} present"
                    )
                return
            offset += 8 + chunk_len + (chunk_len & 1)
    raise AudioDecodeError(f"{path}: no data chunk")


def decode_wav(path: Path, record_id: Optional[str] = None, label: int = 0) -> AudioSignal:
    """
    Read a PCM WAV file as a mono AudioSignal scaled to [-1, 1].

    Multichannel files are averaged to mono.

    Raises:
        AudioDecodeError: unreadable file, truncated data or unsupported encoding
    """
    path = Path(path)
    try:
        info = sf.info(str(path))
    except (RuntimeError, OSError) as e:
        raise AudioDecodeError(f"{path}: cannot read audio header: {e}") from e
    if info.format not in ("WAV", "WAVEX"):
        raise AudioDecodeError(f"{path}: not a WAV file (format {info.format})")
    if info.subtype not in SUPPORTED_SUBTYPES:
        raise AudioDecodeError(
            f"{path}: unsupported encoding {info.subtype}; expected one of {SUPPORTED_SUBTYPES}"
        )
    _check_data_chunk(path)
    try:
        data, rate = sf.read(str(path), dtype="float64", always_2d=True)
    except (RuntimeError, OSError) as e:
        raise AudioDecodeError(f"{path}: cannot decode samples: {e}") from e
    if data.shape[0] != info.frames:
        raise AudioDecodeError(f"{path}: read {data.shape[0]} frames, header declares {info.frames}")
    if data.shape[0] == 0:
        raise AudioDecodeError(f"{path}: no samples")
    return AudioSignal(
        record_id=record_id if record_id is not None else path.stem,
        samples=data.mean(axis=1),
        sample_rate=rate,
        label=label,
    )


def write_wav(path: Path, signal: AudioSignal, subtype: str = "FLOAT") -> None:
    """
    Write a mono WAV file.

    Args:
        path: destination file
        signal: samples and rate to store
        subtype: soundfile subtype; ``FLOAT`` keeps float32 samples exact and
            ``PCM_16`` quantizes them
    """
    sf.write(str(path), signal.samples, signal.sample_rate, subtype=subtype, format="WAV")


def resample(signal: AudioSignal, target_rate: int = SEGMENT_RATE) -> AudioSignal:
    """
    Band-limited rate conversion with a windowed-sinc polyphase filter.

    The anti-aliasing cutoff sits at the lower of the two Nyquist rates.
    """
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    if target_rate == signal.sample_rate:
        return signal
    g = math.gcd(int(target_rate), int(signal.sample_rate))
    up, down = int(target_rate) // g, int(signal.sample_rate) // g
    out = resample_poly(signal.samples, up, down)
    return AudioSignal(
        record_id=signal.record_id, samples=out, sample_rate=int(target_rate), label=signal.label
    )


def segment(signal: AudioSignal, duration_s: float = 3.0) -> List[Segment]:
    """
    Cut consecutive non-overlapping windows; a trailing remainder is dropped.
    """
    if signal.sample_rate != SEGMENT_RATE:
        raise ValueError(f"segment expects {SEGMENT_RATE} Hz input, got {signal.sample_rate}")
    length = int(round(duration_s * SEGMENT_RATE))
    count = signal.samples.size // length
    return [
        Segment(
            record_id=signal.record_id,
            index=i,
            samples=signal.samples[i * length : (i + 1) * length].copy(),
            label=signal.label,
        )
        for i in range(count)
    ]


def _split_counts(n: int, ratios: Tuple[float, float, float]) -> Tuple[int, int, int]:
    # train rounds up, val rounds down, test takes the rest; every part keeps >= 1
    eps = 1e-9
    n_train = min(math.ceil(ratios[0] * n - eps), n - 2)
    n_val = max(1, min(math.floor(ratios[1] * n + eps), n - n_train - 1))
    return n_train, n_val, n - n_train - n_val


def partition(
    manifest: DatasetManifest,
    ratios: Tuple[float, float, float] = (0.70, 0.15, 0.15),
    seed: int = 0,
) -> PartitionSpec:
    """
    Stratified signal-level split.

    Records are sorted by id inside each class and shuffled with a seeded
    generator, so the result depends only on (manifest, ratios, seed).

    Raises:
        PartitionError: bad ratios or a class with fewer than three signals
    """
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise PartitionError(f"ratios must be three positive numbers, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise PartitionError(f"ratios must sum to 1, got {sum(ratios)}")

    by_class: Dict[int, List[str]] = {c: [] for c in range(NUM_CLASSES)}
    for entry in manifest.entries:
        by_class[entry.label].append(entry.record_id)

    rng = np.random.default_rng(seed)
    train: List[str] = []
    val: List[str] = []
    test: List[str] = []
    for label in range(NUM_CLASSES):
        ids = sorted(by_class[label])
        if len(ids) < 3:
            raise PartitionError(
                f"class {label} ({manifest.class_names[label]}) has {len(ids)} signals; need >= 3"
            )
        order = rng.permutation(len(ids))
        shuffled = [ids[i] for i in order]
        n_train, n_val, _ = _split_counts(len(ids), ratios)
        train += shuffled[:n_train]
        val += shuffled[n_train : n_train + n_val]
        test += shuffled[n_train + n_val :]

    spec = PartitionSpec(seed=seed, train=sorted(train), val=sorted(val), test=sorted(test))
    _log.info(
        "sonar-histnet: partitioned %d signals into %d/%d/%d",
        len(manifest.entries), len(spec.train), len(spec.val), len(spec.test),
    )
    return spec


# --------------------------------------------------------------------------
# Manifest I/O
# --------------------------------------------------------------------------


def read_manifest(path: Path) -> DatasetManifest:
    """Load a manifest CSV; relative paths resolve against its directory."""
    path = Path(path)
    entries = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != MANIFEST_HEADER:
            raise ValueError(f"{path}: header must be {','.join(MANIFEST_HEADER)}")
        for row in reader:
            audio_path = Path(row["path"])
            if not audio_path.is_absolute():
                audio_path = path.parent / audio_path
            entries.append(
                ManifestEntry(
                    record_id=row["record_id"],
                    path=str(audio_path),
                    label=int(row["label"]),
                    duration_s=float(row["duration_s"]),
                )
            )
    return DatasetManifest(entries=entries)


def write_manifest(manifest: DatasetManifest, path: Path) -> None:
    """Write a manifest CSV with paths relative to its directory where possible."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_HEADER)
        for e in manifest.entries:
            p = Path(e.path)
            try:
                p = p.relative_to(path.parent)
            except ValueError:
                pass
            writer.writerow([e.record_id, p.as_posix(), e.label, repr(float(e.duration_s))])


def load_record(entry: ManifestEntry, duration_s: float = 3.0) -> List[Segment]:
    """
    Decode, resample and segment one manifest entry.

    Args:
        entry: manifest row naming the file and its label
        duration_s: segment length in seconds

    Returns:
        The record's consecutive segments, possibly empty
    """
    sig = decode_wav(Path(entry.path), record_id=entry.record_id, label=entry.label)
    return segment(resample(sig, SEGMENT_RATE), duration_s)


def load_segments(
    manifest: DatasetManifest,
    duration_s: float = 3.0,
    workers: int = 1,
    record_ids: Optional[Sequence[str]] = None,
) -> Dict[str, List[Segment]]:
    """
    Decode, resample and segment manifest entries in parallel across files.

    Every segment is held in memory; ingest of a full corpus goes record by
    record through :func:`load_record` instead.
    """
    entries = manifest.entries
    if record_ids is not None:
        wanted = set(record_ids)
        entries = [e for e in entries if e.record_id in wanted]

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(lambda e: load_record(e, duration_s), entries))
    out = {e.record_id: segs for e, segs in zip(entries, results)}
    _log.info(
        "sonar-histnet: decoded %d recordings into %d segments",
        len(out), sum(len(s) for s in out.values()),
    )
    return out
