"""Per-run epoch logging and loss-curve export."""

from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import List, Optional

from .types import EpochRecord

_log = logging.getLogger("sonar_histnet")

CURVES_HEADER = ("epoch", "train_loss", "val_loss")


class RunLogger:
    """
    Collects one EpochRecord per epoch and mirrors it to ``curves.csv``.

    Usage:
        run_log = RunLogger(run_dir / "curves.csv", tag="hltdnn/stft seed=0")
        run_log.log(EpochRecord(epoch=1, train_loss=1.2, val_loss=1.3))
        run_log.close()

    Rows are buffered and written every ``flush_every`` epochs so a
    crashed run still leaves a partial curve on disk.
    """

    def __init__(self, path: Optional[Path] = None, tag: str = "", flush_every: int = 1):
        self.path = Path(path) if path is not None else None
        self.tag = tag
        self.flush_every = max(1, flush_every)
        self.records: List[EpochRecord] = []
        self.buffer: List[EpochRecord] = []
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "w", newline="") as fh:
                csv.writer(fh).writerow(CURVES_HEADER)

    def log(self, record: EpochRecord, improved: bool = False) -> None:
        """
        Buffer one epoch and log it; flushes when the buffer is full.

        Args:
            record: losses for the epoch
            improved: mark the line with ``*`` when validation loss improved
        """
        self.records.append(record)
        self.buffer.append(record)
        _log.info(
            "sonar-histnet: %s epoch %d train_loss=%.5f val_loss=%.5f%s",
            self.tag,
            record.epoch,
            record.train_loss,
            record.val_loss,
            " *" if improved else "",
        )
        if len(self.buffer) >= self.flush_every:
            self.flush()

    def flush(self) -> None:
        """Append buffered epochs to ``curves.csv``; a no-op without a path."""
        if not self.buffer or self.path is None:
            self.buffer.clear()
            return
        with open(self.path, "a", newline="") as fh:
            writer = csv.writer(fh)
            for r in self.buffer:
                writer.writerow([r.epoch, repr(float(r.train_loss)), repr(float(r.val_loss))])
        self.buffer.clear()

    def close(self) -> None:
        self.flush()

    @property
    def train_losses(self) -> List[float]:
        return [r.train_loss for r in self.records]

    @property
    def val_losses(self) -> List[float]:
        return [r.val_loss for r in self.records]


def read_curves(path: Path) -> List[EpochRecord]:
    """Load a ``curves.csv`` written by :class:`RunLogger`."""
    with open(path, newline="") as fh:
        return [EpochRecord.model_validate(row) for row in csv.DictReader(fh)]
