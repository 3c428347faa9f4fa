"""Tests for RunLogger and curve files."""

import logging

from sonar_histnet.logger import CURVES_HEADER, RunLogger, read_curves
from sonar_histnet.types import EpochRecord


def rec(epoch, train, val):
    return EpochRecord(epoch=epoch, train_loss=train, val_loss=val)


class TestRunLogger:
    def test_in_memory(self):
        run_log = RunLogger(tag="tdnn/stft seed=0")
        run_log.log(rec(1, 1.5, 1.6))
        run_log.log(rec(2, 1.2, 1.4))
        assert run_log.train_losses == [1.5, 1.2]
        assert run_log.val_losses == [1.6, 1.4]
        assert run_log.buffer == []

    def test_writes_header_immediately(self, tmp_path):
        path = tmp_path / "run" / "curves.csv"
        RunLogger(path)
        assert path.read_text().splitlines() == [",".join(CURVES_HEADER)]

    def test_round_trip_is_exact(self, tmp_path):
        path = tmp_path / "curves.csv"
        run_log = RunLogger(path)
        records = [rec(1, 1.0 / 3.0, 2.0 / 3.0), rec(2, 0.1, 1e-17)]
        for r in records:
            run_log.log(r)
        run_log.close()
        assert read_curves(path) == records

    def test_flush_every(self, tmp_path):
        path = tmp_path / "curves.csv"
        run_log = RunLogger(path, flush_every=3)
        run_log.log(rec(1, 1.0, 1.0))
        run_log.log(rec(2, 0.9, 0.9))
        assert read_curves(path) == []
        assert len(run_log.buffer) == 2
        run_log.log(rec(3, 0.8, 0.8))
        assert [r.epoch for r in read_curves(path)] == [1, 2, 3]

    def test_close_flushes_partial_buffer(self, tmp_path):
        path = tmp_path / "curves.csv"
        run_log = RunLogger(path, flush_every=10)
        run_log.log(rec(1, 1.0, 1.0))
        run_log.close()
        assert len(read_curves(path)) == 1

    def test_epoch_message(self, caplog):
        run_log = RunLogger(tag="hltdnn/cqt seed=2")
        with caplog.at_level(logging.INFO, logger="sonar_histnet"):
            run_log.log(rec(4, 0.5, 0.25), improved=True)
        assert "hltdnn/cqt seed=2 epoch 4" in caplog.text
        assert caplog.text.rstrip().endswith("*")
