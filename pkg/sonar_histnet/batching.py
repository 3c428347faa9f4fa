"""Mini-batch assembly with bounded background prefetch."""

from __future__ import annotations

import queue
import threading
from typing import Iterator, Optional, Tuple

import numpy as np

Batch = Tuple[np.ndarray, np.ndarray, np.ndarray]

_DONE = object()


class BatchLoader:
    """
    Yields ``(x, y, index)`` batches over in-memory features.

    Usage:
        loader = BatchLoader(x, y, batch_size=128, shuffle=True)
        for xb, yb, idx in loader.epoch(rng):
            ...

    ``x`` is N x F x T; batches come out N x 1 x F x T. The final
    incomplete batch is kept. When ``prefetch > 0`` a worker thread
    stacks up to ``prefetch`` batches ahead of the consumer.
    """

    def __init__(
        self,
        x: np.ndarray,
        y: np.ndarray,
        batch_size: int = 128,
        shuffle: bool = False,
        prefetch: int = 2,
    ):
        if len(x) != len(y):
            raise ValueError(f"{len(x)} features but {len(y)} labels")
        if batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {batch_size}")
        self.x = x
        self.y = np.asarray(y, dtype=np.int64)
        self.batch_size = batch_size
        self.shuffle = shuffle
        self.prefetch = prefetch

    def __len__(self) -> int:
        return -(-len(self.x) // self.batch_size)

    def order(self, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        n = len(self.x)
        if self.shuffle:
            if rng is None:
                raise ValueError("a shuffling loader needs an rng")
            return rng.permutation(n)
        return np.arange(n)

    def _batch(self, idx: np.ndarray) -> Batch:
        return self.x[idx][:, None].astype(np.float32, copy=False), self.y[idx], idx

    def epoch(self, rng: Optional[np.random.Generator] = None) -> Iterator[Batch]:
        order = self.order(rng)
        chunks = [order[i : i + self.batch_size] for i in range(0, len(order), self.batch_size)]
        if self.prefetch <= 0:
            for idx in chunks:
                yield self._batch(idx)
            return
        yield from self._prefetched(chunks)

    def _prefetched(self, chunks) -> Iterator[Batch]:
        buffer: "queue.Queue" = queue.Queue(maxsize=self.prefetch)
        stop = threading.Event()

        def produce():
            try:
                for idx in chunks:
                    if stop.is_set():
                        return
                    buffer.put(self._batch(idx))
            except BaseException as e:  # surfaced in the consumer
                buffer.put(e)
                return
            buffer.put(_DONE)

        worker = threading.Thread(target=produce, name="batch-prefetch", daemon=True)
        worker.start()
        try:
            while True:
                item = buffer.get()
                if item is _DONE:
                    break
                if isinstance(item, BaseException):
                    raise item
                yield item
        finally:
            stop.set()
            # drain so a blocked producer can observe the stop flag
            while worker.is_alive():
                try:
                    buffer.get(timeout=0.05)
                except queue.Empty:
                    pass
            worker.join()
