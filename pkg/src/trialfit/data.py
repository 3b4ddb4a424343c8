"""Restartable in-memory batch generators."""
from __future__ import annotations

import numpy as np


class ArrayBatches:
    """Yields ``(x, y)`` mini-batches from arrays; ``y`` may be ``None``.

    With ``shuffle=True`` the order for epoch ``e`` is drawn from
    ``default_rng([seed, e])``, so it depends only on the seed and the epoch
    the trial announces through :meth:`set_epoch`.
    """

    def __init__(self, x, y=None, batch_size: int = 32, shuffle: bool = False, seed: int = 0):
        self.x = np.asarray(x, dtype=np.float64)
        self.y = None if y is None else np.asarray(y, dtype=np.float64)
        if self.y is not None and len(self.y) != len(self.x):
            raise ValueError(f"x has {len(self.x)} rows but y has {len(self.y)}")
        if batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {batch_size}")
        self.batch_size = batch_size
        self.shuffle = shuffle
        self.seed = seed
        self.epoch = 0

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch

    def __len__(self):
        return -(-len(self.x) // self.batch_size)

    def __iter__(self):
        order = np.arange(len(self.x))
        if self.shuffle:
            order = np.random.default_rng([self.seed, self.epoch]).permutation(len(self.x))
        for start in range(0, len(self.x), self.batch_size):
            idx = order[start:start + self.batch_size]
            yield self.x[idx], (None if self.y is None else self.y[idx])
