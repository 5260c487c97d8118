"""
Batching
========
"""

from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from .datasets import Dataset

MIN_BATCH = 2


@dataclass
class Batch:
    index: int
    indices: np.ndarray
    samples: np.ndarray
    labels: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.indices)


def batch_count(num_samples: int, batch_size: int, drop_last: bool = True) -> int:
    return num_samples // batch_size if drop_last else -(-num_samples // batch_size)


def make_batches(
    dataset: Dataset,
    batch_size: int,
    seed: int = 0,
    epoch: int = 0,
    drop_last: bool = True,
    shuffle: bool = True,
) -> Iterator[Batch]:
    """
    Yield mini-batches in an order shuffled per ``(seed, epoch)``.

    Args:
        dataset: Source rows
        batch_size: Rows per batch; at least 2 so contrastive losses have negatives
        seed: Shuffle seed
        epoch: Epoch number mixed into the shuffle
        drop_last: Drop the final short batch so every batch has exactly ``batch_size`` rows
        shuffle: Keep the natural order when False
    """
    if batch_size < MIN_BATCH:
        raise ValueError(f"batch_size must be at least {MIN_BATCH}, got {batch_size}")
    n = len(dataset)
    order = np.random.default_rng([seed, epoch]).permutation(n) if shuffle else np.arange(n)
    for index in range(batch_count(n, batch_size, drop_last)):
        indices = order[index * batch_size : (index + 1) * batch_size]
        labels = dataset.labels[indices] if dataset.labels is not None else None
        yield Batch(index, indices, dataset.samples[indices], labels)
