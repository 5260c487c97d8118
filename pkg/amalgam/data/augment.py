"""
Augmentation
============

Stochastic two-view transforms for flat feature vectors: additive Gaussian
noise, random feature masking and per-row scale jitter.
"""

from dataclasses import asdict, dataclass
from typing import Dict, Tuple

import numpy as np


@dataclass(frozen=True)
class AugmentationPolicy:
    """
    Args:
        noise_std: Standard deviation of the additive Gaussian noise
        mask_prob: Probability of zeroing each feature
        scale_jitter: Rows are scaled by a factor drawn from ``[1 - j, 1 + j]``
        seed: Base seed; each view is drawn from ``(seed, epoch, batch index, view)``
    """

    noise_std: float = 0.5
    mask_prob: float = 0.05
    scale_jitter: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.noise_std < 0.0:
            raise ValueError(f"noise_std must be non-negative, got {self.noise_std}")
        if not 0.0 <= self.mask_prob < 1.0:
            raise ValueError(f"mask_prob must lie in [0, 1), got {self.mask_prob}")
        if not 0.0 <= self.scale_jitter < 1.0:
            raise ValueError(f"scale_jitter must lie in [0, 1), got {self.scale_jitter}")

    @classmethod
    def identity(cls, seed: int = 0) -> "AugmentationPolicy":
        return cls(noise_std=0.0, mask_prob=0.0, scale_jitter=0.0, seed=seed)

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)

    def view(self, batch: np.ndarray, epoch: int, index: int, view: int) -> np.ndarray:
        batch = np.asarray(batch, dtype=np.float64)
        rng = np.random.default_rng([self.seed, epoch, index, view])
        out = batch.copy()
        if self.scale_jitter > 0.0:
            out *= rng.uniform(1.0 - self.scale_jitter, 1.0 + self.scale_jitter, size=(len(out), 1))
        if self.mask_prob > 0.0:
            out *= rng.random(size=out.shape) >= self.mask_prob
        if self.noise_std > 0.0:
            out += self.noise_std * rng.standard_normal(size=out.shape)
        return out


def two_views(
    policy: AugmentationPolicy, batch: np.ndarray, epoch: int = 0, index: int = 0
) -> Tuple[np.ndarray, np.ndarray]:
    """Two independent augmentations of ``batch``, reproducible from ``(policy.seed, epoch, index)``."""
    return policy.view(batch, epoch, index, 1), policy.view(batch, epoch, index, 2)
