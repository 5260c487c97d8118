"""
Datasets
========

In-memory datasets, seeded Gaussian-blob generators (single and
cross-dataset) and on-disk persistence as ``data.bin`` + ``meta.json``.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..core.errors import ConfigError, DataFormatError

logger = logging.getLogger(__name__)

TRAIN_FRACTION = 0.8
CENTER_RETRIES = 1000
DATA_NAME = "data.bin"
META_NAME = "meta.json"

Seed = Union[int, Sequence[int]]


@dataclass
class Dataset:
    """
    Samples with optional union-space labels.

    Args:
        samples: ``N x D`` float64 rows
        labels: Union class ids in ``[0, num_classes)``, or ``None`` for an unlabeled pool
        num_classes: Size of the union label space
        split: ``train`` or ``test``
        class_names: Human-readable name per union class id
        meta: Generator provenance (seed, centers, ...)
    """

    samples: np.ndarray
    labels: Optional[np.ndarray]
    num_classes: int
    split: str = "train"
    class_names: List[str] = field(default_factory=list)
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2:
            raise DataFormatError(f"samples must be a matrix, got shape {self.samples.shape}")
        if self.split not in ("train", "test"):
            raise DataFormatError(f"unknown split {self.split!r}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (len(self.samples),):
                raise DataFormatError(f"{len(self.samples)} samples but labels of shape {self.labels.shape}")
            if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
                raise DataFormatError(f"labels must lie in [0, {self.num_classes})")
        if not self.class_names:
            self.class_names = [f"class-{c}" for c in range(self.num_classes)]

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def input_dim(self) -> int:
        return self.samples.shape[1]

    @property
    def is_labeled(self) -> bool:
        return self.labels is not None

    def unlabeled(self) -> "Dataset":
        """The same rows with labels discarded, as the amalgamation pool sees them."""
        return Dataset(self.samples, None, self.num_classes, self.split, list(self.class_names), dict(self.meta))

    def require_labels(self) -> np.ndarray:
        if self.labels is None:
            raise DataFormatError(f"{self.split} dataset carries no labels")
        return self.labels

    def restrict(self, classes: Sequence[int]) -> "Dataset":
        """Rows whose label belongs to ``classes``; labels keep their union ids."""
        mask = np.isin(self.require_labels(), np.asarray(list(classes), dtype=np.int64))
        return Dataset(
            self.samples[mask], self.labels[mask], self.num_classes, self.split, list(self.class_names), dict(self.meta)
        )

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.require_labels(), minlength=self.num_classes)

    @classmethod
    def concatenate(cls, parts: Sequence["Dataset"], num_classes: int) -> "Dataset":
        if not parts:
            raise DataFormatError("nothing to concatenate")
        splits = {p.split for p in parts}
        if len(splits) != 1:
            raise DataFormatError(f"cannot mix splits {sorted(splits)}")
        dims = {p.input_dim for p in parts}
        if len(dims) != 1:
            raise DataFormatError(f"cannot concatenate datasets of input dims {sorted(dims)}")
        labels = None
        if all(p.is_labeled for p in parts):
            labels = np.concatenate([p.labels for p in parts])
        names = [f"class-{c}" for c in range(num_classes)]
        for part in parts:
            for c, name in enumerate(part.class_names):
                if c < num_classes and name != f"class-{c}":
                    names[c] = name
        return cls(
            np.concatenate([p.samples for p in parts]),
            labels,
            num_classes,
            parts[0].split,
            names,
            {"parts": [p.meta for p in parts]},
        )


def _sample_centers(
    rng: np.random.Generator, num_classes: int, dim: int, separation: float
) -> np.ndarray:
    half_width = separation * num_classes ** (1.0 / dim)
    centers: List[np.ndarray] = []
    for _ in range(num_classes):
        for _ in range(CENTER_RETRIES):
            candidate = rng.uniform(-half_width, half_width, size=dim)
            if all(np.linalg.norm(candidate - c) >= separation for c in centers):
                centers.append(candidate)
                break
        else:
            raise ConfigError(
                f"could not place {num_classes} centers {separation} apart in {dim} dimensions "
                f"after {CENTER_RETRIES} attempts",
                "data.separation",
            )
    return np.stack(centers)


def gen_blobs(
    num_classes: int,
    dim: int,
    per_class: int,
    separation: float,
    seed: Seed,
    noise: float = 1.0,
    label_offset: int = 0,
    total_classes: Optional[int] = None,
) -> Tuple[Dataset, Dataset]:
    """
    Generate isotropic Gaussian clusters at seeded random centers.

    Args:
        num_classes: Number of clusters C (at least 2)
        dim: Input dimension
        per_class: Samples per class before the 80/20 split (at least 2)
        separation: Minimum pairwise distance between centers
        seed: Generator seed
        noise: Per-coordinate standard deviation of each cluster
        label_offset: First union class id; lets several generators share one label space
        total_classes: Size of the union label space; defaults to ``label_offset + num_classes``

    Returns:
        ``(train, test)`` datasets with exactly ``floor(0.8 * per_class)`` train rows per class
    """
    if num_classes < 2:
        raise ConfigError(f"need at least 2 classes, got {num_classes}", "data.num_classes")
    if per_class < 2:
        raise ConfigError(f"need at least 2 samples per class, got {per_class}", "data.per_class")
    if dim < 1 or separation <= 0.0 or noise < 0.0:
        raise ConfigError(f"invalid blob geometry dim={dim} separation={separation} noise={noise}", "data")
    total = label_offset + num_classes if total_classes is None else total_classes

    rng = np.random.default_rng(seed)
    centers = _sample_centers(rng, num_classes, dim, separation)
    n_train = int(np.floor(TRAIN_FRACTION * per_class))

    train_x, train_y, test_x, test_y = [], [], [], []
    for c, center in enumerate(centers):
        points = center + noise * rng.standard_normal(size=(per_class, dim))
        label = label_offset + c
        train_x.append(points[:n_train])
        test_x.append(points[n_train:])
        train_y.append(np.full(n_train, label))
        test_y.append(np.full(per_class - n_train, label))

    names = [f"class-{c}" for c in range(total)]
    for c in range(num_classes):
        names[label_offset + c] = f"blob-{c}" if label_offset == 0 else f"blob-{label_offset}+{c}"
    meta = {
        "generator": "blobs",
        "seed": np.atleast_1d(seed).tolist(),
        "separation": separation,
        "noise": noise,
        "label_offset": label_offset,
        "centers": centers.tolist(),
    }

    datasets = []
    for split, xs, ys in (("train", train_x, train_y), ("test", test_x, test_y)):
        x, y = np.concatenate(xs), np.concatenate(ys)
        order = rng.permutation(len(x))
        datasets.append(Dataset(x[order], y[order], total, split, list(names), dict(meta)))
    logger.debug(f"generated {num_classes} blobs in {dim}d: {len(datasets[0])} train, {len(datasets[1])} test")
    return datasets[0], datasets[1]


def gen_cross_dataset(
    class_counts: Sequence[int],
    dim: int,
    per_class: int,
    separation: float,
    seed: int,
    noise: float = 1.0,
) -> Tuple[Dataset, Dataset, List[List[int]]]:
    """
    Generate one independent blob dataset per entry of ``class_counts`` with
    disjoint label ranges, and pool them.

    Returns:
        ``(train, test, groups)`` where ``groups[k]`` lists the union ids of dataset ``k``
    """
    total = int(sum(class_counts))
    trains, tests, groups = [], [], []
    offset = 0
    for k, count in enumerate(class_counts):
        train, test = gen_blobs(
            count, dim, per_class, separation, seed=[seed, k], noise=noise, label_offset=offset, total_classes=total
        )
        trains.append(train)
        tests.append(test)
        groups.append(list(range(offset, offset + count)))
        offset += count
    train = Dataset.concatenate(trains, total)
    test = Dataset.concatenate(tests, total)
    train.meta.update({"generator": "cross-dataset", "groups": groups, "seed": [seed]})
    test.meta.update({"generator": "cross-dataset", "groups": groups, "seed": [seed]})
    logger.debug(f"pooled {len(class_counts)} blob datasets into {total} union classes")
    return train, test, groups


def save_dataset(dataset: Dataset, directory: Union[str, Path]) -> Path:
    """
    Persist ``dataset`` as ``data.bin`` (samples, then labels, little-endian
    float64) and ``meta.json``.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    payload = np.ascontiguousarray(dataset.samples, dtype="<f8").tobytes()
    if dataset.labels is not None:
        payload += np.ascontiguousarray(dataset.labels, dtype="<f8").tobytes()
    (directory / DATA_NAME).write_bytes(payload)
    meta = {
        "count": len(dataset),
        "dim": dataset.input_dim,
        "num_classes": dataset.num_classes,
        "split": dataset.split,
        "labeled": dataset.is_labeled,
        "class_map": {str(c): name for c, name in enumerate(dataset.class_names)},
        "generator": dataset.meta,
    }
    (directory / META_NAME).write_text(json.dumps(meta, indent=2))
    logger.info(f"saved {dataset.split} split ({len(dataset)} rows) to {directory}")
    return directory


def load_dataset(directory: Union[str, Path]) -> Dataset:
    """Inverse of :func:`save_dataset`."""
    directory = Path(directory)
    meta_path, data_path = directory / META_NAME, directory / DATA_NAME
    if not meta_path.is_file() or not data_path.is_file():
        raise FileNotFoundError(f"no persisted dataset at {directory}")
    meta = json.loads(meta_path.read_text())
    count, dim = int(meta["count"]), int(meta["dim"])
    labeled = bool(meta.get("labeled", True))
    expected = count * dim + (count if labeled else 0)
    raw = data_path.read_bytes()
    if len(raw) != expected * 8:
        raise DataFormatError(f"{data_path} holds {len(raw)} bytes, expected {expected * 8}")
    values = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    samples = values[: count * dim].reshape(count, dim)
    labels = values[count * dim :].astype(np.int64) if labeled else None
    class_map = meta.get("class_map", {})
    names = [class_map.get(str(c), f"class-{c}") for c in range(int(meta["num_classes"]))]
    return Dataset(samples, labels, int(meta["num_classes"]), meta["split"], names, meta.get("generator", {}))
