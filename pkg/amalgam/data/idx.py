"""
IDX Files
=========

Reader and writer for the unsigned-byte IDX format used by small image
datasets: two zero bytes, the type code ``0x08``, the rank, then one
big-endian uint32 per dimension followed by the raw bytes.
"""

import logging
import struct
from pathlib import Path
from typing import Optional, Union

import numpy as np

from ..core.errors import DataFormatError
from .datasets import Dataset

logger = logging.getLogger(__name__)

UBYTE = 0x08
IMAGES_RANK = 3
LABELS_RANK = 1
MAX_ELEMENTS = 2**31


def read_idx(path: Union[str, Path]) -> np.ndarray:
    """Parse an unsigned-byte IDX file into a uint8 array of its declared shape."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 4:
        raise DataFormatError(f"{path}: file too short for an IDX header")
    zero1, zero2, type_code, rank = raw[0], raw[1], raw[2], raw[3]
    if zero1 != 0 or zero2 != 0 or type_code != UBYTE:
        raise DataFormatError(f"{path}: bad magic {raw[:4].hex()}")
    if rank == 0:
        raise DataFormatError(f"{path}: zero-rank IDX payload")
    header = 4 + 4 * rank
    if len(raw) < header:
        raise DataFormatError(f"{path}: truncated dimension header")
    dims = struct.unpack(f">{rank}I", raw[4:header])
    count = 1
    for d in dims:
        count *= d
        if count > MAX_ELEMENTS:
            raise DataFormatError(f"{path}: declared dims {dims} overflow")
    if len(raw) - header < count:
        raise DataFormatError(f"{path}: truncated payload, expected {count} bytes, found {len(raw) - header}")
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=header).reshape(dims).copy()


def write_idx(path: Union[str, Path], array: np.ndarray) -> Path:
    array = np.asarray(array)
    if array.ndim == 0 or array.ndim > 255:
        raise DataFormatError(f"cannot write rank-{array.ndim} array as IDX")
    if array.size and (array.min() < 0 or array.max() > 255):
        raise DataFormatError("IDX unsigned-byte payload must lie in [0, 255]")
    path = Path(path)
    header = bytes([0, 0, UBYTE, array.ndim]) + struct.pack(f">{array.ndim}I", *array.shape)
    path.write_bytes(header + array.astype(np.uint8).tobytes())
    return path


def load_idx(
    images_path: Union[str, Path],
    labels_path: Optional[Union[str, Path]] = None,
    num_classes: Optional[int] = None,
    split: str = "train",
) -> Dataset:
    """
    Load an IDX image file (and optionally its label file) as a Dataset.

    Args:
        images_path: ``N x rows x cols`` image file (magic ``00 00 08 03``)
        labels_path: ``N`` label file (magic ``00 00 08 01``)
        num_classes: Declared class count; defaults to ``max(label) + 1``
        split: Split tag of the resulting dataset

    Returns:
        Dataset of row-major flattened pixels scaled to ``[0, 1]``
    """
    images = read_idx(images_path)
    if images.ndim != IMAGES_RANK:
        raise DataFormatError(f"{images_path}: expected a rank-3 image file, got rank {images.ndim}")
    samples = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0

    labels = None
    if labels_path is not None:
        labels = read_idx(labels_path)
        if labels.ndim != LABELS_RANK:
            raise DataFormatError(f"{labels_path}: expected a rank-1 label file, got rank {labels.ndim}")
        if len(labels) != len(samples):
            raise DataFormatError(f"{len(samples)} images but {len(labels)} labels")
        labels = labels.astype(np.int64)
        if num_classes is None:
            num_classes = int(labels.max()) + 1 if len(labels) else 1
        if len(labels) and labels.max() >= num_classes:
            raise DataFormatError(f"{labels_path}: label {int(labels.max())} outside {num_classes} declared classes")
    num_classes = num_classes or 1
    logger.debug(f"loaded {len(samples)} IDX images of {samples.shape[1]} pixels from {images_path}")
    return Dataset(samples, labels, num_classes, split, meta={"generator": "idx", "source": str(images_path)})
