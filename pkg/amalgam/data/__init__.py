"""
Data module imports
"""

from .augment import AugmentationPolicy, two_views
from .batching import Batch, batch_count, make_batches
from .datasets import Dataset, gen_blobs, gen_cross_dataset, load_dataset, save_dataset
from .idx import load_idx, read_idx, write_idx
from .tasks import LabelSpace, TaskSpec, check_partition, split_tasks, tasks_from_groups

__all__ = [
    "AugmentationPolicy",
    "two_views",
    "Batch",
    "batch_count",
    "make_batches",
    "Dataset",
    "gen_blobs",
    "gen_cross_dataset",
    "load_dataset",
    "save_dataset",
    "load_idx",
    "read_idx",
    "write_idx",
    "LabelSpace",
    "TaskSpec",
    "check_partition",
    "split_tasks",
    "tasks_from_groups",
]
