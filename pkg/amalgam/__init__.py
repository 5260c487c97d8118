"""
Amalgam - Contrastive Knowledge Amalgamation
============================================

Merge several teachers trained on disjoint class subsets into one student
over the union of their label sets, without labels, by combining intra- and
inter-model contrast, common-space alignment and soft-target distillation.

Example Usage:
--------------
>>> from amalgam.data import gen_blobs, split_tasks
>>> from amalgam.training import AmalgamationConfig, amalgamate_student, pretrain_teacher
>>> train, test = gen_blobs(8, 32, 500, 10.0, seed=0)
>>> tasks = split_tasks(8, 2, seed=0)

Command line: ``amalgam gen-data``, ``amalgam pretrain --task 0``,
``amalgam amalgamate``, ``amalgam ablate --axis losses``.
"""

__version__ = "1.0.0"

from . import core, data, losses, models, training

__all__ = ["core", "data", "losses", "models", "training", "__version__"]
