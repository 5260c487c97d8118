"""
Losses module imports
"""

from .alignment import DEFAULT_SCALES, KernelBank, alignment_loss, mmd_sq
from .contrastive import cosine_similarity, info_nce_loss, intra_margin_loss, pairwise_cosine
from .distill import (
    KLDirection,
    TargetMode,
    TeacherBlock,
    concatenated_logit_target,
    distill_to_target,
    kl_divergence,
    renormalized_target,
    soft_target_loss,
    validate_slot_ranges,
)
from .gradcases import GRADIENT_CASES, GradCheckResult, run_gradient_checks
from .objective import COMPONENTS, LossBreakdown, LossWeights, total_loss
from .transport import (
    DistanceMetric,
    TransportMap,
    gw_discrepancy,
    gw_discrepancy_bruteforce,
    inter_contrast_loss,
    pairwise_distance_matrix,
    transport_map,
)

__all__ = [
    "DEFAULT_SCALES",
    "KernelBank",
    "alignment_loss",
    "mmd_sq",
    "cosine_similarity",
    "info_nce_loss",
    "intra_margin_loss",
    "pairwise_cosine",
    "KLDirection",
    "TargetMode",
    "TeacherBlock",
    "concatenated_logit_target",
    "distill_to_target",
    "kl_divergence",
    "renormalized_target",
    "soft_target_loss",
    "validate_slot_ranges",
    "GRADIENT_CASES",
    "GradCheckResult",
    "run_gradient_checks",
    "COMPONENTS",
    "LossBreakdown",
    "LossWeights",
    "total_loss",
    "DistanceMetric",
    "TransportMap",
    "gw_discrepancy",
    "gw_discrepancy_bruteforce",
    "inter_contrast_loss",
    "pairwise_distance_matrix",
    "transport_map",
]
