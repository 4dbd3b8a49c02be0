"""Positional LSH approximation of ALiBi-biased attention."""

from poslsh.alibi_kernel import alibi_entry, alibi_matrix, alibi_spectral_bound, psi_sigma
from poslsh.attention import (
    AttentionInstance,
    attention_logits,
    dense_masked_attention,
    exact_alibi_attention,
    exact_attention,
    row_normalize_weighted,
)
from poslsh.block_attention import WorkCount, approx_alibi_attention, block_partial_sums, work_bound_check
from poslsh.diagnostics import ErrorAudit, audit_error_bound, beta_star, p_two_inf_norm
from poslsh.mask_estimator import (
    MaskStats,
    block_size_bound,
    block_stats,
    empirical_mean,
    mask_matrix,
    residual_max_norm,
    residual_spectral_norm,
)
from poslsh.rbf_lsh import (
    BlockPartition,
    RbfHash,
    estimate_collision_probability,
    hash_position,
    partition_from_hash,
    sample_gamma,
    sample_partitions,
    sample_rbf_hash,
)

__version__ = "0.1.0"
