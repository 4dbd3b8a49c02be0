"""Exact (dense, float64) reference attention computations."""

from dataclasses import dataclass

import numpy as np

from poslsh.alibi_kernel import alibi_matrix
from poslsh.errors import DegenerateRowError, ParameterError


@dataclass(frozen=True)
class AttentionInstance:
    Q: np.ndarray
    K: np.ndarray
    V: np.ndarray
    sigma: float
    causal: bool = False

    def __post_init__(self):
        Q, K, V = (np.ascontiguousarray(a, dtype=np.float64) for a in (self.Q, self.K, self.V))
        if Q.ndim != 2 or K.ndim != 2 or V.ndim != 2:
            raise ParameterError("Q, K and V must be 2-D")
        if Q.shape != K.shape:
            raise ParameterError(f"Q and K shapes differ: {Q.shape} vs {K.shape}")
        if V.shape[0] != Q.shape[0]:
            raise ParameterError(f"V has {V.shape[0]} rows, expected {Q.shape[0]}")
        if Q.shape[0] < 1 or Q.shape[1] < 1:
            raise ParameterError("need n >= 1 and d >= 1")
        if not all(np.isfinite(a).all() for a in (Q, K, V)):
            raise ParameterError("Q, K and V must be finite")
        if not self.sigma > 0:
            raise ParameterError(f"sigma must be positive, got {self.sigma!r}")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "V", V)

    @property
    def n(self):
        return self.Q.shape[0]

    @property
    def d(self):
        return self.Q.shape[1]

    @property
    def d_prime(self):
        return self.V.shape[1]


def attention_logits(Q, K):
    Q = np.asarray(Q, dtype=np.float64)
    K = np.asarray(K, dtype=np.float64)
    if Q.ndim != 2 or Q.shape != K.shape:
        raise ParameterError(f"Q and K must share a 2-D shape, got {Q.shape} and {K.shape}")
    return (Q @ K.T) / np.sqrt(Q.shape[1])


def _normalize(logits, weight, causal):
    """Row-normalize ``exp(logits) * weight`` over admissible entries.

    Returns the row-stochastic matrix and the indices of fully masked rows,
    which are left as zero rows for the caller to handle.
    """
    logits = np.asarray(logits, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    if logits.shape != weight.shape or logits.ndim != 2:
        raise ParameterError(f"logits {logits.shape} and weight {weight.shape} must match")
    if np.any(weight < 0):
        raise ParameterError("weights must be nonnegative")
    admissible = weight > 0
    if causal:
        admissible &= np.tri(*logits.shape, dtype=bool)
    z = np.full(logits.shape, -np.inf)
    z[admissible] = logits[admissible] + np.log(weight[admissible])
    row_max = z.max(axis=1)
    degenerate = np.flatnonzero(~np.isfinite(row_max))
    row_max[degenerate] = 0.0
    E = np.zeros(logits.shape)
    E[admissible] = np.exp((z - row_max[:, None])[admissible])
    denom = E.sum(axis=1)
    denom[degenerate] = 1.0
    return E / denom[:, None], degenerate


def row_normalize_weighted(logits, weight, causal):
    P, degenerate = _normalize(logits, weight, causal)
    if degenerate.size:
        raise DegenerateRowError(int(degenerate[0]))
    return P


def exact_attention(inst):
    """Unbiased attention: returns ``(P, T = P V)``."""
    logits = attention_logits(inst.Q, inst.K)
    P = row_normalize_weighted(logits, np.ones_like(logits), inst.causal)
    return P, P @ inst.V


def exact_alibi_attention(inst):
    """ALiBi-biased attention: returns ``(P*, T* = P* V)``."""
    logits = attention_logits(inst.Q, inst.K)
    P = row_normalize_weighted(logits, alibi_matrix(inst.n, inst.sigma), inst.causal)
    return P, P @ inst.V


def dense_masked_attention(inst, weight, return_degenerate=False):
    """Dense O(n^2 d) attention with an arbitrary nonnegative weighting.

    A fully masked row copies its own value row; the number of such rows is
    returned as well when ``return_degenerate`` is set.
    """
    logits = attention_logits(inst.Q, inst.K)
    P, degenerate = _normalize(logits, weight, inst.causal)
    P[degenerate, degenerate] = 1.0
    T = P @ inst.V
    if return_degenerate:
        return T, len(degenerate)
    return T
