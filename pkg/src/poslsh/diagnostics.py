"""Per-run audit of the approximation error against its realized bound.

For a row-stochastic ``P`` (unbiased attention) write

    N_ij = sum_k P_ik L*_ik V_kj      D_i = sum_k P_ik L*_ik
    N~_ij = sum_k P_ik M~_ik V_kj     D~_i = sum_k P_ik M~_ik

so that ``T* = N / D`` and ``T~* = N~ / D~``. With ``R = L* - M~`` and
``e = min(||R||_max, ||P||_{2,inf} ||R||)`` both ``|N - N~| <= e ||V||_max``
and ``|D - D~| <= e`` hold entrywise, and since ``|N / D| <= ||V||_max``,

    ||T* - T~*||_max <= 2 e ||V||_max / min_i D~_i.

Every quantity here is realized, so the inequality holds on every run.
"""

import math
import time
from dataclasses import dataclass

import numpy as np

from poslsh.alibi_kernel import alibi_matrix
from poslsh.attention import dense_masked_attention, exact_alibi_attention, exact_attention
from poslsh.block_attention import WorkCount, approx_alibi_attention
from poslsh.errors import ParameterError
from poslsh.mask_estimator import (
    SPECTRAL_REL_ACCURACY,
    block_stats,
    empirical_mean,
    residual_max_norm,
    residual_spectral_norm,
)

NUMERIC_SLACK = 1e-9


@dataclass
class ErrorAudit:
    beta_star: float
    p_two_inf: float
    res_max: float
    res_spec: float
    d_tilde_min: float
    output_err: float
    bound_value: float
    bound_holds: bool
    degenerate: bool = False
    b_max: int = 0
    work: WorkCount = None
    wall_ms: float = 0.0


def beta_star(P, L_star):
    P = np.asarray(P, dtype=np.float64)
    L_star = np.asarray(L_star, dtype=np.float64)
    if P.shape != L_star.shape:
        raise ParameterError(f"shape mismatch: {P.shape} vs {L_star.shape}")
    return float(np.min(np.sum(P * L_star, axis=1)))


def p_two_inf_norm(P):
    """Largest Euclidean row norm."""
    P = np.asarray(P, dtype=np.float64)
    return float(np.sqrt(np.max(np.sum(P * P, axis=1))))


def realized_bound(res_max, res_spec, p_two_inf, v_max, d_tilde_min):
    if not d_tilde_min > 0:
        return math.inf
    # power iteration can only under-estimate ||R||, by at most its validated accuracy
    spec_route = p_two_inf * res_spec * (1.0 + SPECTRAL_REL_ACCURACY)
    return 2.0 * min(res_max, spec_route) * v_max / d_tilde_min


def audit_from_weight(inst, weight, T_tilde=None, fault=False):
    """Audit an approximation that replaces ``L*`` by ``weight``.

    ``T_tilde`` defaults to the dense weighted attention. ``fault`` corrupts
    ``T_tilde`` so that the inequality must fail; it exists to exercise the
    failure path.
    """
    P, _ = exact_attention(inst)
    L = alibi_matrix(inst.n, inst.sigma)
    _, T_star = exact_alibi_attention(inst)
    if T_tilde is None:
        T_tilde = dense_masked_attention(inst, weight)

    res_max = residual_max_norm(L, weight)
    res_spec = residual_spectral_norm(L, weight)
    p2 = p_two_inf_norm(P)
    d_tilde_min = float(np.min(np.sum(P * weight, axis=1)))
    v_max = float(np.max(np.abs(inst.V)))
    bound = realized_bound(res_max, res_spec, p2, v_max, d_tilde_min)
    if fault and math.isfinite(bound):
        T_tilde = T_tilde.copy()
        T_tilde[0, 0] += 2.0 * bound + 1.0
    output_err = float(np.max(np.abs(T_star - T_tilde)))
    degenerate = not math.isfinite(bound)
    return ErrorAudit(
        beta_star=beta_star(P, L),
        p_two_inf=p2,
        res_max=res_max,
        res_spec=res_spec,
        d_tilde_min=d_tilde_min,
        output_err=output_err,
        bound_value=bound,
        bound_holds=degenerate or output_err <= bound + NUMERIC_SLACK,
        degenerate=degenerate,
    )


def audit_error_bound(inst, partitions, fault=False):
    M = empirical_mean(partitions, inst.n)
    t0 = time.perf_counter()
    T_tilde, work = approx_alibi_attention(inst, partitions)
    wall_ms = (time.perf_counter() - t0) * 1e3
    audit = audit_from_weight(inst, M, T_tilde=T_tilde, fault=fault)
    audit.work = work
    audit.b_max = block_stats(partitions).b_max
    audit.wall_ms = wall_ms
    return audit
