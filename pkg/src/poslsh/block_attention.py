"""Blockwise approximate ALiBi attention.

Each mask sample is block diagonal with all-ones blocks, so ``A * M`` only
needs the attention logits inside each block. Numerators and denominators
are summed over every block of every sample and divided once at the end,
which computes attention with weight ``M~`` (the empirical mean of the
masks) exactly; the ``1/s`` factor cancels in the ratio.

Rows are stabilized with one shared shift per row, the maximum admissible
in-block logit over all samples (pass 1), so partial sums from different
samples stay additive (pass 2).
"""

from dataclasses import dataclass

import numpy as np

from poslsh.errors import ContractViolation, ParameterError


@dataclass
class WorkCount:
    block_flop_units: int = 0
    blocks_processed: int = 0
    bound_nd_s_bmax: int = 0
    degenerate_rows: int = 0


def _padded_blocks(partition):
    """Index grid (blocks x max_size) for a partition plus its validity mask."""
    bnd = np.asarray(partition.boundaries, dtype=np.int64)
    starts, sizes = bnd[:-1], np.diff(bnd)
    width = int(sizes.max())
    offs = np.arange(width)
    valid = offs[None, :] < sizes[:, None]
    idx = np.where(valid, starts[:, None] + offs[None, :], 0)
    return idx, valid, sizes


def _block_logits(inst, partition):
    idx, valid, sizes = _padded_blocks(partition)
    Qb = inst.Q[idx]
    Kb = inst.K[idx]
    logits = np.einsum("bid,bjd->bij", Qb, Kb) / np.sqrt(inst.d)
    adm = valid[:, :, None] & valid[:, None, :]
    if inst.causal:
        # blocks are contiguous, so local order is global order
        adm &= np.tri(idx.shape[1], dtype=bool)[None]
    return idx, valid, sizes, logits, adm


def _block_row_max(inst, partition):
    idx, valid, _, logits, adm = _block_logits(inst, partition)
    rmax = np.where(adm, logits, -np.inf).max(axis=2)
    out = np.empty(inst.n)
    out[idx[valid]] = rmax[valid]
    return out


def _accumulate(inst, partition, shift, N, D, others=None):
    idx, valid, sizes, logits, adm = _block_logits(inst, partition)
    E = np.zeros(logits.shape)
    z = logits - shift[idx][:, :, None]
    E[adm] = np.exp(z[adm])
    pos = idx[valid]
    D[pos] += E.sum(axis=2)[valid]
    N[pos] += np.einsum("bij,bjk->bik", E, inst.V[idx])[valid]
    if others is not None:
        others[pos] += adm.sum(axis=2)[valid] - 1
    return sizes


def block_partial_sums(inst, partition):
    """Unnormalized in-block attention sums for one mask sample.

    Returns ``(N_partial, D_partial, row_shift)`` where ``row_shift[i]`` is the
    maximum admissible logit of row ``i`` inside its block and every
    exponential is taken relative to it.
    """
    if partition.n != inst.n:
        raise ParameterError(f"partition covers {partition.n} positions, instance has {inst.n}")
    shift = _block_row_max(inst, partition)
    N = np.zeros((inst.n, inst.d_prime))
    D = np.zeros(inst.n)
    _accumulate(inst, partition, shift, N, D)
    return N, D, shift


def approx_alibi_attention(inst, partitions):
    """Approximate ALiBi attention from a set of mask samples.

    Returns ``(T_tilde, work)``. ``T_tilde`` equals dense attention weighted
    by the empirical mean of the masks; ``work`` counts
    ``sum |I|^2 * (d' + 2)`` over all blocks of all samples.
    """
    if not partitions:
        raise ParameterError("need at least one mask sample")
    for p in partitions:
        if p.n != inst.n:
            raise ParameterError(f"partition covers {p.n} positions, instance has {inst.n}")
    n, dv = inst.n, inst.d_prime

    shift = np.full(n, -np.inf)
    for p in partitions:
        np.maximum(shift, _block_row_max(inst, p), out=shift)

    N = np.zeros((n, dv))
    D = np.zeros(n)
    # admissible keys other than the row itself, over all samples
    others = np.zeros(n, dtype=np.int64)
    work = WorkCount()
    b_max = 0
    for p in partitions:
        sizes = _accumulate(inst, p, shift, N, D, others)
        work.block_flop_units += int(np.sum(sizes * sizes)) * (dv + 2)
        work.blocks_processed += len(sizes)
        b_max = max(b_max, int(sizes.max()))
    work.bound_nd_s_bmax = n * (dv + 2) * len(partitions) * b_max
    if not work_bound_check(work):
        raise ContractViolation(f"work {work.block_flop_units} exceeds n*(d'+2)*s*b_max = {work.bound_nd_s_bmax}")

    bad = D <= 0
    T = np.empty((n, dv))
    T[~bad] = N[~bad] / D[~bad, None]
    # a row that only ever sees itself is V_i; skip the rounding of s*V_i / s
    alone = (others == 0) & ~bad
    T[alone] = inst.V[alone]
    if bad.any():
        T[bad] = inst.V[bad]
        work.degenerate_rows = int(bad.sum())
    return T, work


def work_bound_check(work):
    return work.block_flop_units <= work.bound_nd_s_bmax
