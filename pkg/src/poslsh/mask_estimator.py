"""Mask samples, their empirical mean, residual norms and block-size statistics."""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from poslsh._rng import POWER_ITER_STREAM, child_rng
from poslsh.alibi_kernel import DENSE_CAP
from poslsh.errors import ContractViolation, ParameterError, ResourceLimitError

SPECTRAL_TOL = 1e-9
SPECTRAL_MAX_ITERS = 10_000
SPECTRAL_RESTARTS = 3
RESIDUAL_TOL = 1e-7
EIGH_FALLBACK_CAP = 4096
# relative accuracy the power iteration is validated to (see tests)
SPECTRAL_REL_ACCURACY = 1e-6


@dataclass
class MaskStats:
    s: int
    b_max: int
    per_sample_b_max: list = field(default_factory=list)


def _check_dense(n, max_dense):
    if n > max_dense:
        raise ResourceLimitError(f"refusing to materialize a {n}x{n} matrix (cap {max_dense})")


def mask_matrix(partition, max_dense=DENSE_CAP):
    n = partition.n
    _check_dense(n, max_dense)
    M = np.zeros((n, n))
    for a, b in zip(partition.boundaries, partition.boundaries[1:]):
        M[a:b, a:b] = 1.0
    return M


def _check_same_n(partitions, n):
    if not partitions:
        raise ParameterError("need at least one partition")
    for p in partitions:
        if p.n != n:
            raise ParameterError(f"partition over {p.n} positions in a set with n={n}")


def co_block_counts(partitions, n, max_dense=DENSE_CAP):
    """Integer matrix counting, for each (i, j), the samples where i and j share a block.

    Blocks are contiguous, so for ``i <= j`` the pair is co-blocked exactly
    when ``j`` is before the end of ``i``'s block. Counting block ends per row
    and taking a reverse cumulative sum gives all counts in O(s*n + n^2).
    """
    _check_same_n(partitions, n)
    _check_dense(n, max_dense)
    ends = np.stack([p.block_ends() for p in partitions])  # (s, n), values in 1..n
    rows = np.broadcast_to(np.arange(n), ends.shape)
    hist = np.bincount((rows * (n + 1) + ends).ravel(), minlength=n * (n + 1)).reshape(n, n + 1)
    # count[i, j] = #{samples : end(i) > j}
    upper = np.cumsum(hist[:, ::-1], axis=1)[:, ::-1][:, 1:]
    upper = np.triu(upper)
    return upper + np.triu(upper, 1).T


def empirical_mean(partitions, n, max_dense=DENSE_CAP):
    return co_block_counts(partitions, n, max_dense) / len(partitions)


def empirical_mean_entry(partitions, i, j):
    """One entry of the empirical mean without building the matrix."""
    if not partitions:
        raise ParameterError("need at least one partition")
    lo, hi = min(i, j), max(i, j)
    hits = sum(1 for p in partitions if p.block_ends()[lo] > hi)
    return hits / len(partitions)


def _check_shapes(L, M):
    L = np.asarray(L, dtype=np.float64)
    M = np.asarray(M, dtype=np.float64)
    if L.shape != M.shape:
        raise ParameterError(f"shape mismatch: {L.shape} vs {M.shape}")
    return L, M


def residual_max_norm(L, M):
    L, M = _check_shapes(L, M)
    return float(np.max(np.abs(L - M)))


def symmetric_spectral_norm(R, tol=SPECTRAL_TOL, max_iters=SPECTRAL_MAX_ITERS,
                            restarts=SPECTRAL_RESTARTS, seed=0):
    """Largest |eigenvalue| of a symmetric matrix by power iteration.

    The estimate for a unit iterate ``x`` is ``mu = ||R x||``, the square root
    of the Rayleigh quotient of ``R^2``; it is nondecreasing and converges to
    the spectral radius even when the extreme eigenvalues are ``+lam`` and
    ``-lam``. Iteration stops when successive estimates differ by less than
    ``tol * mu`` and the ``R^2`` eigen-residual ``||R^2 x - mu^2 x|| / mu^2``
    is below ``RESIDUAL_TOL`` (a change test alone stops early on small
    spectral gaps). The best of ``restarts`` random starts is returned.

    Tightly clustered top eigenvalues can keep power iteration from
    converging within ``max_iters``; such matrices are handed to a dense
    symmetric eigensolver instead.
    """
    R = np.asarray(R, dtype=np.float64)
    n = R.shape[0]
    if R.ndim != 2 or R.shape[1] != n:
        raise ParameterError(f"expected a square matrix, got shape {R.shape}")
    if np.max(np.abs(R - R.T), initial=0.0) > 1e-12:
        raise ContractViolation("residual is not symmetric")
    if not np.any(R):
        return 0.0
    rng = child_rng(seed, POWER_ITER_STREAM)
    best = 0.0
    for _ in range(restarts):
        x = rng.standard_normal(n)
        x /= np.linalg.norm(x)
        y = R @ x
        est = float(np.linalg.norm(y))
        converged = False
        for _ in range(max_iters):
            if est == 0.0:
                converged = True
                break
            x_next = y / est
            z = R @ x_next
            new = float(np.linalg.norm(z))
            # R^2 x = est * z, so the R^2 residual relative to est^2 is ||z - est x|| / est
            resid = float(np.linalg.norm(z - est * x)) / est
            x, y = x_next, z
            converged = abs(new - est) <= tol * new and resid <= RESIDUAL_TOL
            est = new
            if converged:
                break
        if not converged:
            if n <= EIGH_FALLBACK_CAP:
                return float(np.max(np.abs(np.linalg.eigvalsh(R))))
            warnings.warn(f"power iteration did not converge in {max_iters} steps", RuntimeWarning)
        best = max(best, est)
    return best


def residual_spectral_norm(L, M, tol=SPECTRAL_TOL, max_iters=SPECTRAL_MAX_ITERS):
    L, M = _check_shapes(L, M)
    return symmetric_spectral_norm(L - M, tol=tol, max_iters=max_iters)


def block_stats(partitions):
    if not partitions:
        raise ParameterError("need at least one partition")
    per = [p.max_block_size() for p in partitions]
    return MaskStats(s=len(partitions), b_max=max(per), per_sample_b_max=per)


def block_size_bound(sigma, s, delta):
    """High-probability cap on the largest block over ``s`` samples: ``1 + sigma*(3 ln(s/delta) + 2)``."""
    if not 0 < delta <= math.exp(-1) * (1 + 1e-12):
        raise ParameterError(f"delta must lie in (0, 1/e], got {delta!r}")
    if sigma <= 0 or s < 1:
        raise ParameterError("sigma must be positive and s >= 1")
    return 1.0 + sigma * (3.0 * math.log(s / delta) + 2.0)
