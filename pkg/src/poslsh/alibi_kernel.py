"""The ALiBi bias matrix ``L*[i, j] = exp(-|i - j| / sigma)`` and its norm certificates."""

import math

import numpy as np

from poslsh.errors import ContractViolation, ParameterError, ResourceLimitError

DENSE_CAP = 8192


def _check_sigma(sigma):
    if not sigma > 0:
        raise ParameterError(f"sigma must be positive, got {sigma!r}")


def alibi_entry(i, j, sigma):
    _check_sigma(sigma)
    return math.exp(-abs(i - j) / sigma)


def alibi_matrix(n, sigma, max_dense=DENSE_CAP):
    """Dense symmetric Toeplitz ALiBi matrix; above ``max_dense`` use :func:`alibi_entry`."""
    _check_sigma(sigma)
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    if n > max_dense:
        raise ResourceLimitError(f"refusing to materialize a {n}x{n} matrix (cap {max_dense})")
    first_row = np.exp(-np.arange(n, dtype=np.float64) / sigma)
    idx = np.arange(n)
    return first_row[np.abs(idx[:, None] - idx[None, :])]


def _row_sum_form(sigma):
    # (e^{1/s} + 1) / (e^{1/s} - 1) = 1 + 2 / (e^{1/s} - 1)
    try:
        return 1.0 + 2.0 / math.expm1(1.0 / sigma)
    except OverflowError:
        return 1.0


def _dtft_form(sigma):
    # sup of the DTFT of phi^|z| is (1 + phi) / (1 - phi)
    phi = math.exp(-1.0 / sigma)
    return (1.0 + phi) / -math.expm1(-1.0 / sigma)


def alibi_spectral_bound(sigma):
    """Upper bound on ``||L*||`` valid for every context length.

    Computed two ways (geometric row sum and DTFT supremum), which must agree.
    """
    _check_sigma(sigma)
    a = _row_sum_form(sigma)
    b = _dtft_form(sigma)
    if abs(a - b) > 1e-12 * max(abs(a), abs(b)):
        raise ContractViolation(f"row-sum bound {a!r} and DTFT bound {b!r} disagree at sigma={sigma}")
    return a


def psi_sigma(sigma):
    return 1.0 + sigma + alibi_spectral_bound(sigma)
