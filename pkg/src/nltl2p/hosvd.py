"""Stiefel projection, reduced SVD, and slab-independent truncated HOSVD.

The nearest point on the Stiefel manifold to a matrix ``A`` (in Frobenius
distance) is ``U @ V.T`` for any reduced SVD ``A = U S V.T``; it is unique
when ``A`` has full column rank.  Rank-deficient inputs emit a
:class:`~nltl2p.errors.DegeneracyWarning` and return one valid member of
the solution set.

All slab-stack routines process the ``N`` slabs independently (the last
axis); there is no coupling across slabs.
"""

from __future__ import annotations

import warnings

import numpy as np

from .errors import DegeneracyWarning, NumericalError, UsageError
from .tensor import mode_product_slabs, mode_product_slabs_t, unfold_slabs

_RANK_RTOL = 1e-12


def reduced_svd(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Reduced SVD ``a = U @ diag(sigma) @ V.T`` of an ``m x n`` matrix, m >= n."""
    if a.ndim != 2 or a.shape[0] < a.shape[1]:
        raise UsageError(f"expected an m x n matrix with m >= n, got shape {a.shape}")
    try:
        u, sigma, vh = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as err:
        raise NumericalError(f"SVD did not converge for shape {a.shape}") from err
    return u, sigma, vh.T


def project_stiefel(a: np.ndarray) -> np.ndarray:
    """Nearest matrix with orthonormal columns to ``a`` (m x n, m >= n).

    A zero input returns the first ``n`` canonical basis vectors.  Inputs
    without full column rank trigger a :class:`DegeneracyWarning`.
    """
    u, sigma, v = reduced_svd(a)
    if sigma[0] == 0.0:
        warnings.warn("projecting a zero matrix onto the Stiefel manifold",
                      DegeneracyWarning, stacklevel=2)
        return np.eye(a.shape[0], a.shape[1])
    if sigma[-1] <= _RANK_RTOL * sigma[0]:
        warnings.warn("Stiefel projection of a rank-deficient matrix is not unique",
                      DegeneracyWarning, stacklevel=2)
    return u @ v.T


def project_stiefel_slabs(a: np.ndarray) -> np.ndarray:
    """Slab-wise Stiefel projection of an ``(m, n, N)`` stack."""
    if a.ndim != 3 or a.shape[0] < a.shape[1]:
        raise UsageError(f"expected an (m, n, N) stack with m >= n, got {a.shape}")
    batched = np.moveaxis(a, -1, 0)  # (N, m, n)
    try:
        u, sigma, vh = np.linalg.svd(batched, full_matrices=False)
    except np.linalg.LinAlgError as err:
        raise NumericalError("batched SVD did not converge") from err
    if np.any(sigma[:, -1] <= _RANK_RTOL * np.maximum(sigma[:, 0], np.finfo(float).tiny)):
        warnings.warn("Stiefel projection hit rank-deficient slabs",
                      DegeneracyWarning, stacklevel=2)
    return np.moveaxis(u @ vh, 0, -1)


def init_hosvd(
    y: np.ndarray, ranks: tuple[int, int, int]
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Truncated HOSVD of every slab of an ``(m1, m2, m3, N)`` stack.

    Per slab, factor ``i`` collects the leading ``n_i`` left singular
    vectors of the mode-``i`` unfolding, and the core is the slab
    multiplied by the transposed factors.  Returns ``(cores, x1, x2, x3)``
    with cores of shape ``(n1, n2, n3, N)`` and factors ``(m_i, n_i, N)``.
    """
    if y.ndim != 4:
        raise UsageError(f"expected a 4th-order stack, got ndim={y.ndim}")
    n = tuple(int(r) for r in ranks)
    if len(n) != 3:
        raise UsageError(f"ranks must have length 3, got {ranks}")
    for i in range(3):
        if not 1 <= n[i] <= y.shape[i]:
            raise UsageError(
                f"rank {n[i]} exceeds mode-{i + 1} dimension {y.shape[i]}"
            )
    factors = []
    degenerate = False
    for mode in (1, 2, 3):
        unf = unfold_slabs(y, mode)  # (N, m_i, rest)
        try:
            u, sigma, _ = np.linalg.svd(unf, full_matrices=False)
        except np.linalg.LinAlgError as err:
            raise NumericalError(f"HOSVD SVD failed along mode {mode}") from err
        lead = u[:, :, : n[mode - 1]]
        # a zero (or rank-short) slab leaves trailing factor columns arbitrary
        if np.any(
            sigma[:, n[mode - 1] - 1]
            <= _RANK_RTOL * np.maximum(sigma[:, 0], np.finfo(float).tiny)
        ):
            degenerate = True
        factors.append(np.moveaxis(lead, 0, -1))  # (m_i, n_i, N)
    if degenerate:
        warnings.warn("HOSVD factors are not unique for rank-deficient slabs",
                      DegeneracyWarning, stacklevel=2)
    g = y
    for mode, x in zip((1, 2, 3), factors):
        g = mode_product_slabs_t(g, x, mode)
    return g, factors[0], factors[1], factors[2]


def compose(
    g: np.ndarray, x1: np.ndarray, x2: np.ndarray, x3: np.ndarray
) -> np.ndarray:
    """Slab-wise triple mode product ``g x1 X1 x2 X2 x3 X3``."""
    out = mode_product_slabs(g, x1, 1)
    out = mode_product_slabs(out, x2, 2)
    return mode_product_slabs(out, x3, 3)


def orthonormality_deviation(stack: np.ndarray) -> float:
    """Largest per-slab deviation ``||X.T X - I||_F`` of a factor stack."""
    batched = np.moveaxis(stack, -1, 0)  # (N, m, n)
    gram = np.einsum("nij,nik->njk", batched, batched)
    eye = np.eye(stack.shape[1])
    return float(np.max(np.sqrt(np.sum((gram - eye) ** 2, axis=(1, 2)))))


def check_orthonormal(stack: np.ndarray, tol: float = 1e-10) -> float:
    """Raise :class:`UsageError` when a factor stack drifts off the manifold."""
    dev = orthonormality_deviation(stack)
    if dev > tol:
        raise UsageError(f"factor stack is not orthonormal (deviation {dev:.3e})")
    return dev
