"""Dense 3rd/4th-order tensor kernels: unfolding, folding, mode products, norms.

Conventions used throughout the library:

* A 3rd-order tensor is a ``numpy.ndarray`` of shape ``(I1, I2, I3)``.
* A 4th-order stack is an ndarray of shape ``(m1, m2, m3, N)``; slab ``j``
  is ``t[..., j]`` and all slab-wise operations act independently per slab.
* A factor stack is an ndarray of shape ``(m, n, N)`` with ``m >= n``,
  holding one ``m x n`` matrix per slab.
* The linearization contract is "first index fastest" (Fortran order).
  The mode-k unfolding places entry ``(i1, i2, i3)`` at row ``i_k`` and
  column ``1 + sum_{l != k} (i_l - 1) * prod_{m < l, m != k} I_m``
  (1-based); all index math below is derived from that map.

All functions are pure with respect to their inputs; arrays may be shared
read-only across workers.  Mutation requires exclusive access.
"""

from __future__ import annotations

import numpy as np

from .errors import UsageError

_MODES = (1, 2, 3)


def _check_mode(mode: int) -> None:
    if mode not in _MODES:
        raise UsageError(f"mode must be 1, 2 or 3, got {mode}")


def unfold(t: np.ndarray, mode: int) -> np.ndarray:
    """Mode-k unfolding of a 3rd-order tensor into an ``I_k x prod(I_j)`` matrix."""
    _check_mode(mode)
    if t.ndim != 3:
        raise UsageError(f"expected a 3rd-order tensor, got ndim={t.ndim}")
    moved = np.moveaxis(t, mode - 1, 0)
    return moved.reshape(moved.shape[0], -1, order="F")


def fold(m: np.ndarray, mode: int, dims: tuple[int, int, int]) -> np.ndarray:
    """Inverse of :func:`unfold`: rebuild the tensor of shape ``dims``."""
    _check_mode(mode)
    if len(dims) != 3:
        raise UsageError(f"dims must have length 3, got {dims}")
    rest = tuple(d for k, d in enumerate(dims, start=1) if k != mode)
    if m.shape != (dims[mode - 1], rest[0] * rest[1]):
        raise UsageError(
            f"matrix shape {m.shape} inconsistent with dims {dims} and mode {mode}"
        )
    moved = m.reshape((dims[mode - 1],) + rest, order="F")
    return np.moveaxis(moved, 0, mode - 1)


def mode_product(t: np.ndarray, m: np.ndarray, mode: int) -> np.ndarray:
    """Mode-k product: the result's mode-k unfolding equals ``m @ unfold(t, k)``."""
    _check_mode(mode)
    if m.ndim != 2 or m.shape[1] != t.shape[mode - 1]:
        raise UsageError(
            f"matrix shape {m.shape} does not match tensor dim {t.shape[mode - 1]} "
            f"along mode {mode}"
        )
    return np.moveaxis(np.tensordot(m, t, axes=(1, mode - 1)), 0, mode - 1)


def inner(a: np.ndarray, b: np.ndarray) -> float:
    """Frobenius inner product of two same-shaped tensors."""
    if a.shape != b.shape:
        raise UsageError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.dot(a.ravel(), b.ravel()))


def frobenius(t: np.ndarray) -> float:
    """Frobenius norm of a tensor of any order."""
    return float(np.linalg.norm(t.ravel()))


def l1(t: np.ndarray) -> float:
    """Component-wise l1 norm."""
    return float(np.sum(np.abs(t)))


def weighted_l1(g: np.ndarray, w: np.ndarray) -> float:
    """Weighted l1 norm of a 4th-order stack: ``sum_j w_j * l1(slab_j)``."""
    w = np.asarray(w, dtype=float)
    if g.ndim != 4:
        raise UsageError(f"expected a 4th-order stack, got ndim={g.ndim}")
    if w.shape != (g.shape[3],):
        raise UsageError(f"weight vector length {w.shape} != slab count {g.shape[3]}")
    if np.any(w <= 0):
        raise UsageError("weights must be strictly positive")
    slab_l1 = np.sum(np.abs(g), axis=(0, 1, 2))
    return float(np.dot(w, slab_l1))


def fiber_norms(t: np.ndarray) -> np.ndarray:
    """Euclidean norms of all mode-1 fibers, as an ``(I2, I3)`` array."""
    return np.sqrt(np.sum(np.square(t), axis=0))


def l2p_pow(t: np.ndarray, p: float) -> float:
    """Group-sparsity measure: sum over mode-1 fibers of ``norm(fiber)**p``.

    A zero fiber contributes 0 (limit convention for the 0**0 corner).
    """
    _check_p(p)
    norms = fiber_norms(t)
    out = np.zeros_like(norms)
    nz = norms > 0
    out[nz] = norms[nz] ** p
    return float(np.sum(out))


def l2p(t: np.ndarray, p: float) -> float:
    """Tensor l2,p quasi-norm: the p-th root of :func:`l2p_pow`."""
    return l2p_pow(t, p) ** (1.0 / p)


def _check_p(p: float) -> None:
    if not 0.0 < p < 1.0:
        raise UsageError(f"p must lie in (0, 1), got {p}")


def check_finite(t: np.ndarray, what: str = "tensor") -> None:
    """Raise if the array contains NaN or infinity."""
    if not np.all(np.isfinite(t)):
        raise UsageError(f"{what} contains non-finite entries")


# Slab-wise (batched) helpers for 4th-order stacks.  The last axis indexes
# slabs in every routine below.


def unfold_slabs(t4: np.ndarray, mode: int) -> np.ndarray:
    """Per-slab mode-k unfolding of an ``(m1, m2, m3, N)`` stack.

    Returns an ``(N, m_k, rest)`` array so the slab axis leads, matching
    numpy's batched linear-algebra convention.
    """
    _check_mode(mode)
    if t4.ndim != 4:
        raise UsageError(f"expected a 4th-order stack, got ndim={t4.ndim}")
    moved = np.moveaxis(t4, mode - 1, 0)
    flat = moved.reshape(moved.shape[0], -1, moved.shape[-1], order="F")
    return np.moveaxis(flat, -1, 0)


_MODE_SUBSCRIPTS = {
    1: ("ijn", "jbcn", "ibcn"),
    2: ("ijn", "ajcn", "aicn"),
    3: ("ijn", "abjn", "abin"),
}


def mode_product_slabs(t4: np.ndarray, mats: np.ndarray, mode: int) -> np.ndarray:
    """Slab-wise mode-k product with a factor stack ``(m, n, N)``."""
    _check_mode(mode)
    ms, ts, out = _MODE_SUBSCRIPTS[mode]
    if mats.shape[1] != t4.shape[mode - 1] or mats.shape[2] != t4.shape[3]:
        raise UsageError(
            f"factor stack {mats.shape} does not conform to tensor stack "
            f"{t4.shape} along mode {mode}"
        )
    return np.einsum(f"{ms},{ts}->{out}", mats, t4)


def mode_product_slabs_t(t4: np.ndarray, mats: np.ndarray, mode: int) -> np.ndarray:
    """Slab-wise mode-k product with each factor transposed."""
    _check_mode(mode)
    ms, ts, out = _MODE_SUBSCRIPTS[mode]
    if mats.shape[0] != t4.shape[mode - 1] or mats.shape[2] != t4.shape[3]:
        raise UsageError(
            f"factor stack {mats.shape} does not conform to tensor stack "
            f"{t4.shape} along mode {mode} (transposed)"
        )
    return np.einsum(f"{ms[1]}{ms[0]}{ms[2]},{ts}->{out}", mats, t4)
