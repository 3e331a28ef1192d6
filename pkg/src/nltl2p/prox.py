"""Proximal operators for the two nonsmooth penalties in the model.

* weighted l1 on core-tensor stacks: entrywise soft thresholding with a
  per-slab threshold,
* tensor l2,p (0 < p < 1) on mode-1 fibers: each fiber is shrunk by a
  scalar gain obtained from a one-dimensional problem

      minimize over t >= 0:   nu * t**p + (t - 1)**2 / 2

  with nu = mu * norm(fiber)**(p-2).  The gain is zero below a hard
  cutoff on the fiber norm; above it, the gain is the unique root of
  ``nu*p*t**(p-1) + t - 1 = 0`` inside (tau(nu), 1), found in closed form
  for p = 1/2 and by safeguarded Newton otherwise.

All operators here return the global minimizer of their subproblem, which
the solver's descent guarantee relies on.  Everything is pure and safe to
call from parallel workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, UsageError
from .tensor import _check_p, fiber_norms

_NEWTON_MAX_ITERS = 100
_NEWTON_TOL = 1e-12


def nu_zero(p: float) -> float:
    """Largest nu for which the scalar problem has a nonzero minimizer."""
    _check_p(p)
    return (2.0 * (1.0 - p)) ** (1.0 - p) / (2.0 - p) ** (2.0 - p)


def tau(nu, p: float):
    """Lower bracket for the nonzero stationary point of the scalar problem."""
    return (2.0 * nu * (1.0 - p)) ** (1.0 / (2.0 - p))


@dataclass(frozen=True)
class L2pThresholds:
    """Cutoff geometry of the fiber shrinkage for fixed ``(mu, p)``.

    ``beta0`` is the fiber norm at which the nonzero branch would first
    touch its bracket; fibers with norm at or below ``zero_cutoff`` are
    sent to zero (the tie at the cutoff resolves to zero).
    """

    p: float
    mu: float
    beta0: float
    zero_cutoff: float

    @classmethod
    def from_params(cls, mu: float, p: float) -> "L2pThresholds":
        _check_p(p)
        if mu <= 0:
            raise UsageError(f"mu must be positive, got {mu}")
        beta0 = (2.0 * mu * (1.0 - p)) ** (1.0 / (2.0 - p))
        cutoff = beta0 * (2.0 - p) / (2.0 * (1.0 - p))
        return cls(p=p, mu=mu, beta0=beta0, zero_cutoff=cutoff)


def _solve_t_closed_form_half(nu: np.ndarray) -> np.ndarray:
    """Roots for p = 1/2: substituting u = sqrt(t) gives u**3 - u + nu/2 = 0.

    The sought root is the largest of the three real roots, squared.
    Returns NaN where the root falls outside its bracket so the caller can
    fall back to Newton.
    """
    arg = -(3.0 * np.sqrt(3.0) / 4.0) * nu
    arg = np.clip(arg, -1.0, 1.0)
    u = (2.0 / np.sqrt(3.0)) * np.cos(np.arccos(arg) / 3.0)
    t = u * u
    lo = tau(nu, 0.5)
    ok = (t > lo * (1.0 - 1e-9)) & (t <= 1.0 + 1e-12)
    resid = np.abs(nu * 0.5 * t ** (-0.5) + t - 1.0)
    ok &= resid <= 1e-9
    return np.where(ok, np.minimum(t, 1.0), np.nan)


def _solve_t_newton(nu: np.ndarray, p: float) -> np.ndarray:
    """Safeguarded Newton for ``f(t) = nu*p*t**(p-1) + t - 1`` on (tau, 1).

    f is strictly increasing on the bracket with f(tau) < 0 < f(1), so a
    Newton step that leaves the bracket is replaced by bisection.
    """
    lo = tau(nu, p)
    hi = np.ones_like(nu)
    t = 0.5 * (lo + 1.0)
    f = nu * p * t ** (p - 1.0) + t - 1.0
    for _ in range(_NEWTON_MAX_ITERS):
        if np.all(np.abs(f) <= _NEWTON_TOL):
            break
        lo = np.where(f < 0, t, lo)
        hi = np.where(f > 0, t, hi)
        fp = nu * p * (p - 1.0) * t ** (p - 2.0) + 1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            t_new = t - f / fp
        bad = ~np.isfinite(t_new) | (t_new <= lo) | (t_new >= hi)
        t = np.where(bad, 0.5 * (lo + hi), t_new)
        f = nu * p * t ** (p - 1.0) + t - 1.0
    else:
        worst = int(np.argmax(np.abs(f)))
        raise NumericalError(
            f"scalar shrinkage root finding did not converge "
            f"(nu={nu[worst]:.6g}, p={p}, residual={f[worst]:.3g})"
        )
    return t


def _solve_t_batch(nu: np.ndarray, p: float) -> np.ndarray:
    """Minimizer of the scalar problem for each entry of ``nu`` (all > 0)."""
    nu = np.asarray(nu, dtype=float)
    out = np.zeros_like(nu)
    active = nu < nu_zero(p)  # at nu == nu_zero the tie resolves to zero
    if not np.any(active):
        return out
    nu_act = nu[active]
    if p == 0.5:
        t = _solve_t_closed_form_half(nu_act)
        pending = ~np.isfinite(t)
        if np.any(pending):
            t[pending] = _solve_t_newton(nu_act[pending], p)
    else:
        t = _solve_t_newton(nu_act, p)
    out[active] = t
    return out


def solve_scalar_t(nu: float, p: float) -> float:
    """Minimizer of ``nu*t**p + (t-1)**2/2`` over t >= 0, choosing 0 on ties."""
    _check_p(p)
    if nu <= 0:
        raise UsageError(f"nu must be positive, got {nu}")
    return float(_solve_t_batch(np.array([nu]), p)[0])


def fiber_gains(beta: np.ndarray, mu: float, p: float) -> np.ndarray:
    """Shrinkage gain for fibers of Euclidean norm ``beta`` (vectorized).

    Zero at and below the cutoff; otherwise the scalar-problem root for
    ``nu = mu * beta**(p-2)``.  Results within one ulp of the cutoff are
    implementation defined (the comparison is exact on the computed value).
    """
    thresholds = L2pThresholds.from_params(mu, p)
    beta = np.asarray(beta, dtype=float)
    gains = np.zeros_like(beta)
    nz = beta > thresholds.zero_cutoff
    if np.any(nz):
        nu = mu * beta[nz] ** (p - 2.0)
        gains[nz] = _solve_t_batch(nu, p)
    return gains


def prox_l2p(t: np.ndarray, mu: float, p: float) -> np.ndarray:
    """Proximal operator of ``mu * l2p_pow(., p)``, separable over mode-1 fibers."""
    if t.ndim != 3:
        raise UsageError(f"expected a 3rd-order tensor, got ndim={t.ndim}")
    beta = fiber_norms(t)
    try:
        gains = fiber_gains(beta, mu, p)
    except NumericalError as err:
        worst = np.unravel_index(int(np.argmax(beta)), beta.shape)
        raise NumericalError(f"{err} (largest fiber at (:,{worst[0]},{worst[1]}))") from err
    return t * gains[np.newaxis, :, :]


def prox_weighted_l1(g: np.ndarray, w: np.ndarray, step: float) -> np.ndarray:
    """Soft thresholding of a core stack with per-slab threshold ``step * w_j``."""
    if g.ndim != 4:
        raise UsageError(f"expected a 4th-order stack, got ndim={g.ndim}")
    w = np.asarray(w, dtype=float)
    if w.shape != (g.shape[3],):
        raise UsageError(f"weight vector length {w.shape} != slab count {g.shape[3]}")
    if np.any(w <= 0):
        raise UsageError("weights must be strictly positive")
    if step < 0:
        raise UsageError(f"step must be nonnegative, got {step}")
    thr = (step * w)[np.newaxis, np.newaxis, np.newaxis, :]
    return np.sign(g) * np.maximum(np.abs(g) - thr, 0.0)
