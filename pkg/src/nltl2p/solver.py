"""Proximal block coordinate descent for joint denoising and destriping.

The iterate is ``Z = (S, X1, X2, X3, G, L)``: the structured sparse
component S, three orthonormal factor stacks, the core stack G, and the
restored cube L.  The objective being minimized is

    Phi(Z) = delta/2 * ||R(L + S - D)||_F^2
           + gamma   * l2p_pow(sqrt(W) * S, p)
           + weighted_l1(G, w)
           + 1/2     * ||R(L) - compose(G, X1, X2, X3)||_F^2

subject to every factor slab having orthonormal columns, where R is the
nonlocal grouping map of a matching plan and W its weight tensor.  Each
block update solves its proximally regularized subproblem exactly, so the
objective never increases while the plan is frozen; the solver treats a
measured increase as an internal error.

One outer iteration runs: S update, ``inner_xg_iters`` sweeps of
(X1, X2, X3, G), then the closed-form L update.  For the first
``bm_refresh_iters`` iterations the matching plan is rebuilt from the
current L (the objective is plan-dependent, so descent is only asserted
between refreshes); afterwards the plan is frozen.  Iteration stops when
the relative change of L drops below ``rel_tol``.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from . import blockmatch as bm
from .errors import ConfigurationError, DescentViolationError, IntegrityError
from .hosvd import compose, init_hosvd, orthonormality_deviation, project_stiefel_slabs
from .prox import prox_l2p, prox_weighted_l1
from .tensor import (
    check_finite,
    l2p_pow,
    mode_product_slabs,
    mode_product_slabs_t,
    unfold_slabs,
    weighted_l1,
)

DESCENT_SLACK = 1e-9
ORTHONORMALITY_TOL = 1e-10


@dataclass
class SolverConfig:
    """Model and algorithm parameters.

    Defaults follow the reference operating point for 128-band cubes
    (block 5, 128 members per group, gamma 150, w 100); small synthetic
    problems need rescaled ``gamma``/``w`` and geometry, see the README.
    """

    delta: float = 0.5
    gamma: float = 150.0
    p: float = 0.1
    w: object = 100.0  # scalar, or per-group vector of length N
    alpha_s: float = 1e-3
    alpha_x: float = 1e-3
    alpha_g: float = 1e-3
    ranks: tuple[int, int, int] | None = None
    block: int = 5
    stride: int | None = None  # defaults to block (tiling references)
    window: int = 30
    m2: int = 128
    candidate_stride: int = 1
    max_outer_iters: int = 50
    inner_xg_iters: int = 3
    bm_refresh_iters: int = 2
    rel_tol: float = 0.01
    workers: int = 1

    def validate(self) -> None:
        for name in ("delta", "gamma", "alpha_s", "alpha_x", "alpha_g", "rel_tol"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if not 0.0 < self.p < 1.0:
            raise ConfigurationError(f"p must lie in (0, 1), got {self.p}")
        if np.any(np.asarray(self.w, dtype=float) <= 0):
            raise ConfigurationError("w must be strictly positive")
        for name in ("block", "window", "m2", "candidate_stride", "max_outer_iters",
                     "inner_xg_iters", "workers"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be at least 1")
        if self.bm_refresh_iters < 0:
            raise ConfigurationError("bm_refresh_iters must be nonnegative")
        if self.stride is not None and self.stride < 1:
            raise ConfigurationError("stride must be at least 1")

    @property
    def effective_stride(self) -> int:
        return self.block if self.stride is None else self.stride

    def resolve_ranks(self, group_dims: tuple[int, int, int, int]) -> tuple[int, int, int]:
        m1, m2, m3, _ = group_dims
        if self.ranks is None:
            return (m1, min(2, m2), max(1, round(m3 / 4)))
        n = tuple(int(v) for v in self.ranks)
        if len(n) != 3:
            raise ConfigurationError(f"ranks must have length 3, got {self.ranks}")
        for ni, mi in zip(n, (m1, m2, m3)):
            if not 1 <= ni <= mi:
                raise ConfigurationError(f"rank {ni} out of range [1, {mi}]")
        return n

    def weight_vector(self, n_groups: int) -> np.ndarray:
        w = np.asarray(self.w, dtype=float)
        if w.ndim == 0:
            return np.full(n_groups, float(w))
        if w.shape != (n_groups,):
            raise ConfigurationError(
                f"per-group weight vector has length {w.shape}, need {n_groups}"
            )
        return w.copy()


@dataclass
class SolverState:
    """Current iterate plus the plan-derived caches.

    ``RL`` always holds ``extract(plan, L)`` for the current L and plan;
    the update routines rely on that contract.
    """

    S: np.ndarray
    L: np.ndarray
    X1: np.ndarray
    X2: np.ndarray
    X3: np.ndarray
    G: np.ndarray
    plan: bm.BlockMatchingPlan
    W: np.ndarray
    sqrt_W: np.ndarray
    inv_W: np.ndarray
    inv_sqrt_W: np.ndarray
    RL: np.ndarray
    w_vec: np.ndarray
    iteration: int = 0
    phi_history: list = field(default_factory=list)

    def factors(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.X1, self.X2, self.X3


@dataclass(frozen=True)
class StationarityResiduals:
    """Frobenius norms of the first-order optimality residuals.

    The S and G entries are prox fixed-point witnesses (distance between
    the block and its own update), which vanish exactly at stationary
    points of the nonsmooth terms.
    """

    r_S: float
    r_X_feas: float
    r_X_sub: float
    r_X_sym: float
    r_G: float
    r_L: float

    def max(self) -> float:
        return max(self.r_S, self.r_X_feas, self.r_X_sub, self.r_X_sym,
                   self.r_G, self.r_L)

    def as_dict(self) -> dict:
        return {
            "r_S": self.r_S, "r_X_feas": self.r_X_feas, "r_X_sub": self.r_X_sub,
            "r_X_sym": self.r_X_sym, "r_G": self.r_G, "r_L": self.r_L,
        }


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    phi: float
    rel_change: float
    s_change: float
    l_change: float
    plan_refreshed: bool
    residuals: StationarityResiduals
    wall_ms: float


DIAGNOSTIC_FIELDS = (
    "iteration", "phi", "rel_change", "s_change", "l_change",
    "r_S", "r_X_feas", "r_X_sub", "r_X_sym", "r_G", "r_L",
    "wall_ms", "plan_refreshed",
)


@dataclass
class RunDiagnostics:
    phi_initial: float
    records: list[IterationRecord]
    stop_reason: str

    def phi_history(self) -> list[float]:
        return [rec.phi for rec in self.records]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(DIAGNOSTIC_FIELDS)
            for rec in self.records:
                res = rec.residuals
                writer.writerow([
                    rec.iteration, repr(rec.phi), repr(rec.rel_change),
                    repr(rec.s_change), repr(rec.l_change),
                    repr(res.r_S), repr(res.r_X_feas), repr(res.r_X_sub),
                    repr(res.r_X_sym), repr(res.r_G), repr(res.r_L),
                    repr(rec.wall_ms), int(rec.plan_refreshed),
                ])


@dataclass
class RunResult:
    L: np.ndarray
    S: np.ndarray
    diagnostics: RunDiagnostics
    state: SolverState


def _plan_caches(plan: bm.BlockMatchingPlan) -> tuple[np.ndarray, ...]:
    w = bm.weight_tensor(plan)
    return w, np.sqrt(w), 1.0 / w, 1.0 / np.sqrt(w)


def init_state(d: np.ndarray, config: SolverConfig) -> SolverState:
    """Build the matching plan from the observation and warm-start the
    factors and cores with a truncated HOSVD of the grouped observation."""
    config.validate()
    check_finite(d, "observation")
    plan = bm.build_plan(
        d, r=config.block, stride=config.effective_stride, window=config.window,
        m2=config.m2, candidate_stride=config.candidate_stride, workers=config.workers,
    )
    w, sqrt_w, inv_w, inv_sqrt_w = _plan_caches(plan)
    L = d.copy()
    RL = bm.extract(plan, L)
    ranks = config.resolve_ranks(plan.group_dims)
    G, x1, x2, x3 = init_hosvd(RL, ranks)
    return SolverState(
        S=np.zeros_like(d), L=L, X1=x1, X2=x2, X3=x3, G=G, plan=plan,
        W=w, sqrt_W=sqrt_w, inv_W=inv_w, inv_sqrt_W=inv_sqrt_w, RL=RL,
        w_vec=config.weight_vector(plan.n_groups),
    )


def refresh_plan(state: SolverState, config: SolverConfig) -> None:
    """Rebuild the matching plan from the current L and refit the caches.

    Group count and member geometry depend only on the image dims, so the
    factor and core stacks keep their shapes across a refresh.
    """
    plan = bm.build_plan(
        state.L, r=config.block, stride=config.effective_stride, window=config.window,
        m2=config.m2, candidate_stride=config.candidate_stride, workers=config.workers,
    )
    if plan.group_dims != state.plan.group_dims:
        raise IntegrityError("plan refresh changed the group geometry")
    state.plan = plan
    state.W, state.sqrt_W, state.inv_W, state.inv_sqrt_W = _plan_caches(plan)
    state.RL = bm.extract(plan, state.L)


def objective(state: SolverState, config: SolverConfig, d: np.ndarray) -> float:
    """Full objective at the current iterate (uses the RL cache)."""
    resid = state.L + state.S - d
    t1 = 0.5 * config.delta * float(np.sum((state.sqrt_W * resid) ** 2))
    t2 = config.gamma * l2p_pow(state.sqrt_W * state.S, config.p)
    t3 = weighted_l1(state.G, state.w_vec)
    misfit = state.RL - compose(state.G, state.X1, state.X2, state.X3)
    t4 = 0.5 * float(np.sum(misfit * misfit))
    return t1 + t2 + t3 + t4


def lowrank_misfit(state: SolverState) -> float:
    """Half squared distance between R(L) and the composed low-rank stack."""
    diff = state.RL - compose(state.G, state.X1, state.X2, state.X3)
    return 0.5 * float(np.sum(diff * diff))


def update_S(state: SolverState, config: SolverConfig, d: np.ndarray) -> np.ndarray:
    """Fiber-shrinkage step on the weighted-rescaled gradient point."""
    step = config.delta / (config.delta + config.alpha_s)
    mu = config.gamma / (config.delta + config.alpha_s)
    base = state.S - step * (state.S + state.L - d)
    return state.inv_sqrt_W * prox_l2p(state.sqrt_W * base, mu, config.p)


def _partial_compose(state: SolverState, mode: int) -> np.ndarray:
    """Core stack multiplied by the two factor stacks other than ``mode``."""
    g = state.G
    if mode == 1:
        return mode_product_slabs(mode_product_slabs(g, state.X2, 2), state.X3, 3)
    if mode == 2:
        return mode_product_slabs(mode_product_slabs(g, state.X1, 1), state.X3, 3)
    return mode_product_slabs(mode_product_slabs(g, state.X1, 1), state.X2, 2)


def _pq_product(state: SolverState, mode: int) -> np.ndarray:
    """Slab-wise ``P_i Q_i^T``: grouped-data unfolding times the partial
    composition's unfolding, the target the factor stack is pulled toward."""
    p = unfold_slabs(state.RL, mode)  # (N, m_i, rest)
    q = unfold_slabs(_partial_compose(state, mode), mode)  # (N, n_i, rest)
    return np.einsum("nik,njk->ijn", p, q)  # (m_i, n_i, N)


def update_X(state: SolverState, config: SolverConfig, mode: int) -> np.ndarray:
    """Stiefel-projected proximal step for one factor stack."""
    x = (state.X1, state.X2, state.X3)[mode - 1]
    step = 1.0 / (1.0 + config.alpha_x)
    target = _pq_product(state, mode)
    return project_stiefel_slabs(x - step * (x - target))


def update_G(state: SolverState, config: SolverConfig) -> np.ndarray:
    """Soft-thresholded proximal step for the core stack."""
    o = mode_product_slabs_t(state.RL, state.X1, 1)
    o = mode_product_slabs_t(o, state.X2, 2)
    o = mode_product_slabs_t(o, state.X3, 3)
    step = 1.0 / (1.0 + config.alpha_g)
    z = (1.0 - step) * state.G + step * o
    return prox_weighted_l1(z, state.w_vec, step)


def update_L(state: SolverState, config: SolverConfig, d: np.ndarray) -> np.ndarray:
    """Unique closed-form minimizer of the objective in L."""
    y = compose(state.G, state.X1, state.X2, state.X3)
    blend = 1.0 / (1.0 + config.delta)
    return blend * state.inv_W * bm.transpose_apply(state.plan, y) + (
        1.0 - blend
    ) * (d - state.S)


def stationarity_residuals(
    state: SolverState, config: SolverConfig, d: np.ndarray
) -> StationarityResiduals:
    """First-order optimality residuals at the current iterate."""
    r_s = float(np.linalg.norm((state.S - update_S(state, config, d)).ravel()))
    r_g = float(np.linalg.norm((state.G - update_G(state, config)).ravel()))

    r_feas = r_sub = r_sym = 0.0
    for mode, x in zip((1, 2, 3), state.factors()):
        p = unfold_slabs(state.RL, mode)
        q = unfold_slabs(_partial_compose(state, mode), mode)
        xb = np.moveaxis(x, -1, 0)  # (N, m, n)
        xq = np.einsum("nmj,njr->nmr", xb, q)  # X @ Q per slab
        h = np.einsum("nmr,njr->nmj", xq - p, q)  # slab-wise (X Q - P) Q^T
        gram = np.einsum("nmi,nmj->nij", xb, xb)
        r_feas += float(np.sqrt(np.sum((gram - np.eye(x.shape[1])) ** 2)))
        xth = np.einsum("nmi,nmj->nij", xb, h)  # X^T H
        r_sub += float(np.sqrt(np.sum((h - np.einsum("nmi,nij->nmj", xb, xth)) ** 2)))
        htx = np.einsum("nmi,nmj->nij", h, xb)  # H^T X
        r_sym += float(np.sqrt(np.sum((htx - np.transpose(xth, (0, 2, 1))) ** 2)))

    y = compose(state.G, state.X1, state.X2, state.X3)
    grad_l = config.delta * (state.L + state.S - d) + state.L - state.inv_W * (
        bm.transpose_apply(state.plan, y)
    )
    r_l = float(np.linalg.norm(grad_l.ravel()))
    return StationarityResiduals(r_S=r_s, r_X_feas=r_feas, r_X_sub=r_sub,
                                 r_X_sym=r_sym, r_G=r_g, r_L=r_l)


def run(d: np.ndarray, config: SolverConfig) -> RunResult:
    """Full solve: returns the restored cube, the extracted sparse
    component, and per-iteration diagnostics."""
    state = init_state(d, config)
    phi_prev = objective(state, config, d)
    phi_initial = phi_prev
    records: list[IterationRecord] = []
    stop_reason = "max_iters"

    for k in range(config.max_outer_iters):
        t0 = time.perf_counter()
        refreshed = False
        if 1 <= k <= config.bm_refresh_iters:
            refresh_plan(state, config)
            refreshed = True
        s_prev, l_prev = state.S, state.L

        state.S = update_S(state, config, d)
        for _ in range(config.inner_xg_iters):
            state.X1 = update_X(state, config, 1)
            state.X2 = update_X(state, config, 2)
            state.X3 = update_X(state, config, 3)
            state.G = update_G(state, config)
        state.L = update_L(state, config, d)
        state.RL = bm.extract(state.plan, state.L)

        for x in state.factors():
            dev = orthonormality_deviation(x)
            if dev > ORTHONORMALITY_TOL:
                raise IntegrityError(f"factor stack left the manifold ({dev:.3e})")

        phi = objective(state, config, d)
        if not refreshed and phi > phi_prev + DESCENT_SLACK * (1.0 + abs(phi_prev)):
            raise DescentViolationError(
                f"objective increased at iteration {k}: {phi_prev!r} -> {phi!r}"
            )
        state.phi_history.append(phi)

        l_change = float(np.linalg.norm((state.L - l_prev).ravel()))
        s_change = float(np.linalg.norm((state.S - s_prev).ravel()))
        rel = l_change / max(float(np.linalg.norm(l_prev.ravel())), 1e-12)
        res = stationarity_residuals(state, config, d)
        records.append(IterationRecord(
            iteration=k, phi=phi, rel_change=rel, s_change=s_change,
            l_change=l_change, plan_refreshed=refreshed, residuals=res,
            wall_ms=(time.perf_counter() - t0) * 1e3,
        ))
        state.iteration = k + 1
        phi_prev = phi
        if rel <= config.rel_tol:
            stop_reason = "rel_tol"
            break

    check_finite(state.L, "restored cube")
    check_finite(state.S, "sparse component")
    diagnostics = RunDiagnostics(phi_initial=phi_initial, records=records,
                                 stop_reason=stop_reason)
    return RunResult(L=state.L, S=state.S, diagnostics=diagnostics, state=state)
