"""Nonlocal similar-block grouping and the linear maps it induces.

A plan records, for every reference block on a regular spatial grid, the
``m2`` full-band blocks (r x r patches spanning all bands) closest to it
in Euclidean distance within a local search window.  The plan defines

* ``extract``        -- gather all groups into an (m1, m2, m3, N) stack,
  where m1 = r*r in-block pixels (first index fastest), m2 indexes group
  members, m3 indexes bands, and N indexes groups,
* ``transpose_apply``-- the exact adjoint: scatter-add every member back
  onto its spatial footprint,
* ``weight_tensor``  -- per-pixel membership counts W with
  ``transpose_apply(extract(L)) == W * L``.

Plans are deterministic: ties in the distance sort resolve by raster
position, and the reference block always occupies slot 0 of its group.
``build_plan`` may fan the per-reference searches out over worker threads
(capped by the ``NLTL2P_THREADS`` environment variable); results are
written by group index, so the plan does not depend on scheduling.
``transpose_apply`` accumulates sequentially in group order, keeping the
weight identity exact.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, IntegrityError, UsageError

PLAN_FORMAT_VERSION = 1


@dataclass(frozen=True)
class BlockMatchingPlan:
    """Frozen output of block matching.

    ``fbb_grid`` lists the top-left (row, col) coordinates of every
    candidate full-band block; ``groups[j]`` holds ``m2`` indices into
    ``fbb_grid`` with the group's own reference block first.
    """

    block: int
    dims: tuple[int, int, int]
    stride: int
    window: int
    candidate_stride: int
    fbb_grid: np.ndarray  # (K, 2) int
    groups: np.ndarray  # (N, m2) int

    @property
    def m1(self) -> int:
        return self.block * self.block

    @property
    def m2(self) -> int:
        return int(self.groups.shape[1])

    @property
    def m3(self) -> int:
        return self.dims[2]

    @property
    def n_groups(self) -> int:
        return int(self.groups.shape[0])

    @property
    def group_dims(self) -> tuple[int, int, int, int]:
        return (self.m1, self.m2, self.m3, self.n_groups)


def _axis_positions(extent: int, block: int, step: int) -> np.ndarray:
    """Top-left positions along one axis, final position clamped to the border."""
    pos = list(range(0, extent - block + 1, step))
    if pos[-1] != extent - block:
        pos.append(extent - block)
    return np.array(pos, dtype=np.int64)


def _grid_coords(dims, block, step) -> np.ndarray:
    rows = _axis_positions(dims[0], block, step)
    cols = _axis_positions(dims[1], block, step)
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return np.stack([rr.ravel(), cc.ravel()], axis=1)


def _worker_count(requested: int) -> int:
    cap = os.environ.get("NLTL2P_THREADS")
    workers = max(1, int(requested))
    if cap is not None:
        workers = max(1, min(workers, int(cap)))
    return workers


def build_plan(
    hsi: np.ndarray,
    r: int,
    stride: int,
    window: int,
    m2: int,
    candidate_stride: int = 1,
    workers: int = 1,
) -> BlockMatchingPlan:
    """Match each reference block to its ``m2`` nearest in-window blocks.

    References sit on a (row, col) grid with the given ``stride`` (edges
    clamped so blocks stay inside the image).  Candidates are enumerated
    at ``candidate_stride`` and searched within a square window of side
    ``window`` centered on the reference; distance is the Frobenius
    distance between full-band blocks.
    """
    if hsi.ndim != 3:
        raise UsageError(f"expected a 3rd-order tensor, got ndim={hsi.ndim}")
    i1, i2, i3 = hsi.shape
    if not 1 <= r <= min(i1, i2):
        raise ConfigurationError(f"block size {r} exceeds spatial dims {(i1, i2)}")
    if m2 < 1:
        raise ConfigurationError(f"m2 must be at least 1, got {m2}")
    if window < r:
        raise ConfigurationError(f"window {window} smaller than block size {r}")
    if stride < 1 or candidate_stride < 1:
        raise ConfigurationError("strides must be positive")

    refs = _grid_coords(hsi.shape, r, stride)
    cands = _grid_coords(hsi.shape, r, candidate_stride)
    # every reference must be its own candidate (slot 0 of its group)
    merged = np.unique(np.concatenate([cands, refs], axis=0), axis=0)
    # np.unique sorts lexicographically by (row, col): raster order
    fbb_grid = merged

    coord_to_idx = {(int(a), int(b)): k for k, (a, b) in enumerate(fbb_grid)}
    ref_idx = np.array([coord_to_idx[(int(a), int(b))] for a, b in refs], dtype=np.int64)

    # flatten every candidate block once; distances become row operations
    flat = np.empty((fbb_grid.shape[0], r * r * i3))
    for k, (a, b) in enumerate(fbb_grid):
        flat[k] = hsi[a : a + r, b : b + r, :].reshape(-1, order="F")

    half = max(0, (window - r) // 2)
    rows = fbb_grid[:, 0]
    cols = fbb_grid[:, 1]

    groups = np.empty((refs.shape[0], m2), dtype=np.int64)

    def match_one(j: int) -> None:
        a, b = refs[j]
        in_window = (np.abs(rows - a) <= half) & (np.abs(cols - b) <= half)
        cand_idx = np.nonzero(in_window)[0]
        if cand_idx.size < m2:
            raise ConfigurationError(
                f"window of reference block at ({a}, {b}) holds only "
                f"{cand_idx.size} candidates, need m2={m2}"
            )
        rk = ref_idx[j]
        others = cand_idx[cand_idx != rk]
        d2 = np.sum((flat[others] - flat[rk]) ** 2, axis=1)
        order = np.lexsort((others, d2))  # distance first, raster position on ties
        groups[j, 0] = rk
        groups[j, 1:] = others[order[: m2 - 1]]

    n_workers = _worker_count(workers)
    if n_workers == 1:
        for j in range(refs.shape[0]):
            match_one(j)
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            for result in pool.map(match_one, range(refs.shape[0])):
                pass  # match_one writes by index; exceptions surface here

    plan = BlockMatchingPlan(
        block=r,
        dims=(i1, i2, i3),
        stride=stride,
        window=window,
        candidate_stride=candidate_stride,
        fbb_grid=fbb_grid,
        groups=groups,
    )
    _validate_coverage(plan)
    return plan


def _coverage_counts(plan: BlockMatchingPlan) -> np.ndarray:
    r = plan.block
    counts = np.zeros(plan.dims[:2])
    for row in plan.groups:
        for k in row:
            a, b = plan.fbb_grid[k]
            counts[a : a + r, b : b + r] += 1.0
    return counts


def _validate_coverage(plan: BlockMatchingPlan) -> None:
    if np.any(_coverage_counts(plan) == 0.0):
        raise ConfigurationError(
            "matching plan leaves pixels uncovered; reduce the reference stride"
        )


def extract(plan: BlockMatchingPlan, hsi: np.ndarray) -> np.ndarray:
    """Apply the grouping map: returns the (m1, m2, m3, N) member stack."""
    if hsi.shape != plan.dims:
        raise UsageError(f"tensor shape {hsi.shape} does not match plan dims {plan.dims}")
    r, i3 = plan.block, plan.dims[2]
    out = np.empty(plan.group_dims)
    for j, row in enumerate(plan.groups):
        for i, k in enumerate(row):
            a, b = plan.fbb_grid[k]
            out[:, i, :, j] = hsi[a : a + r, b : b + r, :].reshape(r * r, i3, order="F")
    return out


def transpose_apply(plan: BlockMatchingPlan, y: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`extract`: scatter-add members onto their footprints."""
    if y.shape != plan.group_dims:
        raise UsageError(f"stack shape {y.shape} does not match plan {plan.group_dims}")
    r, i3 = plan.block, plan.dims[2]
    out = np.zeros(plan.dims)
    for j, row in enumerate(plan.groups):
        for i, k in enumerate(row):
            a, b = plan.fbb_grid[k]
            out[a : a + r, b : b + r, :] += y[:, i, :, j].reshape(r, r, i3, order="F")
    return out


def weight_tensor(plan: BlockMatchingPlan) -> np.ndarray:
    """Per-pixel membership counts, replicated across bands."""
    counts = _coverage_counts(plan)
    if np.any(counts == 0.0):
        raise IntegrityError("weight tensor has zero entries; plan violates coverage")
    return np.broadcast_to(counts[:, :, np.newaxis], plan.dims).copy()


def plan_to_json(plan: BlockMatchingPlan) -> str:
    """Serialize a plan so a denoising run can be reproduced exactly."""
    doc = {
        "format_version": PLAN_FORMAT_VERSION,
        "block": plan.block,
        "dims": list(plan.dims),
        "stride": plan.stride,
        "window": plan.window,
        "candidate_stride": plan.candidate_stride,
        "fbb_grid": plan.fbb_grid.tolist(),
        "groups": plan.groups.tolist(),
    }
    return json.dumps(doc)


def plan_from_json(text: str) -> BlockMatchingPlan:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise UsageError(f"malformed plan JSON: {err}") from err
    try:
        if doc["format_version"] != PLAN_FORMAT_VERSION:
            raise UsageError(f"unsupported plan format {doc['format_version']}")
        plan = BlockMatchingPlan(
            block=int(doc["block"]),
            dims=tuple(int(d) for d in doc["dims"]),
            stride=int(doc["stride"]),
            window=int(doc["window"]),
            candidate_stride=int(doc["candidate_stride"]),
            fbb_grid=np.asarray(doc["fbb_grid"], dtype=np.int64).reshape(-1, 2),
            groups=np.asarray(doc["groups"], dtype=np.int64),
        )
    except KeyError as err:
        raise UsageError(f"plan JSON missing key {err}") from err
    return plan
