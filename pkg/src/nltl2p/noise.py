"""Synthetic degradation of clean hyperspectral cubes.

Three corruption stages, each deterministic under a seed:

* dense Gaussian noise on every entry,
* stripes: per affected band, a random subset of columns receives one
  constant offset along the whole column (first tensor dimension),
* dead lines: per affected band, a random subset of columns is zeroed.

``apply_case`` composes them into the three standard mixed-noise cases
and returns the corrupted cube together with the individual additive
components, so ``noisy == clean + gaussian + stripe + deadline`` holds
exactly.  Randomness comes from ``numpy.random.Generator(PCG64)`` with
per-stage child seeds spawned from the master seed, which is portable and
reproducible across platforms.

Corrupted values are deliberately not clipped to [0, 1]; clipping would
distort the additive noise model the solver assumes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError

#: 1-based inclusive band ranges that receive stripes in case 2, stated
#: for a 128-band cube and scaled proportionally for other band counts.
CASE2_BAND_RANGES = ((11, 40), (71, 100), (121, 128))
_CASE2_REFERENCE_BANDS = 128


@dataclass(frozen=True)
class NoiseSpec:
    """Parameters of one degradation recipe.

    ``stripe_bands`` is a selection rule: ``"all"``, an explicit list of
    1-based band indices, or a float in (0, 1] meaning a random fraction.
    """

    gaussian_sigma: float = 0.0
    stripe_bands: object = "all"
    stripe_density: float = 0.0
    stripe_sigma: float = 0.0
    deadline_bands: float = 0.0  # random fraction of bands
    deadline_density: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        for name in ("stripe_density", "deadline_density"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise UsageError(f"{name} must lie in [0, 1], got {v}")
        for name in ("gaussian_sigma", "stripe_sigma"):
            if getattr(self, name) < 0:
                raise UsageError(f"{name} must be nonnegative")
        if not 0.0 <= self.deadline_bands <= 1.0:
            raise UsageError("deadline_bands must lie in [0, 1]")


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _stage_seeds(seed: int, n: int = 3) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(n)


def add_gaussian(clean: np.ndarray, sigma: float, seed: int) -> np.ndarray:
    """Add i.i.d. zero-mean Gaussian noise; ``sigma=0`` returns the input."""
    if sigma < 0:
        raise UsageError("sigma must be nonnegative")
    if sigma == 0:
        return clean.copy()
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    return clean + rng.normal(0.0, sigma, size=clean.shape)


def _select_bands(rule, n_bands: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(rule, str):
        if rule != "all":
            raise UsageError(f"unknown band selection rule {rule!r}")
        return np.arange(n_bands)
    if isinstance(rule, (list, tuple, np.ndarray)):
        bands = np.asarray(rule, dtype=np.int64) - 1  # 1-based on the surface
        if np.any(bands < 0) or np.any(bands >= n_bands):
            raise UsageError(f"band index out of range 1..{n_bands}")
        return np.unique(bands)
    frac = float(rule)
    if not 0.0 <= frac <= 1.0:
        raise UsageError(f"band fraction must lie in [0, 1], got {frac}")
    count = int(np.ceil(frac * n_bands))
    return np.sort(rng.choice(n_bands, size=count, replace=False))


def scale_band_ranges(ranges, n_bands: int) -> list[int]:
    """Map 1-based inclusive ranges stated for 128 bands onto ``n_bands``."""
    out: list[int] = []
    for start, stop in ranges:
        s = max(1, round(start * n_bands / _CASE2_REFERENCE_BANDS))
        e = min(n_bands, round(stop * n_bands / _CASE2_REFERENCE_BANDS))
        out.extend(range(s, e + 1))
    return sorted(set(out))


def add_stripes(t: np.ndarray, spec: NoiseSpec, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Add constant column offsets; returns (corrupted, stripe component).

    Per affected band, ``floor(density * I2)`` distinct columns each get
    one offset drawn from N(0, stripe_sigma^2) applied to the whole
    mode-1 fiber.  The component satisfies ``corrupted == t + component``.
    """
    spec.validate()
    _, i2, i3 = t.shape
    rng = _rng(seed)
    component = np.zeros_like(t)
    bands = _select_bands(spec.stripe_bands, i3, rng)
    n_cols = int(np.floor(spec.stripe_density * i2))
    if n_cols > 0 and spec.stripe_sigma > 0:
        for band in bands:
            cols = rng.choice(i2, size=n_cols, replace=False)
            offsets = rng.normal(0.0, spec.stripe_sigma, size=n_cols)
            component[:, cols, band] = offsets[np.newaxis, :]
    return t + component, component


def add_deadlines(t: np.ndarray, spec: NoiseSpec, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Zero out random columns in a random fraction of bands.

    Returns (corrupted, component) with ``corrupted == t + component``;
    on dead fibers the component is the negated input, elsewhere zero.
    """
    spec.validate()
    _, i2, i3 = t.shape
    rng = _rng(seed)
    component = np.zeros_like(t)
    n_bands = int(np.ceil(spec.deadline_bands * i3))
    n_cols = int(np.floor(spec.deadline_density * i2))
    if n_bands > 0 and n_cols > 0:
        bands = np.sort(rng.choice(i3, size=n_bands, replace=False))
        for band in bands:
            cols = rng.choice(i2, size=n_cols, replace=False)
            component[:, cols, band] = -t[:, cols, band]
    return t + component, component


@dataclass
class CaseResult:
    """Noisy cube plus the exact additive decomposition of the corruption."""

    noisy: np.ndarray
    gaussian: np.ndarray
    stripe: np.ndarray
    deadline: np.ndarray
    spec: NoiseSpec
    affected_bands: dict = field(default_factory=dict)


def case_spec(case: int, n_bands: int, seed: int) -> NoiseSpec:
    """The degradation recipe of one of the three standard cases."""
    if case == 1:
        return NoiseSpec(gaussian_sigma=0.1, stripe_bands="all",
                         stripe_density=0.3, stripe_sigma=0.2, seed=seed)
    if case == 2:
        bands = scale_band_ranges(CASE2_BAND_RANGES, n_bands)
        return NoiseSpec(gaussian_sigma=0.1, stripe_bands=bands,
                         stripe_density=0.2, stripe_sigma=0.2, seed=seed)
    if case == 3:
        return NoiseSpec(gaussian_sigma=0.2, deadline_bands=0.25,
                         deadline_density=0.05, seed=seed)
    raise UsageError(f"case must be 1, 2 or 3, got {case}")


def apply_spec(clean: np.ndarray, spec: NoiseSpec) -> CaseResult:
    """Run every stage of a recipe: Gaussian first, then stripes, then dead lines."""
    if clean.ndim != 3:
        raise UsageError(f"expected a 3rd-order tensor, got ndim={clean.ndim}")
    spec.validate()
    seeds = _stage_seeds(spec.seed)

    noisy = clean
    gaussian = np.zeros_like(clean)
    if spec.gaussian_sigma > 0:
        rng = np.random.Generator(np.random.PCG64(seeds[0]))
        gaussian = rng.normal(0.0, spec.gaussian_sigma, size=clean.shape)
        noisy = noisy + gaussian

    stripe = np.zeros_like(clean)
    affected: dict = {}
    if spec.stripe_density > 0 and spec.stripe_sigma > 0:
        rng = np.random.Generator(np.random.PCG64(seeds[1]))
        bands = _select_bands(spec.stripe_bands, clean.shape[2], rng)
        affected["stripe_bands"] = [int(b) + 1 for b in bands]
        n_cols = int(np.floor(spec.stripe_density * clean.shape[1]))
        if n_cols > 0:
            for band in bands:
                cols = rng.choice(clean.shape[1], size=n_cols, replace=False)
                stripe[:, cols, band] = rng.normal(0.0, spec.stripe_sigma, size=n_cols)
            noisy = noisy + stripe

    deadline = np.zeros_like(clean)
    if spec.deadline_bands > 0 and spec.deadline_density > 0:
        rng = np.random.Generator(np.random.PCG64(seeds[2]))
        i2, i3 = clean.shape[1], clean.shape[2]
        n_bands = int(np.ceil(spec.deadline_bands * i3))
        bands = np.sort(rng.choice(i3, size=n_bands, replace=False))
        affected["deadline_bands"] = [int(b) + 1 for b in bands]
        n_cols = int(np.floor(spec.deadline_density * i2))
        if n_cols > 0:
            for band in bands:
                cols = rng.choice(i2, size=n_cols, replace=False)
                deadline[:, cols, band] = -noisy[:, cols, band]
            noisy = noisy + deadline

    return CaseResult(noisy=noisy, gaussian=gaussian, stripe=stripe,
                      deadline=deadline, spec=spec, affected_bands=affected)


def apply_case(clean: np.ndarray, case: int, seed: int) -> CaseResult:
    """Corrupt ``clean`` with one of the three standard mixed-noise cases."""
    return apply_spec(clean, case_spec(case, clean.shape[2], seed))
