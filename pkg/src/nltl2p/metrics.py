"""Restoration quality metrics: band-averaged PSNR and SSIM, plus the
relative global error index.

Two deliberate formula choices, both configurable callers should know:

* the per-band PSNR peak is the maximum of the *restored* band (not the
  clean one), matching the definition this library standardizes on;
* the global error index divides each band's mse by the band mean itself
  (not its square), so the index scales with the square root of a joint
  rescaling of both inputs.

SSIM uses the standard construction: 11 x 11 Gaussian window with sigma
1.5, K1 = 0.01, K2 = 0.03, dynamic range 1 (normalized data), and valid
windowing (no padding).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import UsageError

PSNR_CAP_DB = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_DYNAMIC_RANGE = 1.0


@dataclass(frozen=True)
class MetricReport:
    mpsnr: float
    mssim: float
    ergas: float
    per_band_psnr: np.ndarray
    mfsim: None = None  # not computed by this library

    def to_json_dict(self) -> dict:
        return {
            "mpsnr": self.mpsnr,
            "mssim": self.mssim,
            "ergas": self.ergas,
            "mfsim": None,
            "per_band_psnr": [float(v) for v in self.per_band_psnr],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)


CSV_FIELDS = ("name", "mpsnr", "mssim", "ergas", "mfsim")


def write_csv_rows(path, rows: list[tuple[str, MetricReport]]) -> None:
    """Write one CSV row per (name, report) pair."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_FIELDS)
        for name, rep in rows:
            writer.writerow([name, repr(rep.mpsnr), repr(rep.mssim), repr(rep.ergas), ""])


def _check_pair(restored: np.ndarray, clean: np.ndarray) -> None:
    if restored.ndim != 3 or clean.ndim != 3:
        raise UsageError("metrics expect 3rd-order tensors")
    if restored.shape != clean.shape:
        raise UsageError(f"shape mismatch {restored.shape} vs {clean.shape}")


def mpsnr(restored: np.ndarray, clean: np.ndarray,
          cap_db: float = PSNR_CAP_DB) -> tuple[float, np.ndarray]:
    """Mean PSNR across bands; returns (mean, per-band vector).

    Per band: ``10*log10(max(restored_band)^2 / mse)``; bands with zero
    mse contribute ``cap_db``.
    """
    _check_pair(restored, clean)
    bands = restored.shape[2]
    per_band = np.empty(bands)
    for i in range(bands):
        diff = restored[:, :, i] - clean[:, :, i]
        mse = float(np.mean(diff * diff))
        if mse == 0.0:
            per_band[i] = cap_db
        else:
            peak = float(np.max(restored[:, :, i]))
            per_band[i] = 10.0 * np.log10(peak * peak / mse)
    return float(np.mean(per_band)), per_band


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Normalized 2-D Gaussian weighting window."""
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g1 = np.exp(-(coords**2) / (2.0 * sigma**2))
    win = np.outer(g1, g1)
    return win / np.sum(win)


def _windowed_mean(img: np.ndarray, win: np.ndarray) -> np.ndarray:
    # valid-mode weighted local means via a sliding view
    view = np.lib.stride_tricks.sliding_window_view(img, win.shape)
    return np.einsum("ijkl,kl->ij", view, win)


def ssim_band(x: np.ndarray, y: np.ndarray) -> float:
    """SSIM between two 2-D bands with the standard construction."""
    if x.shape != y.shape:
        raise UsageError(f"shape mismatch {x.shape} vs {y.shape}")
    if min(x.shape) < SSIM_WINDOW:
        raise UsageError(
            f"band {x.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )
    win = gaussian_window()
    c1 = (SSIM_K1 * SSIM_DYNAMIC_RANGE) ** 2
    c2 = (SSIM_K2 * SSIM_DYNAMIC_RANGE) ** 2
    mu_x = _windowed_mean(x, win)
    mu_y = _windowed_mean(y, win)
    sigma_x = _windowed_mean(x * x, win) - mu_x * mu_x
    sigma_y = _windowed_mean(y * y, win) - mu_y * mu_y
    sigma_xy = _windowed_mean(x * y, win) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * sigma_xy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (sigma_x + sigma_y + c2)
    return float(np.mean(num / den))


def mssim(restored: np.ndarray, clean: np.ndarray) -> float:
    """Band-wise SSIM averaged over all bands."""
    _check_pair(restored, clean)
    vals = [ssim_band(restored[:, :, i], clean[:, :, i]) for i in range(restored.shape[2])]
    return float(np.mean(vals))


def ergas(restored: np.ndarray, clean: np.ndarray) -> float:
    """Relative global error: ``100*sqrt(mean_i(mse_i / mean(restored_i)))``."""
    _check_pair(restored, clean)
    bands = restored.shape[2]
    acc = 0.0
    for i in range(bands):
        mean_i = float(np.mean(restored[:, :, i]))
        if mean_i == 0.0:
            raise UsageError(f"band {i + 1} of the restored cube has zero mean")
        diff = restored[:, :, i] - clean[:, :, i]
        acc += float(np.mean(diff * diff)) / mean_i
    return 100.0 * float(np.sqrt(acc / bands))


def evaluate(restored: np.ndarray, clean: np.ndarray,
             cap_db: float = PSNR_CAP_DB) -> MetricReport:
    """All metrics in one report."""
    mean_psnr, per_band = mpsnr(restored, clean, cap_db=cap_db)
    return MetricReport(
        mpsnr=mean_psnr,
        mssim=mssim(restored, clean),
        ergas=ergas(restored, clean),
        per_band_psnr=per_band,
    )
