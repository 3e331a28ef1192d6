import numpy as np
import pytest

from nltl2p import metrics, noise
from nltl2p.errors import UsageError


RNG = np.random.default_rng(31007)


def ssim_double_loop(x, y):
    """Independent straightforward SSIM: explicit loops over window positions."""
    win = np.empty((11, 11))
    for a in range(11):
        for b in range(11):
            win[a, b] = np.exp(-((a - 5) ** 2 + (b - 5) ** 2) / (2 * 1.5**2))
    win /= win.sum()
    c1, c2 = 0.01**2, 0.03**2
    h, w = x.shape
    vals = []
    for i in range(h - 10):
        for j in range(w - 10):
            px = x[i : i + 11, j : j + 11]
            py = y[i : i + 11, j : j + 11]
            mx = float(np.sum(win * px))
            my = float(np.sum(win * py))
            vx = float(np.sum(win * px * px)) - mx * mx
            vy = float(np.sum(win * py * py)) - my * my
            vxy = float(np.sum(win * px * py)) - mx * my
            vals.append(((2 * mx * my + c1) * (2 * vxy + c2)) /
                        ((mx * mx + my * my + c1) * (vx + vy + c2)))
    return float(np.mean(vals))


def test_mpsnr_hand_example():
    clean = RNG.uniform(size=(8, 8, 3))
    clean[0, 0, 1] = 1.0  # pin the max of band 2
    restored = clean.copy()
    restored[:, :, 1] += 0.1
    _, per_band = metrics.mpsnr(restored, clean)
    expected = 10 * np.log10(1.1**2 / 0.01)  # 20.83 dB
    assert per_band[1] == pytest.approx(expected, abs=0.01)
    assert per_band[0] == metrics.PSNR_CAP_DB
    assert per_band[2] == metrics.PSNR_CAP_DB


def test_mpsnr_identical_inputs_capped():
    x = RNG.uniform(size=(6, 6, 4))
    mean, per_band = metrics.mpsnr(x, x)
    assert mean == metrics.PSNR_CAP_DB
    assert np.all(per_band == metrics.PSNR_CAP_DB)


def test_mpsnr_is_mean_and_band_permutation_invariant():
    a = RNG.uniform(size=(8, 8, 5))
    b = RNG.uniform(size=(8, 8, 5))
    mean, per_band = metrics.mpsnr(a, b)
    assert mean == pytest.approx(float(np.mean(per_band)))
    perm = RNG.permutation(5)
    mean_p, _ = metrics.mpsnr(a[:, :, perm], b[:, :, perm])
    assert mean_p == pytest.approx(mean, rel=1e-12)


def test_mpsnr_decreases_with_noise_level():
    clean = RNG.uniform(size=(16, 16, 6))
    values = []
    for sigma in (0.05, 0.1, 0.2):
        noisy = noise.add_gaussian(clean, sigma, seed=5)
        values.append(metrics.mpsnr(noisy, clean)[0])
    assert values[0] > values[1] > values[2]


def test_mssim_self_is_exactly_one():
    x = RNG.uniform(size=(16, 14, 3))
    assert metrics.mssim(x, x) == 1.0


def test_mssim_anticorrelated_negative():
    # zero-local-mean pattern: the covariance term alone sets the sign
    i, j = np.meshgrid(np.arange(16), np.arange(16), indexing="ij")
    band = 0.3 * (-1.0) ** (i + j)
    x = np.stack([band, band * 0.7], axis=-1)
    assert metrics.mssim(-x, x) < 0.0


def test_mssim_matches_double_loop_oracle():
    x = RNG.uniform(size=(14, 17))
    y = np.clip(x + RNG.normal(0, 0.1, size=x.shape), 0, 1)
    assert metrics.ssim_band(x, y) == pytest.approx(ssim_double_loop(x, y), abs=1e-6)


def test_mssim_window_too_large():
    with pytest.raises(UsageError):
        metrics.mssim(np.zeros((8, 8, 1)), np.zeros((8, 8, 1)))


def test_ergas_zero_on_identical():
    x = RNG.uniform(size=(6, 6, 4))
    assert metrics.ergas(x, x) == 0.0


def test_ergas_hand_example():
    restored = np.ones((2, 2, 1))
    clean = np.array([[[1.0], [1.0]], [[1.0], [0.5]]])
    assert metrics.ergas(restored, clean) == pytest.approx(25.0, rel=1e-12)


def test_ergas_scale_behavior():
    # doubling both inputs scales the index by sqrt(2) under the
    # unsquared-band-mean formula
    a = RNG.uniform(low=0.2, size=(8, 8, 3))
    b = RNG.uniform(low=0.2, size=(8, 8, 3))
    assert metrics.ergas(2 * a, 2 * b) == pytest.approx(
        np.sqrt(2) * metrics.ergas(a, b), rel=1e-12
    )


def test_ergas_zero_mean_band_errors():
    restored = np.zeros((4, 4, 2))
    clean = RNG.uniform(size=(4, 4, 2))
    with pytest.raises(UsageError, match="band 1"):
        metrics.ergas(restored, clean)


def test_metrics_invariant_to_spatial_transpose():
    a = RNG.uniform(size=(12, 12, 3))
    b = RNG.uniform(size=(12, 12, 3))
    at = np.transpose(a, (1, 0, 2))
    bt = np.transpose(b, (1, 0, 2))
    assert metrics.mpsnr(at, bt)[0] == pytest.approx(metrics.mpsnr(a, b)[0], rel=1e-12)
    assert metrics.mssim(at, bt) == pytest.approx(metrics.mssim(a, b), rel=1e-12)
    assert metrics.ergas(at, bt) == pytest.approx(metrics.ergas(a, b), rel=1e-12)


def test_evaluate_report_roundtrip(tmp_path):
    a = RNG.uniform(size=(12, 12, 3))
    rep = metrics.evaluate(a, a)
    assert rep.mssim == 1.0 and rep.ergas == 0.0 and rep.mfsim is None
    doc = rep.to_json_dict()
    assert doc["mfsim"] is None
    assert len(doc["per_band_psnr"]) == 3
    out = tmp_path / "rows.csv"
    metrics.write_csv_rows(out, [("pair", rep)])
    text = out.read_text().splitlines()
    assert text[0].startswith("name,mpsnr")
    assert text[1].startswith("pair,")
