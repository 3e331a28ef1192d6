"""Scratch script: tune solver parameters for the 32x32x16 fixture."""
import sys
import time

import numpy as np

from nltl2p import metrics, noise, solver, tensor


def make_fixture(seed=1234):
    rng = np.random.default_rng(seed)
    core = rng.normal(size=(3, 3, 3))
    t = core
    for mode, dim in zip((1, 2, 3), (32, 32, 16)):
        q, _ = np.linalg.qr(rng.normal(size=(dim, 3)))
        t = tensor.mode_product(t, q, mode)
    t -= t.min()
    t /= t.max()
    spec = noise.NoiseSpec(gaussian_sigma=0.1, stripe_bands="all",
                           stripe_density=0.3, stripe_sigma=0.2, seed=seed + 1)
    res = noise.apply_spec(t, spec)
    return t, res


def trial(clean, res, **kw):
    cfg = dict(delta=0.5, gamma=1.0, p=0.1, w=0.5, block=4, stride=4, window=16,
               m2=8, ranks=(9, 3, 4), max_outer_iters=50, rel_tol=1e-12,
               bm_refresh_iters=2)
    cfg.update(kw)
    config = solver.SolverConfig(**cfg)
    t0 = time.perf_counter()
    result = solver.run(res.noisy, config)
    wall = time.perf_counter() - t0
    mp_noisy = metrics.mpsnr(res.noisy, clean)[0]
    mp_rest = metrics.mpsnr(result.L, clean)[0]
    s_err = np.linalg.norm(result.S - res.stripe) / np.linalg.norm(res.stripe)
    recs = result.diagnostics.records
    r5 = recs[5].residuals.max() if len(recs) > 5 else float("nan")
    rE = recs[-1].residuals.max()
    s5, sE = recs[5].s_change, recs[-1].s_change
    l5, lE = recs[5].l_change, recs[-1].l_change
    print(f"cfg={kw} iters={len(recs)} wall={wall:.1f}s | "
          f"MPSNR {mp_noisy:.2f} -> {mp_rest:.2f} (gain {mp_rest-mp_noisy:+.2f}) | "
          f"S_err {s_err:.3f} | res5 {r5:.3e} resEnd {rE:.3e} ratio {rE/r5:.3f} | "
          f"s5 {s5:.2e} sE {sE:.2e} l5 {l5:.2e} lE {lE:.2e}")
    return result


if __name__ == "__main__":
    clean, res = make_fixture()
    print("noisy MPSNR:", metrics.mpsnr(res.noisy, clean)[0])
    for gamma in (0.5, 1.0, 2.0):
        for w in (0.2, 0.5, 1.0):
            trial(clean, res, gamma=gamma, w=w)
