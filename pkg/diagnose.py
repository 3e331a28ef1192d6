"""Scratch: inspect the stripe-capture mechanics on the fixture."""
import numpy as np

from nltl2p import blockmatch as bm
from nltl2p import metrics, noise, solver, tensor
from nltl2p.hosvd import compose, init_hosvd
from nltl2p.prox import L2pThresholds
from tune_fixture import make_fixture

clean, res = make_fixture()
noisy = res.noisy

# one-shot nonlocal HOSVD consensus (no stripes handling): ceiling check
config = solver.SolverConfig(delta=0.5, gamma=1.0, p=0.1, w=1e-9, block=4,
                             stride=4, window=16, m2=8, ranks=(9, 3, 4),
                             max_outer_iters=50, rel_tol=1e-12, bm_refresh_iters=2)
plan = bm.build_plan(noisy, 4, 4, 16, 8)
w = bm.weight_tensor(plan)
rl = bm.extract(plan, noisy)
g, x1, x2, x3 = init_hosvd(rl, (9, 3, 4))
lest = bm.transpose_apply(plan, compose(g, x1, x2, x3)) / w
print("one-shot HOSVD consensus MPSNR:", metrics.mpsnr(lest, clean)[0],
      "vs noisy", metrics.mpsnr(noisy, clean)[0])

# same, but on the gaussian-only cube (no stripes): what the low-rank stage could do
gauss_only = clean + res.gaussian
plan_g = bm.build_plan(gauss_only, 4, 4, 16, 8)
w_g = bm.weight_tensor(plan_g)
rl_g = bm.extract(plan_g, gauss_only)
gg, y1, y2, y3 = init_hosvd(rl_g, (9, 3, 4))
lg = bm.transpose_apply(plan_g, compose(gg, y1, y2, y3)) / w_g
print("gaussian-only consensus MPSNR:", metrics.mpsnr(lg, clean)[0],
      "vs noisy", metrics.mpsnr(gauss_only, clean)[0])

# fiber statistics for the S update at a mid-run state
result = solver.run(noisy, config)
state = result.state
print("MPSNR(final L):", metrics.mpsnr(result.L, clean)[0])
d = noisy
alpha = config.delta / (config.delta + config.alpha_s)
stilde = state.S - alpha * (state.S + state.L - d)
scaled = state.sqrt_W * stilde
beta = np.sqrt(np.sum(scaled**2, axis=0))
stripe_cols = np.abs(res.stripe[0]) > 0  # (I2, I3) mask of striped columns
th = L2pThresholds.from_params(config.gamma / (config.delta + config.alpha_s), config.p)
print("cutoff:", th.zero_cutoff)
print("striped fiber beta: median", np.median(beta[stripe_cols]),
      "q10", np.quantile(beta[stripe_cols], 0.1),
      "q90", np.quantile(beta[stripe_cols], 0.9))
print("clean fiber beta:  median", np.median(beta[~stripe_cols]),
      "q90", np.quantile(beta[~stripe_cols], 0.9))
# how much of the true stripe survives in D - L?
resid = d - result.L
err = np.linalg.norm(resid - res.stripe) / np.linalg.norm(res.stripe)
print("(D - L) vs true stripe rel err:", err)
print("S vs true stripe rel err:", np.linalg.norm(result.S - res.stripe) / np.linalg.norm(res.stripe))
