import numpy as np
import pytest

from nltl2p import blockmatch as bm
from nltl2p import solver, tensor
from nltl2p.errors import ConfigurationError
from nltl2p.hosvd import compose, init_hosvd


RNG = np.random.default_rng(160403)


def small_config(**overrides):
    base = dict(
        delta=0.5, gamma=1.0, p=0.1, w=0.05, block=4, stride=4, window=12,
        m2=4, ranks=(8, 2, 2), max_outer_iters=8, rel_tol=1e-9,
    )
    base.update(overrides)
    return solver.SolverConfig(**base)


def tucker_cube(dims, ranks, rng=RNG, scale=1.0):
    core = rng.normal(size=ranks)
    t = core
    for mode in (1, 2, 3):
        q, _ = np.linalg.qr(rng.normal(size=(dims[mode - 1], ranks[mode - 1])))
        t = tensor.mode_product(t, q, mode)
    t -= t.min()
    t /= t.max()
    return scale * t


def tiled_cube(r=4, reps=3, bands=6, rng=RNG):
    """Periodic tiling of one random block: every aligned block is an exact
    copy, so grouped slabs are exactly low rank."""
    patch = rng.uniform(size=(r, r, bands))
    return np.tile(patch, (reps, reps, 1))


def tiled_state(gamma=1e3, w=1e-12):
    d = tiled_cube()
    rank_b = min(16, 6)
    config = small_config(gamma=gamma, w=w, block=4, stride=4, window=12, m2=3,
                          ranks=(rank_b, 1, rank_b))
    state = solver.init_state(d, config)
    return d, config, state


def test_objective_initial_state_is_half_rl_norm():
    d = RNG.uniform(size=(12, 12, 4))
    config = small_config(window=12, ranks=(4, 2, 2))
    state = solver.init_state(d, config)
    state.G = np.zeros_like(state.G)
    phi = solver.objective(state, config, d)
    assert phi == pytest.approx(0.5 * float(np.sum(state.RL**2)), rel=1e-12)


def test_objective_exact_decomposition_leaves_only_core_penalty():
    d, config, state = tiled_state()
    phi = solver.objective(state, config, d)
    core_term = tensor.weighted_l1(state.G, state.w_vec)
    assert abs(phi - core_term) <= 1e-9 * (1 + abs(phi))


def test_objective_data_term_identity():
    d = RNG.uniform(size=(12, 12, 4))
    config = small_config(window=12, ranks=(4, 2, 2))
    state = solver.init_state(d, config)
    state.S = RNG.normal(size=d.shape) * 0.1
    state.L = RNG.uniform(size=d.shape)
    state.RL = bm.extract(state.plan, state.L)
    resid = state.L + state.S - d
    via_weights = float(np.sum((state.sqrt_W * resid) ** 2))
    via_extract = float(np.sum(bm.extract(state.plan, resid) ** 2))
    assert via_weights == pytest.approx(via_extract, rel=1e-10)


def test_update_s_zero_when_clean():
    d, config, state = tiled_state()
    np.testing.assert_array_equal(solver.update_S(state, config, d), np.zeros(d.shape))


def test_update_s_large_gamma_kills_everything():
    d = RNG.uniform(size=(12, 12, 4))
    config = small_config(window=12, ranks=(4, 2, 2), gamma=1e6)
    state = solver.init_state(d, config)
    state.S = RNG.normal(size=d.shape)
    state.L = RNG.uniform(size=d.shape)
    state.RL = bm.extract(state.plan, state.L)
    assert np.all(solver.update_S(state, config, d) == 0.0)


def test_update_s_decreases_surrogate():
    from dataclasses import replace as dc_replace

    d = RNG.uniform(size=(12, 12, 4))
    config = small_config(window=12, ranks=(4, 2, 2), gamma=0.5)
    state = solver.init_state(d, config)
    state.S = 0.1 * RNG.normal(size=d.shape)
    s_old = state.S

    def surrogate(s_new):
        trial = dc_replace(state, S=s_new)
        pen = 0.5 * config.alpha_s * float(np.sum((state.sqrt_W * (s_new - s_old)) ** 2))
        return solver.objective(trial, config, d) + pen

    s_plus = solver.update_S(state, config, d)
    assert surrogate(s_plus) <= surrogate(s_old) + 1e-12 * (1 + abs(surrogate(s_old)))


def test_update_x_fixed_point_on_orthonormal_target():
    d, config, state = tiled_state()
    # superdiagonal unit core makes P_i Q_i^T equal the factor itself
    n = 3
    cfg = small_config(block=4, stride=4, window=12, m2=3, ranks=(n, 1, n))
    st = solver.init_state(d, cfg)
    N = st.plan.n_groups
    g = np.zeros((n, 1, n, N))
    for k in range(min(n, 1, n)):
        g[k, k, k, :] = 1.0
    # orthonormal stacks
    def ortho_stack(m, nn):
        return np.stack([np.linalg.qr(RNG.normal(size=(m, nn)))[0] for _ in range(N)],
                        axis=-1)

    st.X1, st.X2, st.X3 = ortho_stack(16, n), ortho_stack(3, 1), ortho_stack(6, n)
    st.G = g
    st.RL = compose(st.G, st.X1, st.X2, st.X3)
    for mode, x in zip((1, 2, 3), st.factors()):
        np.testing.assert_allclose(solver.update_X(st, cfg, mode), x, atol=1e-10)


def test_update_x_infinite_proximal_weight_freezes_factor():
    d = RNG.uniform(size=(12, 12, 4))
    config = small_config(window=12, ranks=(4, 2, 2), alpha_x=1e12)
    state = solver.init_state(d, config)
    for mode, x in zip((1, 2, 3), state.factors()):
        np.testing.assert_allclose(solver.update_X(state, config, mode), x, atol=1e-9)


def test_update_x_sweep_decreases_misfit():
    d = RNG.uniform(size=(16, 16, 6))
    config = small_config(window=16, ranks=(6, 2, 3))
    state = solver.init_state(d, config)
    state.G = RNG.normal(size=state.G.shape)  # push off the HOSVD optimum
    before = solver.lowrank_misfit(state)
    state.X1 = solver.update_X(state, config, 1)
    state.X2 = solver.update_X(state, config, 2)
    state.X3 = solver.update_X(state, config, 3)
    after = solver.lowrank_misfit(state)
    assert after <= before + 1e-12 * (1 + before)


def test_update_g_limit_recovers_exact_core():
    d = RNG.uniform(size=(12, 12, 4))
    config = small_config(window=12, ranks=(4, 2, 2), w=1e-14, alpha_g=1e-14)
    state = solver.init_state(d, config)
    g_plus = solver.update_G(state, config)
    o = tensor.mode_product_slabs_t(state.RL, state.X1, 1)
    o = tensor.mode_product_slabs_t(o, state.X2, 2)
    o = tensor.mode_product_slabs_t(o, state.X3, 3)
    np.testing.assert_allclose(g_plus, o, atol=1e-10)


def test_update_g_zero_input_stays_zero():
    d = RNG.uniform(size=(12, 12, 4))
    config = small_config(window=12, ranks=(4, 2, 2))
    state = solver.init_state(d, config)
    state.G = np.zeros_like(state.G)
    state.RL = np.zeros_like(state.RL)
    assert np.all(solver.update_G(state, config) == 0.0)


def test_update_g_decreases_surrogate():
    d = RNG.uniform(size=(12, 12, 4))
    config = small_config(window=12, ranks=(4, 2, 2), w=0.2)
    state = solver.init_state(d, config)
    g_old = RNG.normal(size=state.G.shape)
    state.G = g_old

    def surrogate(g):
        diff = state.RL - compose(g, state.X1, state.X2, state.X3)
        return (
            tensor.weighted_l1(g, state.w_vec)
            + 0.5 * float(np.sum(diff * diff))
            + 0.5 * config.alpha_g * float(np.sum((g - g_old) ** 2))
        )

    g_plus = solver.update_G(state, config)
    assert surrogate(g_plus) <= surrogate(g_old) + 1e-12 * (1 + surrogate(g_old))


def test_update_l_clean_fixed_point():
    d, config, state = tiled_state(w=1e-300)
    np.testing.assert_allclose(solver.update_L(state, config, d), d, atol=1e-10)


def test_update_l_large_delta_limit():
    d = RNG.uniform(size=(12, 12, 4))
    config = small_config(window=12, ranks=(4, 2, 2), delta=1e12)
    state = solver.init_state(d, config)
    state.S = 0.1 * RNG.normal(size=d.shape)
    np.testing.assert_allclose(solver.update_L(state, config, d), d - state.S, atol=1e-9)


def test_update_l_first_order_condition():
    d = RNG.uniform(size=(12, 12, 4))
    config = small_config(window=12, ranks=(4, 2, 2))
    state = solver.init_state(d, config)
    state.S = 0.05 * RNG.normal(size=d.shape)
    state.G = RNG.normal(size=state.G.shape)
    state.L = solver.update_L(state, config, d)
    y = compose(state.G, state.X1, state.X2, state.X3)
    grad = config.delta * (state.L + state.S - d) + state.L - state.inv_W * (
        bm.transpose_apply(state.plan, y)
    )
    assert float(np.linalg.norm(grad.ravel())) <= 1e-8


def test_stationarity_residuals_at_constructed_stationary_point():
    d, config, state = tiled_state(gamma=1e3, w=1e-300)
    res = solver.stationarity_residuals(state, config, d)
    assert res.max() <= 1e-8


def test_stationarity_residuals_random_state():
    d = RNG.uniform(size=(12, 12, 4))
    config = small_config(window=12, ranks=(4, 2, 2))
    state = solver.init_state(d, config)
    state.G = RNG.normal(size=state.G.shape)
    res = solver.stationarity_residuals(state, config, d)
    assert res.r_X_feas <= 1e-9  # factors orthonormal by construction
    assert res.r_X_sub > 1e-6  # generically nonstationary
    assert res.max() >= 0.0


def test_run_clean_lowrank_converges_fast():
    d = tiled_cube()
    config = small_config(
        gamma=50.0, w=1e-10, block=4, stride=4, window=12, m2=3,
        ranks=(6, 1, 6), max_outer_iters=10, rel_tol=1e-6, bm_refresh_iters=0,
    )
    result = solver.run(d, config)
    assert result.diagnostics.stop_reason == "rel_tol"
    assert len(result.diagnostics.records) <= 3
    assert float(np.linalg.norm(result.S)) <= 1e-3 * float(np.linalg.norm(result.L))


def test_run_huge_gamma_returns_zero_stripes():
    d = RNG.uniform(size=(12, 12, 4))
    config = small_config(window=12, ranks=(4, 2, 2), gamma=1e8,
                          max_outer_iters=5, bm_refresh_iters=1)
    result = solver.run(d, config)
    assert np.all(result.S == 0.0)


def test_run_descent_and_diagnostics():
    rng = np.random.default_rng(77)
    clean = tucker_cube((16, 16, 8), (2, 2, 2), rng=rng)
    noisy = clean + rng.normal(0, 0.1, size=clean.shape)
    config = small_config(
        gamma=0.8, w=0.05, block=4, stride=4, window=12, m2=4,
        ranks=(8, 2, 2), max_outer_iters=12, rel_tol=1e-9, bm_refresh_iters=2,
    )
    result = solver.run(noisy, config)
    recs = result.diagnostics.records
    assert len(recs) == 12
    phi_prev = result.diagnostics.phi_initial
    for rec in recs:
        if not rec.plan_refreshed:
            assert rec.phi <= phi_prev + 1e-9 * (1 + abs(phi_prev))
        phi_prev = rec.phi
    assert all(rec.residuals.max() >= 0 for rec in recs)
    # factor feasibility is maintained every iteration
    from nltl2p.hosvd import orthonormality_deviation

    for x in result.state.factors():
        assert orthonormality_deviation(x) <= 1e-10


def test_run_deterministic():
    d = RNG.uniform(size=(12, 12, 4))
    config = small_config(window=12, ranks=(4, 2, 2), max_outer_iters=4)
    a = solver.run(d, config)
    b = solver.run(d, config)
    np.testing.assert_array_equal(a.L, b.L)
    np.testing.assert_array_equal(a.S, b.S)


def test_diagnostics_csv(tmp_path):
    d = RNG.uniform(size=(12, 12, 4))
    config = small_config(window=12, ranks=(4, 2, 2), max_outer_iters=3)
    result = solver.run(d, config)
    path = tmp_path / "diag.csv"
    result.diagnostics.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0].split(",") == list(solver.DIAGNOSTIC_FIELDS)
    assert len(lines) == 1 + len(result.diagnostics.records)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        solver.SolverConfig(delta=-1).validate()
    with pytest.raises(ConfigurationError):
        solver.SolverConfig(p=1.5).validate()
    with pytest.raises(ConfigurationError):
        solver.SolverConfig(w=0.0).validate()
    cfg = solver.SolverConfig(ranks=(100, 1, 1))
    with pytest.raises(ConfigurationError):
        cfg.resolve_ranks((25, 128, 128, 10))
    assert solver.SolverConfig().resolve_ranks((25, 128, 128, 10)) == (25, 2, 32)
