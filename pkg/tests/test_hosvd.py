import numpy as np
import pytest

from nltl2p import hosvd, tensor
from nltl2p.errors import DegeneracyWarning, UsageError


RNG = np.random.default_rng(99173)


def random_orthonormal(m, n, rng=RNG):
    q, _ = np.linalg.qr(rng.normal(size=(m, n)))
    return q[:, :n]


def test_reduced_svd_diagonal():
    a = np.diag([3.0, 1.0])
    u, sigma, v = hosvd.reduced_svd(a)
    np.testing.assert_allclose(sigma, [3.0, 1.0])
    # signed permutations
    np.testing.assert_allclose(np.abs(u), np.eye(2), atol=1e-14)
    np.testing.assert_allclose(np.abs(v), np.eye(2), atol=1e-14)


def test_reduced_svd_reconstruction():
    a = RNG.normal(size=(6, 3))
    u, sigma, v = hosvd.reduced_svd(a)
    np.testing.assert_allclose(u @ np.diag(sigma) @ v.T, a, atol=1e-10 * np.linalg.norm(a))
    assert np.all(np.diff(sigma) <= 0) and np.all(sigma >= 0)
    np.testing.assert_allclose(u.T @ u, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(v.T @ v, np.eye(3), atol=1e-12)


def test_reduced_svd_rank_deficient_projection_feasible():
    a = RNG.normal(size=(5, 3))
    a[:, 2] = a[:, 1]  # repeated column
    with pytest.warns(DegeneracyWarning):
        x = hosvd.project_stiefel(a)
    np.testing.assert_allclose(x.T @ x, np.eye(3), atol=1e-10)


def test_project_stiefel_fixed_points():
    q = random_orthonormal(6, 3)
    np.testing.assert_allclose(hosvd.project_stiefel(q), q, atol=1e-12)
    np.testing.assert_allclose(hosvd.project_stiefel(2.5 * q), q, atol=1e-12)


def test_project_stiefel_zero_input():
    with pytest.warns(DegeneracyWarning):
        x = hosvd.project_stiefel(np.zeros((4, 1)))
    np.testing.assert_array_equal(x, np.array([[1.0], [0.0], [0.0], [0.0]]))


def test_project_stiefel_optimality_certificate():
    a = RNG.normal(size=(8, 3))
    x = hosvd.project_stiefel(a)
    m = x.T @ a
    np.testing.assert_allclose(m, m.T, atol=1e-8)
    assert np.min(np.linalg.eigvalsh(0.5 * (m + m.T))) >= -1e-8


def test_project_stiefel_monte_carlo_dominance():
    a = RNG.normal(size=(5, 2))
    x = hosvd.project_stiefel(a)
    d = np.linalg.norm(x - a)
    rng = np.random.default_rng(7)
    for _ in range(10_000):
        q = random_orthonormal(5, 2, rng)
        assert d <= np.linalg.norm(q - a) + 1e-12


def test_project_stiefel_n1_matches_normalization():
    a = RNG.normal(size=(6, 1))
    x = hosvd.project_stiefel(a)
    np.testing.assert_allclose(x, a / np.linalg.norm(a), atol=1e-12)


def test_init_hosvd_exact_on_low_multilinear_rank():
    m, n = (6, 5, 7), (2, 3, 2)
    N = 4
    slabs = []
    for j in range(N):
        core = RNG.normal(size=n)
        t = core
        for mode in (1, 2, 3):
            t = tensor.mode_product(t, random_orthonormal(m[mode - 1], n[mode - 1]), mode)
        slabs.append(t)
    y = np.stack(slabs, axis=-1)
    g, x1, x2, x3 = hosvd.init_hosvd(y, n)
    recon = hosvd.compose(g, x1, x2, x3)
    assert tensor.frobenius(recon - y) <= 1e-9 * tensor.frobenius(y)
    for x in (x1, x2, x3):
        hosvd.check_orthonormal(x, tol=1e-10)


def test_init_hosvd_full_rank_lossless():
    y = RNG.normal(size=(4, 3, 5, 2))
    g, x1, x2, x3 = hosvd.init_hosvd(y, (4, 3, 5))
    np.testing.assert_allclose(hosvd.compose(g, x1, x2, x3), y, atol=1e-12)


def test_init_hosvd_zero_slab_flagged():
    y = np.zeros((3, 3, 3, 2))
    y[..., 0] = RNG.normal(size=(3, 3, 3))
    with pytest.warns(DegeneracyWarning):
        g, x1, x2, x3 = hosvd.init_hosvd(y, (2, 2, 2))
    assert np.all(g[..., 1] == 0.0)
    for x in (x1, x2, x3):
        hosvd.check_orthonormal(x, tol=1e-10)


def test_init_hosvd_rank_exceeds_dimension():
    with pytest.raises(UsageError):
        hosvd.init_hosvd(np.zeros((3, 3, 3, 1)), (4, 2, 2))


def test_init_hosvd_core_slice_norm_ordering():
    y = RNG.normal(size=(5, 6, 4, 3))
    g, _, _, _ = hosvd.init_hosvd(y, (5, 6, 4))
    for j in range(3):
        for mode in (1, 2, 3):
            slices = np.moveaxis(g[..., j], mode - 1, 0)
            norms = np.sqrt(np.sum(slices.reshape(slices.shape[0], -1) ** 2, axis=1))
            assert np.all(np.diff(norms) <= 1e-12)


def test_compose_identity_factors():
    g = RNG.normal(size=(3, 4, 5, 2))
    eye = lambda d: np.stack([np.eye(d)] * 2, axis=-1)
    np.testing.assert_allclose(hosvd.compose(g, eye(3), eye(4), eye(5)), g)


def test_compose_orthonormal_preserves_norm():
    g = RNG.normal(size=(2, 3, 2, 4))
    x1 = np.stack([random_orthonormal(6, 2) for _ in range(4)], axis=-1)
    x2 = np.stack([random_orthonormal(5, 3) for _ in range(4)], axis=-1)
    x3 = np.stack([random_orthonormal(7, 2) for _ in range(4)], axis=-1)
    out = hosvd.compose(g, x1, x2, x3)
    assert tensor.frobenius(out) == pytest.approx(tensor.frobenius(g), rel=1e-12)


def test_compose_single_slab_matches_sequential_products():
    g = RNG.normal(size=(2, 2, 2, 1))
    x1 = RNG.normal(size=(4, 2, 1))
    x2 = RNG.normal(size=(5, 2, 1))
    x3 = RNG.normal(size=(3, 2, 1))
    out = hosvd.compose(g, x1, x2, x3)[..., 0]
    ref = tensor.mode_product(g[..., 0], x1[..., 0], 1)
    ref = tensor.mode_product(ref, x2[..., 0], 2)
    ref = tensor.mode_product(ref, x3[..., 0], 3)
    np.testing.assert_allclose(out, ref, rtol=1e-12)


def test_compose_linear_in_core():
    x1 = np.stack([random_orthonormal(4, 2)], axis=-1)
    x2 = np.stack([random_orthonormal(4, 2)], axis=-1)
    x3 = np.stack([random_orthonormal(4, 2)], axis=-1)
    g1 = RNG.normal(size=(2, 2, 2, 1))
    g2 = RNG.normal(size=(2, 2, 2, 1))
    lhs = hosvd.compose(0.7 * g1 + 1.3 * g2, x1, x2, x3)
    rhs = 0.7 * hosvd.compose(g1, x1, x2, x3) + 1.3 * hosvd.compose(g2, x1, x2, x3)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)
