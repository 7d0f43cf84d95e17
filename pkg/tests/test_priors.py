"""Gaussian-mixture prior tests: densities, score, denoiser, Jacobians."""

import numpy as np
import pytest

from mapga import ContractError, DataError, GaussianMixture, fit_empirical_gaussian


def random_mixture(rng, K, n, dense=False):
    means = rng.normal(size=(K, n)) * 2.0
    w = rng.random(K) + 0.1
    w /= w.sum()
    if dense:
        covs = np.empty((K, n, n))
        for k in range(K):
            a = rng.normal(size=(n, n))
            covs[k] = a @ a.T / n + 0.3 * np.eye(n)
        return GaussianMixture(w, means, covs)
    return GaussianMixture(w, means, 0.3 + rng.random((K, n)))


def fd_score(prior, x, t, h=1e-5):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (prior.log_marginal(x + e, t) - prior.log_marginal(x - e, t)) / (2 * h)
    return g


def test_log_marginal_standard_normal_at_mode():
    p = GaussianMixture([1.0], [[0.0]], [[1.0]])
    assert np.isclose(p.log_marginal(np.zeros(1), 0.0), -0.5 * np.log(2 * np.pi))


def test_log_marginal_variance_addition():
    p = GaussianMixture([1.0], [[0.0]], [[1.0]])
    t = 10.0
    expected = -0.5 * (np.log(2 * np.pi * (1 + t**2)))
    assert np.isclose(p.log_marginal(np.zeros(1), t), expected)


def test_log_marginal_matches_quadrature():
    # noised marginal = integral of N(x; x0, sigma^2) dP0(x0) over a fine grid
    p = GaussianMixture([0.5, 0.5], [[-1.5], [1.5]], [[0.2], [0.3]])
    t = 0.8
    x0 = np.linspace(-10, 10, 40001)
    dx = x0[1] - x0[0]
    prior_pdf = np.exp([p.log_marginal(np.array([v]), 0.0) for v in x0])
    for xq in (0.0, 0.7, -2.0):
        kern = np.exp(-0.5 * (xq - x0) ** 2 / t**2) / np.sqrt(2 * np.pi * t**2)
        direct = np.log(np.sum(kern * prior_pdf) * dx)
        assert np.isclose(p.log_marginal(np.array([xq]), t), direct, rtol=1e-6)


def test_score_gaussian_closed_form():
    p = GaussianMixture([1.0], [[0.0]], [[1.0]])
    for t in (0.0, 0.5, 3.0):
        x = np.array([1.7])
        assert np.allclose(p.score(x, t), -x / (1 + t**2))


def test_score_symmetric_mixture_zero_at_center():
    p = GaussianMixture([0.5, 0.5], [[-2.0, 0.0], [2.0, 0.0]], np.full((2, 2), 0.5))
    assert np.allclose(p.score(np.zeros(2), 1.0), 0.0, atol=1e-12)


@pytest.mark.parametrize("t", [0.01, 0.1, 1.0, 10.0, 80.0])
def test_score_matches_finite_differences(t):
    rng = np.random.default_rng(42)
    for dense in (False, True):
        p = random_mixture(rng, 3, 2, dense=dense)
        x = rng.normal(size=2) * (1 + t)
        fd = fd_score(p, x, t)
        rel = np.linalg.norm(p.score(x, t) - fd) / np.linalg.norm(fd)
        assert rel < 1e-5


def test_denoise_t_zero_identity():
    rng = np.random.default_rng(0)
    p = random_mixture(rng, 2, 3)
    x = rng.normal(size=3)
    assert np.allclose(p.denoise(x, 0.0), x)


def test_denoise_gaussian_shrinkage():
    p = GaussianMixture([1.0], [[0.0]], [[1.0]])
    x = np.array([2.0])
    for t in (0.5, 2.0):
        assert np.allclose(p.denoise(x, t), x / (1 + t**2))


def test_denoise_matches_importance_sampling():
    rng = np.random.default_rng(7)
    p = GaussianMixture([0.6, 0.4], [[-1.0, 0.5], [1.2, -0.3]], 0.4 + 0.2 * rng.random((2, 2)))
    t = 0.9
    xt = np.array([0.3, 0.1])
    draws = p.sample(rng, 1_000_000)
    logw = -0.5 * np.sum((xt - draws) ** 2, axis=1) / t**2
    w = np.exp(logw - logw.max())
    w /= w.sum()
    est = w @ draws
    se = np.sqrt(np.sum(w**2 * np.sum((draws - est) ** 2, axis=1))) + 1e-12
    assert np.linalg.norm(p.denoise(xt, t) - est) < 3 * se + 1e-3


def test_tweedie_identity_exact():
    rng = np.random.default_rng(5)
    for _ in range(100):
        p = random_mixture(rng, int(rng.integers(1, 4)), 3, dense=bool(rng.integers(2)))
        x = rng.normal(size=3) * 3
        t = float(rng.uniform(0.01, 20))
        assert np.array_equal(p.denoise(x, t), np.asarray(x) + t**2 * p.score(x, t))


def test_denoiser_jacobian_gaussian_1d():
    p = GaussianMixture([1.0], [[0.0]], [[1.0]])
    for t in (0.3, 2.0):
        jac = p.denoiser_jacobian(np.array([0.7]), t)
        assert np.allclose(jac, 1.0 / (1 + t**2))


def test_denoiser_jacobian_identity_at_small_t():
    rng = np.random.default_rng(1)
    p = random_mixture(rng, 2, 3)
    jac = p.denoiser_jacobian(rng.normal(size=3), 1e-5)
    assert np.allclose(jac, np.eye(3), atol=1e-6)


def test_denoiser_jacobian_matches_finite_differences():
    rng = np.random.default_rng(9)
    for dense in (False, True):
        p = random_mixture(rng, 3, 2, dense=dense)
        x = rng.normal(size=2)
        t = 1.3
        jac = p.denoiser_jacobian(x, t)
        h = 1e-6
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            col = (p.denoise(x + e, t) - p.denoise(x - e, t)) / (2 * h)
            assert np.allclose(jac[:, i], col, atol=1e-5)


def test_denoiser_jacobian_symmetric():
    rng = np.random.default_rng(13)
    for _ in range(10):
        p = random_mixture(rng, 3, 4, dense=True)
        jac = p.denoiser_jacobian(rng.normal(size=4) * 2, float(rng.uniform(0.05, 5)))
        assert np.allclose(jac, jac.T, atol=1e-10)


def test_denoiser_jvp_matches_dense_jacobian():
    rng = np.random.default_rng(21)
    for dense in (False, True):
        p = random_mixture(rng, 2, 3, dense=dense)
        x = rng.normal(size=3)
        v = rng.normal(size=3)
        t = 0.7
        assert np.allclose(p.denoiser_jvp(x, t, v), p.denoiser_jacobian(x, t) @ v)


def test_denoiser_jvp_batched():
    rng = np.random.default_rng(22)
    p = random_mixture(rng, 3, 4)
    xs = rng.normal(size=(5, 4))
    vs = rng.normal(size=(5, 4))
    out = p.denoiser_jvp(xs, 1.1, vs)
    for i in range(5):
        assert np.allclose(out[i], p.denoiser_jvp(xs[i], 1.1, vs[i]))


def test_heat_equation_consistency():
    # d/d(sigma^2) log P equals 0.5 (laplacian log P + |grad log P|^2) in 1-D
    p = GaussianMixture([0.5, 0.5], [[-1.0], [1.0]], [[0.3], [0.5]])
    x = np.array([0.4])
    t = 0.9
    h_s2 = 1e-5
    lhs = (
        p.log_marginal(x, np.sqrt(t**2 + h_s2)) - p.log_marginal(x, np.sqrt(t**2 - h_s2))
    ) / (2 * h_s2)
    hx = 1e-4
    lap = (
        p.log_marginal(x + hx, t) - 2 * p.log_marginal(x, t) + p.log_marginal(x - hx, t)
    ) / hx**2
    grad = p.score(x, t)[0]
    rhs = 0.5 * (lap + grad**2)
    assert abs(lhs - rhs) / abs(rhs) < 1e-3


def test_sample_moments_single_gaussian():
    rng = np.random.default_rng(2)
    p = GaussianMixture([1.0], [[1.0, -2.0]], [[0.5, 2.0]])
    draws = p.sample(rng, 200_000)
    assert np.allclose(draws.mean(axis=0), [1.0, -2.0], atol=0.02)
    assert np.allclose(draws.var(axis=0), [0.5, 2.0], rtol=0.03)


def test_json_round_trip():
    p = GaussianMixture([0.25, 0.75], [[0.0, 1.0], [2.0, -1.0]], [[1.0, 0.5], [0.2, 0.3]])
    q = GaussianMixture.from_json(p.to_json())
    assert np.allclose(q.weights, p.weights)
    assert np.allclose(q.means, p.means)
    assert np.allclose(q.covariances, p.covariances)


def test_json_rejects_garbage():
    with pytest.raises(DataError):
        GaussianMixture.from_json("{not json")
    with pytest.raises(DataError):
        GaussianMixture.from_json('{"weights": [1.0]}')


def test_dense_mixture_does_not_serialize():
    p = GaussianMixture([1.0], [[0.0, 0.0]], np.eye(2)[None])
    with pytest.raises(ContractError):
        p.to_json()


def test_constructor_validation():
    with pytest.raises(DataError):
        GaussianMixture([0.5, 0.6], [[0.0], [1.0]], [[1.0], [1.0]])  # weights sum != 1
    with pytest.raises(DataError):
        GaussianMixture([1.0], [[0.0]], [[-1.0]])  # nonpositive variance
    with pytest.raises(DataError):
        GaussianMixture([1.0], [[0.0, 0.0]], [[[1.0, 2.0], [0.0, 1.0]]])  # asymmetric


def test_fit_empirical_gaussian_duplicate_points():
    v = np.array([1.0, 2.0, 3.0])
    p = fit_empirical_gaussian(np.stack([v, v]))
    assert np.allclose(p.means[0], v)
    assert np.allclose(p.covariances[0], 1e-4 * np.eye(3))


def test_fit_empirical_gaussian_recovers_moments():
    rng = np.random.default_rng(11)
    mean = np.array([0.5, -1.0])
    cov = np.array([[1.0, 0.4], [0.4, 0.6]])
    data = rng.multivariate_normal(mean, cov, size=10_000)
    p = fit_empirical_gaussian(data)
    assert np.allclose(p.means[0], mean, atol=0.05)
    assert np.allclose(p.covariances[0], cov, atol=0.05)


def test_fit_empirical_gaussian_needs_samples():
    with pytest.raises(DataError):
        fit_empirical_gaussian(np.zeros((1, 3)))
    with pytest.raises(DataError):
        fit_empirical_gaussian(np.zeros((0, 3)))
