"""PF ODE integration, consistency function, and discrete-adjoint VJP tests."""

import numpy as np
import pytest

from mapga import (
    ConfigError,
    ContractError,
    ConsistencyFn,
    GaussianMixture,
    OdeConfig,
    consistency,
    consistency_vjp,
    gaussian_consistency_closed_form,
    pf_ode_rhs,
)

EPS = 0.002


def random_mixture(rng, K=3, n=2):
    w = rng.random(K) + 0.1
    w /= w.sum()
    return GaussianMixture(w, rng.normal(size=(K, n)) * 2.0, 0.3 + rng.random((K, n)))


def test_rhs_zero_at_denoiser_fixed_point():
    p = GaussianMixture([1.0], [[1.5]], [[1.0]])
    # the mean is a fixed point of the denoiser at every noise level
    assert np.allclose(pf_ode_rhs(np.array([1.5]), 3.0, p), 0.0)


def test_rhs_gaussian_closed_form():
    p = GaussianMixture([1.0], [[0.0]], [[1.0]])
    x = np.array([2.0])
    t = 1.5
    assert np.allclose(pf_ode_rhs(x, t, p), x * t / (1 + t**2))


def test_rhs_equals_score_form():
    # (x - D)/t == -t * score for sigma(t) = t
    rng = np.random.default_rng(4)
    p = random_mixture(rng)
    x = rng.normal(size=2)
    t = 2.3
    assert np.allclose(pf_ode_rhs(x, t, p), -t * p.score(x, t))


def test_rhs_rejects_nonpositive_t():
    p = GaussianMixture([1.0], [[0.0]], [[1.0]])
    with pytest.raises(ValueError):
        pf_ode_rhs(np.zeros(1), 0.0, p)


def test_consistency_at_epsilon_is_identity():
    rng = np.random.default_rng(0)
    p = random_mixture(rng)
    z = rng.normal(size=2)
    assert np.array_equal(consistency(z, EPS, p), z)


def test_consistency_domain_check():
    p = GaussianMixture([1.0], [[0.0]], [[1.0]])
    with pytest.raises(ValueError):
        consistency(np.zeros(1), 0.001, p)
    with pytest.raises(ValueError):
        consistency(np.zeros(1), 81.0, p)


def test_consistency_gaussian_example():
    # z=80 at t=80 contracts to ~ 80 * sqrt((1 + eps^2) / 6401) ~ 0.99996
    p = GaussianMixture([1.0], [[0.0]], [[1.0]])
    out = consistency(np.array([80.0]), 80.0, p)
    expected = 80.0 * np.sqrt((1 + EPS**2) / (1 + 80.0**2))
    assert abs(out[0] - expected) / expected < 1e-4
    assert abs(expected - 0.99996) < 1e-4


def test_closed_form_trivia():
    p = GaussianMixture([1.0], [[0.5, -1.0]], [[1.0, 2.0]])
    z = np.array([2.0, 3.0])
    assert np.array_equal(gaussian_consistency_closed_form(p, z, EPS).round(12), z.round(12))
    assert np.allclose(gaussian_consistency_closed_form(p, p.means[0], 40.0), p.means[0])


def test_closed_form_dense_covariance():
    cov = np.array([[[2.125, 1.875], [1.875, 2.125]]])
    p = GaussianMixture([1.0], [[0.5, -0.5]], cov)
    z = np.array([2.0, -1.0])
    t = 5.0
    evals, u = np.linalg.eigh(cov[0])
    factor = np.sqrt((evals + EPS**2) / (evals + t**2))
    expected = p.means[0] + u @ (factor * (u.T @ (z - p.means[0])))
    assert np.allclose(gaussian_consistency_closed_form(p, z, t), expected)


def test_closed_form_rejects_mixtures():
    rng = np.random.default_rng(1)
    p = random_mixture(rng, K=2)
    with pytest.raises(ContractError):
        gaussian_consistency_closed_form(p, np.zeros(2), 1.0)


def test_self_convergence_40_vs_80():
    rng = np.random.default_rng(0)
    p = random_mixture(rng, K=3, n=4)
    z = rng.normal(size=4) * 5
    c40 = consistency(z, 5.0, p, OdeConfig(steps=40))
    c80 = consistency(z, 5.0, p, OdeConfig(steps=80))
    assert np.linalg.norm(c40 - c80) < 1e-5


def test_scheme_accuracy_ordering():
    # euler < heun < rk4 on the Gaussian oracle at equal step count
    p = GaussianMixture([1.0], [[0.0]], [[1.0]])
    z = np.array([30.0])
    exact = gaussian_consistency_closed_form(p, z, 10.0)
    errs = {}
    for scheme in ("euler", "heun", "rk4"):
        out = consistency(z, 10.0, p, OdeConfig(steps=24, scheme=scheme))
        errs[scheme] = abs(out[0] - exact[0])
    assert errs["rk4"] < errs["heun"] < errs["euler"]


def test_self_consistency_along_trajectory():
    rng = np.random.default_rng(3)
    p = random_mixture(rng)
    z = rng.normal(size=2) * 8
    t, s = 8.0, 1.0
    cfg = OdeConfig(steps=160)
    from mapga.pfode import integrate

    x_s = integrate(z, t, s, p, cfg)
    a = consistency(x_s, s, p, cfg)
    b = consistency(z, t, p, cfg)
    assert np.linalg.norm(a - b) < 1e-4


def test_marginal_preservation_gaussian():
    rng = np.random.default_rng(8)
    mu = np.array([0.5, -0.25])
    lam = np.array([0.8, 1.5])
    p = GaussianMixture([1.0], [mu], [lam])
    n = 10_000
    z = mu + np.sqrt(lam + 80.0**2) * rng.standard_normal((n, 2))
    x = consistency(z, 80.0, p)
    target_var = lam + EPS**2
    se_mean = np.sqrt(target_var / n)
    se_var = target_var * np.sqrt(2.0 / n)
    assert np.all(np.abs(x.mean(axis=0) - mu) < 3 * se_mean)
    assert np.all(np.abs(x.var(axis=0) - target_var) < 3.5 * se_var)


@pytest.mark.parametrize("scheme", ["rk4", "heun", "euler"])
def test_vjp_matches_finite_differences(scheme):
    rng = np.random.default_rng(10)
    p = random_mixture(rng)
    z = rng.normal(size=2) * 3
    v = rng.normal(size=2)
    t = 4.0
    cfg = OdeConfig(steps=8, scheme=scheme)
    u = consistency_vjp(z, t, v, p, cfg)
    h = 1e-4
    fd = np.zeros(2)
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        fd[i] = (v @ consistency(z + e, t, p, cfg) - v @ consistency(z - e, t, p, cfg)) / (2 * h)
    assert np.linalg.norm(u - fd) / np.linalg.norm(fd) < 1e-4


def test_vjp_trivia():
    rng = np.random.default_rng(2)
    p = random_mixture(rng)
    z = rng.normal(size=2)
    assert np.array_equal(consistency_vjp(z, 3.0, np.zeros(2), p), np.zeros(2))
    v = rng.normal(size=2)
    assert np.array_equal(consistency_vjp(z, EPS, v, p), v)


def test_vjp_adjoint_identity():
    rng = np.random.default_rng(6)
    p = random_mixture(rng)
    z = rng.normal(size=2) * 2
    u = rng.normal(size=2)
    v = rng.normal(size=2)
    t = 2.0
    cfg = OdeConfig(steps=12)
    h = 1e-6
    ju = (consistency(z + h * u, t, p, cfg) - consistency(z - h * u, t, p, cfg)) / (2 * h)
    jtv = consistency_vjp(z, t, v, p, cfg)
    assert abs(ju @ v - u @ jtv) / abs(ju @ v) < 1e-4


def test_denoiser_proxy_error_decreases():
    rng = np.random.default_rng(2)
    p = random_mixture(rng, K=3, n=6)
    x0 = p.sample(rng, 1)[0]
    xi = rng.standard_normal(6)
    errs = []
    for t in (10, 5, 2, 1, 0.5, 0.1, 0.01):
        xt = x0 + t * xi
        errs.append(np.linalg.norm(consistency(xt, t, p) - p.denoise(xt, t)))
    assert all(a > b for a, b in zip(errs, errs[1:]))
    assert errs[-1] / errs[0] < 1e-2


def test_consistency_fn_wrapper():
    rng = np.random.default_rng(0)
    p = random_mixture(rng)
    f = ConsistencyFn(prior=p)
    z = rng.normal(size=2)
    assert np.array_equal(f(z, 3.0), consistency(z, 3.0, p))
    v = rng.normal(size=2)
    assert np.array_equal(f.vjp(z, 3.0, v), consistency_vjp(z, 3.0, v, p))


def test_ode_config_validation():
    with pytest.raises(ConfigError):
        OdeConfig(steps=0)
    with pytest.raises(ConfigError):
        OdeConfig(scheme="rk5")
