"""sklearn-style estimator wrappers around the reconstruction solvers.

Each estimator treats a batch of measurement rows as the input matrix
(n_samples, m) and reconstructs (n_samples, n), so the solvers compose with
pipelines and model-selection utilities from the wider ecosystem.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import ConfigError
from .operators import InpaintingMask, Measurement
from .pfode import OdeConfig
from .priors import PriorModel
from .schedule import edm_time_grid
from .solvers import default_solver_config, map_ga, map_ga_pgdm, naive_map_x0, pgdm_baseline


class _BaseReconstructor(BaseEstimator, TransformerMixin):
    """Shared fit/transform plumbing; subclasses implement _solve."""

    def __init__(self, prior=None, mask=None, sigma_y=0.0, random_state=None):
        self.prior = prior
        self.mask = mask
        self.sigma_y = sigma_y
        self.random_state = random_state

    def fit(self, X=None, y=None):
        if not isinstance(self.prior, PriorModel):
            raise ConfigError("prior must be a PriorModel instance")
        if not isinstance(self.mask, InpaintingMask):
            raise ConfigError("mask must be an InpaintingMask instance")
        if self.sigma_y < 0:
            raise ConfigError("sigma_y must be nonnegative")
        self.n_features_in_ = self.mask.m
        self.is_fitted_ = True
        return self

    def transform(self, X):
        check_is_fitted(self, "is_fitted_")
        X = check_array(X, ensure_2d=True, dtype=float)
        if X.shape[1] != self.mask.m:
            raise ConfigError(f"X has {X.shape[1]} columns, mask expects {self.mask.m}")
        meas = Measurement(y=X, sigma_y=self.sigma_y, mask=self.mask)
        rng = np.random.default_rng(self.random_state)
        return self._solve(meas, rng)

    def _solve(self, meas, rng):
        raise NotImplementedError


class MapGAReconstructor(_BaseReconstructor):
    """Inpainting by multi-step MAP gradient ascent in noise space."""

    def __init__(
        self,
        prior=None,
        mask=None,
        sigma_y=0.0,
        n_time_steps=20,
        num_iter=50,
        backend="consistency",
        use_prior=True,
        lr=None,
        ode_steps=40,
        scheme="rk4",
        rho=7.0,
        epsilon=0.002,
        sigma_max=80.0,
        random_state=None,
    ):
        super().__init__(prior=prior, mask=mask, sigma_y=sigma_y, random_state=random_state)
        self.n_time_steps = n_time_steps
        self.num_iter = num_iter
        self.backend = backend
        self.use_prior = use_prior
        self.lr = lr
        self.ode_steps = ode_steps
        self.scheme = scheme
        self.rho = rho
        self.epsilon = epsilon
        self.sigma_max = sigma_max

    def _config(self, t_min: Optional[float] = None):
        cfg = default_solver_config(
            n_time_steps=self.n_time_steps,
            num_iter=self.num_iter,
            epsilon=self.epsilon,
            sigma_max=self.sigma_max,
            rho=self.rho,
            lr=self.lr,
            use_prior=self.use_prior,
            backend=self.backend,
            ode=OdeConfig(steps=self.ode_steps, scheme=self.scheme, rho=self.rho),
        )
        if t_min is not None:
            cfg.time_grid = edm_time_grid(self.n_time_steps + 1, t_min, self.sigma_max, self.rho)
        return cfg

    def _solve(self, meas, rng):
        return map_ga(meas, self.prior, self._config(), rng).x_hat


class MapGAPGDMReconstructor(MapGAReconstructor):
    """MAP-GA down to sigma_y, then PGDM guidance to epsilon."""

    def __init__(
        self,
        prior=None,
        mask=None,
        sigma_y=0.1,
        pgdm_steps=20,
        n_time_steps=20,
        num_iter=50,
        backend="consistency",
        lr=None,
        ode_steps=40,
        scheme="rk4",
        rho=7.0,
        epsilon=0.002,
        sigma_max=80.0,
        random_state=None,
    ):
        super().__init__(
            prior=prior,
            mask=mask,
            sigma_y=sigma_y,
            n_time_steps=n_time_steps,
            num_iter=num_iter,
            backend=backend,
            use_prior=False,
            lr=lr,
            ode_steps=ode_steps,
            scheme=scheme,
            rho=rho,
            epsilon=epsilon,
            sigma_max=sigma_max,
            random_state=random_state,
        )
        self.pgdm_steps = pgdm_steps

    def _solve(self, meas, rng):
        cfg = self._config(t_min=self.sigma_y)
        return map_ga_pgdm(meas, self.prior, cfg, {"n_steps": self.pgdm_steps}, rng).x_hat


class PGDMReconstructor(_BaseReconstructor):
    """Ancestral PGDM sampling with Gaussian-surrogate guidance."""

    def __init__(
        self,
        prior=None,
        mask=None,
        sigma_y=0.0,
        n_steps=500,
        epsilon=0.002,
        sigma_max=80.0,
        rho=7.0,
        detach_jacobian=False,
        random_state=None,
    ):
        super().__init__(prior=prior, mask=mask, sigma_y=sigma_y, random_state=random_state)
        self.n_steps = n_steps
        self.epsilon = epsilon
        self.sigma_max = sigma_max
        self.rho = rho
        self.detach_jacobian = detach_jacobian

    def _solve(self, meas, rng):
        return pgdm_baseline(
            meas,
            self.prior,
            n_steps=self.n_steps,
            rng=rng,
            epsilon=self.epsilon,
            sigma_max=self.sigma_max,
            rho=self.rho,
            detach_jacobian=self.detach_jacobian,
        ).x_hat


class NaiveMAPReconstructor(_BaseReconstructor):
    """Plain gradient ascent on the x0-space posterior (analytic priors only)."""

    def __init__(self, prior=None, mask=None, sigma_y=0.1, n_iters=1000, lr=None, random_state=None):
        super().__init__(prior=prior, mask=mask, sigma_y=sigma_y, random_state=random_state)
        self.n_iters = n_iters
        self.lr = lr

    def _solve(self, meas, rng):
        return naive_map_x0(meas, self.prior, n_iters=self.n_iters, lr=self.lr, rng=rng).x_hat
