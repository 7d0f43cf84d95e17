"""Analytic priors standing in for a pretrained diffusion model.

A Gaussian mixture with data density sum_k w_k N(mu_k, Sigma_k) has exact
marginals at noise level sigma: the same mixture with covariances
Sigma_k + sigma^2 I. Score, denoiser (Tweedie), and the denoiser Jacobian
are all closed form, which is what lets every solver in this package be
checked against independent oracles.
"""

from __future__ import annotations

import json
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .errors import ContractError, DataError

_LOG_2PI = float(np.log(2.0 * np.pi))

EMPIRICAL_RIDGE = 1e-4


class PriorModel:
    """Interface: log_marginal(x, t), score(x, t), denoise(x, t).

    denoise is derived from the score through Tweedie's identity
    D(x, t) = x + sigma^2(t) * score(x, t), so the identity holds by
    construction for every subclass that only implements score.
    """

    def log_marginal(self, x, t):
        raise NotImplementedError

    def score(self, x, t):
        raise NotImplementedError

    def denoise(self, x, t):
        t = float(t)
        return np.asarray(x, dtype=float) + t * t * self.score(x, t)

    def denoiser_jacobian(self, x, t):
        raise NotImplementedError

    def denoiser_jvp(self, x, t, v):
        raise NotImplementedError


class GaussianMixture(PriorModel):
    """Mixture of Gaussians with diagonal or dense covariances.

    Diagonal covariances are passed as an array of shape (K, n) holding the
    diagonals; dense covariances as (K, n, n). Dense components are
    eigendecomposed once at construction so that every noise level only
    costs a rescaling of the eigenvalues.
    """

    def __init__(self, weights, means, covariances):
        weights = np.asarray(weights, dtype=float)
        means = np.atleast_2d(np.asarray(means, dtype=float))
        covariances = np.asarray(covariances, dtype=float)

        if weights.ndim != 1 or weights.size != means.shape[0]:
            raise DataError("weights and means disagree on the number of components")
        if np.any(weights < 0):
            raise DataError("mixture weights must be nonnegative")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise DataError(f"mixture weights sum to {weights.sum()!r}, not 1")

        K, n = means.shape
        if covariances.shape == (K, n):
            if np.any(covariances <= 0):
                raise DataError("diagonal covariances must be strictly positive")
            self._diag = True
            self._evals = covariances.copy()  # (K, n)
            self._evecs = None
        elif covariances.shape == (K, n, n):
            if not np.allclose(covariances, np.swapaxes(covariances, 1, 2), atol=1e-10):
                raise DataError("covariance matrices must be symmetric")
            evals = np.empty((K, n))
            evecs = np.empty((K, n, n))
            for k in range(K):
                w, u = np.linalg.eigh(covariances[k])
                if np.any(w <= 0):
                    raise DataError(f"covariance {k} is not positive-definite")
                evals[k], evecs[k] = w, u
            self._diag = False
            self._evals = evals
            self._evecs = evecs
        else:
            raise DataError(
                f"covariances must have shape ({K}, {n}) or ({K}, {n}, {n}), got {covariances.shape}"
            )

        self.weights = weights
        self.means = means
        self.covariances = covariances
        self._log_w = np.log(np.where(weights > 0, weights, 1e-300))

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    # -- internal ---------------------------------------------------------

    def _flat(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise DataError(f"expected vectors of dimension {self.dim}, got shape {x.shape}")
        lead = x.shape[:-1]
        return x.reshape(-1, self.dim), lead

    def _stats(self, x2, sig2):
        """Per-component log densities and natural gradients at noise sig2.

        Returns (logpdf, g) with shapes (B, K) and (B, K, n), where
        g_k = (Sigma_k + sig2 I)^{-1} (mu_k - x).
        """
        y = x2[:, None, :] - self.means[None, :, :]  # (B, K, n)
        var = self._evals + sig2  # (K, n) in the eigenbasis
        if self._diag:
            proj = y
        else:
            proj = np.einsum("bkn,knm->bkm", y, self._evecs)
        q = proj / var[None]
        logpdf = -0.5 * (np.sum(proj * q, axis=-1) + np.sum(np.log(var) + _LOG_2PI, axis=-1))
        if self._diag:
            g = -q
        else:
            g = -np.einsum("bkm,knm->bkn", q, self._evecs)
        return logpdf, g

    def _responsibilities(self, logpdf):
        logits = self._log_w[None, :] + logpdf
        logits = logits - logits.max(axis=1, keepdims=True)
        r = np.exp(logits)
        return r / r.sum(axis=1, keepdims=True)

    def _precision_apply(self, v2, sig2):
        """(Sigma_k + sig2 I)^{-1} v for all components; v2 is (B, n) -> (B, K, n)."""
        var = self._evals + sig2
        if self._diag:
            return v2[:, None, :] / var[None]
        proj = np.einsum("bn,knm->bkm", v2, self._evecs)
        return np.einsum("bkm,knm->bkn", proj / var[None], self._evecs)

    # -- PriorModel interface ---------------------------------------------

    def log_marginal(self, x, t):
        """log P_t(x) of the noised mixture, stable via log-sum-exp."""
        if t < 0:
            raise ValueError("t must be nonnegative")
        x2, lead = self._flat(x)
        logpdf, _ = self._stats(x2, float(t) ** 2)
        out = logsumexp(self._log_w[None, :] + logpdf, axis=1)
        return out.reshape(lead) if lead else float(out[0])

    def score(self, x, t):
        """Gradient of log P_t at x."""
        if t < 0:
            raise ValueError("t must be nonnegative")
        x2, lead = self._flat(x)
        logpdf, g = self._stats(x2, float(t) ** 2)
        r = self._responsibilities(logpdf)
        s = np.einsum("bk,bkn->bn", r, g)
        return s.reshape(lead + (self.dim,))

    def denoiser_jvp(self, x, t, v):
        """Apply the denoiser Jacobian dD/dx (symmetric) to v."""
        if t < 0:
            raise ValueError("t must be nonnegative")
        sig2 = float(t) ** 2
        x2, lead = self._flat(x)
        v2 = np.broadcast_to(np.asarray(v, dtype=float), lead + (self.dim,)).reshape(-1, self.dim)
        logpdf, g = self._stats(x2, sig2)
        r = self._responsibilities(logpdf)
        s = np.einsum("bk,bkn->bn", r, g)
        gv = np.einsum("bkn,bn->bk", g, v2)
        av = self._precision_apply(v2, sig2)
        # d(score)/dx = sum_k r_k (g_k g_k^T - A_k) - s s^T
        ds_v = (
            np.einsum("bk,bkn->bn", r * gv, g)
            - np.einsum("bk,bkn->bn", r, av)
            - s * np.einsum("bn,bn->b", s, v2)[:, None]
        )
        out = v2 + sig2 * ds_v
        return out.reshape(lead + (self.dim,))

    def denoiser_jacobian(self, x, t):
        """Dense Jacobian dD/dx at a single point x."""
        if t < 0:
            raise ValueError("t must be nonnegative")
        sig2 = float(t) ** 2
        x2, lead = self._flat(x)
        if x2.shape[0] != 1:
            raise ContractError("denoiser_jacobian expects a single vector")
        logpdf, g = self._stats(x2, sig2)
        r = self._responsibilities(logpdf)[0]
        g = g[0]  # (K, n)
        s = r @ g
        n = self.dim
        var = self._evals + sig2
        ds = -np.outer(s, s)
        for k in range(self.n_components):
            ds += r[k] * np.outer(g[k], g[k])
            if self._diag:
                ds -= r[k] * np.diag(1.0 / var[k])
            else:
                u = self._evecs[k]
                ds -= r[k] * (u / var[k]) @ u.T
        return np.eye(n) + sig2 * ds

    # -- sampling and serialization ---------------------------------------

    def sample(self, rng: np.random.Generator, size: int):
        """Draw size samples from the clean data distribution."""
        comp = rng.choice(self.n_components, size=size, p=self.weights)
        z = rng.standard_normal((size, self.dim))
        out = np.empty((size, self.dim))
        for k in range(self.n_components):
            sel = comp == k
            if not np.any(sel):
                continue
            half = np.sqrt(self._evals[k])
            if self._diag:
                out[sel] = self.means[k] + z[sel] * half
            else:
                out[sel] = self.means[k] + (z[sel] * half) @ self._evecs[k].T
        return out

    def to_json(self) -> str:
        if not self._diag:
            raise ContractError("only diagonal-covariance mixtures serialize to JSON")
        return json.dumps(
            {
                "weights": self.weights.tolist(),
                "means": self.means.tolist(),
                "cov_diag": self.covariances.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "GaussianMixture":
        try:
            doc = json.loads(text)
            return cls(doc["weights"], doc["means"], doc["cov_diag"])
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise DataError(f"bad mixture document: {exc}") from exc

    @classmethod
    def isotropic(cls, weights, means, stds) -> "GaussianMixture":
        """Convenience constructor with per-component isotropic stds."""
        means = np.atleast_2d(np.asarray(means, dtype=float))
        stds = np.asarray(stds, dtype=float)
        cov = np.tile(stds[:, None] ** 2, (1, means.shape[1]))
        return cls(weights, means, cov)


def fit_empirical_gaussian(dataset, ridge: float = EMPIRICAL_RIDGE) -> GaussianMixture:
    """Single-Gaussian fit: sample mean and ridge-regularized sample covariance."""
    data = np.asarray(dataset, dtype=float)
    if data.ndim != 2 or data.shape[0] < 2:
        raise DataError("need at least 2 samples of equal dimension")
    mean = data.mean(axis=0)
    cov = np.cov(data, rowvar=False, bias=False)
    cov = np.atleast_2d(cov) + ridge * np.eye(data.shape[1])
    return GaussianMixture([1.0], mean[None, :], cov[None, :, :])
