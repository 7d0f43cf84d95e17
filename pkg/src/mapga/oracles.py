"""Independent ground truth for tests and acceptance criteria.

Linear-Gaussian posteriors in closed form, plus a brute-force lattice
maximizer of the x0-space MAP objective for low-dimensional mixtures.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import ContractError, NumericalError
from .operators import InpaintingMask, Measurement
from .priors import GaussianMixture

RIDGE_FALLBACK = 1e-12


@dataclass(frozen=True)
class GaussianPosterior:
    mean: np.ndarray
    covariance: np.ndarray


def _as_cov(sigma0, n: int) -> np.ndarray:
    sigma0 = np.asarray(sigma0, dtype=float)
    if sigma0.ndim == 1:
        return np.diag(sigma0)
    if sigma0.shape != (n, n):
        raise ContractError(f"covariance shape {sigma0.shape} does not match dimension {n}")
    return sigma0


def _spd_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    try:
        c = linalg.cho_factor(a)
        return linalg.cho_solve(c, b)
    except linalg.LinAlgError:
        try:
            c = linalg.cho_factor(a + RIDGE_FALLBACK * np.eye(a.shape[0]))
            return linalg.cho_solve(c, b)
        except linalg.LinAlgError as exc:
            raise NumericalError(f"SPD solve failed even with ridge {RIDGE_FALLBACK}: {exc}") from exc


def gaussian_posterior_map(mu0, sigma0, mask: InpaintingMask, y, sigma_y: float) -> GaussianPosterior:
    """Posterior of x given y = Hx + N(0, sigma_y^2 I) under a Gaussian prior.

    sigma_y = 0 is handled as an exact constraint by Gaussian conditioning on
    the observed coordinates.
    """
    mu0 = np.asarray(mu0, dtype=float)
    y = np.asarray(y, dtype=float)
    n = mu0.size
    cov0 = _as_cov(sigma0, n)
    obs = mask.kept_indices

    if sigma_y > 0:
        prec = _spd_solve(cov0, np.eye(n))
        prec[obs, obs] += 1.0 / sigma_y**2
        rhs = _spd_solve(cov0, mu0) + mask.adjoint(y) / sigma_y**2
        cov = _spd_solve(prec, np.eye(n))
        mean = cov @ rhs
        cov = 0.5 * (cov + cov.T)
        return GaussianPosterior(mean=mean, covariance=cov)

    hid = mask.hidden_indices
    mean = np.zeros(n)
    cov = np.zeros((n, n))
    mean[obs] = y
    if hid.size:
        c_oo = cov0[np.ix_(obs, obs)]
        c_ho = cov0[np.ix_(hid, obs)]
        gain = _spd_solve(c_oo, c_ho.T).T
        mean[hid] = mu0[hid] + gain @ (y - mu0[obs])
        schur = cov0[np.ix_(hid, hid)] - gain @ c_ho.T
        cov[np.ix_(hid, hid)] = 0.5 * (schur + schur.T)
    return GaussianPosterior(mean=mean, covariance=cov)


def gaussian_posterior_logpdf(post: GaussianPosterior, x) -> float:
    """Log-density of the posterior at x (requires nonsingular covariance)."""
    x = np.asarray(x, dtype=float)
    d = post.mean.size
    try:
        c = linalg.cho_factor(post.covariance)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"singular posterior covariance: {exc}") from exc
    diff = x - post.mean
    quad = diff @ linalg.cho_solve(c, diff)
    logdet = 2.0 * np.sum(np.log(np.diag(c[0])))
    return float(-0.5 * (quad + logdet + d * np.log(2.0 * np.pi)))


@dataclass(frozen=True)
class GridSpec:
    points_per_axis: int = 201
    pad_stds: float = 4.0


def _grid_axes(prior: GaussianMixture, spec: GridSpec):
    stds = np.sqrt(prior._evals) if prior._diag else np.sqrt(
        np.array([np.diag(prior.covariances[k]) for k in range(prior.n_components)])
    )
    lo = np.min(prior.means - spec.pad_stds * stds, axis=0)
    hi = np.max(prior.means + spec.pad_stds * stds, axis=0)
    return [np.linspace(lo[i], hi[i], spec.points_per_axis) for i in range(prior.dim)]


def gmm_grid_map(
    prior: GaussianMixture,
    meas: Measurement,
    spec: GridSpec | None = None,
    sigma_eps: float = 0.0,
) -> np.ndarray:
    """Brute-force argmax of log P(y|x) + log P(x) over a lattice (dim <= 3).

    Noiseless measurements (sigma_y = sigma_eps = 0) are handled by pinning
    the observed coordinates to y and searching the hidden axes only. Ties
    break toward the lowest lattice index.
    """
    spec = spec or GridSpec()
    if prior.dim > 3:
        raise ContractError("gmm_grid_map supports dimension <= 3 only")
    axes = _grid_axes(prior, spec)
    var_y = meas.sigma_y**2 + sigma_eps**2
    obs = meas.mask.kept_indices
    exact = var_y == 0.0

    free_axes = [i for i in range(prior.dim) if not (exact and i in obs)]
    grids = np.meshgrid(*[axes[i] for i in free_axes], indexing="ij") if free_axes else []
    npts = grids[0].size if grids else 1
    pts = np.empty((npts, prior.dim))
    for j, i in enumerate(free_axes):
        pts[:, i] = grids[j].reshape(-1)
    if exact:
        pts[:, obs] = meas.y
        obj = prior.log_marginal(pts, 0.0)
    else:
        r = meas.y - meas.mask.apply(pts)
        obj = prior.log_marginal(pts, 0.0) - 0.5 * np.sum(r * r, axis=-1) / var_y
    best = int(np.argmax(obj))  # argmax returns the first (lowest) index on ties
    return pts[best].copy()
