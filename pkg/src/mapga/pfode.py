"""Probability flow ODE integration and its exact discrete adjoint.

Under sigma(t) = t the PF ODE is dx/dt = (x - D(x, t)) / t. The consistency
function maps any trajectory point (z, t) to the trajectory origin at
t = sigma_min by integrating this ODE on a rho-spaced sub-grid. The VJP is
the adjoint of the *implemented* single-step recursion (RK4, Heun, or
Euler), so finite differences of the discrete map converge to it without
discretization mismatch.

The default is classic RK4 with 40 sub-steps: second-order schemes at
affordable step counts leave 1e-2-level relative error against the exact
Gaussian solution, while RK4@40 is accurate to ~2e-5 at a few milliseconds
per batched call. Heun and Euler are retained for ablations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError
from .priors import GaussianMixture, PriorModel
from .schedule import EPSILON_DEFAULT, RHO_DEFAULT, SIGMA_MAX_DEFAULT, NoiseSchedule, edm_time_grid

ODE_STEPS_DEFAULT = 40
ODE_SCHEMES = ("rk4", "heun", "euler")


@dataclass(frozen=True)
class OdeConfig:
    steps: int = ODE_STEPS_DEFAULT
    scheme: str = "rk4"
    rho: float = RHO_DEFAULT

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError("OdeConfig.steps must be >= 1")
        if self.scheme not in ODE_SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; expected one of {ODE_SCHEMES}")


def pf_ode_rhs(x, t: float, prior: PriorModel):
    """Right-hand side -(D(x,t) - x)/t of the PF ODE."""
    if t <= 0:
        raise ValueError("pf_ode_rhs requires t > 0")
    x = np.asarray(x, dtype=float)
    return (x - prior.denoise(x, t)) / t


def _subgrid(t_hi: float, t_lo: float, cfg: OdeConfig) -> np.ndarray:
    return edm_time_grid(cfg.steps + 1, t_lo, t_hi, cfg.rho).taus


def integrate(z, t_from: float, t_to: float, prior: PriorModel, cfg: OdeConfig, record: bool = False):
    """Integrate the PF ODE from t_from down to t_to.

    With record=True also returns per-step tuples (stage_states, t, t_next)
    needed by the adjoint pass; stage_states are the points at which the
    right-hand side was evaluated.
    """
    if t_to >= t_from:
        raise ValueError("integration runs downward: need t_to < t_from")
    x = np.asarray(z, dtype=float).copy()
    taus = _subgrid(t_from, t_to, cfg)
    steps = []
    for t, t_next in zip(taus[:-1], taus[1:]):
        h = t_next - t
        d1 = pf_ode_rhs(x, t, prior)
        if cfg.scheme == "euler":
            if record:
                steps.append(((x,), t, t_next))
            x = x + h * d1
        elif cfg.scheme == "heun":
            x_e = x + h * d1
            d2 = pf_ode_rhs(x_e, t_next, prior)
            if record:
                steps.append(((x, x_e), t, t_next))
            x = x + 0.5 * h * (d1 + d2)
        else:
            t_mid = t + 0.5 * h
            a2 = x + 0.5 * h * d1
            d2 = pf_ode_rhs(a2, t_mid, prior)
            a3 = x + 0.5 * h * d2
            d3 = pf_ode_rhs(a3, t_mid, prior)
            a4 = x + h * d3
            d4 = pf_ode_rhs(a4, t_next, prior)
            if record:
                steps.append(((x, a2, a3, a4), t, t_next))
            x = x + (h / 6.0) * (d1 + 2.0 * d2 + 2.0 * d3 + d4)
    return (x, steps) if record else x


def consistency(
    z,
    t: float,
    prior: PriorModel,
    cfg: OdeConfig | None = None,
    sigma_min: float = EPSILON_DEFAULT,
    sigma_max: float = SIGMA_MAX_DEFAULT,
):
    """Map a trajectory point (z, t) to its origin at sigma_min."""
    cfg = cfg or OdeConfig()
    if not (sigma_min <= t <= sigma_max):
        raise ValueError(f"t={t} outside [{sigma_min}, {sigma_max}]")
    if t == sigma_min:
        return np.asarray(z, dtype=float).copy()
    return integrate(z, t, sigma_min, prior, cfg)


def _rhs_jacobian_apply(x, t: float, v, prior: PriorModel):
    # d/dx [(x - D(x,t))/t] is symmetric since dD/dx is.
    return (v - prior.denoiser_jvp(x, t, v)) / t


def consistency_vjp(
    z,
    t: float,
    v,
    prior: PriorModel,
    cfg: OdeConfig | None = None,
    sigma_min: float = EPSILON_DEFAULT,
    sigma_max: float = SIGMA_MAX_DEFAULT,
):
    """(d consistency(z,t) / dz)^T v via the discrete adjoint of the forward pass."""
    cfg = cfg or OdeConfig()
    if not (sigma_min <= t <= sigma_max):
        raise ValueError(f"t={t} outside [{sigma_min}, {sigma_max}]")
    lam = np.asarray(v, dtype=float).copy()
    if t == sigma_min:
        return lam
    _, steps = integrate(z, t, sigma_min, prior, cfg, record=True)
    for stages, ti, tn in reversed(steps):
        h = tn - ti
        if cfg.scheme == "euler":
            (x,) = stages
            lam = lam + h * _rhs_jacobian_apply(x, ti, lam, prior)
        elif cfg.scheme == "heun":
            x, x_e = stages
            w2 = _rhs_jacobian_apply(x_e, tn, lam, prior)
            w1 = _rhs_jacobian_apply(x, ti, lam + h * w2, prior)
            lam = lam + 0.5 * h * (w1 + w2)
        else:
            x, a2, a3, a4 = stages
            t_mid = ti + 0.5 * h
            # reverse-mode through the four RK4 stages (Jacobian is symmetric)
            g4 = _rhs_jacobian_apply(a4, tn, (h / 6.0) * lam, prior)
            g3 = _rhs_jacobian_apply(a3, t_mid, (h / 3.0) * lam + h * g4, prior)
            g2 = _rhs_jacobian_apply(a2, t_mid, (h / 3.0) * lam + 0.5 * h * g3, prior)
            g1 = _rhs_jacobian_apply(x, ti, (h / 6.0) * lam + 0.5 * h * g2, prior)
            lam = lam + g1 + g2 + g3 + g4
    return lam


@dataclass(frozen=True)
class ConsistencyFn:
    """Callable consistency map for a fixed prior, schedule, and ODE config."""

    prior: PriorModel
    schedule: NoiseSchedule = NoiseSchedule()
    cfg: OdeConfig = OdeConfig()

    def __call__(self, z, t: float):
        return consistency(z, t, self.prior, self.cfg, self.schedule.sigma_min, self.schedule.sigma_max)

    def vjp(self, z, t: float, v):
        return consistency_vjp(z, t, v, self.prior, self.cfg, self.schedule.sigma_min, self.schedule.sigma_max)


def gaussian_consistency_closed_form(
    prior: GaussianMixture,
    z,
    t: float,
    sigma_min: float = EPSILON_DEFAULT,
):
    """Exact PF ODE solution for a single Gaussian prior (test oracle).

    Per covariance eigendirection the ODE is linear and the solution scales
    by sqrt((lambda + sigma_min^2) / (lambda + t^2)).
    """
    if not isinstance(prior, GaussianMixture) or prior.n_components != 1:
        raise ContractError("closed form requires a single-component Gaussian prior")
    z = np.asarray(z, dtype=float)
    mu = prior.means[0]
    evals = prior._evals[0]
    factor = np.sqrt((evals + sigma_min**2) / (evals + float(t) ** 2))
    centered = z - mu
    if prior._diag:
        return mu + centered * factor
    u = prior._evecs[0]
    return mu + (centered @ u) * factor @ u.T
