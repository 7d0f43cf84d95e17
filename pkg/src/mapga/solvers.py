"""Reconstruction algorithms: MAP gradient ascent in z-space, the hybrid
MAP-GA + PGDM scheme for noisy measurements, the PGDM baseline, and plain
gradient ascent in x0-space.

All solvers accept a batched measurement (y of shape (B, m)) and then return
a batch of reconstructions; per-iteration diagnostics are averaged over the
batch. Results are deterministic given (config, rng state).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import ConfigError
from .operators import Measurement
from .pfode import OdeConfig, consistency, consistency_vjp
from .priors import PriorModel
from .schedule import EPSILON_DEFAULT, RHO_DEFAULT, SIGMA_MAX_DEFAULT, TimeGrid, edm_time_grid

PGDM_STEPS_DEFAULT = 500
PGDM_HYBRID_STEPS_DEFAULT = 20


@dataclass
class SolverConfig:
    """MAP-GA configuration; defaults give the 20 x 50 = 1000-step budget."""

    time_grid: TimeGrid
    num_iter: int = 50
    lr: Optional[float] = None  # None -> sigma_y^2 + epsilon^2 at solve time
    use_prior: bool = True
    backend: str = "consistency"
    epsilon: float = EPSILON_DEFAULT
    sigma_max: float = SIGMA_MAX_DEFAULT
    ode: OdeConfig = field(default_factory=OdeConfig)
    seed: Optional[int] = None
    record_iterates: bool = False

    def __post_init__(self):
        if self.num_iter < 1:
            raise ConfigError("num_iter must be >= 1")
        if self.lr is not None and self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.backend not in ("consistency", "denoiser"):
            raise ConfigError(f"unknown backend {self.backend!r}")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")

    @property
    def n_outer(self) -> int:
        return len(self.time_grid) - 1


def default_solver_config(
    n_time_steps: int = 20,
    num_iter: int = 50,
    epsilon: float = EPSILON_DEFAULT,
    sigma_max: float = SIGMA_MAX_DEFAULT,
    rho: float = RHO_DEFAULT,
    t_max: Optional[float] = None,
    **kwargs,
) -> SolverConfig:
    """SolverConfig with a rho-spaced grid from t_max (default sigma_max) to epsilon."""
    grid = edm_time_grid(n_time_steps + 1, epsilon, t_max if t_max is not None else sigma_max, rho)
    return SolverConfig(time_grid=grid, num_iter=num_iter, epsilon=epsilon, sigma_max=sigma_max, **kwargs)


@dataclass
class SolveResult:
    x_hat: np.ndarray
    trace: list
    seed: Optional[int]
    config: dict
    iterates: Optional[list] = None

    def trace_csv(self) -> str:
        lines = ["iteration,t,residual,grad_norm,log_posterior"]
        for rec in self.trace:
            lines.append(
                "%d,%.17g,%.17g,%.17g,%.17g"
                % (rec["iteration"], rec["t"], rec["residual"], rec["grad_norm"], rec["log_posterior"])
            )
        return "\n".join(lines) + "\n"


# -- gradient pieces --------------------------------------------------------


def grad_log_likelihood(x_eps, meas: Measurement, epsilon: float = EPSILON_DEFAULT):
    """H^T (y - H x) / (sigma_y^2 + epsilon^2), using H H^T = I."""
    var = meas.sigma_y**2 + epsilon**2
    if var == 0:
        raise ConfigError("sigma_y and epsilon cannot both be zero")
    return meas.mask.adjoint(meas.y - meas.mask.apply(x_eps)) / var


def grad_log_prior(x_eps, prior: PriorModel, epsilon: float = EPSILON_DEFAULT):
    """(D(x, eps) - x) / eps^2; equals the score at eps for analytic priors."""
    if epsilon <= 0:
        raise ConfigError("epsilon must be positive")
    x_eps = np.asarray(x_eps, dtype=float)
    return (prior.denoise(x_eps, epsilon) - x_eps) / epsilon**2


def _backend_forward(z, t: float, prior: PriorModel, cfg: SolverConfig):
    if cfg.backend == "denoiser":
        return prior.denoise(z, t)
    return consistency(z, t, prior, cfg.ode, cfg.epsilon, cfg.sigma_max)


def _backend_vjp(z, t: float, v, prior: PriorModel, cfg: SolverConfig):
    if cfg.backend == "denoiser":
        return prior.denoiser_jvp(z, t, v)
    return consistency_vjp(z, t, v, prior, cfg.ode, cfg.epsilon, cfg.sigma_max)


def _posterior_step(z, t: float, meas: Measurement, prior: PriorModel, cfg: SolverConfig):
    """One z-space posterior gradient: returns (grad_z, x_hat, grad_posterior)."""
    x_hat = _backend_forward(z, t, prior, cfg)
    g = grad_log_likelihood(x_hat, meas, cfg.epsilon)
    if cfg.use_prior:
        g = g + grad_log_prior(x_hat, prior, cfg.epsilon)
    return _backend_vjp(z, t, g, prior, cfg), x_hat, g


def posterior_vjp_step(z, t: float, meas: Measurement, prior: PriorModel, cfg: SolverConfig):
    """(d backend(z,t)/dz)^T grad_posterior evaluated at x_hat = backend(z,t)."""
    return _posterior_step(z, t, meas, prior, cfg)[0]


# -- diagnostics ------------------------------------------------------------


def _log_posterior(x_hat, meas: Measurement, prior: PriorModel, epsilon: float) -> float:
    var = meas.sigma_y**2 + epsilon**2
    r = meas.residual(x_hat)
    m = meas.mask.m
    loglik = -0.5 * (np.sum(r * r, axis=-1) / var + m * np.log(2.0 * np.pi * var))
    return float(np.mean(loglik + prior.log_marginal(x_hat, epsilon)))


def _record(trace, iteration, t, x_hat, grad_z, meas, prior, epsilon, iterates, cfg):
    resid = float(np.mean(np.linalg.norm(meas.residual(x_hat), axis=-1)))
    gnorm = float(np.mean(np.linalg.norm(np.atleast_2d(grad_z), axis=-1)))
    trace.append(
        {
            "iteration": iteration,
            "t": float(t),
            "residual": resid,
            "grad_norm": gnorm,
            "log_posterior": _log_posterior(x_hat, meas, prior, epsilon),
        }
    )
    if cfg is not None and cfg.record_iterates:
        iterates.append(np.array(x_hat, copy=True))


# -- MAP-GA ------------------------------------------------------------------


def map_ga(
    meas: Measurement,
    prior: PriorModel,
    cfg: SolverConfig,
    rng: Optional[np.random.Generator] = None,
    z_init=None,
) -> SolveResult:
    """Multi-step MAP gradient ascent with stochastic re-noising.

    Starts at z ~ N(0, tau_n^2 I); at each outer step t runs num_iter updates
    z += lr * (d backend/dz)^T grad_posterior, then re-noises around the
    current reconstruction with variance tau_{i-1}^2 - tau_0^2. The final
    outer step re-noises with zero variance, so the reconstruction itself is
    returned.
    """
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    taus = cfg.time_grid.taus
    lr = cfg.lr if cfg.lr is not None else meas.sigma_y**2 + cfg.epsilon**2

    batch = meas.y.shape[:-1]
    shape = batch + (meas.mask.n,)
    if z_init is not None:
        z = np.asarray(z_init, dtype=float).copy()
        if z.shape != shape:
            raise ConfigError(f"z_init shape {z.shape} does not match {shape}")
    else:
        z = taus[0] * rng.standard_normal(shape)

    trace: list = []
    iterates: list = []
    it = 0
    x_hat = None
    for i in range(cfg.n_outer):
        t = float(taus[i])
        for _ in range(cfg.num_iter):
            grad_z, x_hat, _ = _posterior_step(z, t, meas, prior, cfg)
            z = z + lr * grad_z
            it += 1
            _record(trace, it, t, x_hat, grad_z, meas, prior, cfg.epsilon, iterates, cfg)
        x_hat = _backend_forward(z, t, prior, cfg)
        var = taus[i + 1] ** 2 - taus[-1] ** 2
        if var > 0:
            z = x_hat + np.sqrt(var) * rng.standard_normal(shape)
        else:
            z = x_hat

    return SolveResult(
        x_hat=x_hat,
        trace=trace,
        seed=cfg.seed,
        config=_echo(cfg),
        iterates=iterates if cfg.record_iterates else None,
    )


def _echo(cfg: SolverConfig) -> dict:
    doc = asdict(cfg)
    doc["time_grid"] = {"taus": cfg.time_grid.taus.tolist(), "rho": cfg.time_grid.rho}
    return doc


# -- PGDM --------------------------------------------------------------------


def _pgdm_r2(t: float) -> float:
    # standard VE choice: r_t^2 = sigma_t^2 / (1 + sigma_t^2)
    return t * t / (1.0 + t * t)


def _pgdm_loop(x, taus, meas, prior, rng, trace, detach_jacobian=False, epsilon=EPSILON_DEFAULT, it0=0):
    shape = x.shape
    it = it0
    for i in range(len(taus) - 1):
        t = float(taus[i])
        x_hat = prior.denoise(x, t)
        guide = meas.mask.adjoint(meas.residual(x_hat)) / (meas.sigma_y**2 + _pgdm_r2(t))
        if not detach_jacobian:
            guide = prior.denoiser_jvp(x, t, guide)
        mu = x_hat + t * t * guide
        it += 1
        _record(trace, it, t, x_hat, t * t * guide, meas, prior, epsilon, None, None)
        var = taus[i + 1] ** 2 - taus[-1] ** 2
        x = mu + np.sqrt(var) * rng.standard_normal(shape) if var > 0 else mu
    return x, it


def pgdm_baseline(
    meas: Measurement,
    prior: PriorModel,
    n_steps: int = PGDM_STEPS_DEFAULT,
    rng: Optional[np.random.Generator] = None,
    epsilon: float = EPSILON_DEFAULT,
    sigma_max: float = SIGMA_MAX_DEFAULT,
    rho: float = RHO_DEFAULT,
    detach_jacobian: bool = False,
    seed: Optional[int] = None,
) -> SolveResult:
    """Ancestral PGDM from pure noise with Gaussian-surrogate guidance."""
    if n_steps < 1:
        raise ConfigError("n_steps must be >= 1")
    rng = rng if rng is not None else np.random.default_rng(seed)
    taus = edm_time_grid(n_steps + 1, epsilon, sigma_max, rho).taus
    batch = meas.y.shape[:-1]
    x = taus[0] * rng.standard_normal(batch + (meas.mask.n,))
    trace: list = []
    x, _ = _pgdm_loop(x, taus, meas, prior, rng, trace, detach_jacobian, epsilon)
    cfg = {"solver": "pgdm", "n_steps": n_steps, "epsilon": epsilon, "sigma_max": sigma_max, "rho": rho}
    return SolveResult(x_hat=x, trace=trace, seed=seed, config=cfg)


def map_ga_pgdm(
    meas: Measurement,
    prior: PriorModel,
    cfg_map: Optional[SolverConfig] = None,
    cfg_pgdm: Optional[dict] = None,
    rng: Optional[np.random.Generator] = None,
) -> SolveResult:
    """MAP-GA (no prior term) from T down to sigma_y, then PGDM to epsilon.

    The MAP-GA stage grid must end at sigma_y; the PGDM stage runs on a fresh
    grid from sigma_y to epsilon (20 steps by default).
    """
    if meas.sigma_y <= 0:
        raise ConfigError("map_ga_pgdm requires sigma_y > 0; use map_ga for noiseless data")
    pg = dict(cfg_pgdm or {})
    n_pgdm = int(pg.pop("n_steps", PGDM_HYBRID_STEPS_DEFAULT))
    detach = bool(pg.pop("detach_jacobian", False))
    if pg:
        raise ConfigError(f"unknown cfg_pgdm keys: {sorted(pg)}")

    if cfg_map is None:
        cfg_map = default_solver_config(use_prior=False)
        cfg_map.time_grid = edm_time_grid(
            cfg_map.n_outer + 1, meas.sigma_y, cfg_map.sigma_max, cfg_map.time_grid.rho
        )
    if abs(cfg_map.time_grid.t_min - meas.sigma_y) > 1e-12:
        raise ConfigError(
            f"MAP-GA grid must end at sigma_y={meas.sigma_y}, ends at {cfg_map.time_grid.t_min}"
        )
    if meas.sigma_y <= cfg_map.epsilon:
        raise ConfigError("sigma_y must exceed epsilon for the hybrid schedule")
    # the hybrid always drops the prior term in its MAP-GA stage
    cfg_map = replace(cfg_map, use_prior=False)

    rng = rng if rng is not None else np.random.default_rng(cfg_map.seed)
    stage1 = map_ga(meas, prior, cfg_map, rng)

    taus = edm_time_grid(n_pgdm + 1, cfg_map.epsilon, meas.sigma_y, cfg_map.time_grid.rho).taus
    trace = list(stage1.trace)
    x, _ = _pgdm_loop(
        stage1.x_hat, taus, meas, prior, rng, trace, detach, cfg_map.epsilon, it0=len(stage1.trace)
    )
    cfg_doc = {"solver": "map-ga-pgdm", "map": _echo(cfg_map), "pgdm_steps": n_pgdm}
    return SolveResult(x_hat=x, trace=trace, seed=cfg_map.seed, config=cfg_doc)


# -- naive x0-space baseline ---------------------------------------------------


def naive_map_x0(
    meas: Measurement,
    prior: PriorModel,
    n_iters: int = 1000,
    lr: Optional[float] = None,
    rng: Optional[np.random.Generator] = None,
    grad_tol: Optional[float] = None,
    seed: Optional[int] = None,
) -> SolveResult:
    """Plain gradient ascent on log P(y|x0) + log P(x0) from a random start.

    Uses the exact sigma_y^2 likelihood (so sigma_y must be positive) and the
    analytic score at t = 0, which neural priors could not provide off the
    data manifold.
    """
    if meas.sigma_y <= 0:
        raise ConfigError("naive_map_x0 requires sigma_y > 0")
    if lr is None:
        lr = meas.sigma_y**2
    if lr < 0:
        raise ConfigError("lr must be nonnegative")
    rng = rng if rng is not None else np.random.default_rng(seed)

    batch = meas.y.shape[:-1]
    x = rng.standard_normal(batch + (meas.mask.n,))
    trace: list = []
    for it in range(1, n_iters + 1):
        g = meas.mask.adjoint(meas.residual(x)) / meas.sigma_y**2 + prior.score(x, 0.0)
        x = x + lr * g
        _record(trace, it, 0.0, x, g, meas, prior, EPSILON_DEFAULT, None, None)
        if grad_tol is not None and trace[-1]["grad_norm"] < grad_tol:
            break
    cfg = {"solver": "naive-map", "n_iters": n_iters, "lr": lr}
    return SolveResult(x_hat=x, trace=trace, seed=seed, config=cfg)
