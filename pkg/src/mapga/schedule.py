"""Variance-exploding noise schedule and discrete time grids.

The schedule is the identity map sigma(t) = t on [sigma_min, sigma_max],
with t = 0 treated as exactly noise-free so the perturbation kernel
N(x0, sigma^2(t) - sigma^2(0)) stays in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

EPSILON_DEFAULT = 0.002
SIGMA_MAX_DEFAULT = 80.0
RHO_DEFAULT = 7.0


@dataclass(frozen=True)
class NoiseSchedule:
    """Identity schedule sigma(t) = t with configured endpoints."""

    sigma_min: float = EPSILON_DEFAULT
    sigma_max: float = SIGMA_MAX_DEFAULT

    def __post_init__(self):
        if not (0.0 < self.sigma_min < self.sigma_max):
            raise ConfigError(
                f"need 0 < sigma_min < sigma_max, got ({self.sigma_min}, {self.sigma_max})"
            )

    def sigma(self, t):
        """Noise level at time t; raises on negative t."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("sigma(t) undefined for t < 0")
        return t if t.ndim else float(t)

    def perturb(self, x0, t, rng: np.random.Generator):
        """Sample from the perturbation kernel N(x0, (sigma(t)^2 - sigma(0)^2) I)."""
        x0 = np.asarray(x0, dtype=float)
        std = self.sigma(t)
        return x0 + std * rng.standard_normal(x0.shape)


@dataclass(frozen=True)
class TimeGrid:
    """Strictly decreasing time steps tau_n > ... > tau_0."""

    taus: np.ndarray
    rho: float = RHO_DEFAULT

    def __post_init__(self):
        taus = np.asarray(self.taus, dtype=float)
        object.__setattr__(self, "taus", taus)
        if taus.ndim != 1 or taus.size < 2:
            raise ConfigError("time grid needs at least two points")
        if np.any(np.diff(taus) >= 0):
            raise ConfigError("time grid must be strictly decreasing")
        if self.rho <= 0:
            raise ConfigError("rho must be positive")

    @property
    def t_max(self) -> float:
        return float(self.taus[0])

    @property
    def t_min(self) -> float:
        return float(self.taus[-1])

    def __len__(self) -> int:
        return self.taus.size


def edm_time_grid(
    n: int,
    sigma_min: float = EPSILON_DEFAULT,
    sigma_max: float = SIGMA_MAX_DEFAULT,
    rho: float = RHO_DEFAULT,
) -> TimeGrid:
    """rho-spaced grid of n points from sigma_max down to sigma_min.

    tau_i = (sigma_max^(1/rho) + (i/(n-1)) (sigma_min^(1/rho) - sigma_max^(1/rho)))^rho,
    endpoint-exact by construction.
    """
    if n < 2:
        raise ConfigError(f"time grid needs n >= 2, got {n}")
    if not (0.0 < sigma_min < sigma_max):
        raise ConfigError("need 0 < sigma_min < sigma_max")
    i = np.arange(n, dtype=float)
    hi = sigma_max ** (1.0 / rho)
    lo = sigma_min ** (1.0 / rho)
    taus = (hi + i / (n - 1) * (lo - hi)) ** rho
    taus[0] = sigma_max
    taus[-1] = sigma_min
    return TimeGrid(taus=taus, rho=rho)
