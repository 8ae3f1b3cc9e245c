"""Process-noise abduction from smoothed particle output.

Each particle's residual against its own lineage parent recovers the noise
increment that the state equation added at that step; the smoothed weights
turn those residuals into a per-step Gaussian posterior (mean vector and
per-dimension variance).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import SystemSpec, _rk4, get_system, rk4_step
from .filtering import FilterHistory, SmoothedWeights


@dataclass(frozen=True)
class NoisePosterior:
    """Gaussian posterior over process noise for t = 1..T.

    Row t-1 holds the mean vector and per-dimension variance of the abducted
    noise at step t (step 0 has no predecessor, so no entry).
    """

    mu: np.ndarray     # (T, d)
    sigma: np.ndarray  # (T, d) variances, componentwise >= 0

    def __post_init__(self) -> None:
        mu = np.asarray(self.mu, dtype=float)
        sigma = np.asarray(self.sigma, dtype=float)
        if mu.shape != sigma.shape or mu.ndim != 2:
            raise ValueError(f"mu and sigma must share a (T, d) shape, got {mu.shape}/{sigma.shape}")
        if (sigma < 0).any():
            raise ValueError("noise variances must be >= 0")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def horizon(self) -> int:
        return self.mu.shape[0]

    @property
    def dimension(self) -> int:
        return self.mu.shape[1]


def particle_residual(
    x_t: np.ndarray,
    x_prev: np.ndarray,
    theta: np.ndarray,
    system: str | SystemSpec,
    delta: float,
) -> np.ndarray:
    """Noise increment implied by one transition: x_t - rk4_step(x_prev, theta)."""
    x_t = np.asarray(x_t, dtype=float)
    return x_t - rk4_step(system, x_prev, theta, delta)


def abduct_noise(
    history: FilterHistory,
    smoothed: SmoothedWeights,
    system: str | SystemSpec,
    delta: float,
) -> NoisePosterior:
    """Weighted residual moments per time step.

    mu_t is the smoothed-weight average of the particle residuals; sigma_t is
    their weighted population variance, both componentwise. Residual pairs
    follow the recorded resampling lineage, so each particle is differenced
    against the parent that actually produced it.
    """
    spec = get_system(system)
    t_end = history.horizon
    lane = smoothed.lane_index
    mu = np.empty((t_end, spec.dimension))
    sigma = np.empty((t_end, spec.dimension))
    for t in range(1, t_end + 1):
        lane_t = lane[t]
        lane_prev = lane[t - 1]
        x_t = history.states[t][lane_t]                      # (M, N, d)
        theta_t = history.thetas[t][lane_t]                  # (M, p)
        parents_idx = history.inner_ancestors[t - 1][lane_prev]  # (M, N)
        parents = np.take_along_axis(
            history.states[t - 1][lane_prev], parents_idx[:, :, None], axis=1
        )
        resid = x_t - _rk4(spec, parents, theta_t[:, None, :], delta)
        w = smoothed.w_tilde[t]
        total = w.sum()
        mean = np.einsum("mn,mnd->d", w, resid) / total
        var = np.einsum("mn,mnd->d", w, (resid - mean) ** 2) / total
        mu[t - 1] = mean
        sigma[t - 1] = var
    return NoisePosterior(mu=mu, sigma=sigma)
