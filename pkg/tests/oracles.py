"""Independent reference implementations used only by the tests.

These deliberately avoid the package's filtering/smoothing code paths: the
Kalman filter and RTS smoother are exact closed-form recursions, and the
bootstrap particle filter is a from-scratch single-layer filter that shares
only the seed-stream discipline with the package.
"""
from __future__ import annotations

import numpy as np

from cfdyn.seeding import RngSeed


def kalman_filter_rts(ys: np.ndarray, a: float, q: float, r: float,
                      m0: float, p0: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact filtered and RTS-smoothed means for a scalar linear-Gaussian SSM.

    x_t = a x_{t-1} + u (var q), y_t = x_t + w (var r); y[0] is not
    assimilated (it aligns with the known initial state).
    """
    horizon = len(ys) - 1
    means = [m0]
    variances = [p0]
    pred_means = [m0]
    pred_vars = [p0]
    m, p = m0, p0
    for t in range(1, horizon + 1):
        mp, pp = a * m, a * a * p + q
        gain = pp / (pp + r)
        m = mp + gain * (ys[t] - mp)
        p = (1.0 - gain) * pp
        means.append(m)
        variances.append(p)
        pred_means.append(mp)
        pred_vars.append(pp)
    means = np.array(means)
    variances = np.array(variances)
    pred_means = np.array(pred_means)
    pred_vars = np.array(pred_vars)

    smoothed = means.copy()
    for t in range(horizon - 1, -1, -1):
        c = variances[t] * a / pred_vars[t + 1]
        smoothed[t] = means[t] + c * (smoothed[t + 1] - pred_means[t + 1])
    return means, smoothed


def bootstrap_particle_filter(
    ys: np.ndarray,
    step_fn,
    theta: np.ndarray,
    x0: np.ndarray,
    n_particles: int,
    process_std: float,
    observation_std: float,
    rng: RngSeed,
) -> tuple[np.ndarray, np.ndarray]:
    """Single-layer bootstrap PF that resamples every step.

    `step_fn(states, theta) -> states` is the deterministic forward map.
    Draws follow the package's stream-naming convention so runs placed on the
    same seed stream are draw-for-draw comparable. Returns the pre-resample
    particles (T+1, N, d) and normalized weights (T+1, N).
    """
    horizon = ys.shape[0] - 1
    d = ys.shape[1]
    particles = np.broadcast_to(np.asarray(x0, dtype=float), (n_particles, d)).copy()
    all_parts = np.empty((horizon + 1, n_particles, d))
    all_weights = np.empty((horizon + 1, n_particles))
    all_parts[0] = particles
    all_weights[0] = 1.0 / n_particles
    weights = np.full(n_particles, 1.0 / n_particles)
    var = observation_std * observation_std
    log_norm = -0.5 * d * (np.log(2.0 * np.pi) + np.log(var))
    for t in range(1, horizon + 1):
        step = rng.child("step", t)
        u = step.child("propagate").child("lane", 0).generator().normal(
            0.0, process_std, size=(n_particles, d)
        )
        particles = step_fn(particles, theta) + u
        resid = ys[t] - particles
        ll = -0.5 * np.einsum("nd,nd->n", resid, resid) / var + log_norm
        score = ll + np.log(weights)
        shifted = np.exp(score - score.max())
        weights = shifted / shifted.sum()
        all_parts[t] = particles
        all_weights[t] = weights
        gen = step.child("inner_resample", 0).generator()
        positions = (gen.uniform() + np.arange(n_particles)) / n_particles
        idx = np.clip(np.searchsorted(np.cumsum(weights), positions), 0, n_particles - 1)
        particles = particles[idx]
        weights = np.full(n_particles, 1.0 / n_particles)
        # outer layer is a single lane; its resample draw is consumed but inert
        step.child("outer_resample").generator().uniform()
    return all_parts, all_weights


def euler_rollout(rhs_fn, x0: float, horizon_time: float, n_steps: int) -> float:
    """Fine-step explicit-Euler integration used as an integrator oracle."""
    x = float(x0)
    h = horizon_time / n_steps
    for _ in range(n_steps):
        x += h * rhs_fn(x)
    return x
