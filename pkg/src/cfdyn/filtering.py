"""Two-layer nested particle filter with backward smoothing.

An outer layer of M parameter particles carries, per particle, an inner cloud
of N state particles. Each assimilation step runs jitter -> propagate ->
inner weighting -> outer weighting -> resampling, recording pre-resample
snapshots and resampling ancestry so the backward smoothing pass and the
noise abduction can align particles along outer lineages.

All weight arithmetic is done in log space with max-subtraction. Every lane m
draws from its own derived substream, so results do not depend on scheduling
or worker count.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import SystemSpec, _rk4, get_system
from .seeding import RngSeed, StreamDrawer
from .simulate import Trajectory

_LOG_2PI = float(np.log(2.0 * np.pi))


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    """Log of summed exponentials; rows of all -inf stay -inf."""
    m = np.max(a, axis=axis, keepdims=True)
    m_safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m_safe), axis=axis)) + np.squeeze(m_safe, axis=axis)
    return out


def _log_nonzero(w: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(w)


@dataclass(frozen=True)
class ParameterPrior:
    """Independent uniform bounds per parameter."""

    low: np.ndarray
    high: np.ndarray

    def __post_init__(self) -> None:
        low = np.atleast_1d(np.asarray(self.low, dtype=float))
        high = np.atleast_1d(np.asarray(self.high, dtype=float))
        if low.shape != high.shape or low.ndim != 1:
            raise ValueError(f"prior bounds must be 1-D and same length, got {low.shape}/{high.shape}")
        if not (low < high).all():
            raise ValueError(f"prior requires low < high componentwise, got {low} / {high}")
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)

    @property
    def n_params(self) -> int:
        return self.low.shape[0]

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        return self.low + (self.high - self.low) * gen.uniform(size=(size, self.n_params))


@dataclass(frozen=True)
class JitterKernel:
    """Gaussian jitter applied to parameter particles each step.

    `scale` holds per-parameter standard deviations; when `clamp_to_prior` is
    set, jittered values are reflected back into [low, high].
    """

    scale: np.ndarray
    clamp_to_prior: bool = True
    low: np.ndarray | None = None
    high: np.ndarray | None = None

    def __post_init__(self) -> None:
        scale = np.atleast_1d(np.asarray(self.scale, dtype=float))
        if (scale < 0).any():
            raise ValueError(f"jitter scale must be >= 0, got {scale}")
        object.__setattr__(self, "scale", scale)
        if self.clamp_to_prior:
            if self.low is None or self.high is None:
                raise ValueError("clamp_to_prior requires prior bounds")
            object.__setattr__(self, "low", np.asarray(self.low, dtype=float))
            object.__setattr__(self, "high", np.asarray(self.high, dtype=float))

    @classmethod
    def from_prior(cls, prior: ParameterPrior, num_outer: int, scale_factor: float = 0.05) -> "JitterKernel":
        """Shrinking-with-M kernel: std = scale_factor * (high - low) / sqrt(M)."""
        scale = scale_factor * (prior.high - prior.low) / np.sqrt(num_outer)
        return cls(scale=scale, clamp_to_prior=True, low=prior.low, high=prior.high)


def _reflect(values: np.ndarray, low: np.ndarray, high: np.ndarray) -> np.ndarray:
    """Fold values into [low, high] by reflection off the bounds."""
    width = high - low
    y = np.mod(values - low, 2.0 * width)
    return low + np.where(y <= width, y, 2.0 * width - y)


@dataclass
class ParticleCloud:
    """Joint particle approximation: M parameter lanes, N state particles each."""

    theta: np.ndarray          # (M, p)
    states: np.ndarray         # (M, N, d)
    inner_weights: np.ndarray  # (M, N), each row sums to 1
    outer_weights: np.ndarray  # (M,), sums to 1
    log_mean_lik: np.ndarray | None = None  # (M,), set by inner_weights
    invalid: np.ndarray | None = None       # (M, N) bool, set by propagate

    @property
    def num_outer(self) -> int:
        return self.theta.shape[0]

    @property
    def num_inner(self) -> int:
        return self.states.shape[1]


@dataclass(frozen=True)
class FilterConfig:
    num_outer: int
    num_inner: int
    delta: float
    process_std: float
    observation_std: float
    kernel: JitterKernel
    inner_resampling: bool = True
    observation_matrix: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.num_outer < 1 or self.num_inner < 1:
            raise ValueError("particle counts must be >= 1")
        if self.delta <= 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if self.process_std < 0:
            raise ValueError(f"process_std must be >= 0, got {self.process_std}")
        if self.observation_std <= 0:
            raise ValueError(f"observation_std must be > 0, got {self.observation_std}")


@dataclass
class FilterDiagnostics:
    nonfinite_particles: int = 0
    inner_weight_underflows: int = 0
    outer_weight_underflows: int = 0
    smoother_underflows: int = 0

    def to_dict(self) -> dict:
        return {
            "nonfinite_particles": int(self.nonfinite_particles),
            "inner_weight_underflows": int(self.inner_weight_underflows),
            "outer_weight_underflows": int(self.outer_weight_underflows),
            "smoother_underflows": int(self.smoother_underflows),
        }


@dataclass
class FilterHistory:
    """Pre-resample snapshots for t = 0..T plus resampling ancestry.

    `thetas[t]` are the jittered parameters that propagated `states[t]`;
    `outer_ancestors[t]` maps post-resample lane m to the pre-resample lane it
    copied, and `inner_ancestors[t]` does the same within each lane.
    """

    thetas: np.ndarray          # (T+1, M, p)
    states: np.ndarray          # (T+1, M, N, d)
    inner_weights: np.ndarray   # (T+1, M, N)
    outer_weights: np.ndarray   # (T+1, M)
    outer_ancestors: np.ndarray  # (T+1, M)
    inner_ancestors: np.ndarray  # (T+1, M, N)
    delta: float
    diagnostics: FilterDiagnostics = field(default_factory=FilterDiagnostics)

    @property
    def horizon(self) -> int:
        return self.states.shape[0] - 1

    @property
    def num_outer(self) -> int:
        return self.states.shape[1]

    @property
    def num_inner(self) -> int:
        return self.states.shape[2]

    @property
    def dimension(self) -> int:
        return self.states.shape[3]


def init_particles(
    prior: ParameterPrior,
    num_outer: int,
    num_inner: int,
    x0,
    rng: RngSeed,
) -> ParticleCloud:
    """Draw the initial cloud: theta i.i.d. from the prior, uniform weights.

    `x0` is either a (d,) array (all state particles start there) or a
    callable (generator, num_outer, num_inner) -> (M, N, d).
    """
    if num_outer < 1 or num_inner < 1:
        raise ValueError("particle counts must be >= 1")
    theta = prior.sample(rng.child("theta_init").generator(), num_outer)
    if callable(x0):
        states = np.asarray(x0(rng.child("state_init").generator(), num_outer, num_inner), dtype=float)
        if states.shape[:2] != (num_outer, num_inner):
            raise ValueError(f"x0 sampler returned shape {states.shape}, expected ({num_outer}, {num_inner}, d)")
    else:
        point = np.asarray(x0, dtype=float)
        states = np.broadcast_to(point, (num_outer, num_inner, point.shape[0])).copy()
    return ParticleCloud(
        theta=theta,
        states=states,
        inner_weights=np.full((num_outer, num_inner), 1.0 / num_inner),
        outer_weights=np.full(num_outer, 1.0 / num_outer),
    )


def jitter(cloud: ParticleCloud, kernel: JitterKernel, rng: RngSeed) -> ParticleCloud:
    """Perturb each parameter particle with N(0, diag(scale^2)).

    Each lane draws from its own substream; reflection keeps particles inside
    the prior bounds when the kernel clamps.
    """
    if kernel.scale.shape[0] != cloud.theta.shape[1]:
        raise ValueError(
            f"kernel dimension {kernel.scale.shape[0]} != parameter dimension {cloud.theta.shape[1]}"
        )
    theta = cloud.theta.copy()
    drawer = StreamDrawer(rng)
    for m in range(cloud.num_outer):
        eps = drawer.generator("lane", m).normal(size=kernel.scale.shape[0])
        theta[m] = theta[m] + kernel.scale * eps
    if kernel.clamp_to_prior:
        theta = _reflect(theta, kernel.low, kernel.high)
    return replace(cloud, theta=theta)


def propagate(
    cloud: ParticleCloud,
    system: str | SystemSpec,
    delta: float,
    process_std: float,
    rng: RngSeed,
) -> ParticleCloud:
    """Advance every state particle one RK4 step plus process noise.

    Non-finite results are zeroed and marked in `cloud.invalid`; they receive
    zero weight at the next weighting step instead of aborting the run.
    """
    spec = get_system(system)
    with np.errstate(over="ignore", invalid="ignore"):
        base = _rk4(spec, cloud.states, cloud.theta[:, None, :], delta)
    states = np.empty_like(base)
    drawer = StreamDrawer(rng)
    for m in range(cloud.num_outer):
        u = drawer.generator("lane", m).normal(
            0.0, process_std, size=(cloud.num_inner, spec.dimension)
        )
        states[m] = base[m] + u
    invalid = ~np.isfinite(states).all(axis=2)
    if invalid.any():
        states[invalid] = 0.0
    return replace(cloud, states=states, invalid=invalid if invalid.any() else None)


def gaussian_log_likelihood(
    obs: np.ndarray,
    state: np.ndarray,
    matrix: np.ndarray | None,
    observation_std: float,
) -> float:
    """log N(obs; H state, observation_std^2 I)."""
    if observation_std <= 0:
        raise ValueError("observation_std must be > 0 for a proper likelihood")
    obs = np.asarray(obs, dtype=float)
    state = np.asarray(state, dtype=float)
    if obs.shape != state.shape:
        raise ValueError(f"observation shape {obs.shape} != state shape {state.shape}")
    mapped = state if matrix is None else np.asarray(matrix, dtype=float) @ state
    resid = obs - mapped
    d = obs.shape[0]
    var = observation_std * observation_std
    return float(-0.5 * (resid @ resid) / var - 0.5 * d * (_LOG_2PI + np.log(var)))


def _batch_log_likelihood(
    obs: np.ndarray,
    states: np.ndarray,
    matrix: np.ndarray | None,
    observation_std: float,
) -> np.ndarray:
    """Vectorized log-likelihoods over an (M, N, d) particle block."""
    mapped = states if matrix is None else states @ np.asarray(matrix, dtype=float).T
    resid = obs - mapped
    d = obs.shape[0]
    var = observation_std * observation_std
    return -0.5 * np.einsum("mnd,mnd->mn", resid, resid) / var - 0.5 * d * (
        _LOG_2PI + np.log(var)
    )


def inner_weights(
    cloud: ParticleCloud,
    obs: np.ndarray,
    matrix: np.ndarray | None,
    observation_std: float,
    diagnostics: FilterDiagnostics | None = None,
) -> ParticleCloud:
    """Reweight each lane's state particles by the observation likelihood.

    Incoming weights multiply the likelihood (after a per-step resample they
    are uniform, so this reduces to plain likelihood weighting); weights are
    normalized per lane in log space. The pre-normalization log-mean
    likelihood is retained per lane for the outer update. Lanes whose weights
    all underflow fall back to uniform and are counted.
    """
    if observation_std <= 0:
        raise ValueError("observation_std must be > 0 for a proper likelihood")
    obs = np.asarray(obs, dtype=float)
    ll = _batch_log_likelihood(obs, cloud.states, matrix, observation_std)
    if cloud.invalid is not None:
        ll[cloud.invalid] = -np.inf
        if diagnostics is not None:
            diagnostics.nonfinite_particles += int(cloud.invalid.sum())
    score = ll + _log_nonzero(cloud.inner_weights)
    n = cloud.num_inner
    mx = np.max(score, axis=1)
    weights = np.empty_like(score)
    log_mean = np.empty(cloud.num_outer)
    dead = ~np.isfinite(mx)
    if dead.any():
        weights[dead] = 1.0 / n
        log_mean[dead] = -np.inf
        if diagnostics is not None:
            diagnostics.inner_weight_underflows += int(dead.sum())
    alive = ~dead
    if alive.any():
        shifted = np.exp(score[alive] - mx[alive, None])
        total = shifted.sum(axis=1)
        weights[alive] = shifted / total[:, None]
        # weighted mean likelihood: sum_n w_prev(n) p(y | x_n)
        log_mean[alive] = mx[alive] + np.log(total)
    return replace(cloud, inner_weights=weights, log_mean_lik=log_mean)


def outer_weights(
    cloud: ParticleCloud,
    diagnostics: FilterDiagnostics | None = None,
) -> ParticleCloud:
    """Set lane weights proportional to each lane's mean observation likelihood."""
    if cloud.log_mean_lik is None:
        raise ValueError("run inner_weights first: per-lane likelihoods are missing")
    lml = cloud.log_mean_lik
    mx = np.max(lml)
    if not np.isfinite(mx):
        if diagnostics is not None:
            diagnostics.outer_weight_underflows += 1
        v = np.full(cloud.num_outer, 1.0 / cloud.num_outer)
    else:
        v = np.exp(lml - mx)
        v /= v.sum()
    return replace(cloud, outer_weights=v)


def systematic_resample(weights: np.ndarray, gen: np.random.Generator) -> np.ndarray:
    """Systematic (low-variance) resampling; returns selected indices."""
    n = weights.shape[0]
    positions = (gen.uniform() + np.arange(n)) / n
    return np.clip(np.searchsorted(np.cumsum(weights), positions), 0, n - 1)


def resample(cloud: ParticleCloud, rng: RngSeed) -> tuple[ParticleCloud, np.ndarray]:
    """Resample lanes by outer weight; each survivor carries its whole inner cloud.

    Returns the new cloud (outer weights reset to 1/M) and the ancestor indices.
    """
    idx = systematic_resample(cloud.outer_weights, rng.generator())
    new = ParticleCloud(
        theta=cloud.theta[idx].copy(),
        states=cloud.states[idx].copy(),
        inner_weights=cloud.inner_weights[idx].copy(),
        outer_weights=np.full(cloud.num_outer, 1.0 / cloud.num_outer),
        log_mean_lik=None if cloud.log_mean_lik is None else cloud.log_mean_lik[idx].copy(),
    )
    return new, idx


def run_filter(
    observations: np.ndarray,
    system: str | SystemSpec,
    prior: ParameterPrior,
    x0,
    config: FilterConfig,
    rng: RngSeed,
) -> FilterHistory:
    """Assimilate observations for t = 1..T and record the full history.

    Parameters
    ----------
    observations : ndarray (T+1, d)
        obs[0] aligns with the initial state and is not assimilated.
    system, prior, config : model, parameter prior, and filter settings.
    x0 : initial state particles; see `init_particles`.
    rng : RngSeed
        Master stream. Substream layout: initialization draws from
        rng.child("init"), and step t uses rng.child("step", t) with
        per-stage tags ("jitter", "propagate", "inner_resample",
        "outer_resample") and per-lane indices below it.

    Returns
    -------
    FilterHistory with pre-resample snapshots, ancestry, and diagnostics.
    """
    spec = get_system(system)
    observations = np.asarray(observations, dtype=float)
    if observations.ndim != 2 or observations.shape[1] != spec.dimension:
        raise ValueError(
            f"observations must be (T+1, {spec.dimension}), got {observations.shape}"
        )
    horizon = observations.shape[0] - 1
    if horizon < 1:
        raise ValueError("need at least one observation after the initial time")

    m, n = config.num_outer, config.num_inner
    diagnostics = FilterDiagnostics()
    cloud = init_particles(prior, m, n, x0, rng.child("init"))

    p = prior.n_params
    thetas = np.empty((horizon + 1, m, p))
    states = np.empty((horizon + 1, m, n, spec.dimension))
    inner_w = np.empty((horizon + 1, m, n))
    outer_w = np.empty((horizon + 1, m))
    outer_anc = np.empty((horizon + 1, m), dtype=np.int64)
    inner_anc = np.empty((horizon + 1, m, n), dtype=np.int64)

    thetas[0] = cloud.theta
    states[0] = cloud.states
    inner_w[0] = cloud.inner_weights
    outer_w[0] = cloud.outer_weights
    outer_anc[0] = np.arange(m)
    inner_anc[0] = np.arange(n)

    for t in range(1, horizon + 1):
        step = rng.child("step", t)
        cloud = jitter(cloud, config.kernel, step.child("jitter"))
        cloud = propagate(cloud, spec, config.delta, config.process_std, step.child("propagate"))
        cloud = inner_weights(
            cloud, observations[t], config.observation_matrix, config.observation_std, diagnostics
        )
        cloud = outer_weights(cloud, diagnostics)

        thetas[t] = cloud.theta
        states[t] = cloud.states
        inner_w[t] = cloud.inner_weights
        outer_w[t] = cloud.outer_weights

        if config.inner_resampling:
            resampled_states = np.empty_like(cloud.states)
            drawer = StreamDrawer(step)
            for lane in range(m):
                idx = systematic_resample(
                    cloud.inner_weights[lane], drawer.generator("inner_resample", lane)
                )
                inner_anc[t, lane] = idx
                resampled_states[lane] = cloud.states[lane, idx]
            cloud = replace(
                cloud,
                states=resampled_states,
                inner_weights=np.full((m, n), 1.0 / n),
                invalid=None,
            )
        else:
            inner_anc[t] = np.arange(n)

        cloud, anc = resample(cloud, step.child("outer_resample"))
        outer_anc[t] = anc

    return FilterHistory(
        thetas=thetas,
        states=states,
        inner_weights=inner_w,
        outer_weights=outer_w,
        outer_ancestors=outer_anc,
        inner_ancestors=inner_anc,
        delta=config.delta,
        diagnostics=diagnostics,
    )


def filtered_means(history: FilterHistory) -> np.ndarray:
    """Per-step filtered state means under outer x inner weights, (T+1, d)."""
    joint = history.outer_weights[:, :, None] * history.inner_weights
    return np.einsum("tmn,tmnd->td", joint, history.states)


def lane_alignment(outer_ancestors: np.ndarray) -> np.ndarray:
    """Trace final-time lanes back through the outer resampling ancestry.

    Returns lane (T+1, M): lane[t, j] is the pre-resample lane index at time t
    on the lineage that ends in final lane j.
    """
    t1, m = outer_ancestors.shape
    lane = np.empty((t1, m), dtype=np.int64)
    lane[-1] = np.arange(m)
    for t in range(t1 - 2, -1, -1):
        lane[t] = outer_ancestors[t][lane[t + 1]]
    return lane


@dataclass
class SmoothedWeights:
    """Backward-smoothed weights, aligned to final-time outer lanes.

    `w_tilde[t, j, n]` weights particle `states[t, lane_index[t, j], n]` and is
    jointly normalized over (j, n) at each t; `v_tilde[t]` are the smoothed
    lane weights.
    """

    w_tilde: np.ndarray     # (T+1, M, N), joint-normalized per t
    v_tilde: np.ndarray     # (T+1, M)
    lane_index: np.ndarray  # (T+1, M)
    underflow_lane_steps: int = 0


def _transition_log_scores(
    spec: SystemSpec,
    x_from: np.ndarray,       # (C, N, d)
    x_to: np.ndarray,         # (C, K, d)
    theta_to: np.ndarray,     # (C, p)
    log_w_next: np.ndarray,   # (C, K)
    delta: float,
    var: float,
) -> np.ndarray:
    """log sum_k p(x_to[k] | x_from[n], theta) w_next[k] for each lane, (C, N)."""
    base = _rk4(spec, x_from, theta_to[:, None, :], delta)
    # Pairwise squared distances via the norm expansion (BLAS inner products);
    # cancellation error ~1e-12 is far below the weight resolution that matters.
    # Layout (C, N, K) keeps the k-reduction on the contiguous axis.
    sq_base = np.einsum("cnd,cnd->cn", base, base)
    sq_to = np.einsum("ckd,ckd->ck", x_to, x_to)
    scores = np.matmul(base, np.swapaxes(x_to, 1, 2))
    scores *= -2.0
    scores += sq_to[:, None, :]
    scores += sq_base[:, :, None]
    np.maximum(scores, 0.0, out=scores)
    d = x_from.shape[-1]
    log_norm = -0.5 * d * (_LOG_2PI + np.log(var))
    scores *= -0.5 / var
    scores += (log_w_next + log_norm)[:, None, :]
    m = np.max(scores, axis=2, keepdims=True)
    m_safe = np.where(np.isfinite(m), m, 0.0)
    scores -= m_safe
    np.exp(scores, out=scores)
    with np.errstate(divide="ignore"):
        return np.log(scores.sum(axis=2)) + np.squeeze(m_safe, 2)


def backward_smooth(
    history: FilterHistory,
    system: str | SystemSpec,
    delta: float,
    process_std: float,
    workers: int = 1,
    inner_stride: int = 1,
) -> SmoothedWeights:
    """Reweight the filter history so each step conditions on all observations.

    Runs the backward recursion
        w~_t(n) = w_t(n) * sum_k p(x_{t+1}(k) | x_t(n), theta) w~_{t+1}(k)
    per outer lane along the recorded resampling lineage, with the transition
    density N(x'; rk4_step(x, theta), process_std^2 I). Per-lane weights are
    normalized each step; lane masses accumulate into smoothed outer weights,
    and the joint (outer x inner) weights are normalized per time step.

    `inner_stride` > 1 subsamples the k-sum for speed (cost drops by the same
    factor); `workers` parallelizes lanes without changing results. Lanes whose
    weights underflow fall back to their filtered weights and are counted.
    """
    spec = get_system(system)
    t_end = history.horizon
    m, n = history.num_outer, history.num_inner
    if inner_stride < 1:
        raise ValueError(f"inner_stride must be >= 1, got {inner_stride}")

    lane = lane_alignment(history.outer_ancestors)
    w_tilde = np.empty_like(history.inner_weights)
    v_tilde = np.empty_like(history.outer_weights)

    # Base case: at t = T the smoothed weights are the filtered weights.
    w_norm = history.inner_weights[t_end].copy()
    v_cur = history.outer_weights[t_end].copy()
    w_tilde[t_end] = v_cur[:, None] * w_norm
    v_tilde[t_end] = v_cur
    underflows = 0

    if process_std <= 0 or t_end == 0:
        # Degenerate transition density: keep filtered weights throughout.
        for t in range(t_end - 1, -1, -1):
            w_norm = history.inner_weights[t][lane[t]]
            w_tilde[t] = v_cur[:, None] * w_norm
            v_tilde[t] = v_cur
        return SmoothedWeights(
            w_tilde=w_tilde,
            v_tilde=v_tilde,
            lane_index=lane,
            underflow_lane_steps=m * t_end if t_end > 0 else 0,
        )

    var = process_std * process_std
    # Lane chunks sized to keep the (C, K, N) temporaries modest.
    k_eff = max(1, (n + inner_stride - 1) // inner_stride)
    chunk = max(1, int(8_000_000 // max(1, k_eff * n)))
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for t in range(t_end - 1, -1, -1):
            x_t = history.states[t][lane[t]]
            x_next = history.states[t + 1][lane[t + 1]]
            theta_next = history.thetas[t + 1][lane[t + 1]]
            w_filt = history.inner_weights[t][lane[t]]

            log_w_next = _log_nonzero(w_norm)
            if inner_stride > 1:
                x_next = x_next[:, ::inner_stride]
                log_w_next = log_w_next[:, ::inner_stride]
                log_w_next = log_w_next - _logsumexp(log_w_next, axis=1)[:, None]

            log_s = np.empty((m, n))
            spans = [(i, min(i + chunk, m)) for i in range(0, m, chunk)]

            def _work(span):
                lo, hi = span
                log_s[lo:hi] = _transition_log_scores(
                    spec, x_t[lo:hi], x_next[lo:hi], theta_next[lo:hi],
                    log_w_next[lo:hi], delta, var,
                )

            if pool is not None and len(spans) > 1:
                list(pool.map(_work, spans))
            else:
                for span in spans:
                    _work(span)

            log_raw = _log_nonzero(w_filt) + log_s
            log_r = _logsumexp(log_raw, axis=1)
            dead = ~np.isfinite(log_r)
            w_norm = np.where(
                dead[:, None],
                w_filt,
                np.exp(log_raw - np.where(dead, 0.0, log_r)[:, None]),
            )
            if dead.any():
                underflows += int(dead.sum())

            log_v = _log_nonzero(v_cur) + np.where(dead, -np.inf, log_r)
            norm = _logsumexp(log_v[None, :], axis=1)[0]
            if np.isfinite(norm):
                v_cur = np.exp(log_v - norm)
            # else: every lane underflowed; keep the previous lane weights.

            w_tilde[t] = v_cur[:, None] * w_norm
            v_tilde[t] = v_cur
    finally:
        if pool is not None:
            pool.shutdown()

    history.diagnostics.smoother_underflows += underflows
    return SmoothedWeights(
        w_tilde=w_tilde,
        v_tilde=v_tilde,
        lane_index=lane,
        underflow_lane_steps=underflows,
    )


@dataclass(frozen=True)
class PosteriorSummary:
    """Smoothed point estimates: state trajectory, parameter mean and spread."""

    state_mean: Trajectory
    theta_mean: np.ndarray
    theta_std: np.ndarray


def posterior_summary(
    history: FilterHistory,
    smoothed: SmoothedWeights,
    theta_average: str = "final",
) -> PosteriorSummary:
    """Collapse smoothed weights into point estimates.

    State means use the joint smoothed weights at each step. The parameter
    estimate averages final-time particles under the fully smoothed lane
    weights (`theta_average="final"`, the default) or pools every step's
    lane-weighted particles (`"per_t"`).
    """
    t_end = history.horizon
    x_hat = np.empty((t_end + 1, history.dimension))
    for t in range(t_end + 1):
        aligned = history.states[t][smoothed.lane_index[t]]
        x_hat[t] = np.einsum("mn,mnd->d", smoothed.w_tilde[t], aligned)
    x_hat_sum = smoothed.w_tilde.sum(axis=(1, 2))
    x_hat /= x_hat_sum[:, None]

    if theta_average == "final":
        theta = history.thetas[t_end][smoothed.lane_index[t_end]]
        v = smoothed.v_tilde[min(1, t_end)]
        theta_mean = v @ theta
        theta_std = np.sqrt(np.maximum(0.0, v @ (theta - theta_mean) ** 2))
    elif theta_average == "per_t":
        thetas = np.stack(
            [history.thetas[t][smoothed.lane_index[t]] for t in range(1, t_end + 1)]
        )
        v = smoothed.v_tilde[1 : t_end + 1] / t_end
        theta_mean = np.einsum("tm,tmp->p", v, thetas)
        theta_std = np.sqrt(np.maximum(0.0, np.einsum("tm,tmp->p", v, (thetas - theta_mean) ** 2)))
    else:
        raise ValueError(f"theta_average must be 'final' or 'per_t', got {theta_average!r}")

    return PosteriorSummary(
        state_mean=Trajectory(states=x_hat, delta=history.delta),
        theta_mean=theta_mean,
        theta_std=theta_std,
    )
