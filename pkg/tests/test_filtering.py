import numpy as np
import pytest

from cfdyn.dynamics import EXP_DECAY, LORENZ, rk4_step
from cfdyn.filtering import (
    FilterConfig,
    JitterKernel,
    ParameterPrior,
    ParticleCloud,
    backward_smooth,
    filtered_means,
    gaussian_log_likelihood,
    init_particles,
    inner_weights,
    jitter,
    lane_alignment,
    outer_weights,
    posterior_summary,
    propagate,
    resample,
    run_filter,
    systematic_resample,
)
from cfdyn.seeding import RngSeed
from cfdyn.simulate import NoiseConfig, observe, simulate_hidden

from .oracles import bootstrap_particle_filter, kalman_filter_rts

LORENZ_THETA = np.array([10.0, 28.0, 8.0 / 3.0])
TABLE1_PRIOR = ParameterPrior(low=[5.0, 20.0, 2.0], high=[15.0, 35.0, 4.0])
DECAY_DELTA = float(-np.log(0.9))


def _decay_config(n_inner, process_std=1.0, observation_std=1.0):
    return FilterConfig(
        num_outer=1,
        num_inner=n_inner,
        delta=DECAY_DELTA,
        process_std=process_std,
        observation_std=observation_std,
        kernel=JitterKernel(scale=[0.0], clamp_to_prior=False),
    )


def _point_prior(theta, width=1e-12):
    theta = np.atleast_1d(theta)
    return ParameterPrior(low=theta, high=theta + width)


# ---------------------------------------------------------------- particles


def test_init_single_particle_weights_are_one():
    cloud = init_particles(_point_prior(np.array([1.0])), 1, 1, np.array([0.0]), RngSeed(1))
    assert cloud.inner_weights.shape == (1, 1)
    assert cloud.inner_weights[0, 0] == 1.0
    assert cloud.outer_weights[0] == 1.0


def test_init_respects_prior_support():
    cloud = init_particles(TABLE1_PRIOR, 200, 3, np.zeros(3), RngSeed(2))
    assert ((cloud.theta >= TABLE1_PRIOR.low) & (cloud.theta <= TABLE1_PRIOR.high)).all()


def test_init_uniform_sample_mean():
    cloud = init_particles(TABLE1_PRIOR, 10000, 1, np.zeros(3), RngSeed(3))
    assert abs(cloud.theta[:, 0].mean() - 10.0) < 0.2


def test_init_rejects_bad_bounds():
    with pytest.raises(ValueError):
        ParameterPrior(low=[1.0], high=[1.0])


# ------------------------------------------------------------------- jitter


def test_jitter_zero_scale_is_identity():
    cloud = init_particles(TABLE1_PRIOR, 20, 2, np.zeros(3), RngSeed(4))
    kernel = JitterKernel(scale=np.zeros(3), clamp_to_prior=False)
    out = jitter(cloud, kernel, RngSeed(4, 9))
    assert np.array_equal(out.theta, cloud.theta)


def test_jitter_clamped_stays_in_bounds():
    cloud = init_particles(TABLE1_PRIOR, 500, 1, np.zeros(3), RngSeed(5))
    kernel = JitterKernel(
        scale=np.array([5.0, 5.0, 5.0]),
        clamp_to_prior=True,
        low=TABLE1_PRIOR.low,
        high=TABLE1_PRIOR.high,
    )
    out = jitter(cloud, kernel, RngSeed(5, 9))
    assert ((out.theta >= TABLE1_PRIOR.low) & (out.theta <= TABLE1_PRIOR.high)).all()


def test_jitter_spread_matches_scale():
    prior = _point_prior(np.array([0.0]), width=1e-12)
    cloud = init_particles(prior, 10000, 1, np.array([0.0]), RngSeed(6))
    cloud = ParticleCloud(
        theta=np.zeros((10000, 1)),
        states=cloud.states,
        inner_weights=cloud.inner_weights,
        outer_weights=cloud.outer_weights,
    )
    kernel = JitterKernel(scale=np.array([0.1]), clamp_to_prior=False)
    out = jitter(cloud, kernel, RngSeed(6, 9))
    assert abs(out.theta[:, 0].std() - 0.1) < 0.005


# ---------------------------------------------------------------- propagate


def test_propagate_zero_noise_is_deterministic_step():
    prior = _point_prior(LORENZ_THETA)
    cloud = init_particles(prior, 1, 1, np.array([1.0, 1.0, 1.0]), RngSeed(7))
    out = propagate(cloud, LORENZ, 0.05, 0.0, RngSeed(7, 9))
    expected = rk4_step(LORENZ, np.array([1.0, 1.0, 1.0]), cloud.theta[0], 0.05)
    assert np.array_equal(out.states[0, 0], expected)


def test_propagate_fixed_point_unchanged():
    prior = _point_prior(LORENZ_THETA)
    cloud = init_particles(prior, 3, 4, np.zeros(3), RngSeed(8))
    out = propagate(cloud, LORENZ, 0.05, 0.0, RngSeed(8, 9))
    assert np.allclose(out.states, 0.0, atol=1e-12)


def test_propagate_noise_variance():
    prior = _point_prior(LORENZ_THETA)
    cloud = init_particles(prior, 200, 200, np.array([1.0, 1.0, 1.0]), RngSeed(9))
    out = propagate(cloud, LORENZ, 0.05, 1.0, RngSeed(9, 9))
    base = rk4_step(LORENZ, np.array([1.0, 1.0, 1.0]), cloud.theta[0], 0.05)
    disp = (out.states - base).reshape(-1, 3)
    for k in range(3):
        assert abs(disp[:, k].var() - 1.0) < 0.05


def test_propagate_flags_nonfinite_particles():
    prior = _point_prior(np.array([-120.0]))
    cloud = init_particles(prior, 1, 4, np.array([1e300]), RngSeed(10))
    out = propagate(cloud, EXP_DECAY, 1e6, 0.0, RngSeed(10, 9))
    assert out.invalid is not None and out.invalid.all()
    assert np.isfinite(out.states).all()


# --------------------------------------------------------------- likelihood


def test_gaussian_loglik_at_mean_1d():
    value = gaussian_log_likelihood(np.array([2.0]), np.array([2.0]), None, 1.0)
    assert abs(value - np.log(1.0 / np.sqrt(2.0 * np.pi))) < 1e-12


def test_gaussian_loglik_symmetry():
    obs = np.array([1.0, 2.0, 3.0])
    a = gaussian_log_likelihood(obs, obs + [0.5, 0.0, 0.0], None, 2.0)
    b = gaussian_log_likelihood(obs, obs - [0.5, 0.0, 0.0], None, 2.0)
    assert a == b


def test_gaussian_loglik_three_sigma_gap():
    obs = np.array([0.0])
    at_mean = gaussian_log_likelihood(obs, np.array([0.0]), None, 2.0)
    at_3s = gaussian_log_likelihood(obs, np.array([6.0]), None, 2.0)
    assert abs((at_3s - at_mean) + 4.5) < 1e-12


def test_gaussian_loglik_rejects_zero_std():
    with pytest.raises(ValueError):
        gaussian_log_likelihood(np.array([0.0]), np.array([0.0]), None, 0.0)


# ------------------------------------------------------------ inner weights


def _cloud_from_states(states):
    states = np.asarray(states, dtype=float)
    m, n, _ = states.shape
    return ParticleCloud(
        theta=np.zeros((m, 1)),
        states=states,
        inner_weights=np.full((m, n), 1.0 / n),
        outer_weights=np.full(m, 1.0 / m),
    )


def test_inner_weights_single_particle():
    cloud = _cloud_from_states(np.zeros((1, 1, 1)))
    out = inner_weights(cloud, np.array([3.0]), None, 1.0)
    assert out.inner_weights[0, 0] == 1.0


def test_inner_weights_ordering_and_normalization():
    cloud = _cloud_from_states([[[0.0], [5.0]]])
    out = inner_weights(cloud, np.array([0.0]), None, 1.0)
    w = out.inner_weights[0]
    assert w[0] > w[1]
    assert abs(w.sum() - 1.0) < 1e-12


def test_inner_weights_match_density_ratios():
    # three hand-placed scalar particles; oracle is the exact Gaussian ratio
    states = np.array([[[0.0], [1.0], [2.5]]])
    obs = np.array([0.5])
    sigma = 0.8
    cloud = _cloud_from_states(states)
    out = inner_weights(cloud, obs, None, sigma)
    dens = np.exp(-0.5 * (obs[0] - states[0, :, 0]) ** 2 / sigma**2)
    expected = dens / dens.sum()
    assert np.allclose(out.inner_weights[0], expected, rtol=1e-12)


def test_inner_weights_underflow_falls_back_to_uniform():
    # distances large enough that the squared residual overflows to inf
    states = np.array([[[1e200], [2e200]]])
    cloud = _cloud_from_states(states)
    out = inner_weights(cloud, np.array([0.0]), None, 1.0)
    assert np.allclose(out.inner_weights[0], 0.5)
    assert out.log_mean_lik[0] == -np.inf


# ------------------------------------------------------------ outer weights


def test_outer_weights_single_lane():
    cloud = _cloud_from_states(np.zeros((1, 2, 1)))
    cloud = inner_weights(cloud, np.array([0.0]), None, 1.0)
    out = outer_weights(cloud)
    assert out.outer_weights[0] == 1.0


def test_outer_weights_identical_lanes_equal():
    states = np.zeros((3, 4, 1))
    cloud = _cloud_from_states(states)
    cloud = inner_weights(cloud, np.array([0.3]), None, 1.0)
    out = outer_weights(cloud)
    assert np.allclose(out.outer_weights, 1.0 / 3.0)


def test_outer_weights_proportional_to_mean_likelihood():
    cloud = _cloud_from_states(np.zeros((2, 2, 1)))
    cloud.log_mean_lik = np.log(np.array([0.2, 0.8]))
    out = outer_weights(cloud)
    assert np.allclose(out.outer_weights, [0.2, 0.8], rtol=1e-12)


def test_outer_weights_requires_likelihoods():
    cloud = _cloud_from_states(np.zeros((2, 2, 1)))
    with pytest.raises(ValueError):
        outer_weights(cloud)


# ----------------------------------------------------------------- resample


def test_systematic_degenerate_weight_takes_all():
    w = np.array([1.0, 0.0, 0.0, 0.0])
    idx = systematic_resample(w, RngSeed(11).generator())
    assert (idx == 0).all()


def test_systematic_uniform_weights_identity():
    w = np.full(64, 1.0 / 64)
    idx = systematic_resample(w, RngSeed(12).generator())
    assert np.array_equal(np.sort(idx), np.arange(64))


def test_systematic_offspring_expectation():
    w = np.array([0.1, 0.2, 0.3, 0.4])
    gen = RngSeed(13).generator()
    counts = np.zeros(4)
    trials = 10000
    for _ in range(trials):
        idx = np.clip(np.searchsorted(np.cumsum(w), (gen.uniform() + np.arange(4)) / 4), 0, 3)
        counts += np.bincount(idx, minlength=4)
    expected = 4 * w
    assert (np.abs(counts / trials - expected) < 0.05 * expected).all()


def test_resample_carries_inner_clouds():
    states = np.arange(2 * 3 * 1, dtype=float).reshape(2, 3, 1)
    cloud = _cloud_from_states(states)
    cloud.outer_weights = np.array([1.0, 0.0])
    out, ancestors = resample(cloud, RngSeed(14))
    assert (ancestors == 0).all()
    assert np.array_equal(out.states[1], states[0])
    assert np.allclose(out.outer_weights, 0.5)


# --------------------------------------------------------------- run_filter


def test_degenerate_filter_recovers_noiseless_truth():
    # simulate the truth with the exact parameter the filter will draw from
    # its init substream, so the fully degenerate filter must match bitwise
    prior = _point_prior(np.array([1.0]))
    filter_seed = RngSeed(16)
    drawn = init_particles(prior, 1, 1, np.array([1.0]), filter_seed.child("init")).theta[0]
    truth = simulate_hidden(
        EXP_DECAY, drawn, np.array([1.0]), 30, 0.1, NoiseConfig(0.0, 0.0), RngSeed(15)
    )
    obs = observe(truth, None, 0.0, RngSeed(15, 1))
    config = FilterConfig(
        num_outer=1,
        num_inner=1,
        delta=0.1,
        process_std=0.0,
        observation_std=1.0,
        kernel=JitterKernel(scale=[0.0], clamp_to_prior=False),
    )
    history = run_filter(obs, EXP_DECAY, prior, np.array([1.0]), config, filter_seed)
    assert np.array_equal(filtered_means(history), truth.states)


def test_filter_matches_independent_bootstrap_pf():
    # M=1, zero jitter, pinned parameter: the nested filter collapses to a
    # plain bootstrap filter; compare against an independent implementation
    # placed on the same seed streams.
    theta = np.array([1.0])
    root = RngSeed(17)
    truth = simulate_hidden(
        EXP_DECAY, theta, np.array([0.0]), 40, DECAY_DELTA, NoiseConfig(1.0, 0.0), root.child("sim")
    )
    obs = observe(truth, None, 1.0, root.child("obs"))
    prior = _point_prior(theta)
    filter_seed = root.child("filter")
    history = run_filter(obs, EXP_DECAY, prior, np.array([0.0]), _decay_config(64), filter_seed)

    drawn_theta = history.thetas[0, 0]

    def step_fn(states, th):
        out = states.copy()
        for i in range(states.shape[0]):
            out[i] = rk4_step(EXP_DECAY, states[i], th, DECAY_DELTA)
        return out

    parts, weights = bootstrap_particle_filter(
        obs, step_fn, drawn_theta, np.array([0.0]), 64, 1.0, 1.0, filter_seed
    )
    assert np.array_equal(history.states[:, 0], parts)
    assert np.array_equal(history.inner_weights[:, 0], weights)


def test_filter_weights_normalized_every_step():
    truth = simulate_hidden(
        LORENZ, LORENZ_THETA, np.array([1.0, 1.0, 1.0]), 25, 0.05, NoiseConfig(1.0, 0.0), RngSeed(18)
    )
    obs = observe(truth, None, 1.0, RngSeed(18, 1))
    config = FilterConfig(
        num_outer=8,
        num_inner=12,
        delta=0.05,
        process_std=1.0,
        observation_std=1.0,
        kernel=JitterKernel.from_prior(TABLE1_PRIOR, 8),
    )
    history = run_filter(obs, LORENZ, TABLE1_PRIOR, np.array([1.0, 1.0, 1.0]), config, RngSeed(19))
    assert np.allclose(history.inner_weights.sum(axis=2), 1.0, atol=1e-9)
    assert np.allclose(history.outer_weights.sum(axis=1), 1.0, atol=1e-9)
    smoothed = backward_smooth(history, LORENZ, 0.05, 1.0)
    assert np.allclose(smoothed.w_tilde.sum(axis=(1, 2)), 1.0, atol=1e-9)
    assert np.allclose(smoothed.v_tilde.sum(axis=1), 1.0, atol=1e-9)


def test_filter_seed_determinism():
    truth = simulate_hidden(
        LORENZ, LORENZ_THETA, np.array([1.0, 1.0, 1.0]), 15, 0.05, NoiseConfig(1.0, 0.0), RngSeed(20)
    )
    obs = observe(truth, None, 1.0, RngSeed(20, 1))
    config = FilterConfig(
        num_outer=6,
        num_inner=7,
        delta=0.05,
        process_std=1.0,
        observation_std=1.0,
        kernel=JitterKernel.from_prior(TABLE1_PRIOR, 6),
    )
    h1 = run_filter(obs, LORENZ, TABLE1_PRIOR, np.array([1.0, 1.0, 1.0]), config, RngSeed(21))
    h2 = run_filter(obs, LORENZ, TABLE1_PRIOR, np.array([1.0, 1.0, 1.0]), config, RngSeed(21))
    assert np.array_equal(h1.states, h2.states)
    assert np.array_equal(h1.thetas, h2.thetas)
    assert np.array_equal(h1.outer_ancestors, h2.outer_ancestors)


def test_filter_without_inner_resampling_accumulates_weights():
    truth = simulate_hidden(
        LORENZ, LORENZ_THETA, np.array([1.0, 1.0, 1.0]), 20, 0.05, NoiseConfig(1.0, 0.0), RngSeed(50)
    )
    obs = observe(truth, None, 1.0, RngSeed(50, 1))
    config = FilterConfig(
        num_outer=5,
        num_inner=40,
        delta=0.05,
        process_std=1.0,
        observation_std=1.0,
        kernel=JitterKernel.from_prior(TABLE1_PRIOR, 5),
        inner_resampling=False,
    )
    history = run_filter(obs, LORENZ, TABLE1_PRIOR, np.array([1.0, 1.0, 1.0]), config, RngSeed(51))
    assert np.allclose(history.inner_weights.sum(axis=2), 1.0, atol=1e-9)
    assert (history.inner_ancestors == np.arange(40)).all()
    # without resampling the inner weights should visibly degenerate over time
    ess_first = 1.0 / (history.inner_weights[1] ** 2).sum(axis=1)
    ess_last = 1.0 / (history.inner_weights[-1] ** 2).sum(axis=1)
    assert ess_last.mean() < ess_first.mean()


def test_posterior_summary_per_step_averaging():
    _, _, history = _decay_history(52, n_inner=20, horizon=15)
    smoothed = backward_smooth(history, EXP_DECAY, DECAY_DELTA, 1.0)
    summary = posterior_summary(history, smoothed, theta_average="per_t")
    assert np.isfinite(summary.theta_mean).all()
    assert (summary.theta_std >= 0).all()
    with pytest.raises(ValueError):
        posterior_summary(history, smoothed, theta_average="median")


def test_lorenz_theta_estimate_within_prior_support():
    truth = simulate_hidden(
        LORENZ, LORENZ_THETA, np.array([1.0, 1.0, 1.0]), 120, 0.05, NoiseConfig(1.0, 0.0), RngSeed(22)
    )
    obs = observe(truth, None, 1.0, RngSeed(22, 1))
    config = FilterConfig(
        num_outer=30,
        num_inner=30,
        delta=0.05,
        process_std=1.0,
        observation_std=1.0,
        kernel=JitterKernel.from_prior(TABLE1_PRIOR, 30),
    )
    history = run_filter(obs, LORENZ, TABLE1_PRIOR, np.array([1.0, 1.0, 1.0]), config, RngSeed(23))
    smoothed = backward_smooth(history, LORENZ, 0.05, 1.0)
    summary = posterior_summary(history, smoothed)
    assert np.isfinite(summary.theta_mean).all()
    assert ((summary.theta_mean >= TABLE1_PRIOR.low) & (summary.theta_mean <= TABLE1_PRIOR.high)).all()


# ---------------------------------------------------------------- smoothing


def _decay_history(seed, n_inner=50, horizon=40):
    theta = np.array([1.0])
    root = RngSeed(seed)
    truth = simulate_hidden(
        EXP_DECAY, theta, np.array([0.0]), horizon, DECAY_DELTA, NoiseConfig(1.0, 0.0), root.child("sim")
    )
    obs = observe(truth, None, 1.0, root.child("obs"))
    history = run_filter(
        obs, EXP_DECAY, _point_prior(theta), np.array([0.0]), _decay_config(n_inner), root.child("filter")
    )
    return truth, obs, history


def test_smoothed_equals_filtered_at_final_time():
    _, _, history = _decay_history(24)
    smoothed = backward_smooth(history, EXP_DECAY, DECAY_DELTA, 1.0)
    t_end = history.horizon
    joint_filtered = history.outer_weights[t_end][:, None] * history.inner_weights[t_end]
    assert np.allclose(smoothed.w_tilde[t_end], joint_filtered, atol=1e-12)


def test_single_inner_particle_smoothing_is_identity():
    _, _, history = _decay_history(25, n_inner=1, horizon=20)
    smoothed = backward_smooth(history, EXP_DECAY, DECAY_DELTA, 1.0)
    assert np.allclose(smoothed.w_tilde, history.inner_weights[:, :, :], atol=1e-12)


def test_smoother_worker_count_does_not_change_results():
    truth = simulate_hidden(
        LORENZ, LORENZ_THETA, np.array([1.0, 1.0, 1.0]), 30, 0.05, NoiseConfig(1.0, 0.0), RngSeed(26)
    )
    obs = observe(truth, None, 1.0, RngSeed(26, 1))
    config = FilterConfig(
        num_outer=12,
        num_inner=10,
        delta=0.05,
        process_std=1.0,
        observation_std=1.0,
        kernel=JitterKernel.from_prior(TABLE1_PRIOR, 12),
    )
    history = run_filter(obs, LORENZ, TABLE1_PRIOR, np.array([1.0, 1.0, 1.0]), config, RngSeed(27))
    a = backward_smooth(history, LORENZ, 0.05, 1.0, workers=1)
    b = backward_smooth(history, LORENZ, 0.05, 1.0, workers=8)
    assert np.array_equal(a.w_tilde, b.w_tilde)
    assert np.array_equal(a.v_tilde, b.v_tilde)


def test_smoother_inner_stride_keeps_weights_normalized():
    _, _, history = _decay_history(28, n_inner=40, horizon=25)
    smoothed = backward_smooth(history, EXP_DECAY, DECAY_DELTA, 1.0, inner_stride=4)
    assert np.allclose(smoothed.w_tilde.sum(axis=(1, 2)), 1.0, atol=1e-9)


def test_smoothed_means_track_rts_oracle():
    # quick 3-seed version of the acceptance-scale oracle comparison
    a_eff = float(rk4_step(EXP_DECAY, np.array([1.0]), np.array([1.0]), DECAY_DELTA)[0])
    for seed in (29, 30, 31):
        truth, obs, history = _decay_history(seed, n_inner=300, horizon=120)
        smoothed = backward_smooth(history, EXP_DECAY, DECAY_DELTA, 1.0)
        summary = posterior_summary(history, smoothed)
        kf, rts = kalman_filter_rts(obs[:, 0], a_eff, 1.0, 1.0, 0.0, 0.0)
        assert np.abs(filtered_means(history)[:, 0] - kf).mean() < 0.15
        assert np.abs(summary.state_mean.states[:, 0] - rts).mean() < 0.15


def test_lane_alignment_identity_without_resampling_shuffle():
    anc = np.tile(np.arange(5), (7, 1))
    lane = lane_alignment(anc)
    assert np.array_equal(lane, np.tile(np.arange(5), (7, 1)))


def test_zero_process_std_smoothing_falls_back_to_filtered():
    _, _, history = _decay_history(32, n_inner=10, horizon=10)
    smoothed = backward_smooth(history, EXP_DECAY, DECAY_DELTA, 0.0)
    assert smoothed.underflow_lane_steps > 0
    t_end = history.horizon
    joint = history.outer_weights[t_end][:, None] * history.inner_weights[t_end]
    assert np.allclose(smoothed.w_tilde[t_end], joint)


# ----------------------------------------------------------------- summary


def test_posterior_summary_single_particle():
    _, _, history = _decay_history(33, n_inner=1, horizon=10)
    smoothed = backward_smooth(history, EXP_DECAY, DECAY_DELTA, 1.0)
    summary = posterior_summary(history, smoothed)
    assert np.array_equal(summary.state_mean.states, history.states[:, 0, 0, :])
    assert summary.theta_std[0] == 0.0


def test_posterior_summary_two_particle_closed_form():
    thetas = np.zeros((2, 3, 1))
    thetas[:, 0, 0] = 2.0
    thetas[:, 1, 0] = 2.0
    thetas[:, 2, 0] = 6.0
    states = np.zeros((2, 3, 1, 1))
    states[1, 0, 0, 0] = 1.0
    states[1, 1, 0, 0] = 1.0
    states[1, 2, 0, 0] = 5.0
    from cfdyn.filtering import FilterHistory, SmoothedWeights

    history = FilterHistory(
        thetas=thetas,
        states=states,
        inner_weights=np.ones((2, 3, 1)),
        outer_weights=np.full((2, 3), 1.0 / 3.0),
        outer_ancestors=np.tile(np.arange(3), (2, 1)),
        inner_ancestors=np.zeros((2, 3, 1), dtype=np.int64),
        delta=0.1,
    )
    v = np.array([0.25, 0.25, 0.5])
    smoothed = SmoothedWeights(
        w_tilde=np.stack([v[:, None], v[:, None]]),
        v_tilde=np.stack([v, v]),
        lane_index=np.tile(np.arange(3), (2, 1)),
    )
    summary = posterior_summary(history, smoothed)
    # weighted mean of states 1,1,5 and thetas 2,2,6 under (0.25,0.25,0.5)
    assert abs(summary.state_mean.states[1, 0] - 3.0) < 1e-12
    assert abs(summary.theta_mean[0] - 4.0) < 1e-12
    assert abs(summary.theta_std[0] - 2.0) < 1e-12


def test_posterior_summary_uniform_weights_plain_average():
    _, _, history = _decay_history(34, n_inner=5, horizon=6)
    from cfdyn.filtering import SmoothedWeights

    t1, m, n = history.inner_weights.shape
    smoothed = SmoothedWeights(
        w_tilde=np.full((t1, m, n), 1.0 / (m * n)),
        v_tilde=np.full((t1, m), 1.0 / m),
        lane_index=np.tile(np.arange(m), (t1, 1)),
    )
    summary = posterior_summary(history, smoothed)
    assert np.allclose(summary.state_mean.states, history.states.mean(axis=(1, 2)))
