"""Experiment orchestration: configuration, presets, pipeline, and grids.

A run executes simulate -> filter/smooth -> abduct -> intervene -> predict ->
evaluate, persisting every product under one output directory together with a
manifest that pins the configuration, master seed, and artifact checksums.
Each stage can also run standalone from the previous stage's files and yields
byte-identical results.
"""
from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import artifacts as io
from .abduction import NoisePosterior, abduct_noise
from .counterfactual import (
    REGIMES,
    CfTrajectorySet,
    Intervention,
    ThetaRegime,
    deterministic_cf,
    generate_cf,
    intervene,
)
from .dynamics import get_system
from .errors import ConfigError
from .filtering import (
    FilterConfig,
    FilterHistory,
    JitterKernel,
    ParameterPrior,
    PosteriorSummary,
    SmoothedWeights,
    backward_smooth,
    posterior_summary,
    run_filter,
)
from .metrics import factual_rmse, moving_average, rmse_t
from .seeding import RngSeed
from .simulate import NoiseConfig, Trajectory, observe, simulate_hidden

PACKAGE_VERSION = "0.1.0"

# The four (process_std, observation_std) pairs exercised by the study grid.
NOISE_GRID: tuple[tuple[float, float], ...] = ((0.01, 4.0), (0.01, 9.0), (1.0, 2.0), (4.0, 1.0))


@dataclass(frozen=True)
class ExperimentConfig:
    system: str
    theta_true: tuple[float, ...]
    x0: tuple[float, ...]
    horizon: int
    delta: float
    process_std: float
    observation_std: float
    prior_bounds: tuple[tuple[float, float], ...]
    outer_particles: int
    inner_particles: int
    jitter_scale: float
    inner_resampling: bool
    intervention: dict
    theta_regime: str
    n_cf: int
    rmse_window: int
    master_seed: int
    output_dir: str | None = None


_CONFIG_FIELDS = tuple(ExperimentConfig.__dataclass_fields__)
_INTERVENTION_KEYS = {"component", "shift", "absolute"}


def _fail(field: str, message: str) -> None:
    raise ConfigError(f"config field '{field}': {message}")


def validate_config(config: ExperimentConfig) -> ExperimentConfig:
    """Check every field against the model it references; raise ConfigError."""
    try:
        spec = get_system(config.system)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if len(config.theta_true) != spec.n_params:
        _fail("theta_true", f"expected {spec.n_params} values for {spec.id}")
    if len(config.x0) != spec.dimension:
        _fail("x0", f"expected {spec.dimension} values for {spec.id}")
    if config.horizon < 1:
        _fail("horizon", "must be >= 1")
    if config.delta <= 0:
        _fail("delta", "must be positive")
    if config.process_std < 0:
        _fail("process_std", "must be >= 0")
    if config.observation_std <= 0:
        _fail("observation_std", "must be > 0")
    if len(config.prior_bounds) != spec.n_params:
        _fail("prior_bounds", f"expected {spec.n_params} (low, high) pairs")
    for k, pair in enumerate(config.prior_bounds):
        if len(pair) != 2 or not pair[0] < pair[1]:
            _fail("prior_bounds", f"pair {k} must satisfy low < high, got {pair}")
    if config.outer_particles < 1:
        _fail("outer_particles", "must be >= 1")
    if config.inner_particles < 1:
        _fail("inner_particles", "must be >= 1")
    if config.jitter_scale < 0:
        _fail("jitter_scale", "must be >= 0")
    keys = set(config.intervention)
    unknown = keys - _INTERVENTION_KEYS
    if unknown:
        _fail("intervention", f"unknown keys {sorted(unknown)}")
    if "absolute" in keys:
        if keys != {"absolute"}:
            _fail("intervention", "absolute replacement excludes component/shift")
        if len(config.intervention["absolute"]) != spec.dimension:
            _fail("intervention", f"absolute state needs {spec.dimension} values")
    else:
        if keys != {"component", "shift"}:
            _fail("intervention", "additive intervention needs component and shift")
        j = config.intervention["component"]
        if not isinstance(j, int) or not 1 <= j <= spec.dimension:
            _fail("intervention", f"component must be an integer in [1, {spec.dimension}]")
    if config.theta_regime not in REGIMES:
        _fail("theta_regime", f"must be one of {REGIMES}")
    if config.n_cf < 1:
        _fail("n_cf", "must be >= 1")
    if config.rmse_window < 1:
        _fail("rmse_window", "must be >= 1")
    if not 0 <= config.master_seed < 2**64:
        _fail("master_seed", "must fit in 64 bits")
    return config


def config_from_dict(data: dict) -> ExperimentConfig:
    """Build and validate a config from plain JSON data; unknown keys rejected."""
    if not isinstance(data, dict):
        raise ConfigError("config document must be a JSON object")
    unknown = set(data) - set(_CONFIG_FIELDS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    missing = set(_CONFIG_FIELDS) - {"output_dir"} - set(data)
    if missing:
        raise ConfigError(f"missing config keys: {sorted(missing)}")
    kwargs = dict(data)
    try:
        kwargs["theta_true"] = tuple(float(v) for v in data["theta_true"])
        kwargs["x0"] = tuple(float(v) for v in data["x0"])
        kwargs["prior_bounds"] = tuple(
            (float(lo), float(hi)) for lo, hi in data["prior_bounds"]
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"malformed numeric list in config: {exc}") from None
    config = ExperimentConfig(**kwargs)
    return validate_config(config)


def config_to_dict(config: ExperimentConfig, include_output: bool = True) -> dict:
    data = asdict(config)
    data["theta_true"] = list(config.theta_true)
    data["x0"] = list(config.x0)
    data["prior_bounds"] = [list(pair) for pair in config.prior_bounds]
    if not include_output or data["output_dir"] is None:
        data.pop("output_dir", None)
    return data


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse and validate a JSON config file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: line {exc.lineno}: {exc.msg}") from None
    return config_from_dict(data)


def save_config(path: str | Path, config: ExperimentConfig) -> None:
    Path(path).write_text(
        json.dumps(config_to_dict(config), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def config_hash(config: ExperimentConfig) -> str:
    """Hash of the run semantics (output directory excluded); key-order free."""
    canonical = json.dumps(
        config_to_dict(config, include_output=False), sort_keys=True, separators=(",", ":")
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _desk(system, theta_true, x0, prior_bounds, **overrides) -> ExperimentConfig:
    base = dict(
        system=system,
        theta_true=theta_true,
        x0=x0,
        horizon=500,
        delta=0.05,
        process_std=1.0,
        observation_std=1.0,
        prior_bounds=prior_bounds,
        outer_particles=50,
        inner_particles=50,
        jitter_scale=0.05,
        inner_resampling=True,
        intervention={"component": 1, "shift": 1e-4},
        theta_regime="posterior",
        n_cf=20,
        rmse_window=200,
        master_seed=42,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


_LORENZ_TABLE1 = ((5.0, 15.0), (20.0, 35.0), (2.0, 4.0))
_LORENZ_APPENDIX = ((5.0, 20.0), (15.0, 50.0), (1.0, 8.0))
_ROSSLER_TABLE1 = ((0.1, 0.3), (0.1, 0.3), (4.0, 7.0))
_ROSSLER_APPENDIX = ((0.1, 0.3), (0.1, 0.3), (4.0, 8.0))

PRESETS: dict[str, ExperimentConfig] = {
    "lorenz-table1": _desk("lorenz", (10.0, 28.0, 8.0 / 3.0), (1.0, 1.0, 1.0), _LORENZ_TABLE1),
    "lorenz-appendix": _desk("lorenz", (10.0, 28.0, 8.0 / 3.0), (1.0, 1.0, 1.0), _LORENZ_APPENDIX),
    "lorenz-paper": _desk(
        "lorenz",
        (10.0, 28.0, 8.0 / 3.0),
        (1.0, 1.0, 1.0),
        _LORENZ_TABLE1,
        horizon=2000,
        outer_particles=200,
        inner_particles=200,
        n_cf=30,
    ),
    "rossler-table1": _desk("rossler", (0.2, 0.2, 5.7), (1.0, 1.0, 0.0), _ROSSLER_TABLE1),
    "rossler-appendix": _desk("rossler", (0.2, 0.2, 5.7), (1.0, 1.0, 0.0), _ROSSLER_APPENDIX),
    "logistic-appendix": _desk(
        "logistic",
        (0.5, 100.0),
        (10.0,),
        ((0.0, 1.0), (85.0, 110.0)),
        intervention={"component": 1, "shift": 10.0},
    ),
    "logistic-table1": _desk(
        "logistic",
        (3.9, 1.0),
        (10.0,),
        ((2.0, 4.0), (0.8, 1.2)),
        intervention={"component": 1, "shift": 10.0},
    ),
}
# Unsuffixed aliases resolve the documented default variant per system.
PRESETS["lorenz"] = PRESETS["lorenz-table1"]
PRESETS["rossler"] = PRESETS["rossler-table1"]
PRESETS["logistic"] = PRESETS["logistic-appendix"]


def get_preset(name: str) -> ExperimentConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


@dataclass
class RunArtifacts:
    """In-memory products of one pipeline run plus where they were written."""

    config: ExperimentConfig
    out_dir: Path
    truth: Trajectory
    observations: np.ndarray
    summary: PosteriorSummary
    noise: NoisePosterior
    reference: Trajectory
    ensemble: CfTrajectorySet
    rmse_raw: np.ndarray
    rmse_smoothed: np.ndarray
    factual_raw: np.ndarray
    factual_smoothed: np.ndarray
    diagnostics: dict
    manifest: dict


ARTIFACT_FILES = (
    "truth.csv",
    "observations.csv",
    "state_estimate.csv",
    "theta_estimate.csv",
    "filter_state.npz",
    "noise_posterior.csv",
    "cf_deterministic.csv",
    "cf_ensemble.csv",
    "cf_thetas.csv",
    "rmse.csv",
    "factual_rmse.csv",
)


def build_prior(config: ExperimentConfig) -> ParameterPrior:
    bounds = np.asarray(config.prior_bounds, dtype=float)
    return ParameterPrior(low=bounds[:, 0], high=bounds[:, 1])


def build_filter_config(config: ExperimentConfig) -> FilterConfig:
    prior = build_prior(config)
    kernel = JitterKernel.from_prior(prior, config.outer_particles, config.jitter_scale)
    return FilterConfig(
        num_outer=config.outer_particles,
        num_inner=config.inner_particles,
        delta=config.delta,
        process_std=config.process_std,
        observation_std=config.observation_std,
        kernel=kernel,
        inner_resampling=config.inner_resampling,
    )


def build_intervention(config: ExperimentConfig) -> Intervention:
    data = config.intervention
    if "absolute" in data:
        return Intervention(absolute=np.asarray(data["absolute"], dtype=float))
    return Intervention(component=int(data["component"]), shift=float(data["shift"]))


def build_regime(config: ExperimentConfig, summary: PosteriorSummary | None) -> ThetaRegime:
    if config.theta_regime == "true":
        return ThetaRegime(mode="true", theta_true=np.asarray(config.theta_true))
    if summary is None:
        raise ConfigError(f"theta_regime {config.theta_regime!r} needs filter output")
    return ThetaRegime(
        mode=config.theta_regime,
        theta_hat=summary.theta_mean,
        theta_std=summary.theta_std,
    )


def stage_simulate(config: ExperimentConfig) -> tuple[Trajectory, np.ndarray]:
    seed = RngSeed(config.master_seed)
    noise = NoiseConfig(config.process_std, config.observation_std)
    truth = simulate_hidden(
        config.system,
        np.asarray(config.theta_true),
        np.asarray(config.x0),
        config.horizon,
        config.delta,
        noise,
        seed.child("simulate"),
    )
    observations = observe(truth, None, config.observation_std, seed.child("observe"))
    return truth, observations


def stage_filter(
    config: ExperimentConfig, observations: np.ndarray, workers: int = 1
) -> tuple[FilterHistory, SmoothedWeights, PosteriorSummary]:
    seed = RngSeed(config.master_seed)
    history = run_filter(
        observations,
        config.system,
        build_prior(config),
        np.asarray(config.x0),
        build_filter_config(config),
        seed.child("filter"),
    )
    smoothed = backward_smooth(
        history, config.system, config.delta, config.process_std, workers=workers
    )
    summary = posterior_summary(history, smoothed)
    return history, smoothed, summary


def stage_abduct(
    config: ExperimentConfig, history: FilterHistory, smoothed: SmoothedWeights
) -> NoisePosterior:
    return abduct_noise(history, smoothed, config.system, config.delta)


def stage_counterfactual(
    config: ExperimentConfig,
    summary: PosteriorSummary | None,
    noise: NoisePosterior,
    workers: int = 1,
) -> tuple[Trajectory, CfTrajectorySet]:
    seed = RngSeed(config.master_seed)
    x0_cf = intervene(np.asarray(config.x0), build_intervention(config))
    reference = deterministic_cf(
        config.system, np.asarray(config.theta_true), x0_cf, config.horizon, config.delta
    )
    ensemble = generate_cf(
        config.system,
        build_regime(config, summary),
        noise,
        x0_cf,
        config.horizon,
        config.delta,
        config.n_cf,
        seed.child("counterfactual"),
        workers=workers,
        reference=reference,
    )
    return reference, ensemble


def stage_metrics(
    config: ExperimentConfig,
    ensemble: CfTrajectorySet,
    reference: Trajectory,
    estimate: Trajectory,
    truth: Trajectory,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    raw = rmse_t(ensemble, reference)
    smoothed = moving_average(raw, config.rmse_window)
    factual = factual_rmse(estimate, truth)
    factual_smoothed = moving_average(factual, config.rmse_window)
    return raw, smoothed, factual, factual_smoothed


def _resolve_out_dir(config: ExperimentConfig, out_dir: str | Path | None) -> Path:
    if out_dir is not None:
        return Path(out_dir)
    if config.output_dir is not None:
        return Path(config.output_dir)
    return Path("runs") / config_hash(config)[:12]


def run_pipeline(
    config: ExperimentConfig,
    out_dir: str | Path | None = None,
    workers: int = 1,
) -> RunArtifacts:
    """Execute every stage in causal order and persist all artifacts.

    The filter runs under every theta regime (it supplies the noise posterior
    even when the counterfactual parameters are pinned to their true values).
    """
    validate_config(config)
    out = _resolve_out_dir(config, out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = get_system(config.system)

    truth, observations = stage_simulate(config)
    io.save_trajectory(out / "truth.csv", truth)
    io.save_observations(out / "observations.csv", observations)

    history, smoothed, summary = stage_filter(config, observations, workers=workers)
    io.save_trajectory(out / "state_estimate.csv", summary.state_mean)
    io.save_theta_estimate(
        out / "theta_estimate.csv", spec.parameter_names, summary.theta_mean, summary.theta_std
    )
    io.save_filter_state(out / "filter_state.npz", history, smoothed)

    noise = stage_abduct(config, history, smoothed)
    io.save_noise_posterior(out / "noise_posterior.csv", noise)

    reference, ensemble = stage_counterfactual(config, summary, noise, workers=workers)
    io.save_trajectory(out / "cf_deterministic.csv", reference)
    io.save_ensemble(out / "cf_ensemble.csv", out / "cf_thetas.csv", ensemble, spec.parameter_names)

    raw, smoothed_series, factual, factual_smoothed = stage_metrics(
        config, ensemble, reference, summary.state_mean, truth
    )
    io.save_rmse(out / "rmse.csv", raw, smoothed_series)
    io.save_rmse(out / "factual_rmse.csv", factual, factual_smoothed)

    diagnostics = history.diagnostics.to_dict()
    diagnostics["cf_truncated_trajectories"] = (
        0 if ensemble.failure_index is None else int((ensemble.failure_index >= 0).sum())
    )
    manifest = {
        "config": config_to_dict(config, include_output=False),
        "config_hash": config_hash(config),
        "master_seed": config.master_seed,
        "package": {"name": "cfdyn", "version": PACKAGE_VERSION},
        "diagnostics": diagnostics,
        "artifacts": {name: io.sha256_file(out / name) for name in ARTIFACT_FILES},
    }
    io.write_manifest(out / "manifest.json", manifest)

    return RunArtifacts(
        config=config,
        out_dir=out,
        truth=truth,
        observations=observations,
        summary=summary,
        noise=noise,
        reference=reference,
        ensemble=ensemble,
        rmse_raw=raw,
        rmse_smoothed=smoothed_series,
        factual_raw=factual,
        factual_smoothed=factual_smoothed,
        diagnostics=diagnostics,
        manifest=manifest,
    )


def _cell_seed(master_seed: int, index: int) -> int:
    return RngSeed(master_seed).child("grid", index).stream_id


def expand_grid(
    base: ExperimentConfig,
    noise_pairs=NOISE_GRID,
    regimes=REGIMES,
    swap_noise: bool = False,
) -> list[tuple[str, ExperimentConfig]]:
    """Cross noise pairs with theta regimes; one named cell per combination.

    `swap_noise` reads each pair as (observation_std, process_std) instead,
    covering the alternative ordering of the published noise grid.
    """
    cells = []
    index = 0
    for pair in noise_pairs:
        u, w = (pair[1], pair[0]) if swap_noise else pair
        for regime in regimes:
            name = f"u{u:g}_w{w:g}_{regime}"
            cell = replace(
                base,
                process_std=float(u),
                observation_std=float(w),
                theta_regime=regime,
                master_seed=_cell_seed(base.master_seed, index),
                output_dir=None,
            )
            cells.append((name, cell))
            index += 1
    return cells


def run_grid(
    cells: list[tuple[str, ExperimentConfig]],
    out_dir: str | Path,
    workers: int = 1,
) -> list[tuple[str, RunArtifacts | Exception]]:
    """Run each named cell in its own subdirectory; failures stay isolated."""
    if not cells:
        raise ConfigError("grid is empty")
    out_dir = Path(out_dir)

    def _one(item):
        name, cell = item
        try:
            return name, run_pipeline(cell, out_dir / name, workers=1)
        except Exception as exc:  # noqa: BLE001 - cell isolation is the contract
            return name, exc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one, cells))
    else:
        results = [_one(item) for item in cells]
    return results
