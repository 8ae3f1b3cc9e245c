"""ODE right-hand sides and the RK4 forward operator.

Supported systems: Lorenz, Rossler, logistic growth, plus a linear
exponential-decay system kept for integrator convergence checks. States and
parameters are plain float64 arrays; `SystemSpec` fixes dimensions and
parameter order. All operations are pure.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericsError


@dataclass(frozen=True)
class SystemSpec:
    id: str
    dimension: int
    parameter_names: tuple[str, ...]
    note: str = ""

    @property
    def n_params(self) -> int:
        return len(self.parameter_names)


LORENZ = SystemSpec("lorenz", 3, ("sigma", "rho", "beta"), "chaotic for rho >~ 24.74")
ROSSLER = SystemSpec("rossler", 3, ("a", "b", "c"), "chaotic for c >~ 5.7")
LOGISTIC = SystemSpec("logistic", 1, ("r", "K"), "non-chaotic baseline")
EXP_DECAY = SystemSpec("exp_decay", 1, ("rate",), "linear test system dX/dt = -rate*X")

SYSTEMS: dict[str, SystemSpec] = {
    s.id: s for s in (LORENZ, ROSSLER, LOGISTIC, EXP_DECAY)
}


def get_system(system: str | SystemSpec) -> SystemSpec:
    if isinstance(system, SystemSpec):
        return system
    try:
        return SYSTEMS[system]
    except KeyError:
        raise ValueError(f"unknown system {system!r}; choose from {sorted(SYSTEMS)}") from None


def _rhs(system: SystemSpec, state: np.ndarray, params: np.ndarray) -> np.ndarray:
    """Time derivative; `state` (..., d) and `params` (..., p) broadcast together."""
    if system.id == "lorenz":
        x, y, z = state[..., 0], state[..., 1], state[..., 2]
        sg, rho, beta = params[..., 0], params[..., 1], params[..., 2]
        return np.stack([sg * (y - x), x * (rho - z) - y, x * y - beta * z], axis=-1)
    if system.id == "rossler":
        x, y, z = state[..., 0], state[..., 1], state[..., 2]
        a, b, c = params[..., 0], params[..., 1], params[..., 2]
        return np.stack([-y - z, x + a * y, b + z * (x - c)], axis=-1)
    if system.id == "logistic":
        x = state[..., 0]
        r, cap = params[..., 0], params[..., 1]
        return np.stack([r * x * (1.0 - x / cap)], axis=-1)
    if system.id == "exp_decay":
        return -params[..., 0:1] * state
    raise ValueError(f"unknown system id {system.id!r}")


def _rk4(system: SystemSpec, state: np.ndarray, params: np.ndarray, delta: float) -> np.ndarray:
    """One classical RK4 step; batched like `_rhs`, no validity checks."""
    k1 = _rhs(system, state, params)
    k2 = _rhs(system, state + 0.5 * delta * k1, params)
    k3 = _rhs(system, state + 0.5 * delta * k2, params)
    k4 = _rhs(system, state + delta * k3, params)
    return state + (delta / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _check_inputs(system: SystemSpec, state: np.ndarray, params: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    state = np.asarray(state, dtype=float)
    params = np.asarray(params, dtype=float)
    if state.shape != (system.dimension,):
        raise ValueError(
            f"state has shape {state.shape}, expected ({system.dimension},) for {system.id}"
        )
    if params.shape != (system.n_params,):
        raise ValueError(
            f"params has shape {params.shape}, expected ({system.n_params},) "
            f"for {system.id} {system.parameter_names}"
        )
    if not np.isfinite(state).all():
        raise ValueError(f"non-finite state: {state}")
    if not np.isfinite(params).all():
        raise ValueError(f"non-finite params: {params}")
    return state, params


def rhs(system: str | SystemSpec, state: np.ndarray, params: np.ndarray) -> np.ndarray:
    """Evaluate the system's time derivative at `state`.

    Parameters
    ----------
    system : str or SystemSpec
    state : ndarray (d,)
    params : ndarray (p,), ordered per `SystemSpec.parameter_names`

    Returns
    -------
    ndarray (d,)
    """
    spec = get_system(system)
    state, params = _check_inputs(spec, state, params)
    return _rhs(spec, state, params)


def rk4_step(
    system: str | SystemSpec, state: np.ndarray, params: np.ndarray, delta: float
) -> np.ndarray:
    """Advance `state` by one RK4 step of size `delta`.

    Raises NumericsError naming the first non-finite stage if the step blows up.
    """
    spec = get_system(system)
    state, params = _check_inputs(spec, state, params)
    if delta <= 0:
        raise ValueError(f"step size must be positive, got {delta}")
    with np.errstate(over="ignore", invalid="ignore"):
        k1 = _rhs(spec, state, params)
        k2 = _rhs(spec, state + 0.5 * delta * k1, params)
        k3 = _rhs(spec, state + 0.5 * delta * k2, params)
        k4 = _rhs(spec, state + delta * k3, params)
        out = state + (delta / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    for name, stage in (("k1", k1), ("k2", k2), ("k3", k3), ("k4", k4)):
        if not np.isfinite(stage).all():
            raise NumericsError(f"RK4 stage {name} is non-finite for {spec.id} at state {state}")
    if not np.isfinite(out).all():
        raise NumericsError(f"RK4 result is non-finite for {spec.id} at state {state}")
    return out
