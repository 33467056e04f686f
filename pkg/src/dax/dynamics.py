"""
Lorenz-96 dynamics.

Cyclic vector field, classical RK4 stepping, propagation between observation
times, and the tangent-linear model of the discrete RK4 map. All state
functions accept either a single state (n,) or an ensemble (n, N); columns are
integrated independently.
"""

from __future__ import annotations

import numpy as np

from . import config
from .errors import DivergenceError, InvalidInputError
from .models import ModelParams, ObsOperator, TangentLinearOperator


def _check_state(x: np.ndarray, params: ModelParams) -> np.ndarray:
    state = np.asarray(x, dtype=float)
    if state.shape[0] != params.n:
        raise InvalidInputError(
            f"state has {state.shape[0]} components, model expects n={params.n}"
        )
    return state


# ---------------------------------------------------------------------------
# Vector field and integrator
# ---------------------------------------------------------------------------

def l96_rhs(x: np.ndarray, params: ModelParams) -> np.ndarray:
    """dx_i/dt = (x_{i+1} - x_{i-2}) x_{i-1} - x_i + F with cyclic indices."""
    state = _check_state(x, params)
    x_next = np.roll(state, -1, axis=0)
    x_prev = np.roll(state, 1, axis=0)
    x_prev2 = np.roll(state, 2, axis=0)
    return (x_next - x_prev2) * x_prev - state + params.forcing


def rk4_step(x: np.ndarray, params: ModelParams, dt: float | None = None) -> np.ndarray:
    """Advance one classical RK4 step.

    Args:
        x: State (n,) or ensemble (n, N).
        params: Model parameters.
        dt: Step override (>= 0); defaults to params.dt.

    Returns:
        The advanced state, same shape as x.

    Raises:
        DivergenceError: If the input or result contains non-finite values.
    """
    state = _check_state(x, params)
    step = params.dt if dt is None else dt
    if step < 0:
        raise InvalidInputError(f"dt must be >= 0, got {step}")
    if not np.all(np.isfinite(state)):
        raise DivergenceError("non-finite state passed to rk4_step")
    if step == 0:
        return state.copy()

    k1 = l96_rhs(state, params)
    k2 = l96_rhs(state + 0.5 * step * k1, params)
    k3 = l96_rhs(state + 0.5 * step * k2, params)
    k4 = l96_rhs(state + step * k3, params)
    advanced = state + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    if not np.all(np.isfinite(advanced)):
        raise DivergenceError("RK4 step produced non-finite values")
    return advanced


def propagate(x: np.ndarray, n_steps: int, params: ModelParams) -> np.ndarray:
    """Compose n_steps RK4 steps.

    propagate(x, a + b) equals propagate(propagate(x, a), b) bit for bit.

    Raises:
        DivergenceError: If any component exceeds the divergence threshold.
    """
    if n_steps < 0:
        raise InvalidInputError(f"n_steps must be >= 0, got {n_steps}")
    state = _check_state(x, params).copy()
    for _ in range(n_steps):
        state = rk4_step(state, params)
        peak = float(np.max(np.abs(state)))
        if peak > config.DIVERGENCE_THRESHOLD:
            raise DivergenceError(
                f"state magnitude {peak:.3g} exceeds {config.DIVERGENCE_THRESHOLD:.0e}"
            )
    return state


def forecast(x: np.ndarray, params: ModelParams) -> np.ndarray:
    """Propagate over one observation interval t_obs."""
    return propagate(x, params.steps_per_obs, params)


# ---------------------------------------------------------------------------
# Tangent-linear model
# ---------------------------------------------------------------------------

def l96_jacobian(x: np.ndarray, params: ModelParams) -> np.ndarray:
    """Jacobian of the Lorenz-96 vector field at a single state.

    Row i: d/dx_{i-1} = x_{i+1} - x_{i-2}, d/dx_{i+1} = x_{i-1},
    d/dx_{i-2} = -x_{i-1}, d/dx_i = -1.
    """
    state = _check_state(x, params)
    if state.ndim != 1:
        raise InvalidInputError("l96_jacobian expects a single state vector")
    n = params.n
    rows = np.arange(n)
    jacobian = np.zeros((n, n))
    jacobian[rows, rows] += -1.0
    jacobian[rows, (rows - 1) % n] += state[(rows + 1) % n] - state[(rows - 2) % n]
    jacobian[rows, (rows + 1) % n] += state[(rows - 1) % n]
    jacobian[rows, (rows - 2) % n] += -state[(rows - 1) % n]
    return jacobian


def rk4_step_tlm(x: np.ndarray, params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """One RK4 step together with the Jacobian of the discrete step map."""
    state = _check_state(x, params)
    dt = params.dt
    identity = np.eye(params.n)

    k1 = l96_rhs(state, params)
    x2 = state + 0.5 * dt * k1
    k2 = l96_rhs(x2, params)
    x3 = state + 0.5 * dt * k2
    k3 = l96_rhs(x3, params)
    x4 = state + dt * k3
    k4 = l96_rhs(x4, params)

    dk1 = l96_jacobian(state, params)
    dk2 = l96_jacobian(x2, params) @ (identity + 0.5 * dt * dk1)
    dk3 = l96_jacobian(x3, params) @ (identity + 0.5 * dt * dk2)
    dk4 = l96_jacobian(x4, params) @ (identity + dt * dk3)

    advanced = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    step_matrix = identity + (dt / 6.0) * (dk1 + 2.0 * dk2 + 2.0 * dk3 + dk4)
    return advanced, step_matrix


def tlm_propagate(
    reference: np.ndarray,
    L: int,
    params: ModelParams,
) -> TangentLinearOperator:
    """Cumulative propagators M_1..M_L along a reference trajectory.

    The trajectory inside each observation interval is re-integrated from the
    reference state at its start, so M_l is the exact Jacobian of the discrete
    map from time k_0 to k_0 + l.

    Args:
        reference: (L+1) x n states at consecutive observation times.
        L: Number of observation intervals.
        params: Model parameters.

    Returns:
        TangentLinearOperator with L cumulative matrices.
    """
    states = np.asarray(reference, dtype=float)
    if states.ndim != 2 or states.shape[0] < L + 1 or states.shape[1] != params.n:
        raise InvalidInputError(
            f"reference must have shape ({L + 1}, {params.n}), got {states.shape}"
        )

    cumulative = np.eye(params.n)
    matrices: list[np.ndarray] = []
    for ell in range(1, L + 1):
        state = states[ell - 1].copy()
        for _ in range(params.steps_per_obs):
            state, step_matrix = rk4_step_tlm(state, params)
            cumulative = step_matrix @ cumulative
        matrices.append(cumulative.copy())
    return TangentLinearOperator(matrices=matrices)


def linearized_obs_operator(tlm: TangentLinearOperator, H: ObsOperator) -> np.ndarray:
    """Stacked d x n operator H^(L) = [H M_1; ...; H M_L]."""
    h = H.matrix()
    return np.vstack([h @ matrix for matrix in tlm.matrices])


# ---------------------------------------------------------------------------
# Truth generation
# ---------------------------------------------------------------------------

def spin_up_truth(
    params: ModelParams,
    spinup_time: float = config.SPINUP_TIME,
    offset: np.ndarray | None = None,
) -> np.ndarray:
    """Start at F·1 with a small kick on component 0 and integrate onto the attractor.

    An optional offset is added to the starting point, giving a different
    truth per trial when truths are not shared.
    """
    x0 = np.full(params.n, params.forcing)
    x0[0] += config.SPINUP_KICK
    if offset is not None:
        x0 = x0 + _check_state(offset, params)
    n_steps = int(round(spinup_time / params.dt))
    return propagate(x0, n_steps, params)


def truth_trajectory(x0: np.ndarray, K: int, params: ModelParams) -> np.ndarray:
    """True states at observation times 0..K, shape (K+1, n)."""
    states = np.empty((K + 1, params.n))
    states[0] = _check_state(x0, params)
    for k in range(1, K + 1):
        states[k] = forecast(states[k - 1], params)
    return states


def climatology(
    x0: np.ndarray,
    params: ModelParams,
    t_total: float,
    lag: float,
) -> tuple[float, float]:
    """Climatological std and lag autocorrelation from a long free run.

    The run is sampled every t_obs. Both statistics are averaged over components.

    Returns:
        (sigma_clim, autocorrelation at the given lag).
    """
    n_samples = int(round(t_total / params.t_obs))
    lag_samples = int(round(lag / params.t_obs))
    if n_samples <= lag_samples + 1:
        raise InvalidInputError("t_total too short for the requested lag")

    samples = truth_trajectory(x0, n_samples, params)[1:]
    sigma_clim = float(np.mean(np.std(samples, axis=0)))

    anomalies = samples - samples.mean(axis=0)
    head = anomalies[:-lag_samples] if lag_samples else anomalies
    tail = anomalies[lag_samples:]
    numerator = np.sum(head * tail, axis=0)
    denominator = np.sqrt(np.sum(head**2, axis=0) * np.sum(tail**2, axis=0))
    autocorrelation = float(np.mean(numerator / denominator))
    return sigma_clim, autocorrelation
