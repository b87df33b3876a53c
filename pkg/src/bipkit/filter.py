"""Extended Kalman filter over the augmented state s = [phase, phase velocity, weights].

Phase velocity is measured in phase per sample, so one filter tick per
incoming sample uses ``tick_dt = 1``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.linalg

from bipkit.basis import BasisConfig, basis_derivative_matrix, basis_matrix, weight_offsets
from bipkit.errors import LayoutError, NumericalWarning
from bipkit.interaction import DofLayout, PartialObservation
from bipkit.prior import PriorModel

PHASE_CEILING = 1.05
INNOVATION_JITTER = 1e-9
R_FLOOR = 1e-12

# Per-tick defaults at the sampling rate, tuned on synthetic handshakes.
DEFAULT_Q_PHASE = 1e-8
DEFAULT_Q_PHASE_VEL = 2e-8
DEFAULT_Q_PHASE_VEL_REL = 0.03
DEFAULT_RELATIVE_SD = 0.03


@dataclass(frozen=True)
class FilterState:
    mean: np.ndarray
    cov: np.ndarray
    tick_dt: float = 1.0

    @property
    def phase(self) -> float:
        return float(self.mean[0])

    @property
    def phase_velocity(self) -> float:
        return float(self.mean[1])

    @property
    def weights(self) -> np.ndarray:
        return self.mean[2:]

    @property
    def phase_variance(self) -> float:
        return float(self.cov[0, 0])

    @property
    def phase_velocity_variance(self) -> float:
        return float(self.cov[1, 1])

    @classmethod
    def from_prior(cls, model: PriorModel, tick_dt: float = 1.0) -> "FilterState":
        return cls(model.mean.copy(), model.Sigma0.copy(), tick_dt)


@dataclass(frozen=True)
class NoiseConfig:
    """Process noise (per tick) and per-DoF measurement variances.

    The phase system is driven by white acceleration noise with variance
    ``q_phase_vel + (q_phase_vel_rel * phase_velocity)**2``, so faster
    interactions change speed by proportionally larger amounts.
    ``q_phase`` is extra jitter on the phase alone. ``gate`` enables a
    Mahalanobis innovation gate (squared distance) when set.
    """

    q_phase: float = DEFAULT_Q_PHASE
    q_phase_vel: float = DEFAULT_Q_PHASE_VEL
    q_weights: float = 0.0
    q_phase_vel_rel: float = DEFAULT_Q_PHASE_VEL_REL
    r_per_dof: np.ndarray = field(default=None)
    gate: float | None = None

    def __post_init__(self):
        if min(self.q_phase, self.q_phase_vel, self.q_weights, self.q_phase_vel_rel) < 0:
            raise ValueError("process noise terms must be non-negative")
        if self.r_per_dof is not None:
            r = np.array(self.r_per_dof, dtype=float)
            if np.any(r < 0) or not np.all(np.isfinite(r)):
                raise ValueError("measurement variances must be finite and non-negative")
            object.__setattr__(self, "r_per_dof", r)

    @classmethod
    def for_model(cls, model: PriorModel, relative_sd: float = DEFAULT_RELATIVE_SD, **overrides) -> "NoiseConfig":
        """Measurement variance (relative_sd * DoF range)^2 for every DoF."""
        r = np.maximum((relative_sd * model.dof_range) ** 2, R_FLOOR)
        return cls(r_per_dof=r, **overrides)

    def process_noise(self, n: int, dt: float, phase_velocity: float = 0.0) -> np.ndarray:
        Q = np.zeros((n, n))
        Q[:2, :2] = self.phase_block(dt, phase_velocity)
        Q[2:, 2:] = self.q_weights * np.eye(n - 2)
        return Q

    def phase_block(self, dt: float, phase_velocity: float = 0.0) -> np.ndarray:
        # Discrete white noise acceleration model.
        q = self.q_phase_vel + (self.q_phase_vel_rel * phase_velocity) ** 2
        return np.array(
            [
                [self.q_phase + q * dt**4 / 4.0, q * dt**3 / 2.0],
                [q * dt**3 / 2.0, q * dt**2],
            ]
        )


def clamp_state(mean: np.ndarray) -> np.ndarray:
    mean[0] = min(max(mean[0], 0.0), PHASE_CEILING)
    mean[1] = max(mean[1], 0.0)
    return mean


def transition_matrix(n: int, dt: float) -> np.ndarray:
    G = np.eye(n)
    G[0, 1] = dt
    return G


def predict(state: FilterState, noise: NoiseConfig) -> FilterState:
    dt = state.tick_dt
    mean = state.mean.copy()
    velocity = mean[1]
    mean[0] += dt * velocity

    # G only mixes the first two rows/columns, so G S G^T is applied in place.
    cov = state.cov.copy()
    cov[0, :] += dt * cov[1, :]
    cov[:, 0] += dt * cov[:, 1]
    cov[:2, :2] += noise.phase_block(dt, velocity)
    if noise.q_weights:
        idx = np.arange(2, cov.shape[0])
        cov[idx, idx] += noise.q_weights
    return FilterState(clamp_state(mean), cov, dt)


def _check_basis(basis: Sequence[BasisConfig], layout: DofLayout, state_dim: int) -> np.ndarray:
    if len(basis) != layout.dof_count:
        raise LayoutError(f"need {layout.dof_count} basis configs, got {len(basis)}")
    offsets = weight_offsets(basis)
    if offsets[-1] + 2 != state_dim:
        raise LayoutError(f"basis implies state dimension {offsets[-1] + 2}, state has {state_dim}")
    return offsets


def observation_phase(phase: float) -> float:
    """Phase at which the observation model is evaluated.

    The interaction is over once phase passes 1, so observations there are
    predicted from the terminal posture rather than an extrapolated basis.
    """
    return min(phase, 1.0)


def predicted_observation(state: FilterState, basis: Sequence[BasisConfig], layout: DofLayout) -> np.ndarray:
    """h(s): every DoF reconstructed from its weight block at the current phase."""
    offsets = _check_basis(basis, layout, state.mean.shape[0])
    phase = observation_phase(state.mean[0])
    w = state.mean[2:]
    return np.array(
        [basis_matrix([phase], cfg)[0] @ w[offsets[d] : offsets[d + 1]] for d, cfg in enumerate(basis)]
    )


def observation_jacobian(
    state: FilterState,
    basis: Sequence[BasisConfig],
    layout: DofLayout,
    rows: Sequence[int] | None = None,
) -> np.ndarray:
    """dh/ds evaluated at the state mean; optionally only for the DoFs in ``rows``."""
    offsets = _check_basis(basis, layout, state.mean.shape[0])
    phase = observation_phase(state.mean[0])
    past_end = state.mean[0] > 1.0
    w = state.mean[2:]
    dofs = range(layout.dof_count) if rows is None else rows
    H = np.zeros((len(dofs), state.mean.shape[0]))
    for i, d in enumerate(dofs):
        lo, hi = offsets[d], offsets[d + 1]
        cfg = basis[d]
        if not past_end:
            H[i, 0] = basis_derivative_matrix([phase], cfg)[0] @ w[lo:hi]
        H[i, 2 + lo : 2 + hi] = basis_matrix([phase], cfg)[0]
    return H


def update(
    state: FilterState,
    obs: PartialObservation,
    noise: NoiseConfig,
    basis: Sequence[BasisConfig],
    layout: DofLayout,
) -> FilterState:
    if obs.values.shape[0] != layout.dof_count:
        raise LayoutError(f"observation has {obs.values.shape[0]} entries, layout has {layout.dof_count}")
    rows = np.flatnonzero(obs.mask)
    if rows.size == 0:
        return state
    if noise.r_per_dof is None:
        raise ValueError("noise config has no measurement variances")

    mean, cov = state.mean, state.cov
    H = observation_jacobian(state, basis, layout, rows)
    innovation = obs.values[rows] - predicted_observation(state, basis, layout)[rows]
    R = np.diag(noise.r_per_dof[rows])

    HS = H @ cov  # m x n
    S = HS @ H.T + R
    S = 0.5 * (S + S.T)
    try:
        factor = scipy.linalg.cho_factor(S)
    except np.linalg.LinAlgError:
        warnings.warn("innovation covariance is singular; adding jitter", NumericalWarning, stacklevel=2)
        S = S + INNOVATION_JITTER * np.eye(S.shape[0])
        factor = scipy.linalg.cho_factor(S)

    if noise.gate is not None:
        distance = float(innovation @ scipy.linalg.cho_solve(factor, innovation))
        if distance > noise.gate:
            return state

    K = scipy.linalg.cho_solve(factor, HS).T  # n x m
    new_mean = mean + K @ innovation

    # Joseph form written with the m x n product HS, which keeps the update
    # O(n^2 m) while staying symmetric PSD.
    KHS = K @ HS
    new_cov = cov - KHS - KHS.T + K @ S @ K.T
    new_cov = 0.5 * (new_cov + new_cov.T)
    return FilterState(clamp_state(new_mean), new_cov, state.tick_dt)


def step(
    state: FilterState,
    obs: PartialObservation,
    noise: NoiseConfig,
    basis: Sequence[BasisConfig],
    layout: DofLayout,
) -> FilterState:
    """One recursion: propagate with the constant-velocity model, then condition on ``obs``."""
    return update(predict(state, noise), obs, noise, basis, layout)


class SpatiotemporalFilter:
    """Stateful wrapper that runs :func:`step` against a fixed prior model."""

    def __init__(self, model: PriorModel, noise: NoiseConfig | None = None, tick_dt: float = 1.0):
        self.model = model
        self.noise = noise if noise is not None else NoiseConfig.for_model(model)
        self.state = FilterState.from_prior(model, tick_dt)

    def step(self, obs: PartialObservation) -> FilterState:
        self.state = step(self.state, obs, self.noise, self.model.basis, self.model.layout)
        return self.state

    def observe(self, values) -> FilterState:
        """Step with only the observed DoFs of ``values`` unmasked."""
        values = np.asarray(values, dtype=float)
        mask = self.model.layout.observed_mask()
        full = np.zeros(self.model.layout.dof_count)
        full[mask] = values[: mask.sum()] if values.shape[0] == mask.sum() else values[mask]
        return self.step(PartialObservation(full, mask))

    def reset(self) -> None:
        self.state = FilterState.from_prior(self.model, self.state.tick_dt)

    def with_noise(self, **changes) -> "SpatiotemporalFilter":
        return SpatiotemporalFilter(self.model, replace(self.noise, **changes), self.state.tick_dt)
