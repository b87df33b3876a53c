"""Response generation for the controlled DoFs and the tick-driven interaction loop.

Timing is logical: every incoming sample is one tick. Plans are regenerated
every ``sample_hz / inference_hz`` ticks and setpoints are emitted every
``sample_hz / execution_hz`` ticks, held constant in between.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator

import numpy as np

from bipkit.basis import reconstruct
from bipkit.errors import ConfigError
from bipkit.filter import FilterState, NoiseConfig, SpatiotemporalFilter
from bipkit.interaction import Interaction, PartialObservation
from bipkit.prior import PriorModel

DEFAULT_ALPHA = 0.5
DEFAULT_BETA = 0.05
MIN_RESOLUTION = 10
MAX_RESOLUTION = 2000


@dataclass(frozen=True)
class ResponsePlan:
    phases: np.ndarray
    values: np.ndarray  # D_c x K
    issued_at_tick: int = 0
    phase_velocity: float = 0.0

    def __post_init__(self):
        phases = np.asarray(self.phases, dtype=float)
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if phases.shape[0] < 2 or values.shape[1] != phases.shape[0]:
            raise ValueError("plan needs at least 2 phases and one column of values per phase")
        if np.any(np.diff(phases) < 0) or phases[-1] != 1.0:
            raise ValueError("plan phases must be non-decreasing and end at 1")
        if not np.all(np.isfinite(values)):
            raise ValueError("plan values must be finite")
        object.__setattr__(self, "phases", phases)
        object.__setattr__(self, "values", values)

    @property
    def resolution(self) -> int:
        return self.phases.shape[0]

    def value_at(self, phase: float) -> np.ndarray:
        """Linear interpolation in phase; phases outside the plan hold the end values."""
        if self.phases[0] == self.phases[-1]:
            return self.values[:, -1].copy()
        return np.array([np.interp(phase, self.phases, row) for row in self.values])

    def target_at_tick(self, tick: int) -> np.ndarray:
        """Setpoint for ``tick``, advancing along the plan at the phase velocity it was issued with."""
        return self.value_at(self.phases[0] + self.phase_velocity * (tick - self.issued_at_tick))


def plan_resolution(state: FilterState) -> int:
    """Remaining samples implied by the phase velocity estimate, floored at MIN_RESOLUTION."""
    remaining = 1.0 - min(max(state.phase, 0.0), 1.0)
    velocity = state.phase_velocity / state.tick_dt
    if velocity <= 0:
        return MAX_RESOLUTION
    return int(min(max(math.ceil(remaining / velocity), MIN_RESOLUTION), MAX_RESOLUTION))


def generate_response(
    state: FilterState, model: PriorModel, resolution: int | None = None, tick: int = 0
) -> ResponsePlan:
    """Controlled-DoF trajectory from the current phase estimate to the end of the interaction."""
    K = plan_resolution(state) if resolution is None else resolution
    if K < 2:
        raise ValueError(f"plan resolution must be at least 2, got {K}")
    start = min(max(state.phase, 0.0), 1.0)
    phases = np.linspace(start, 1.0, K)
    phases[-1] = 1.0

    layout = model.layout
    offsets = np.concatenate([[0], np.cumsum([cfg.count for cfg in model.basis])])
    weights = state.weights
    rows = []
    for d in range(layout.observed_count, layout.dof_count):
        rows.append(reconstruct(weights[offsets[d] : offsets[d + 1]], phases, model.basis[d]))
    velocity = state.phase_velocity / state.tick_dt
    return ResponsePlan(phases, np.vstack(rows), tick, velocity)


@dataclass(frozen=True)
class SmootherState:
    position: np.ndarray
    velocity: np.ndarray  # units per second
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA

    def __post_init__(self):
        position = np.array(self.position, dtype=float)
        velocity = np.array(self.velocity, dtype=float)
        if position.shape != velocity.shape:
            raise ValueError("position and velocity must have the same shape")
        if not (0 < self.alpha <= 1):
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not (0 <= self.beta <= 1):
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if not (np.all(np.isfinite(position)) and np.all(np.isfinite(velocity))):
            raise ValueError("smoother state must be finite")
        object.__setattr__(self, "position", position)
        object.__setattr__(self, "velocity", velocity)

    @classmethod
    def at_rest(cls, position, alpha: float = DEFAULT_ALPHA, beta: float = DEFAULT_BETA) -> "SmootherState":
        position = np.asarray(position, dtype=float)
        return cls(position, np.zeros_like(position), alpha, beta)


def alpha_beta_step(s: SmootherState, target, dt: float) -> SmootherState:
    if not dt > 0:
        raise ValueError("dt must be positive")
    predicted = s.position + s.velocity * dt
    residual = np.asarray(target, dtype=float) - predicted
    position = predicted + s.alpha * residual
    velocity = s.velocity + (s.beta / dt) * residual
    return SmootherState(position, velocity, s.alpha, s.beta)


@dataclass(frozen=True)
class LoopRates:
    sample_hz: float = 30.0
    inference_hz: float = 3.0
    execution_hz: float = 10.0

    def __post_init__(self):
        if min(self.sample_hz, self.inference_hz, self.execution_hz) <= 0:
            raise ConfigError("rates must be positive")
        if self.inference_hz > self.sample_hz or self.execution_hz > self.sample_hz:
            raise ConfigError("inference and execution rates cannot exceed the sample rate")
        for name in ("inference_hz", "execution_hz"):
            ratio = self.sample_hz / getattr(self, name)
            if abs(ratio - round(ratio)) > 1e-9:
                raise ConfigError(f"sample rate {self.sample_hz} Hz is not a multiple of {name} {getattr(self, name)} Hz")

    @property
    def inference_period(self) -> int:
        return int(round(self.sample_hz / self.inference_hz))

    @property
    def execution_period(self) -> int:
        return int(round(self.sample_hz / self.execution_hz))

    @classmethod
    def parse(cls, text: str) -> "LoopRates":
        """Parse ``"sample,inference,execution"``."""
        try:
            values = [float(v) for v in text.split(",")]
        except ValueError:
            raise ConfigError(f"rates must be three numbers, got {text!r}") from None
        if len(values) != 3:
            raise ConfigError(f"rates must be three numbers, got {text!r}")
        return cls(*values)


@dataclass(frozen=True)
class LoopResult:
    executed: Interaction
    trace: np.ndarray  # T x 4: phase, phase velocity and their variances
    plans: list[ResponsePlan] = field(repr=False)


def replay_stream(interaction: Interaction) -> Iterator[PartialObservation]:
    """Present a recorded interaction one sample at a time with only the observed DoFs visible."""
    mask = interaction.layout.observed_mask()
    for column in interaction.data.T:
        yield PartialObservation(np.where(mask, column, 0.0), mask)


def interaction_loop(
    model: PriorModel,
    observations: Iterable[PartialObservation],
    rates: LoopRates | None = None,
    noise: NoiseConfig | None = None,
    alpha: float = DEFAULT_ALPHA,
    beta: float = DEFAULT_BETA,
    sink: Callable[[int, np.ndarray], None] | None = None,
) -> LoopResult:
    """Run filter, planner and smoothed executor until the observation stream ends.

    ``sink`` is called with ``(tick, setpoint)`` whenever a setpoint is emitted.
    The executed interaction holds the observed inputs and the emitted
    setpoints (held between execution ticks).
    """
    rates = rates or LoopRates(sample_hz=model.sample_rate)
    if rates.sample_hz != model.sample_rate:
        raise ConfigError(f"model was trained at {model.sample_rate} Hz but the loop samples at {rates.sample_hz} Hz")
    layout = model.layout
    filt = SpatiotemporalFilter(model, noise)
    exec_dt = rates.execution_period / rates.sample_hz

    initial = generate_response(filt.state, model, resolution=MIN_RESOLUTION)
    smoother = SmootherState.at_rest(initial.values[:, 0], alpha, beta)
    setpoint = smoother.position.copy()
    plan = initial

    observed_cols, setpoints, trace, plans = [], [], [], []
    for tick, obs in enumerate(observations):
        if obs.values.shape[0] != layout.dof_count:
            raise ValueError(f"observation at tick {tick} has {obs.values.shape[0]} entries, expected {layout.dof_count}")
        state = filt.step(obs)
        if tick % rates.inference_period == 0:
            plan = generate_response(state, model, tick=tick)
            plans.append(plan)
        if tick % rates.execution_period == 0:
            smoother = alpha_beta_step(smoother, plan.target_at_tick(tick), exec_dt)
            setpoint = smoother.position.copy()
            if sink is not None:
                sink(tick, setpoint)
        observed_cols.append(np.where(obs.mask, obs.values, np.nan)[layout.observed])
        setpoints.append(setpoint)
        trace.append((state.phase, state.phase_velocity, state.phase_variance, state.phase_velocity_variance))

    if len(trace) < 2:
        raise ValueError("observation stream ended before two samples were received")
    observed = np.array(observed_cols).T
    # Masked-out observed entries are carried forward so the record stays finite.
    for row in observed:
        valid = np.isfinite(row)
        if not valid.any():
            row[:] = 0.0
            continue
        idx = np.where(valid, np.arange(row.size), 0)
        np.maximum.accumulate(idx, out=idx)
        row[:] = row[idx]
        row[: np.argmax(valid)] = row[np.argmax(valid)]
    data = np.vstack([observed, np.array(setpoints).T])
    executed = Interaction(data, rates.sample_hz, layout, executed=True)
    return LoopResult(executed, np.array(trace), plans)
