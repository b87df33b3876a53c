"""Synthetic handshake interactions.

The robot (controlled DoFs) ramps from a rest pressure to an endpoint that
is a fixed linear function of where the human's hand ends up. The human
(observed DoFs) makes a minimum-jerk reach to that endpoint, starting a
little after the robot. Everything is a deterministic function of the
scenario parameters and the seed.

Sub-seeds are derived with ``numpy.random.SeedSequence(seed).spawn(n)``;
child ``i`` drives interaction ``i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from bipkit.interaction import DofLayout, Interaction

DEFAULT_SAMPLE_RATE = 30.0
DEFAULT_DURATION_S = 10.0
DEFAULT_NOISE_SD = 0.005
SPEED_RANGE = (0.8, 1.25)
ONSET_LAG_RANGE_S = (0.0, 0.2)
STATIC_REACTION_RANGE_S = (1.0, 2.5)

_HAND_START = np.array([0.55, 0.0, 0.85])
_HAND_LOW = np.array([0.25, -0.08, 1.00])
_HAND_HIGH = np.array([0.35, 0.08, 1.10])
_CONTROLLED_REST = 0.2
# Fixed seed for the coupling coefficients; never tied to a scenario seed.
_COUPLING_SEED = 20190601


def min_jerk(u):
    """10u^3 - 15u^4 + 6u^5 with u clamped to [0, 1]."""
    u = np.clip(u, 0.0, 1.0)
    return u**3 * (10.0 - 15.0 * u + 6.0 * u**2)


def linear_ramp(u):
    return np.clip(u, 0.0, 1.0)


PROFILES = {"min_jerk": min_jerk, "linear": linear_ramp}


def default_layout(observed_count: int = 3, controlled_count: int = 5) -> DofLayout:
    if observed_count == 3:
        names = ["hand_x", "hand_y", "hand_z"]
    else:
        names = [f"hand_{i}" for i in range(observed_count)]
    names += [f"pam_{i}" for i in range(controlled_count)]
    units = ["m"] * observed_count + ["mPa"] * controlled_count
    return DofLayout(observed_count, controlled_count, names, units)


@dataclass(frozen=True)
class HandshakeWorld:
    """Start poses, endpoint ranges and the observed -> controlled endpoint map.

    ``controlled endpoint = controlled_start + coupling @ u + offset`` where
    ``u`` is the observed endpoint normalized to [0, 1] over its range.
    """

    layout: DofLayout
    observed_start: np.ndarray
    observed_low: np.ndarray
    observed_high: np.ndarray
    controlled_start: np.ndarray
    coupling: np.ndarray
    offset: np.ndarray

    @classmethod
    def default(cls, layout: DofLayout | None = None) -> "HandshakeWorld":
        layout = layout or default_layout()
        n_obs, n_ctl = layout.observed_count, layout.controlled_count
        if n_obs == 3:
            start, low, high = _HAND_START, _HAND_LOW, _HAND_HIGH
        else:
            start = np.zeros(n_obs)
            low = np.full(n_obs, 0.2)
            high = np.full(n_obs, 0.5)

        rng = np.random.default_rng(_COUPLING_SEED)
        signs = np.where(np.arange(n_ctl) % 3 == 1, -1.0, 1.0)
        coupling = rng.uniform(-0.03, 0.03, size=(n_ctl, n_obs))
        dominant = np.arange(n_ctl) % n_obs
        coupling[np.arange(n_ctl), dominant] = signs * rng.uniform(0.2, 0.3, size=n_ctl)
        offset = signs * 0.1
        return cls(
            layout=layout,
            observed_start=start.copy(),
            observed_low=low.copy(),
            observed_high=high.copy(),
            controlled_start=np.full(n_ctl, _CONTROLLED_REST),
            coupling=coupling,
            offset=offset,
        )

    def normalize(self, observed_endpoint) -> np.ndarray:
        return (np.asarray(observed_endpoint, dtype=float) - self.observed_low) / (
            self.observed_high - self.observed_low
        )

    def controlled_endpoint(self, observed_endpoint) -> np.ndarray:
        return self.controlled_start + self.coupling @ self.normalize(observed_endpoint) + self.offset

    def dof_scale(self) -> np.ndarray:
        """Nominal per-DoF range used to scale sensor noise."""
        obs = np.maximum(np.abs(self.observed_high - self.observed_start), np.abs(self.observed_low - self.observed_start))
        ctl = np.abs(self.coupling).sum(axis=1) + np.abs(self.offset)
        return np.concatenate([obs, ctl])

    def sample_endpoint(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.observed_low, self.observed_high)

    def static_endpoints(self, count: int = 4) -> list[np.ndarray]:
        """Controlled endpoints of hand-crafted open-loop trajectories.

        Channel 0 is never actuated, and each trajectory leaves one more
        channel at rest, so some robot DoFs do not move at all.
        """
        n_ctl = self.layout.controlled_count
        corners = np.linspace(0.2, 0.8, count)
        out = []
        for i, u in enumerate(corners):
            observed = self.observed_low + u * (self.observed_high - self.observed_low)
            end = self.controlled_endpoint(observed)
            idle = (np.arange(n_ctl) == 0) | (np.arange(n_ctl) % 4 == (i + 1) % 4)
            end[idle] = self.controlled_start[idle]
            out.append(end)
        return out


@dataclass(frozen=True)
class ScenarioParams:
    """One synthetic handshake.

    ``endpoint`` is the human's terminal hand position (one value per
    observed DoF); the controlled endpoint follows from the world coupling.
    ``duration_s`` is the motion duration at ``speed_factor == 1``.
    ``noise_sd`` is relative to each DoF's nominal range. ``onset_lag_s``
    of None draws the human's lag behind the robot from the seed.
    """

    endpoint: np.ndarray
    speed_factor: float = 1.0
    pause_ticks: int = 0
    noise_sd: float = DEFAULT_NOISE_SD
    seed: int = 0
    duration_s: float = DEFAULT_DURATION_S
    layout: DofLayout = field(default_factory=default_layout)
    sample_rate: float = DEFAULT_SAMPLE_RATE
    hold_s: float = 0.0
    onset_lag_s: float | None = None
    moving: bool = True
    controlled_profile: str = "min_jerk"

    def __post_init__(self):
        object.__setattr__(self, "endpoint", np.asarray(self.endpoint, dtype=float))
        if self.endpoint.shape != (self.layout.observed_count,):
            raise ValueError(f"endpoint must have {self.layout.observed_count} entries")
        if not self.duration_s > 0 or not self.speed_factor > 0 or not self.sample_rate > 0:
            raise ValueError("duration, speed factor and sample rate must be positive")
        if self.pause_ticks < 0 or self.noise_sd < 0 or self.hold_s < 0:
            raise ValueError("pause, noise and hold must be non-negative")
        if self.controlled_profile not in PROFILES:
            raise ValueError(f"unknown profile {self.controlled_profile!r}")

    @property
    def motion_samples(self) -> int:
        return max(2, int(round(self.duration_s / self.speed_factor * self.sample_rate)))

    def to_dict(self) -> dict:
        return {
            "endpoint": [float(v) for v in self.endpoint],
            "speed_factor": self.speed_factor,
            "pause_ticks": self.pause_ticks,
            "noise_sd": self.noise_sd,
            "seed": self.seed,
            "duration_s": self.duration_s,
            "sample_rate": self.sample_rate,
            "hold_s": self.hold_s,
            "onset_lag_s": self.onset_lag_s,
            "moving": self.moving,
            "controlled_profile": self.controlled_profile,
        }


@dataclass(frozen=True)
class GeneratedInteraction:
    interaction: Interaction
    phase: np.ndarray  # ground-truth phase per sample
    active: slice  # samples belonging to the motion span
    params: ScenarioParams


def _ramp(start, end, progress) -> np.ndarray:
    start = np.asarray(start, dtype=float).reshape(-1, 1)
    end = np.asarray(end, dtype=float).reshape(-1, 1)
    return start + (end - start) * np.asarray(progress).reshape(1, -1)


def gen_handshake(params: ScenarioParams, world: HandshakeWorld | None = None) -> GeneratedInteraction:
    world = world or HandshakeWorld.default(params.layout)
    rng = np.random.default_rng(params.seed)
    lag_s = rng.uniform(*ONSET_LAG_RANGE_S) if params.onset_lag_s is None else params.onset_lag_s

    n_move = params.motion_samples
    n_hold = int(round(params.hold_s * params.sample_rate))
    T = params.pause_ticks + n_move + n_hold
    t = np.arange(T)

    active_t = (t - params.pause_ticks) / (n_move - 1)
    phase = np.clip(active_t, 0.0, 1.0)
    # The lag is fixed in phase so the shape is independent of speed.
    lag = min(lag_s / params.duration_s, 0.5)
    human_u = (active_t - lag) / (1.0 - lag)

    if params.moving:
        observed_end = params.endpoint
        controlled_end = world.controlled_endpoint(observed_end)
    else:
        observed_end = world.observed_start
        controlled_end = world.controlled_start
    observed = _ramp(world.observed_start, observed_end, min_jerk(human_u))
    controlled = _ramp(world.controlled_start, controlled_end, PROFILES[params.controlled_profile](active_t))
    data = np.vstack([observed, controlled])

    if params.noise_sd > 0:
        data = data + rng.normal(size=data.shape) * (params.noise_sd * world.dof_scale()).reshape(-1, 1)

    interaction = Interaction(data, params.sample_rate, params.layout)
    active = slice(params.pause_ticks, params.pause_ticks + n_move)
    return GeneratedInteraction(interaction, phase, active, params)


def child_seeds(seed: int, n: int) -> list[int]:
    """Independent integer seeds for ``n`` children of ``seed``."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def gen_demo_set(
    n: int,
    ranges: tuple[Sequence[float], Sequence[float]] | None = None,
    seed: int = 0,
    *,
    repetitions: int = 1,
    world: HandshakeWorld | None = None,
    layout: DofLayout | None = None,
    duration_s: float = DEFAULT_DURATION_S,
    sample_rate: float = DEFAULT_SAMPLE_RATE,
    noise_sd: float = DEFAULT_NOISE_SD,
    speed_range: tuple[float, float] = SPEED_RANGE,
    controlled_profile: str = "min_jerk",
) -> list[Interaction]:
    """``n`` target endpoints, each demonstrated ``repetitions`` times.

    Endpoints are drawn uniformly from ``ranges`` (low, high per observed
    DoF; defaults to the world's ranges). Repetitions of one endpoint differ
    by a small endpoint jitter, speed, onset lag and sensor noise.
    """
    if n < 2 and n * repetitions < 2:
        raise ValueError("a demonstration set needs at least 2 interactions")
    world = world or HandshakeWorld.default(layout)
    layout = world.layout
    low, high = (world.observed_low, world.observed_high) if ranges is None else map(np.asarray, ranges)
    low, high = np.asarray(low, dtype=float), np.asarray(high, dtype=float)

    demos = []
    for target_seed in child_seeds(seed, n):
        target_rng = np.random.default_rng(target_seed)
        endpoint = target_rng.uniform(low, high)
        for rep_seed in child_seeds(target_seed, repetitions):
            rng = np.random.default_rng(rep_seed)
            jitter = rng.normal(scale=0.02 * (high - low)) if repetitions > 1 else 0.0
            params = ScenarioParams(
                endpoint=np.clip(endpoint + jitter, low, high),
                speed_factor=float(rng.uniform(*speed_range)),
                noise_sd=noise_sd,
                seed=int(rng.integers(2**63)),
                duration_s=duration_s,
                layout=layout,
                sample_rate=sample_rate,
                controlled_profile=controlled_profile,
            )
            demos.append(gen_handshake(params, world).interaction)
    return demos


def gen_test_scenario(
    seed: int,
    speed: str = "normal",
    *,
    world: HandshakeWorld | None = None,
    duration_s: float = DEFAULT_DURATION_S,
    sample_rate: float = DEFAULT_SAMPLE_RATE,
    noise_sd: float = DEFAULT_NOISE_SD,
    pause_s: float = 0.0,
    hold_s: float = 0.0,
    endpoint=None,
) -> GeneratedInteraction:
    """A test interaction at a named speed: fast (2x), normal, slow (0.5x) or none."""
    world = world or HandshakeWorld.default()
    factors = {"fast": 2.0, "normal": 1.0, "slow": 0.5, "none": 1.0}
    if speed not in factors:
        raise ValueError(f"unknown speed {speed!r}")
    rng = np.random.default_rng(seed)
    if endpoint is None:
        endpoint = world.sample_endpoint(rng)
    params = ScenarioParams(
        endpoint=endpoint,
        speed_factor=factors[speed],
        pause_ticks=int(round(pause_s * sample_rate)),
        noise_sd=noise_sd,
        seed=int(rng.integers(2**63)),
        duration_s=duration_s,
        layout=world.layout,
        sample_rate=sample_rate,
        hold_s=hold_s,
        moving=speed != "none",
    )
    return gen_handshake(params, world)


def gen_static_trial(
    seed: int,
    static_endpoint,
    *,
    world: HandshakeWorld | None = None,
    total_s: float = 2.0 * DEFAULT_DURATION_S,
    duration_s: float = DEFAULT_DURATION_S,
    sample_rate: float = DEFAULT_SAMPLE_RATE,
    noise_sd: float = DEFAULT_NOISE_SD,
) -> Interaction:
    """An executed open-loop trial: the robot plays a fixed linear ramp.

    The human waits until the robot has revealed where it is going (a
    reaction delay), then reaches to a hand position of their choosing.
    """
    world = world or HandshakeWorld.default()
    rng = np.random.default_rng(seed)
    reaction_s = rng.uniform(*STATIC_REACTION_RANGE_S)
    speed = rng.uniform(*SPEED_RANGE)
    endpoint = world.sample_endpoint(rng)

    T = int(round(total_s * sample_rate))
    t = np.arange(T) / sample_rate
    robot_u = t / duration_s
    human_u = (t - reaction_s) / (duration_s / speed)
    observed = _ramp(world.observed_start, endpoint, min_jerk(human_u))
    controlled = _ramp(world.controlled_start, static_endpoint, linear_ramp(robot_u))
    data = np.vstack([observed, controlled])
    if noise_sd > 0:
        data = data + rng.normal(size=data.shape) * (noise_sd * world.dof_scale()).reshape(-1, 1)
    return Interaction(data, sample_rate, world.layout, executed=True)


def with_seed(params: ScenarioParams, seed: int) -> ScenarioParams:
    return replace(params, seed=seed)
