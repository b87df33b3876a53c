"""Run configuration: JSON file plus command-line overrides."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace

from bipkit.basis import DEFAULT_BASIS_COUNT
from bipkit.errors import ConfigError
from bipkit.evaluation import DEFAULT_TTC_THRESHOLD, DEFAULT_TTC_WINDOW_S
from bipkit.filter import (
    DEFAULT_Q_PHASE,
    DEFAULT_Q_PHASE_VEL,
    DEFAULT_Q_PHASE_VEL_REL,
    DEFAULT_RELATIVE_SD,
    NoiseConfig,
)
from bipkit.prior import PriorModel
from bipkit.response import DEFAULT_ALPHA, DEFAULT_BETA, LoopRates
from bipkit.simgen import DEFAULT_DURATION_S, DEFAULT_NOISE_SD, DEFAULT_SAMPLE_RATE


@dataclass(frozen=True)
class NoiseSettings:
    relative_sd: float = DEFAULT_RELATIVE_SD
    q_phase: float = DEFAULT_Q_PHASE
    q_phase_vel: float = DEFAULT_Q_PHASE_VEL
    q_phase_vel_rel: float = DEFAULT_Q_PHASE_VEL_REL
    q_weights: float = 0.0
    gate: float | None = None

    def build(self, model: PriorModel) -> NoiseConfig:
        return NoiseConfig.for_model(
            model,
            relative_sd=self.relative_sd,
            q_phase=self.q_phase,
            q_phase_vel=self.q_phase_vel,
            q_phase_vel_rel=self.q_phase_vel_rel,
            q_weights=self.q_weights,
            gate=self.gate,
        )


@dataclass(frozen=True)
class SimulationSettings:
    """What ``simulate`` writes: demonstrations, speed-tagged tests and static trials."""

    targets: int = 12
    repetitions: int = 3
    tests_per_speed: int = 5
    static_runs: int = 5
    observed_count: int = 3
    controlled_count: int = 5
    duration_s: float = DEFAULT_DURATION_S
    total_s: float = 2.0 * DEFAULT_DURATION_S
    noise_sd: float = DEFAULT_NOISE_SD

    def __post_init__(self):
        if self.targets * self.repetitions < 2:
            raise ConfigError("simulation needs at least 2 demonstrations")
        if min(self.tests_per_speed, self.static_runs) < 0:
            raise ConfigError("scenario counts must be non-negative")
        if not (0 < self.duration_s <= self.total_s):
            raise ConfigError("need 0 < duration_s <= total_s")


@dataclass(frozen=True)
class EvaluationSettings:
    window_s: float = DEFAULT_TTC_WINDOW_S
    observed_threshold: float = DEFAULT_TTC_THRESHOLD
    controlled_threshold: float = DEFAULT_TTC_THRESHOLD

    def __post_init__(self):
        if not (self.window_s > 0 and self.observed_threshold > 0 and self.controlled_threshold > 0):
            raise ConfigError("evaluation window and thresholds must be positive")

    @property
    def thresholds(self) -> tuple[float, float]:
        return (self.observed_threshold, self.controlled_threshold)


@dataclass(frozen=True)
class RunConfig:
    basis_count: int = DEFAULT_BASIS_COUNT
    rates: LoopRates = field(default_factory=lambda: LoopRates(sample_hz=DEFAULT_SAMPLE_RATE))
    noise: NoiseSettings = field(default_factory=NoiseSettings)
    simulation: SimulationSettings = field(default_factory=SimulationSettings)
    evaluation: EvaluationSettings = field(default_factory=EvaluationSettings)
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA
    seed: int = 0

    def __post_init__(self):
        if self.basis_count < 2:
            raise ConfigError("basis_count must be at least 2")
        if not (0 < self.alpha <= 1 and 0 <= self.beta <= 1):
            raise ConfigError("smoother gains need 0 < alpha <= 1 and 0 <= beta <= 1")
        if not (0 <= self.seed < 2**64):
            raise ConfigError("seed must be an unsigned 64-bit integer")

    def with_overrides(self, seed=None, basis_count=None, rates=None) -> "RunConfig":
        changes = {}
        if seed is not None:
            changes["seed"] = seed
        if basis_count is not None:
            changes["basis_count"] = basis_count
        if rates is not None:
            changes["rates"] = rates
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)


def _build(cls, doc, where: str):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    try:
        return cls(**doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where}: {exc}") from exc


def config_from_dict(doc: dict) -> RunConfig:
    doc = dict(doc)
    if "rates" in doc:
        doc["rates"] = _build(LoopRates, doc["rates"], "rates")
    if "noise" in doc:
        doc["noise"] = _build(NoiseSettings, doc["noise"], "noise")
    if "evaluation" in doc:
        doc["evaluation"] = _build(EvaluationSettings, doc["evaluation"], "evaluation")
    if "simulation" in doc:
        doc["simulation"] = _build(SimulationSettings, doc["simulation"], "simulation")
    return _build(RunConfig, doc, "config")


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
    return config_from_dict(doc)
