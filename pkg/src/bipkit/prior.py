"""Prior over the augmented state [phase, phase velocity, weights] learned from demonstrations."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from bipkit.basis import BasisConfig, WeightVector, decompose_interaction
from bipkit.errors import InsufficientDataError, LayoutError
from bipkit.interaction import DofLayout, Interaction, check_same_layout

PHASE_VARIANCE = 1e-4
PHASE_VELOCITY_VARIANCE_FLOOR = 1e-8


@dataclass(frozen=True)
class DemonstrationSet:
    weights: np.ndarray  # N x B, one row per demonstration
    lengths: np.ndarray
    sample_rate: float

    def __post_init__(self):
        W = np.array(self.weights, dtype=float)
        if W.ndim != 2 or W.shape[0] < 2:
            raise InsufficientDataError("need at least 2 demonstrations")
        if not np.all(np.isfinite(W)):
            raise ValueError("demonstration weights must be finite")
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "lengths", np.asarray(self.lengths, dtype=int))


@dataclass(frozen=True)
class PriorModel:
    """Gaussian prior p(s0) plus everything needed to run the filter on it.

    ``dof_range`` is the per-DoF spread (max - min) of the training data; it
    sets default measurement noise and scales evaluation tolerances.
    """

    w0: WeightVector
    phase_vel0: float
    Sigma0: np.ndarray
    basis: tuple[BasisConfig, ...]
    layout: DofLayout
    sample_rate: float
    dof_range: np.ndarray
    demo_count: int
    phase0: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "basis", tuple(self.basis))
        object.__setattr__(self, "Sigma0", np.asarray(self.Sigma0, dtype=float))
        object.__setattr__(self, "dof_range", np.asarray(self.dof_range, dtype=float))
        n = self.state_dim
        if self.Sigma0.shape != (n, n):
            raise ValueError(f"Sigma0 must be {n}x{n}, got {self.Sigma0.shape}")
        if len(self.basis) != self.layout.dof_count:
            raise LayoutError("one basis config per DoF is required")

    @property
    def weight_dim(self) -> int:
        return len(self.w0)

    @property
    def state_dim(self) -> int:
        return self.weight_dim + 2

    @property
    def mean(self) -> np.ndarray:
        return np.concatenate([[self.phase0, self.phase_vel0], self.w0.flatten()])

    @property
    def phase_block(self) -> np.ndarray:
        return self.Sigma0[:2, :2]

    @property
    def weight_cov(self) -> np.ndarray:
        return self.Sigma0[2:, 2:]


def weight_covariance(W) -> np.ndarray:
    """Unbiased sample covariance of the rows of W (divisor N - 1)."""
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] < 2:
        raise InsufficientDataError("covariance needs at least 2 rows")
    centered = W - W.mean(axis=0)
    cov = centered.T @ centered / (W.shape[0] - 1)
    return 0.5 * (cov + cov.T)


def collect_demonstrations(demos: Sequence[Interaction], cfgs: Sequence[BasisConfig]) -> DemonstrationSet:
    if len(demos) < 2:
        raise InsufficientDataError(f"need at least 2 demonstrations, got {len(demos)}")
    check_same_layout(demos)
    rate = demos[0].sample_rate
    for i, demo in enumerate(demos):
        if demo.sample_rate != rate:
            raise LayoutError(f"demonstration {i} sampled at {demo.sample_rate} Hz, expected {rate} Hz")
    W = np.vstack([decompose_interaction(demo, cfgs).flatten() for demo in demos])
    return DemonstrationSet(W, [demo.length for demo in demos], rate)


def learn_prior(demos: Sequence[Interaction], cfgs: Sequence[BasisConfig] | None = None) -> PriorModel:
    if not demos:
        raise InsufficientDataError("no demonstrations given")
    layout = demos[0].layout
    if cfgs is None:
        cfgs = [BasisConfig.uniform() for _ in range(layout.dof_count)]
    demo_set = collect_demonstrations(demos, cfgs)
    W = demo_set.weights

    w0 = WeightVector.from_flat(W.mean(axis=0), [c.count for c in cfgs])
    inv_lengths = 1.0 / demo_set.lengths
    phase_vel0 = float(inv_lengths.mean())

    B = W.shape[1]
    Sigma0 = np.zeros((B + 2, B + 2))
    Sigma0[0, 0] = PHASE_VARIANCE
    Sigma0[1, 1] = float(np.var(inv_lengths, ddof=1)) + PHASE_VELOCITY_VARIANCE_FLOOR
    Sigma0[2:, 2:] = weight_covariance(W)

    stacked = np.hstack([demo.data for demo in demos])
    dof_range = stacked.max(axis=1) - stacked.min(axis=1)

    return PriorModel(
        w0=w0,
        phase_vel0=phase_vel0,
        Sigma0=Sigma0,
        basis=tuple(cfgs),
        layout=layout,
        sample_rate=demo_set.sample_rate,
        dof_range=dof_range,
        demo_count=len(demos),
    )
