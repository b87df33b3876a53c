"""Gaussian basis functions over phase and per-DoF least-squares decomposition."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from bipkit.errors import NumericalWarning, UnderdeterminedError
from bipkit.interaction import Interaction, phase_grid

DEFAULT_BASIS_COUNT = 15
# Centers extend this many spacings past each end of [0, 1]; without the
# margin the fit rings near the ends and the phase slope there is wrong.
DEFAULT_MARGIN = 3.0


@dataclass(frozen=True)
class BasisConfig:
    count: int
    centers: tuple[float, ...]
    width: float

    def __post_init__(self):
        centers = tuple(float(c) for c in self.centers)
        object.__setattr__(self, "centers", centers)
        if self.count < 2:
            raise ValueError("a basis needs at least 2 functions")
        if len(centers) != self.count:
            raise ValueError(f"expected {self.count} centers, got {len(centers)}")
        if any(b <= a for a, b in zip(centers, centers[1:])):
            raise ValueError("basis centers must be strictly increasing")
        if not self.width > 0:
            raise ValueError("basis width must be positive")

    @classmethod
    def uniform(cls, count: int = DEFAULT_BASIS_COUNT, margin: float | None = None) -> "BasisConfig":
        """Evenly spaced centers, width equal to the spacing.

        ``margin`` spacings of the grid lie outside [0, 1] on each side;
        ``margin=0`` puts the first and last centers exactly on 0 and 1.
        The default is DEFAULT_MARGIN, reduced for small counts so that at
        least two spacings remain inside [0, 1].
        """
        if count < 2:
            raise ValueError("a basis needs at least 2 functions")
        if margin is None:
            margin = min(DEFAULT_MARGIN, max(0.0, (count - 3) / 2.0))
        if margin < 0 or count - 1 - 2 * margin <= 0:
            raise ValueError(f"margin {margin} leaves no centers inside [0, 1] for {count} functions")
        spacing = 1.0 / (count - 1 - 2 * margin)
        centers = -margin * spacing + spacing * np.arange(count)
        return cls(count, tuple(centers), spacing)

    @property
    def center_array(self) -> np.ndarray:
        return np.asarray(self.centers)


def basis_matrix(phases, cfg: BasisConfig) -> np.ndarray:
    """Rows of basis activations, one row per phase (shape len(phases) x count)."""
    diff = np.asarray(phases, dtype=float).reshape(-1, 1) - cfg.center_array
    return np.exp(-(diff**2) / (2.0 * cfg.width**2))


def basis_derivative_matrix(phases, cfg: BasisConfig) -> np.ndarray:
    diff = np.asarray(phases, dtype=float).reshape(-1, 1) - cfg.center_array
    return -diff / cfg.width**2 * np.exp(-(diff**2) / (2.0 * cfg.width**2))


def basis_row(phase: float, cfg: BasisConfig) -> np.ndarray:
    return basis_matrix([phase], cfg)[0]


def basis_derivative_row(phase: float, cfg: BasisConfig) -> np.ndarray:
    """d/dphase of :func:`basis_row`."""
    return basis_derivative_matrix([phase], cfg)[0]


def decompose(trajectory, cfg: BasisConfig) -> np.ndarray:
    """Least-squares basis weights for a trajectory sampled uniformly in phase.

    Returns the minimum-norm solution. A rank-deficient design still yields a
    solution but emits a NumericalWarning.
    """
    y = np.asarray(trajectory, dtype=float)
    T = y.shape[0]
    if T < cfg.count:
        raise UnderdeterminedError(f"{T} samples cannot determine {cfg.count} basis weights")
    design = basis_matrix(phase_grid(T), cfg)
    weights, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < cfg.count:
        warnings.warn(
            f"basis design has rank {rank} < {cfg.count}; using pseudo-inverse solution",
            NumericalWarning,
            stacklevel=2,
        )
    return weights


def reconstruct(weights, phases, cfg: BasisConfig) -> np.ndarray:
    return basis_matrix(phases, cfg) @ np.asarray(weights, dtype=float)


@dataclass(frozen=True)
class WeightVector:
    """Per-DoF weight blocks, concatenated in layout order when flattened."""

    per_dof: tuple[np.ndarray, ...]

    def __post_init__(self):
        blocks = []
        for block in self.per_dof:
            arr = np.array(block, dtype=float, copy=True)
            if not np.all(np.isfinite(arr)):
                raise ValueError("weights must be finite")
            arr.setflags(write=False)
            blocks.append(arr)
        object.__setattr__(self, "per_dof", tuple(blocks))

    @property
    def sizes(self) -> list[int]:
        return [len(b) for b in self.per_dof]

    def flatten(self) -> np.ndarray:
        return np.concatenate(self.per_dof)

    def __len__(self):
        return sum(self.sizes)

    @classmethod
    def from_flat(cls, flat, sizes: Sequence[int]) -> "WeightVector":
        flat = np.asarray(flat, dtype=float)
        if flat.shape[0] != sum(sizes):
            raise ValueError(f"flat weights have length {flat.shape[0]}, expected {sum(sizes)}")
        return cls(tuple(np.split(flat, np.cumsum(sizes)[:-1])))


def weight_offsets(cfgs: Sequence[BasisConfig]) -> np.ndarray:
    """Start index of each DoF's block in the flattened weight vector, plus the total."""
    return np.concatenate([[0], np.cumsum([c.count for c in cfgs])])


def decompose_interaction(interaction: Interaction, cfgs: Sequence[BasisConfig]) -> WeightVector:
    if len(cfgs) != interaction.layout.dof_count:
        raise ValueError(f"need {interaction.layout.dof_count} basis configs, got {len(cfgs)}")
    blocks = []
    for d, (row, cfg) in enumerate(zip(interaction.data, cfgs)):
        try:
            blocks.append(decompose(row, cfg))
        except UnderdeterminedError as exc:
            raise UnderdeterminedError(f"DoF {d} ({interaction.layout.names[d]}): {exc}") from exc
    return WeightVector(tuple(blocks))


def reconstruct_interaction(weights: WeightVector, phases, cfgs: Sequence[BasisConfig]) -> np.ndarray:
    """D x len(phases) matrix reconstructed from per-DoF weights."""
    return np.vstack([reconstruct(w, phases, c) for w, c in zip(weights.per_dof, cfgs)])
