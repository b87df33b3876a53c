"""Evaluation: time-to-completion, correlation structure, rank tests and phase tracking."""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import ndtr
from scipy.stats import rankdata

from bipkit.basis import basis_matrix
from bipkit.errors import DegenerateDataWarning, InsufficientDataError, LayoutError
from bipkit.filter import NoiseConfig, observation_phase
from bipkit.interaction import Interaction, PartialObservation
from bipkit.prior import PriorModel

DEFAULT_TTC_WINDOW_S = 2.0
DEFAULT_TTC_THRESHOLD = 0.001
HISTOGRAM_BINS = 20
EXACT_MWU_LIMIT = 8


@dataclass(frozen=True)
class CompletionResult:
    ratio: float
    completed: bool
    index: int  # first window start after which every window is still; T when never


def time_to_completion(
    interaction: Interaction,
    window_s: float = DEFAULT_TTC_WINDOW_S,
    thresholds: tuple[float, float] = (DEFAULT_TTC_THRESHOLD, DEFAULT_TTC_THRESHOLD),
) -> CompletionResult:
    """Earliest window start from which every DoF's windowed variance stays below its group threshold.

    Variance is the population variance within each window. ``thresholds``
    gives the observed and controlled group thresholds.
    """
    T = interaction.length
    w = int(round(window_s * interaction.sample_rate))
    if w < 2:
        raise ValueError("window must span at least 2 samples")
    if w >= T:
        raise ValueError(f"window of {w} samples is not shorter than the interaction ({T} samples)")
    layout = interaction.layout
    limits = np.empty(layout.dof_count)
    limits[layout.observed] = thresholds[0]
    limits[layout.controlled] = thresholds[1]

    variances = sliding_window_view(interaction.data, w, axis=1).var(axis=-1)  # D x (T - w + 1)
    still = np.all(variances < limits[:, None], axis=0)
    if not still[-1]:
        return CompletionResult(1.0, False, T)
    moving = np.flatnonzero(~still)
    index = 0 if moving.size == 0 else int(moving[-1]) + 1
    return CompletionResult(index / T, True, index)


def pearson_matrix(interaction: Interaction) -> np.ndarray:
    """Pairwise Pearson r across DoFs; constant DoFs get a zero row/column and unit diagonal."""
    data = interaction.data
    if data.shape[1] < 3:
        raise InsufficientDataError("Pearson correlation needs at least 3 samples")
    centered = data - data.mean(axis=1, keepdims=True)
    norms = np.sqrt(np.einsum("ij,ij->i", centered, centered))
    flat = norms <= 1e-12 * np.maximum(np.abs(data).max(axis=1), 1.0)
    if flat.any():
        names = [interaction.layout.names[i] for i in np.flatnonzero(flat)]
        warnings.warn(f"constant DoFs have no correlation: {', '.join(names)}", DegenerateDataWarning, stacklevel=2)
    safe = np.where(flat, 1.0, norms)
    r = (centered @ centered.T) / np.outer(safe, safe)
    r[flat, :] = 0.0
    r[:, flat] = 0.0
    r = np.clip(0.5 * (r + r.T), -1.0, 1.0)
    np.fill_diagonal(r, 1.0)
    return r


def constant_dofs(interaction: Interaction) -> list[int]:
    data = interaction.data
    spread = data.max(axis=1) - data.min(axis=1)
    return [int(i) for i in np.flatnonzero(spread == 0)]


@dataclass(frozen=True)
class CorrelationHistogram:
    counts: np.ndarray
    edges: np.ndarray
    skipped: int

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def mass_beyond(self, level: float) -> float:
        """Fraction of windows in bins lying entirely at |r| >= level."""
        if self.total == 0:
            return 0.0
        lo, hi = self.edges[:-1], self.edges[1:]
        outer = (lo >= level - 1e-12) | (hi <= -level + 1e-12)
        return float(self.counts[outer].sum() / self.total)


def _windowed_corr(x: np.ndarray, y: np.ndarray, window: int) -> tuple[np.ndarray, np.ndarray]:
    xs = sliding_window_view(x, window)
    ys = sliding_window_view(y, window)
    xc = xs - xs.mean(axis=1, keepdims=True)
    yc = ys - ys.mean(axis=1, keepdims=True)
    sxx = np.einsum("ij,ij->i", xc, xc)
    syy = np.einsum("ij,ij->i", yc, yc)
    sxy = np.einsum("ij,ij->i", xc, yc)
    valid = (sxx > 0) & (syy > 0)
    r = np.zeros_like(sxy)
    r[valid] = sxy[valid] / np.sqrt(sxx[valid] * syy[valid])
    return np.clip(r, -1.0, 1.0), valid


def sliding_corr_histogram(
    interaction: Interaction, dof_pair: tuple[int, int], window: int, bins: int = HISTOGRAM_BINS
) -> CorrelationHistogram:
    """Pearson r of ``dof_pair`` in every window position, binned over [-1, 1].

    Windows where either DoF is constant are skipped and counted separately.
    """
    if window < 3:
        raise ValueError("window must span at least 3 samples")
    if window > interaction.length:
        raise ValueError(f"window of {window} samples exceeds the interaction length {interaction.length}")
    i, j = dof_pair
    r, valid = _windowed_corr(interaction.data[i], interaction.data[j], window)
    edges = np.linspace(-1.0, 1.0, bins + 1)
    counts, _ = np.histogram(r[valid], bins=edges)
    return CorrelationHistogram(counts, edges, int((~valid).sum()))


def mann_whitney_u(sample_a, sample_b) -> tuple[float, float]:
    """Two-sided Mann-Whitney U test; returns (U of ``sample_a``, p-value).

    Both samples of size <= 8 use exact enumeration over all splits of the
    pooled ranks; larger samples use the normal approximation with tie and
    continuity corrections.
    """
    a = np.asarray(sample_a, dtype=float).ravel()
    b = np.asarray(sample_b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise InsufficientDataError("both samples must be nonempty")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("samples must be finite")
    n, m = a.size, b.size
    ranks = rankdata(np.concatenate([a, b]))
    u = float(ranks[:n].sum() - n * (n + 1) / 2.0)
    mean_u = n * m / 2.0
    deviation = abs(u - mean_u)

    if n <= EXACT_MWU_LIMIT and m <= EXACT_MWU_LIMIT:
        extreme = total = 0
        offset = n * (n + 1) / 2.0
        for idx in itertools.combinations(range(n + m), n):
            total += 1
            if abs(ranks[list(idx)].sum() - offset - mean_u) >= deviation - 1e-9:
                extreme += 1
        return u, min(1.0, extreme / total)

    _, tie_counts = np.unique(ranks, return_counts=True)
    N = n + m
    tie_term = float((tie_counts**3 - tie_counts).sum()) / (N * (N - 1))
    var_u = n * m / 12.0 * ((N + 1) - tie_term)
    if var_u <= 0:
        return u, 1.0
    z = max(deviation - 0.5, 0.0) / math.sqrt(var_u)
    return u, float(min(1.0, 2.0 * ndtr(-z)))


@dataclass(frozen=True)
class PhaseError:
    rmse: float
    terminal: float


def phase_error(phase_trace, ground_truth, active: slice | None = None) -> PhaseError:
    est = np.asarray(phase_trace, dtype=float)
    if est.ndim == 2:
        est = est[:, 0]
    truth = np.asarray(ground_truth, dtype=float)
    if est.shape != truth.shape:
        raise ValueError(f"trace has {est.shape[0]} entries but ground truth has {truth.shape[0]}")
    if active is not None:
        est, truth = est[active], truth[active]
    if est.size == 0:
        raise ValueError("empty span")
    diff = est - truth
    return PhaseError(float(np.sqrt(np.mean(diff**2))), float(abs(diff[-1])))


@dataclass(frozen=True)
class GridPosterior:
    phases: np.ndarray
    velocities: np.ndarray
    posterior: np.ndarray  # ticks x phases x velocities

    def map_trace(self) -> np.ndarray:
        """Phase of the joint posterior mode at every tick."""
        flat = self.posterior.reshape(self.posterior.shape[0], -1).argmax(axis=1)
        return self.phases[flat // self.velocities.size]

    def phase_marginals(self) -> np.ndarray:
        return self.posterior.sum(axis=2)


def _shift_matrix(grid: np.ndarray, shift: float, sd: float, closed: bool = True) -> np.ndarray:
    """Transition on ``grid``: move by ``shift`` then blur by ``sd``.

    With ``closed`` the columns are renormalized, so mass that would leave the
    grid piles up at its edges. Otherwise each column is normalized over the
    grid's lattice extended past both ends and mass leaving the grid is lost.
    """
    spacing = grid[1] - grid[0]
    sd = max(sd, 0.5 * spacing)
    target = grid[None, :] + shift  # column j moves to grid[j] + shift
    kernel = np.exp(-0.5 * ((grid[:, None] - target) / sd) ** 2)
    if closed:
        return kernel / kernel.sum(axis=0, keepdims=True)
    pad = int(math.ceil((abs(shift) + 10.0 * sd) / spacing)) + 1
    lattice = grid[0] + spacing * np.arange(-pad, grid.size + pad)
    total = np.exp(-0.5 * ((lattice[:, None] - target) / sd) ** 2).sum(axis=0, keepdims=True)
    return kernel / total


def grid_phase_oracle(
    model: PriorModel,
    observations: Sequence[PartialObservation],
    noise: NoiseConfig,
    phase_bins: int = 200,
    velocity_bins: int = 50,
    max_velocity: float | None = None,
    prior: np.ndarray | None = None,
) -> GridPosterior:
    """Histogram Bayes filter over (phase, phase velocity) with weights fixed at the prior mean.

    The transition mirrors the filter's constant-velocity model with its
    phase-block process noise (treated as separable); the likelihood is the
    Gaussian measurement model of the single observed DoF. Phase mass carried
    past the end of the grid leaves it instead of piling up in the last cell,
    where it would dominate the mode once observations stop carrying phase
    information.
    """
    layout = model.layout
    if layout.observed_count != 1:
        raise LayoutError("the grid oracle supports exactly one observed DoF")
    if phase_bins < 2 or velocity_bins < 2:
        raise ValueError("grid needs at least 2 cells along each axis")
    if noise.r_per_dof is None:
        raise ValueError("noise config has no measurement variances")
    vmax = 3.0 * model.phase_vel0 if max_velocity is None else max_velocity
    if not vmax > 0:
        raise ValueError("velocity grid must have a positive extent")

    phases = np.linspace(0.0, 1.05, phase_bins)
    velocities = np.linspace(0.0, vmax, velocity_bins)
    dt = 1.0
    w_obs = model.w0.per_dof[0]
    predicted = basis_matrix([observation_phase(p) for p in phases], model.basis[0]) @ w_obs
    r = float(noise.r_per_dof[0])

    phase_moves = [
        _shift_matrix(phases, v * dt, math.sqrt(noise.phase_block(dt, v)[0, 0]), closed=False) for v in velocities
    ]
    # Velocity noise is taken at the prior speed so the blur is one matrix.
    velocity_move = _shift_matrix(velocities, 0.0, math.sqrt(noise.phase_block(dt, model.phase_vel0)[1, 1]))

    if prior is None:
        sd_phase = math.sqrt(model.Sigma0[0, 0])
        sd_vel = math.sqrt(model.Sigma0[1, 1])
        p_phase = np.exp(-0.5 * ((phases - model.phase0) / max(sd_phase, phases[1])) ** 2)
        p_vel = np.exp(-0.5 * ((velocities - model.phase_vel0) / max(sd_vel, velocities[1] - velocities[0])) ** 2)
        belief = np.outer(p_phase, p_vel)
    else:
        belief = np.array(prior, dtype=float)
        if belief.shape != (phase_bins, velocity_bins):
            raise ValueError("prior must match the grid shape")
    belief /= belief.sum()

    out = np.empty((len(observations), phase_bins, velocity_bins))
    for t, obs in enumerate(observations):
        moved = np.empty_like(belief)
        for j in range(velocity_bins):
            moved[:, j] = phase_moves[j] @ belief[:, j]
        belief = moved @ velocity_move.T
        if obs.mask[0]:
            lik = np.exp(-0.5 * (obs.values[0] - predicted) ** 2 / r)
            belief = belief * lik[:, None]
        total = belief.sum()
        if not total > 0:
            raise FloatingPointError(f"grid posterior vanished at tick {t}")
        belief = belief / total
        out[t] = belief
    return GridPosterior(phases, velocities, out)


@dataclass(frozen=True)
class TestStat:
    name: str
    statistic: float
    p_value: float


@dataclass
class EvalReport:
    ttc: dict[str, CompletionResult]
    pearson: dict[str, np.ndarray]
    phase_trace: dict[str, np.ndarray] = field(default_factory=dict)
    test_stats: list[TestStat] = field(default_factory=list)
    groups: dict[str, str] = field(default_factory=dict)

    def group_ratios(self) -> dict[str, list[float]]:
        out: dict[str, list[float]] = {}
        for name, res in sorted(self.ttc.items()):
            out.setdefault(self.groups.get(name, "all"), []).append(res.ratio)
        return out

    def to_dict(self) -> dict:
        ratios = self.group_ratios()
        return {
            "runs": [
                {
                    "scenario": name,
                    "group": self.groups.get(name, "all"),
                    "ttc_ratio": res.ratio,
                    "completed": res.completed,
                }
                for name, res in sorted(self.ttc.items())
            ],
            "groups": {
                g: {"n": len(v), "mean_ttc_ratio": float(np.mean(v)), "var_ttc_ratio": _sample_var(v)}
                for g, v in ratios.items()
            },
            "tests": [{"name": t.name, "statistic": t.statistic, "p_value": t.p_value} for t in self.test_stats],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def metrics_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["metric", "scenario", "value"])
        for name, res in sorted(self.ttc.items()):
            writer.writerow(["ttc_ratio", name, repr(res.ratio)])
            writer.writerow(["completed", name, int(res.completed)])
        for g, v in self.group_ratios().items():
            writer.writerow(["mean_ttc_ratio", g, repr(float(np.mean(v)))])
            writer.writerow(["var_ttc_ratio", g, repr(_sample_var(v))])
        for t in self.test_stats:
            writer.writerow([f"{t.name}_statistic", "all", repr(t.statistic)])
            writer.writerow([f"{t.name}_p_value", "all", repr(t.p_value)])
        return buf.getvalue()


def _sample_var(values: Sequence[float]) -> float:
    return float(np.var(values, ddof=1)) if len(values) > 1 else 0.0


def evaluate_runs(
    runs: dict[str, Interaction],
    groups: dict[str, str] | None = None,
    window_s: float = DEFAULT_TTC_WINDOW_S,
    thresholds: tuple[float, float] = (DEFAULT_TTC_THRESHOLD, DEFAULT_TTC_THRESHOLD),
) -> EvalReport:
    """TTC and Pearson matrices per run, plus a rank test when exactly two groups are present."""
    if not runs:
        raise InsufficientDataError("no runs to evaluate")
    groups = dict(groups or {})
    ttc, pearson = {}, {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateDataWarning)
        for name, interaction in runs.items():
            ttc[name] = time_to_completion(interaction, window_s, thresholds)
            pearson[name] = pearson_matrix(interaction)
    report = EvalReport(ttc, pearson, groups=groups)
    ratios = report.group_ratios()
    if len(ratios) == 2:
        (ga, a), (gb, b) = sorted(ratios.items())
        u, p = mann_whitney_u(a, b)
        report.test_stats.append(TestStat(f"mann_whitney_{ga}_vs_{gb}", u, p))
    return report
