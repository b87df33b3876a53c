"""Interaction trajectories, DoF layout, phase mapping and the text file format.

An interaction is stored as a D x T matrix: one row per degree of freedom,
one column per sample. Observed (human) DoFs come first, controlled (robot)
DoFs after them.

File format::

    D_o D_c T sample_rate [executed=true]
    name_1,name_2,...,name_D
    unit_1,unit_2,...,unit_D
    v_1,v_2,...,v_D          <- sample 0
    ...                      <- T lines in total
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from bipkit.errors import InvalidTrajectoryError, LayoutError, ParseError


@dataclass(frozen=True)
class DofLayout:
    observed_count: int
    controlled_count: int
    names: tuple[str, ...]
    units: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "units", tuple(self.units))
        if self.observed_count < 1 or self.controlled_count < 1:
            raise LayoutError("layout needs at least one observed and one controlled DoF")
        if len(self.names) != self.dof_count or len(self.units) != self.dof_count:
            raise LayoutError(
                f"expected {self.dof_count} names and units, got "
                f"{len(self.names)} names and {len(self.units)} units"
            )
        for label in self.names + self.units:
            if "," in label or "\n" in label:
                raise LayoutError(f"label {label!r} may not contain commas or newlines")

    @property
    def dof_count(self) -> int:
        return self.observed_count + self.controlled_count

    @property
    def observed(self) -> slice:
        return slice(0, self.observed_count)

    @property
    def controlled(self) -> slice:
        return slice(self.observed_count, self.dof_count)

    def observed_mask(self) -> np.ndarray:
        mask = np.zeros(self.dof_count, dtype=bool)
        mask[self.observed] = True
        return mask

    @classmethod
    def default(cls, observed_count: int, controlled_count: int) -> "DofLayout":
        names = [f"obs_{i}" for i in range(observed_count)]
        names += [f"ctl_{i}" for i in range(controlled_count)]
        return cls(observed_count, controlled_count, names, ["unit"] * len(names))


def _frozen(array) -> np.ndarray:
    out = np.array(array, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Interaction:
    """A D x T matrix of samples at a fixed sample rate."""

    data: np.ndarray
    sample_rate: float
    layout: DofLayout
    executed: bool = False

    def __post_init__(self):
        data = _frozen(self.data)
        if data.ndim != 2:
            raise InvalidTrajectoryError("interaction data must be a D x T matrix")
        if data.shape[0] != self.layout.dof_count:
            raise LayoutError(
                f"data has {data.shape[0]} rows but layout has {self.layout.dof_count} DoFs"
            )
        if data.shape[1] < 2:
            raise InvalidTrajectoryError("an interaction needs at least 2 samples")
        if not np.all(np.isfinite(data)):
            raise InvalidTrajectoryError("interaction data contains non-finite values")
        if not (self.sample_rate > 0 and math.isfinite(self.sample_rate)):
            raise InvalidTrajectoryError("sample_rate must be positive and finite")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "sample_rate", float(self.sample_rate))

    @property
    def length(self) -> int:
        return self.data.shape[1]

    @property
    def duration(self) -> float:
        return self.length / self.sample_rate

    @property
    def observed(self) -> np.ndarray:
        return self.data[self.layout.observed]

    @property
    def controlled(self) -> np.ndarray:
        return self.data[self.layout.controlled]

    def phases(self) -> np.ndarray:
        return phase_grid(self.length)

    def __eq__(self, other):
        if not isinstance(other, Interaction):
            return NotImplemented
        return (
            self.layout == other.layout
            and self.sample_rate == other.sample_rate
            and self.executed == other.executed
            and np.array_equal(self.data, other.data)
        )

    __hash__ = None


@dataclass(frozen=True)
class PartialObservation:
    """One tick of sensor data; entries where ``mask`` is False are ignored."""

    values: np.ndarray
    mask: np.ndarray = field(default=None)

    def __post_init__(self):
        values = _frozen(self.values)
        if self.mask is None:
            mask = np.isfinite(values)
        else:
            mask = np.array(self.mask, dtype=bool, copy=True)
        if mask.shape != values.shape:
            raise LayoutError("mask and values must have the same length")
        mask.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @property
    def any(self) -> bool:
        return bool(self.mask.any())


def phase_of(t, T: int):
    """Map sample index ``t`` of a ``T``-sample trajectory onto [0, 1]."""
    if T < 2:
        raise InvalidTrajectoryError(f"trajectory length must be >= 2, got {T}")
    return t / (T - 1)


def phase_grid(T: int) -> np.ndarray:
    if T < 2:
        raise InvalidTrajectoryError(f"trajectory length must be >= 2, got {T}")
    return np.arange(T) / (T - 1)


def _format_value(x: float) -> str:
    # repr gives the shortest string that round-trips exactly.
    return repr(float(x))


def format_interaction(interaction: Interaction) -> str:
    layout = interaction.layout
    header = (
        f"{layout.observed_count} {layout.controlled_count} "
        f"{interaction.length} {_format_value(interaction.sample_rate)}"
    )
    if interaction.executed:
        header += " executed=true"
    lines = [header, ",".join(layout.names), ",".join(layout.units)]
    for column in interaction.data.T:
        lines.append(",".join(_format_value(v) for v in column))
    return "\n".join(lines) + "\n"


def save_interaction(interaction: Interaction, path) -> None:
    text = format_interaction(interaction)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write interaction to {path}: {exc.strerror}") from exc


def parse_interaction(text: str, path=None) -> Interaction:
    lines = text.splitlines()
    if len(lines) < 3:
        raise ParseError("file needs a header, a names line and a units line", line=len(lines) + 1, path=path)

    tokens = lines[0].split()
    if len(tokens) not in (4, 5):
        raise ParseError("header must be 'D_o D_c T sample_rate [executed=true]'", line=1, path=path)
    try:
        d_obs, d_ctl, T = (int(tok) for tok in tokens[:3])
        rate = float(tokens[3])
    except ValueError:
        raise ParseError(f"malformed header {lines[0]!r}", line=1, path=path) from None
    executed = False
    if len(tokens) == 5:
        key, _, value = tokens[4].partition("=")
        if key != "executed" or value not in ("true", "false"):
            raise ParseError(f"unknown header flag {tokens[4]!r}", line=1, path=path)
        executed = value == "true"
    if d_obs < 1 or d_ctl < 1 or T < 2:
        raise ParseError("header requires D_o >= 1, D_c >= 1 and T >= 2", line=1, path=path)
    if not (rate > 0 and math.isfinite(rate)):
        raise ParseError("sample rate must be positive and finite", line=1, path=path)

    D = d_obs + d_ctl
    names = lines[1].split(",")
    units = lines[2].split(",")
    if len(names) != D:
        raise ParseError(f"expected {D} names, got {len(names)}", line=2, path=path)
    if len(units) != D:
        raise ParseError(f"expected {D} units, got {len(units)}", line=3, path=path)

    body = lines[3:]
    while body and not body[-1].strip():
        body.pop()
    if len(body) != T:
        raise ParseError(f"header declares {T} samples but found {len(body)}", line=4 + min(len(body), T), path=path)

    data = np.empty((D, T))
    for t, line in enumerate(body):
        lineno = t + 4
        fields = line.split(",")
        if len(fields) != D:
            raise ParseError(f"expected {D} values, got {len(fields)}", line=lineno, path=path)
        try:
            row = [float(f) for f in fields]
        except ValueError:
            raise ParseError(f"non-numeric value in {line!r}", line=lineno, path=path) from None
        if not all(math.isfinite(v) for v in row):
            raise ParseError("non-finite value", line=lineno, path=path)
        data[:, t] = row

    layout = DofLayout(d_obs, d_ctl, names, units)
    return Interaction(data, rate, layout, executed=executed)


def load_interaction(path) -> Interaction:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_interaction(text, path=os.fspath(path))


def check_same_layout(interactions: Sequence[Interaction]) -> DofLayout:
    """Return the shared layout, or raise LayoutError naming the first mismatch."""
    layout = interactions[0].layout
    for i, other in enumerate(interactions[1:], start=1):
        if other.layout != layout:
            raise LayoutError(f"interaction {i} has layout {other.layout} but interaction 0 has {layout}")
    return layout
