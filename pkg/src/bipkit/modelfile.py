"""JSON serialization of trained prior models.

Floats are written with their shortest round-trip representation and keys
in a fixed order, so saving the same model twice gives identical bytes.
"""

from __future__ import annotations

import json

import numpy as np

from bipkit.basis import BasisConfig, WeightVector
from bipkit.errors import ParseError
from bipkit.interaction import DofLayout
from bipkit.prior import PriorModel

FORMAT_VERSION = 1


def model_to_dict(model: PriorModel) -> dict:
    layout = model.layout
    return {
        "format_version": FORMAT_VERSION,
        "layout": {
            "observed_count": layout.observed_count,
            "controlled_count": layout.controlled_count,
            "names": list(layout.names),
            "units": list(layout.units),
        },
        "sample_rate": model.sample_rate,
        "demo_count": model.demo_count,
        "basis": [{"count": c.count, "centers": list(c.centers), "width": c.width} for c in model.basis],
        "phase0": model.phase0,
        "phase_vel0": model.phase_vel0,
        "w0": model.w0.flatten().tolist(),
        "Sigma0": model.Sigma0.tolist(),
        "dof_range": model.dof_range.tolist(),
    }


def model_from_dict(doc: dict) -> PriorModel:
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported model format version {version!r}")
    try:
        layout = DofLayout(**doc["layout"])
        basis = tuple(BasisConfig(b["count"], tuple(b["centers"]), b["width"]) for b in doc["basis"])
        w0 = WeightVector.from_flat(doc["w0"], [b.count for b in basis])
        return PriorModel(
            w0=w0,
            phase_vel0=float(doc["phase_vel0"]),
            Sigma0=np.array(doc["Sigma0"], dtype=float),
            basis=basis,
            layout=layout,
            sample_rate=float(doc["sample_rate"]),
            dof_range=np.array(doc["dof_range"], dtype=float),
            demo_count=int(doc["demo_count"]),
            phase0=float(doc.get("phase0", 0.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed model file: {exc}") from exc


def dumps_model(model: PriorModel) -> str:
    return json.dumps(model_to_dict(model), separators=(",", ":")) + "\n"


def save_model(model: PriorModel, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_model(model))


def load_model(path) -> PriorModel:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"not a JSON model file: {exc.msg}", line=exc.lineno, path=str(path)) from exc
    return model_from_dict(doc)

