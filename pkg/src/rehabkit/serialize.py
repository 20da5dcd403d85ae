"""Versioned on-disk formats: models and run traces.

Model documents are JSON with an explicit schema tag; floats are written
with shortest round-trip precision so a load-save cycle is bit-exact.
Traces are columnar text (CSV with a commented meta header), one row per
control tick, also round-trip exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .dmp import DmpModel
from .motion import Pose
from .safety import GmrModel

DMP_SCHEMA = "rehabkit.dmp-model/1"
GMR_SCHEMA = "rehabkit.gmr-model/1"
TRACE_SCHEMA = "rehabkit.trace/1"


class SchemaError(ValueError):
    """Unknown or malformed document schema."""


def _floats(a) -> list:
    arr = np.asarray(a, dtype=float)
    return [float(x) for x in arr.reshape(-1)]


def _pose_doc(p: Pose) -> dict:
    return {"position": _floats(p.position),
            "orientation": _floats(p.orientation)}


def _pose_from(doc: dict) -> Pose:
    return Pose(np.array(doc["position"]), np.array(doc["orientation"]))


def save_dmp_model(model: DmpModel, path) -> None:
    doc = {
        "schema": DMP_SCHEMA,
        "n_basis": model.n_basis,
        "pos_weights": [_floats(row) for row in model.pos_weights],
        "ori_weights": [_floats(row) for row in model.ori_weights],
        "start": _pose_doc(model.start),
        "goal": _pose_doc(model.goal),
        "demo_duration": float(model.demo_duration),
        "demo_limb_m": float(model.demo_limb_m),
        "frame_id": model.frame_id,
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_dmp_model(path) -> DmpModel:
    doc = _load_doc(path, DMP_SCHEMA)
    try:
        return DmpModel(
            n_basis=int(doc["n_basis"]),
            pos_weights=np.array(doc["pos_weights"], dtype=float),
            ori_weights=np.array(doc["ori_weights"], dtype=float),
            start=_pose_from(doc["start"]),
            goal=_pose_from(doc["goal"]),
            demo_duration=float(doc["demo_duration"]),
            demo_limb_m=float(doc["demo_limb_m"]),
            frame_id=str(doc.get("frame_id", "body")),
        )
    except (KeyError, TypeError) as e:
        raise SchemaError(f"{path}: malformed motion model ({e})") from e


def save_gmr_model(model: GmrModel, path) -> None:
    doc = {
        "schema": GMR_SCHEMA,
        "weights": _floats(model.weights),
        "means": [_floats(m) for m in model.means],
        "covariances": [[_floats(row) for row in c] for c in model.covariances],
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_gmr_model(path) -> GmrModel:
    doc = _load_doc(path, GMR_SCHEMA)
    try:
        return GmrModel(
            weights=np.array(doc["weights"], dtype=float),
            means=np.array(doc["means"], dtype=float),
            covariances=np.array(doc["covariances"], dtype=float),
        )
    except (KeyError, TypeError) as e:
        raise SchemaError(f"{path}: malformed corridor model ({e})") from e


def _load_doc(path, expected_schema: str) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path}: not valid JSON ({e})") from e
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: expected a JSON object")
    schema = doc.get("schema")
    if schema != expected_schema:
        raise SchemaError(
            f"{path}: schema {schema!r} not supported "
            f"(expected {expected_schema!r})")
    return doc


def write_trace(trace, path) -> None:
    """Columnar text export: '# key=value' meta lines, header, data rows.

    Floats are rendered with repr (shortest round-trip form), so identical
    runs produce byte-identical files and read_trace recovers exact values.
    """
    lines = [f"# schema={TRACE_SCHEMA}"]
    for key in sorted(trace.meta):
        lines.append(f"# {key}={trace.meta[key]}")
    lines.append(",".join(trace.columns))
    for i in range(len(trace)):
        cells = []
        for name in trace.columns:
            v = trace.data[name][i]
            if isinstance(v, str):
                cells.append(v)
            elif isinstance(v, (int, np.integer)):
                cells.append(str(int(v)))
            else:
                cells.append(repr(float(v)))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def read_trace(path):
    """Inverse of write_trace."""
    from .sim import SimTrace

    meta = {}
    header = None
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition("=")
            meta[key] = value
            continue
        if header is None:
            header = line.split(",")
            continue
        rows.append(line.split(","))
    if header is None:
        raise SchemaError(f"{path}: no header row")
    if meta.get("schema") != TRACE_SCHEMA:
        raise SchemaError(f"{path}: schema {meta.get('schema')!r} not supported")
    meta.pop("schema", None)
    data = {}
    for j, name in enumerate(header):
        col = [r[j] for r in rows]
        if name in ("tick",):
            data[name] = np.array([int(c) for c in col], dtype=np.int64)
        elif name in ("safety_mode",):
            data[name] = np.array(col, dtype=object)
        else:
            data[name] = np.array([float(c) for c in col], dtype=float)
    return SimTrace(columns=tuple(header), data=data, meta=meta)
