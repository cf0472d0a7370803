"""File formats: observation CSV, layout JSON and raw binary arrays.

Observations persist as UTF-8 CSV with header ``v,i,j,y`` (0-based indices,
values in decimal scientific notation that round-trips float64 exactly).
The layout sidecar is JSON with the block sizes and per-source family tags.
Arrays persist as a JSON shape header next to raw little-endian float64
bytes; factor triples reuse the same container.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .data import BlockLayout, ObservationSet
from .families import ExpFamilyModel, model_from_dict, model_to_dict
from .lowrank import ThinFactors

OBS_HEADER = "v,i,j,y"


class DataFormatError(ValueError):
    """A data file failed to parse."""


def save_layout(path, layout: BlockLayout, families=None) -> None:
    doc = {
        "d_u": layout.d_u,
        "d_vs": list(layout.d_vs),
        "families": [model_to_dict(m) for m in families] if families else None,
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_layout(path) -> tuple[BlockLayout, tuple[ExpFamilyModel, ...] | None]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        layout = BlockLayout(int(doc["d_u"]), tuple(doc["d_vs"]))
        families = doc.get("families")
        if families is not None:
            families = tuple(model_from_dict(d) for d in families)
        return layout, families
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"{path}: invalid layout file ({exc})") from exc


def save_observations(path, obs: ObservationSet) -> None:
    lines = [OBS_HEADER]
    for v, i, j, y in zip(obs.v, obs.i, obs.j, obs.y):
        lines.append(f"{v},{i},{j},{y:.17e}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def load_observations(path, layout: BlockLayout, families=None) -> ObservationSet:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or lines[0].strip() != OBS_HEADER:
        raise DataFormatError(f"{path}: line 1: expected header {OBS_HEADER!r}")
    vv, ii, jj, yy = [], [], [], []
    for num, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise DataFormatError(f"{path}: line {num}: expected 4 fields")
        try:
            vv.append(int(parts[0]))
            ii.append(int(parts[1]))
            jj.append(int(parts[2]))
            yy.append(float(parts[3]))
        except ValueError as exc:
            raise DataFormatError(f"{path}: line {num}: {exc}") from exc
    try:
        return ObservationSet(layout, np.array(vv, dtype=np.int64),
                              np.array(ii, dtype=np.int64),
                              np.array(jj, dtype=np.int64),
                              np.array(yy), families)
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


def save_arrays(prefix, arrays: dict[str, np.ndarray]) -> None:
    """Write named float64 arrays as ``prefix.json`` + ``prefix.bin``."""
    prefix = Path(prefix)
    header = {"dtype": "<f8", "order": "C", "arrays": []}
    blob = bytearray()
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(np.asarray(arr, dtype="<f8"))
        header["arrays"].append({"name": name, "shape": list(arr.shape)})
        blob.extend(arr.tobytes())
    prefix.with_suffix(".json").write_text(json.dumps(header, indent=2) + "\n",
                                           encoding="utf-8")
    prefix.with_suffix(".bin").write_bytes(bytes(blob))


def load_arrays(prefix) -> dict[str, np.ndarray]:
    prefix = Path(prefix)
    try:
        header = json.loads(prefix.with_suffix(".json").read_text(encoding="utf-8"))
        blob = prefix.with_suffix(".bin").read_bytes()
        out = {}
        offset = 0
        for entry in header["arrays"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(blob, dtype=header["dtype"], count=count,
                                offset=offset).reshape(shape)
            out[entry["name"]] = arr.copy()
            offset += count * 8
        return out
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"{prefix}: invalid array container ({exc})") from exc


def save_factors(prefix, factors: ThinFactors) -> None:
    save_arrays(prefix, {"u": factors.u, "sigma": factors.sigma, "v": factors.v})


def load_factors(prefix) -> ThinFactors:
    arrays = load_arrays(prefix)
    try:
        return ThinFactors(arrays["u"], arrays["sigma"], arrays["v"])
    except KeyError as exc:
        raise DataFormatError(f"{prefix}: missing factor array {exc}") from exc
