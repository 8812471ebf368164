"""On-disk formats: binary grids and projection weights, JSON-lines records.

Grid files are little-endian: magic "BEVG", u32 version=1, u32 H, u32 W,
u32 C, x_range and y_range as f64 pairs, then H*W*C f32 values row-major
by (row, col, channel). A JSON sidecar (same path + ".json") mirrors the
header for inspection. Projection files are magic "PROJ", u32 rows, u32
cols, the f32 matrix row-major, then the f32 bias. Proposals and
annotations are JSON-lines, one object per line, with the box laid out as
x, y, z, w, l, h, yaw, vx, vy.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .enhance import Projection
from .errors import DataFormatError
from .geometry import Box3D
from .grid import BevGrid, GridSpec
from .instances import Proposal
from .matching import InstancePair, PairSets
from .metrics import Annotation, Detection

GRID_MAGIC = b"BEVG"
GRID_VERSION = 1
PROJ_MAGIC = b"PROJ"

_GRID_HEADER = struct.Struct("<4sIIIIdddd")
_PROJ_HEADER = struct.Struct("<4sII")


def save_grid(grid: BevGrid, path: str | Path) -> None:
    """Write a grid and its JSON header sidecar. Values are rounded to f32."""
    path = Path(path)
    spec = grid.spec
    header = _GRID_HEADER.pack(
        GRID_MAGIC,
        GRID_VERSION,
        spec.height_cells,
        spec.width_cells,
        spec.channels,
        spec.x_range[0],
        spec.x_range[1],
        spec.y_range[0],
        spec.y_range[1],
    )
    path.write_bytes(header + grid.data.astype("<f4").tobytes())
    sidecar = {
        "magic": GRID_MAGIC.decode(),
        "version": GRID_VERSION,
        "height_cells": spec.height_cells,
        "width_cells": spec.width_cells,
        "channels": spec.channels,
        "x_range": list(spec.x_range),
        "y_range": list(spec.y_range),
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar, sort_keys=True, indent=2) + "\n")


def load_grid(path: str | Path) -> BevGrid:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < _GRID_HEADER.size:
        raise DataFormatError(f"{path}: truncated grid header")
    magic, version, h, w, c, x0, x1, y0, y1 = _GRID_HEADER.unpack_from(blob)
    if magic != GRID_MAGIC:
        raise DataFormatError(f"{path}: bad magic {magic!r}, expected {GRID_MAGIC!r}")
    if version != GRID_VERSION:
        raise DataFormatError(
            f"{path}: unsupported grid version {version}, expected {GRID_VERSION}"
        )
    expected = _GRID_HEADER.size + h * w * c * 4
    if len(blob) != expected:
        raise DataFormatError(
            f"{path}: payload is {len(blob)} bytes, header implies {expected}"
        )
    data = np.frombuffer(blob, dtype="<f4", offset=_GRID_HEADER.size).reshape(h, w, c)
    spec = GridSpec(h, w, c, (x0, x1), (y0, y1))
    return BevGrid(spec, data.astype(np.float64))


def save_projection(proj: Projection, path: str | Path) -> None:
    rows, cols = proj.matrix.shape
    header = _PROJ_HEADER.pack(PROJ_MAGIC, rows, cols)
    Path(path).write_bytes(
        header + proj.matrix.astype("<f4").tobytes() + proj.bias.astype("<f4").tobytes()
    )


def load_projection(path: str | Path) -> Projection:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < _PROJ_HEADER.size:
        raise DataFormatError(f"{path}: truncated projection header")
    magic, rows, cols = _PROJ_HEADER.unpack_from(blob)
    if magic != PROJ_MAGIC:
        raise DataFormatError(f"{path}: bad magic {magic!r}, expected {PROJ_MAGIC!r}")
    expected = _PROJ_HEADER.size + (rows * cols + rows) * 4
    if len(blob) != expected:
        raise DataFormatError(
            f"{path}: payload is {len(blob)} bytes, header implies {expected}"
        )
    matrix = np.frombuffer(blob, dtype="<f4", offset=_PROJ_HEADER.size, count=rows * cols)
    bias = np.frombuffer(blob, dtype="<f4", offset=_PROJ_HEADER.size + rows * cols * 4)
    return Projection(
        matrix.astype(np.float64).reshape(rows, cols), bias.astype(np.float64)
    )


def _box_to_record(box: Box3D) -> dict:
    return {
        "x": box.center[0],
        "y": box.center[1],
        "z": box.center[2],
        "w": box.size[0],
        "l": box.size[1],
        "h": box.size[2],
        "yaw": box.yaw,
        "vx": box.velocity[0],
        "vy": box.velocity[1],
    }


def _box_from_record(rec: dict) -> Box3D:
    return Box3D(
        center=(rec["x"], rec["y"], rec["z"]),
        size=(rec["w"], rec["l"], rec["h"]),
        yaw=rec["yaw"],
        velocity=(rec.get("vx", 0.0), rec.get("vy", 0.0)),
    )


def _write_jsonl(records: list[dict], path: str | Path) -> None:
    lines = [json.dumps(rec, sort_keys=True) for rec in records]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def _read_jsonl(path: str | Path) -> list[dict]:
    records = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
    return records


def save_proposals(proposals: list[Proposal], path: str | Path) -> None:
    _write_jsonl(
        [
            {
                **_box_to_record(p.box),
                "score": p.score,
                "class_id": p.class_id,
                "modality": p.modality,
            }
            for p in proposals
        ],
        path,
    )


def load_proposals(path: str | Path) -> list[Proposal]:
    proposals = []
    for i, rec in enumerate(_read_jsonl(path)):
        try:
            proposals.append(
                Proposal(
                    box=_box_from_record(rec),
                    score=rec["score"],
                    class_id=rec["class_id"],
                    modality=rec["modality"],
                )
            )
        except (KeyError, ValueError) as exc:
            raise DataFormatError(f"{path}: record {i}: {exc}") from exc
    return proposals


def save_annotations(annotations: list[Annotation], path: str | Path) -> None:
    _write_jsonl(
        [
            {
                **_box_to_record(a.box),
                "class_id": a.class_id,
                "visibility_token": a.visibility_token,
                "num_lidar_pts": a.num_lidar_pts,
            }
            for a in annotations
        ],
        path,
    )


def load_annotations(path: str | Path) -> list[Annotation]:
    annotations = []
    for i, rec in enumerate(_read_jsonl(path)):
        try:
            annotations.append(
                Annotation(
                    box=_box_from_record(rec),
                    class_id=rec["class_id"],
                    visibility_token=rec["visibility_token"],
                    num_lidar_pts=rec["num_lidar_pts"],
                )
            )
        except (KeyError, ValueError) as exc:
            raise DataFormatError(f"{path}: record {i}: {exc}") from exc
    return annotations


def save_detections(detections: list[Detection], path: str | Path) -> None:
    _write_jsonl(
        [
            {**_box_to_record(d.box), "class_id": d.class_id, "score": d.score}
            for d in detections
        ],
        path,
    )


def load_detections(path: str | Path) -> list[Detection]:
    detections = []
    for i, rec in enumerate(_read_jsonl(path)):
        try:
            detections.append(
                Detection(
                    box=_box_from_record(rec),
                    class_id=rec["class_id"],
                    score=rec["score"],
                )
            )
        except (KeyError, ValueError) as exc:
            raise DataFormatError(f"{path}: record {i}: {exc}") from exc
    return detections


def _pair_to_record(pair: InstancePair) -> dict:
    return {
        "kind": pair.kind,
        "anchor_idx": pair.anchor_idx,
        "guide_idx": pair.guide_idx,
        "similarity": pair.similarity,
        "classes": [pair.anchor.proposal.class_id, pair.guide.proposal.class_id],
    }


def pair_sets_to_dict(sets: PairSets) -> dict:
    return {
        "easy": [_pair_to_record(p) for p in sets.easy],
        "camera_hard": [_pair_to_record(p) for p in sets.camera_hard],
        "lidar_hard": [_pair_to_record(p) for p in sets.lidar_hard],
        "unmatched_lidar": sets.unmatched_lidar,
        "unmatched_camera": sets.unmatched_camera,
    }


def save_pair_sets(sets: PairSets, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(pair_sets_to_dict(sets), sort_keys=True, indent=2) + "\n"
    )


def save_json(obj: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def load_json(path: str | Path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: invalid JSON ({exc})") from exc
