"""Text formats for point clouds, box covers, grid masses and JSON reports."""

from __future__ import annotations

import json
import math
import re
from pathlib import Path

import numpy as np

from .ifs import BoxCover, PointCloud

POINTCLOUD_HEADER = "# pointcloud v1 dim={d} n={n} seed={seed}"
BOXCOVER_HEADER = "# boxcover v1 dim={d} depth={depth} n={n}"
GRIDMASS_HEADER = "# gridmass v1 dim={d} m={m}"
_HEADER_RE = re.compile(r"#\s*(\w+)\s+v(\d+)((?:\s+\w+=\S+)*)\s*$")


def _parse_header(line: str, kind: str) -> dict:
    match = _HEADER_RE.match(line.strip())
    if not match or match.group(1) != kind:
        raise ValueError(f"not a {kind} file: {line.strip()!r}")
    if match.group(2) != "1":
        raise ValueError(f"unsupported {kind} version {match.group(2)}")
    return dict(item.split("=", 1) for item in match.group(3).split())


def write_pointcloud(path, cloud: PointCloud) -> None:
    """One row per point, coordinates then weight, all with 17 significant digits."""
    header = POINTCLOUD_HEADER.format(d=cloud.d, n=cloud.n, seed="none" if cloud.seed is None else cloud.seed)
    data = np.column_stack([cloud.points, cloud.weights])
    np.savetxt(path, data, fmt="%.17g", header=header[2:], comments="# ")


def read_pointcloud(path) -> PointCloud:
    with open(path) as fh:
        meta = _parse_header(fh.readline(), "pointcloud")
        data = np.loadtxt(fh, ndmin=2)
    d, n = int(meta["dim"]), int(meta["n"])
    if data.shape != (n, d + 1):
        raise ValueError(f"expected {n} rows of {d + 1} columns, got {data.shape}")
    seed = None if meta.get("seed", "none") == "none" else int(meta["seed"])
    weights = data[:, d]
    # stored weights were normalized before writing; keep them bit-exact
    return PointCloud(data[:, :d], weights, seed)


def write_boxcover(path, cover: BoxCover) -> None:
    """``depth,i1,...,id`` rows of integer box corners (box side ``2^-depth``)."""
    boxes = np.asarray(cover.boxes, dtype=np.int64)
    header = BOXCOVER_HEADER.format(d=boxes.shape[1], depth=cover.depth, n=len(boxes))
    data = np.column_stack([np.full(len(boxes), cover.depth), boxes])
    np.savetxt(path, data, fmt="%d", delimiter=",", header=header[2:], comments="# ")


def read_boxcover(path) -> BoxCover:
    with open(path) as fh:
        meta = _parse_header(fh.readline(), "boxcover")
        data = np.loadtxt(fh, delimiter=",", dtype=np.int64, ndmin=2)
    d, depth, n = int(meta["dim"]), int(meta["depth"]), int(meta["n"])
    data = data.reshape(-1, d + 1) if data.size else np.empty((0, d + 1), dtype=np.int64)
    if len(data) != n or np.any(data[:, 0] != depth):
        raise ValueError("box cover rows disagree with the header")
    return BoxCover(depth, data[:, 1:])


def write_gridmass(path, dm) -> None:
    with open(path, "w") as fh:
        fh.write(GRIDMASS_HEADER.format(d=dm.d, m=dm.m) + "\n")
        for row in dm.rows():
            fh.write(",".join(map(str, row)) + "\n")


def read_gridmass(path):
    from .scenery import DiscretizedMeasure

    with open(path) as fh:
        meta = _parse_header(fh.readline(), "gridmass")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    d, m = int(meta["dim"]), int(meta["m"])
    M = np.zeros((2**m,) * d)
    idx = data[:, :d].astype(np.int64)
    M[tuple(idx.T)] = data[:, d]
    return DiscretizedMeasure(M)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    """Canonical JSON: sorted keys, no whitespace, non-finite floats as strings."""
    return json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n")
