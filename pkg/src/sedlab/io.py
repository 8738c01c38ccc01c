"""CSV and JSON readers/writers for clouds, measures, trajectories and reports."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .cloud import ParticleCloud
from .errors import DomainError


def _savetxt(path, header, arr, fmt="%.17g"):
    np.savetxt(path, arr, delimiter=",", header=header, comments="", fmt=fmt)


def _loadtxt(path, header):
    path = Path(path)
    with path.open() as fh:
        first = fh.readline().strip()
    if first.replace(" ", "") != header:
        raise DomainError(f"{path}: expected header {header!r}, found {first!r}")
    return np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2))


def write_cloud(path, cloud: ParticleCloud) -> None:
    """``id,x,y,z`` CSV plus a ``.meta`` key-value sidecar with N, r0, time."""
    path = Path(path)
    arr = np.column_stack([np.arange(cloud.N), cloud.positions])
    _savetxt(path, "id,x,y,z", arr, fmt=["%d", "%.17g", "%.17g", "%.17g"])
    meta = path.with_suffix(path.suffix + ".meta")
    meta.write_text(f"N = {cloud.N}\nr0 = {cloud.r0!r}\ntime = {cloud.time!r}\n")


def read_cloud(path, r0: float | None = None) -> ParticleCloud:
    path = Path(path)
    arr = _loadtxt(path, "id,x,y,z")
    order = np.argsort(arr[:, 0], kind="stable")
    x = arr[order, 1:4]
    meta = path.with_suffix(path.suffix + ".meta")
    info = {}
    if meta.exists():
        for line in meta.read_text().splitlines():
            if "=" in line:
                k, v = (s.strip() for s in line.split("=", 1))
                info[k] = v
    if "N" in info and int(info["N"]) != x.shape[0]:
        raise DomainError(f"{path}: metadata N={info['N']} but {x.shape[0]} rows")
    if r0 is None:
        if "r0" not in info:
            raise DomainError(f"{path}: r0 missing (no metadata sidecar)")
        r0 = float(info["r0"])
    return ParticleCloud(x, r0, float(info.get("time", 0.0)))


def write_measure(path, measure) -> None:
    _savetxt(path, "x,y,z,w", np.column_stack([measure.atoms, measure.weights]))


def read_measure(path):
    from .ot import DiscreteMeasure

    arr = _loadtxt(path, "x,y,z,w")
    return DiscreteMeasure(arr[:, :3], arr[:, 3])


def write_plan(path, plan) -> None:
    _savetxt(path, "i,j,mass", np.column_stack([plan.rows, plan.cols, plan.mass]),
             fmt=["%d", "%d", "%.17g"])


def trajectory_rows(traj) -> np.ndarray:
    rows = []
    for s in traj.snapshots:
        n = s.cloud.N
        rows.append(np.column_stack([np.full(n, s.time), np.arange(n), s.cloud.positions, s.kinematics.V]))
    return np.vstack(rows) if rows else np.zeros((0, 8))


def write_trajectory(path, traj) -> None:
    """``t,id,x,y,z,vx,vy,vz`` CSV, one row per particle per snapshot."""
    fmt = ["%.17g", "%d"] + ["%.17g"] * 6
    _savetxt(path, "t,id,x,y,z,vx,vy,vz", trajectory_rows(traj), fmt=fmt)


def read_trajectory(path) -> np.ndarray:
    return _loadtxt(path, "t,id,x,y,z,vx,vy,vz")


def write_density_snapshots(path, snapshots) -> None:
    """``t,k,y1,y2,y3,w`` CSV for a list of (t, BlobDensity)."""
    rows = [
        np.column_stack([np.full(d.weights.size, t), np.arange(d.weights.size), d.centers, d.weights])
        for t, d in snapshots
    ]
    fmt = ["%.17g", "%d"] + ["%.17g"] * 4
    _savetxt(path, "t,k,y1,y2,y3,w", np.vstack(rows), fmt=fmt)


def read_density_snapshots(path) -> np.ndarray:
    return _loadtxt(path, "t,k,y1,y2,y3,w")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path, data) -> None:
    Path(path).write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


def write_table(path, header, rows) -> None:
    """Write a list of dicts (or sequences) as CSV with the given column names."""
    lines = [",".join(header)]
    for r in rows:
        vals = [r[h] for h in header] if isinstance(r, dict) else list(r)
        lines.append(",".join(_fmt(v) for v in vals))
    Path(path).write_text("\n".join(lines) + "\n")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)
