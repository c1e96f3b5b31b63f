"""ASCII PLY and XYZ point-cloud I/O.

Coordinates are written with repr-exact precision (%.17g) so a write/read
round trip reproduces the array bit for bit, which the byte-identical rerun
guarantee depends on.
"""

from __future__ import annotations

import numpy as np

from .pointset import PointSet

_FMT = "%.17g"


def write_ply(path, pset: PointSet) -> None:
    pts = pset.points
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {pts.shape[0]}",
        "property double x",
        "property double y",
        "property double z",
        "end_header",
    ]
    for p in pts:
        lines.append(" ".join(_FMT % c for c in p))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def read_ply(path) -> PointSet:
    with open(path) as f:
        lines = [ln.strip() for ln in f]
    if not lines or lines[0] != "ply":
        raise ValueError(f"{path}: not a PLY file")
    n = None
    props = []
    i = 1
    while i < len(lines):
        ln = lines[i]
        i += 1
        if ln == "end_header":
            break
        parts = ln.split()
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "format":
            if parts[1] != "ascii":
                raise ValueError(f"{path}: only ascii PLY is supported")
        elif parts[0] == "element":
            if parts[1] == "vertex":
                n = int(parts[2])
            elif n is not None:
                raise ValueError(f"{path}: elements after vertex are not supported")
        elif parts[0] == "property":
            if n is not None:
                props.append(parts[-1])
    else:
        raise ValueError(f"{path}: missing end_header")
    if n is None:
        raise ValueError(f"{path}: no vertex element")
    if props[:3] != ["x", "y", "z"]:
        raise ValueError(f"{path}: vertex properties must start with x y z, got {props}")
    body = [ln for ln in lines[i:] if ln]
    if len(body) != n:
        raise ValueError(f"{path}: expected {n} vertex rows, found {len(body)}")
    pts = np.empty((n, 3), dtype=np.float64)
    for row, ln in enumerate(body):
        vals = ln.split()
        if len(vals) != len(props):
            raise ValueError(f"{path}: row {row} has {len(vals)} values, expected {len(props)}")
        pts[row] = [float(v) for v in vals[:3]]
    return PointSet(pts)


def write_xyz(path, pset: PointSet) -> None:
    with open(path, "w") as f:
        for p in pset.points:
            f.write(" ".join(_FMT % c for c in p) + "\n")


def read_xyz(path) -> PointSet:
    rows = []
    with open(path) as f:
        for ln in f:
            ln = ln.strip()
            if not ln:
                continue
            vals = ln.split()
            if len(vals) < 3:
                raise ValueError(f"{path}: line with fewer than 3 coordinates")
            rows.append([float(v) for v in vals[:3]])
    return PointSet(np.array(rows, dtype=np.float64))
