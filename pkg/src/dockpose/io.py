"""Cloud file I/O: ASCII PLY and whitespace-separated XYZ.

Coordinates are written with Python's shortest round-trip float
representation, so write -> read -> write is byte-stable and read(write(c))
reproduces coordinates exactly.
"""

from __future__ import annotations

import os

import numpy as np

from .cloud import CAMERA_FRAME, PointCloud
from .errors import CloudFormatError

_FLOAT_PROPERTY_TYPES = {"float", "float32", "double", "float64"}


def _format_of(path: str, fmt: str | None) -> str:
    if fmt is not None:
        fmt = fmt.lower()
        if fmt not in ("ply", "xyz"):
            raise CloudFormatError(f"unsupported cloud format {fmt!r} (use 'ply' or 'xyz')")
        return fmt
    ext = os.path.splitext(path)[1].lower()
    if ext == ".ply":
        return "ply"
    if ext in (".xyz", ".txt"):
        return "xyz"
    raise CloudFormatError(f"cannot infer cloud format from {path!r}; pass format explicitly")


def read_cloud(path: str, fmt: str | None = None, frame_label: str = CAMERA_FRAME) -> PointCloud:
    """Read a point cloud from an ASCII PLY or XYZ file."""
    fmt = _format_of(path, fmt)
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if fmt == "xyz":
        return _parse_xyz(lines, path, frame_label)
    return _parse_ply(lines, path, frame_label)


def write_cloud(cloud: PointCloud, path: str, fmt: str | None = None) -> None:
    """Write a point cloud as ASCII PLY or XYZ."""
    fmt = _format_of(path, fmt)
    pts = cloud.points
    rows = "\n".join(
        f"{float(p[0])!r} {float(p[1])!r} {float(p[2])!r}" for p in pts
    )
    with open(path, "w", encoding="ascii") as fh:
        if fmt == "ply":
            fh.write("ply\nformat ascii 1.0\n")
            fh.write(f"element vertex {len(pts)}\n")
            fh.write("property double x\nproperty double y\nproperty double z\n")
            fh.write("end_header\n")
        if rows:
            fh.write(rows)
            fh.write("\n")


def _parse_xyz(lines, path, frame_label) -> PointCloud:
    rows = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) < 3:
            raise CloudFormatError(f"{path}:{lineno}: expected 'x y z', got {raw!r}")
        try:
            rows.append([float(parts[0]), float(parts[1]), float(parts[2])])
        except ValueError as exc:
            raise CloudFormatError(f"{path}:{lineno}: bad coordinate: {exc}") from None
    pts = np.asarray(rows, dtype=np.float64).reshape(-1, 3)
    return PointCloud(pts, frame_label)


def _parse_ply(lines, path, frame_label) -> PointCloud:
    if not lines or lines[0].strip() != "ply":
        raise CloudFormatError(f"{path}:1: not a PLY file (missing 'ply' magic)")
    vertex_count = None
    # Per-element property names, tracked so x/y/z columns can be located.
    element = None
    vertex_props: list[str] = []
    header_end = None
    for lineno, raw in enumerate(lines[1:], start=2):
        tokens = raw.split()
        if not tokens or tokens[0] == "comment":
            continue
        if tokens[0] == "format":
            if len(tokens) < 2 or tokens[1] != "ascii":
                raise CloudFormatError(f"{path}:{lineno}: only 'format ascii' PLY is supported")
        elif tokens[0] == "element":
            if len(tokens) != 3:
                raise CloudFormatError(f"{path}:{lineno}: malformed element declaration")
            element = tokens[1]
            if element == "vertex":
                try:
                    vertex_count = int(tokens[2])
                except ValueError:
                    raise CloudFormatError(
                        f"{path}:{lineno}: bad vertex count {tokens[2]!r}"
                    ) from None
        elif tokens[0] == "property":
            if element == "vertex":
                if len(tokens) == 3:
                    ptype, pname = tokens[1], tokens[2]
                    if pname in ("x", "y", "z") and ptype not in _FLOAT_PROPERTY_TYPES:
                        raise CloudFormatError(
                            f"{path}:{lineno}: unsupported type {ptype!r} for property {pname!r}"
                        )
                    vertex_props.append(pname)
                elif tokens[1] == "list":
                    raise CloudFormatError(
                        f"{path}:{lineno}: list properties on vertex elements are unsupported"
                    )
        elif tokens[0] == "end_header":
            header_end = lineno
            break
    if header_end is None:
        raise CloudFormatError(f"{path}: truncated header: missing 'end_header'")
    if vertex_count is None:
        raise CloudFormatError(f"{path}: header is missing required element 'vertex'")
    for name in ("x", "y", "z"):
        if name not in vertex_props:
            raise CloudFormatError(f"{path}: vertex element is missing property {name!r}")
    cols = [vertex_props.index(n) for n in ("x", "y", "z")]

    data_lines = lines[header_end:]
    rows = np.empty((vertex_count, 3), dtype=np.float64)
    filled = 0
    for lineno, raw in enumerate(data_lines, start=header_end + 1):
        line = raw.strip()
        if not line:
            continue
        if filled >= vertex_count:
            break
        parts = line.split()
        if len(parts) < len(vertex_props):
            raise CloudFormatError(
                f"{path}:{lineno}: expected {len(vertex_props)} values, got {len(parts)}"
            )
        try:
            rows[filled, 0] = float(parts[cols[0]])
            rows[filled, 1] = float(parts[cols[1]])
            rows[filled, 2] = float(parts[cols[2]])
        except ValueError as exc:
            raise CloudFormatError(f"{path}:{lineno}: bad coordinate: {exc}") from None
        filled += 1
    if filled != vertex_count:
        raise CloudFormatError(
            f"{path}: vertex element declares {vertex_count} points but file holds {filled}"
        )
    return PointCloud(rows, frame_label)
