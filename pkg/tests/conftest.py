"""Shared test helpers: independent geometry and file-format oracles.

Everything here is deliberately written against the math or the published
file-format layout, not against the package implementation, so tests
exercise two independent routes to the same answer.
"""

from __future__ import annotations

import struct

import numpy as np

from toygrasp.primitives import PrimitiveKind, PrimitiveSpec


def ray_parity_inside(mesh_vertices, mesh_triangles, point, direction):
    """Point-in-solid test by ray-crossing parity (Moller-Trumbore)."""
    v0 = mesh_vertices[mesh_triangles[:, 0]]
    v1 = mesh_vertices[mesh_triangles[:, 1]]
    v2 = mesh_vertices[mesh_triangles[:, 2]]
    e1 = v1 - v0
    e2 = v2 - v0
    h = np.cross(direction, e2)
    a = np.einsum("ij,ij->i", e1, h)
    ok = np.abs(a) > 1e-12
    f = np.zeros_like(a)
    f[ok] = 1.0 / a[ok]
    s = point - v0
    u = f * np.einsum("ij,ij->i", s, h)
    q = np.cross(s, e1)
    v = f * (q @ direction)
    t = f * np.einsum("ij,ij->i", e2, q)
    hits = ok & (u >= 0.0) & (u <= 1.0) & (v >= 0.0) & (u + v <= 1.0) & (t > 1e-12)
    return int(hits.sum()) % 2 == 1


def analytic_boundary_distance(spec: PrimitiveSpec, point) -> float:
    """Signed distance proxy: positive inside, negative outside.

    Magnitudes are conservative (never larger than the true distance), which
    is all the margin filtering in tests needs.
    """
    x, y, z = point
    d = spec.dims
    if spec.kind is PrimitiveKind.CUBOID:
        return min(
            d["width"] / 2 - abs(x), d["length"] / 2 - abs(y), d["height"] / 2 - abs(z)
        )
    if spec.kind is PrimitiveKind.SPHERE:
        return d["diameter"] / 2 - float(np.linalg.norm(point))
    radial = float(np.hypot(x, y))
    if spec.kind is PrimitiveKind.CYLINDER:
        return min(d["diameter"] / 2 - radial, d["height"] / 2 - abs(z))
    r_outer = d["outer_diameter"] / 2
    r_inner = r_outer - d["wall_thickness"]
    return min(r_outer - radial, radial - r_inner, d["height"] / 2 - abs(z))


def parse_binary_stl(data: bytes):
    """Independent binary STL reader: returns (normals, triangles) float32.

    Layout per the format spec: 80-byte header, uint32 count, then 50-byte
    records of 12 little-endian floats plus a uint16 attribute.
    """
    assert len(data) >= 84, "file shorter than header + count"
    (count,) = struct.unpack_from("<I", data, 80)
    assert len(data) == 84 + 50 * count, "file size does not match triangle count"
    normals = np.zeros((count, 3), dtype=np.float32)
    triangles = np.zeros((count, 3, 3), dtype=np.float32)
    for i in range(count):
        values = struct.unpack_from("<12fH", data, 84 + 50 * i)
        normals[i] = values[0:3]
        triangles[i] = np.array(values[3:12], dtype=np.float32).reshape(3, 3)
    return normals, triangles


def parse_obj(text: str):
    """Independent OBJ reader: returns (vertices, faces, group_of_face)."""
    vertices = []
    faces = []
    groups = []
    current_group = None
    for line in text.splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            vertices.append([float(p) for p in parts[1:4]])
        elif parts[0] == "g":
            current_group = parts[1]
        elif parts[0] == "f":
            faces.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
            groups.append(current_group)
    return np.array(vertices), np.array(faces, dtype=int), groups


def random_spec(kind: PrimitiveKind, rng: np.random.Generator) -> PrimitiveSpec:
    """Random spec within the default production ranges (independent draw)."""
    from toygrasp.primitives import DimensionRanges, sample_primitive

    return sample_primitive(kind, DimensionRanges.default(), rng)
