"""File formats: binary STL, ASCII OBJ, JSON manifests, PGM masks, tensor blobs.

All writers emit deterministic bytes for identical inputs, so SHA-256 digests
are comparable across runs.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analysis import min_caliper_width
from .assembler import Color, GenerationConfig, SetComposition, ToySpec
from .errors import EmptyMesh, IoFailure, SchemaViolation
from .mesh import Tessellation, TriMesh, mesh_primitive, mesh_toy, mesh_volume
from .primitives import (
    DIM_NAMES,
    KIND_ORDER,
    DimensionRanges,
    PlacedPrimitive,
    Pose,
    PrimitiveKind,
    PrimitiveSpec,
)

MANIFEST_FORMAT_VERSION = "1"
_STL_HEADER = b"toygrasp binary STL".ljust(80, b"\x00")
_TENSOR_MAGIC = b"TGTENS01"


# ---------------------------------------------------------------------------
# mesh export
# ---------------------------------------------------------------------------

def stl_bytes(mesh: TriMesh, *, allow_empty: bool = False) -> bytes:
    """Binary STL: 80-byte header, triangle count, 50-byte little-endian records."""
    if mesh.n_triangles == 0 and not allow_empty:
        raise EmptyMesh("refusing to export an empty mesh (pass allow_empty=True)")
    v0 = mesh.vertices[mesh.triangles[:, 0]]
    v1 = mesh.vertices[mesh.triangles[:, 1]]
    v2 = mesh.vertices[mesh.triangles[:, 2]]
    normals = np.cross(v1 - v0, v2 - v0)
    lengths = np.linalg.norm(normals, axis=1, keepdims=True)
    normals = np.divide(normals, lengths, out=np.zeros_like(normals), where=lengths > 0)

    record = np.zeros(
        mesh.n_triangles,
        dtype=np.dtype(
            [("normal", "<f4", 3), ("verts", "<f4", (3, 3)), ("attr", "<u2")]
        ),
    )
    record["normal"] = normals.astype(np.float32)
    record["verts"][:, 0] = v0.astype(np.float32)
    record["verts"][:, 1] = v1.astype(np.float32)
    record["verts"][:, 2] = v2.astype(np.float32)
    return _STL_HEADER + struct.pack("<I", mesh.n_triangles) + record.tobytes()


def export_stl(mesh: TriMesh, path: str | Path, *, allow_empty: bool = False) -> None:
    data = stl_bytes(mesh, allow_empty=allow_empty)
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise IoFailure(f"cannot write STL to {path}: {exc}") from exc


def obj_bytes(mesh: TriMesh, *, allow_empty: bool = False) -> bytes:
    """ASCII OBJ with one `g part_<k>` group per part label, full float precision."""
    if mesh.n_triangles == 0 and not allow_empty:
        raise EmptyMesh("refusing to export an empty mesh (pass allow_empty=True)")
    lines = [
        f"v {float(x)!r} {float(y)!r} {float(z)!r}" for x, y, z in mesh.vertices
    ]
    labels = (
        mesh.part_labels
        if mesh.part_labels is not None
        else np.zeros(mesh.n_triangles, dtype=np.int64)
    )
    for label in np.unique(labels):
        lines.append(f"g part_{label}")
        for a, b, c in mesh.triangles[labels == label] + 1:
            lines.append(f"f {a} {b} {c}")
    return ("\n".join(lines) + "\n").encode()


def export_obj(mesh: TriMesh, path: str | Path, *, allow_empty: bool = False) -> None:
    data = obj_bytes(mesh, allow_empty=allow_empty)
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise IoFailure(f"cannot write OBJ to {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PartRecord:
    kind: str
    dims: tuple[tuple[str, float], ...]
    quaternion: tuple[float, float, float, float]
    translation: tuple[float, float, float]


@dataclass(frozen=True)
class DerivedStats:
    aabb_min: tuple[float, float, float]
    aabb_max: tuple[float, float, float]
    volume: float
    min_caliper_width: float


@dataclass(frozen=True)
class ToyRecord:
    id: str
    seed: int
    color: str
    parts: tuple[PartRecord, ...]
    derived: DerivedStats


@dataclass(frozen=True)
class Manifest:
    format_version: str
    config: dict
    toys: tuple[ToyRecord, ...]


def generation_config_to_dict(config: GenerationConfig) -> dict:
    return {
        "ranges": {
            kind.value: {name: list(config.ranges.interval(kind, name)) for name in DIM_NAMES[kind]}
            for kind in KIND_ORDER
        },
        "composition": config.composition.counts(),
        "palette": [c.value for c in config.palette],
        "master_seed": config.master_seed,
        "max_placement_attempts": config.max_placement_attempts,
    }


def generation_config_from_dict(data: dict) -> GenerationConfig:
    ranges = DimensionRanges(
        {
            PrimitiveKind(kind): {name: tuple(iv) for name, iv in dims.items()}
            for kind, dims in data["ranges"].items()
        }
    )
    return GenerationConfig(
        ranges=ranges,
        composition=SetComposition(**data["composition"]),
        palette=tuple(Color(c) for c in data["palette"]),
        master_seed=data["master_seed"],
        max_placement_attempts=data["max_placement_attempts"],
    )


def toy_record(
    toy: ToySpec, tess: Tessellation | None = None, n_directions: int = 256
) -> ToyRecord:
    """Serialize one toy plus derived mesh statistics."""
    mesh = mesh_toy(toy, tess)
    lo, hi = mesh.aabb()
    volume = mesh_volume(mesh)  # per-part volumes summed; overlaps double count
    width, _ = min_caliper_width(mesh, n_directions)
    parts = tuple(
        PartRecord(
            kind=p.spec.kind.value,
            dims=tuple((name, p.spec.dims[name]) for name in DIM_NAMES[p.spec.kind]),
            quaternion=tuple(float(v) for v in p.pose.rotation),
            translation=tuple(float(v) for v in p.pose.translation),
        )
        for p in toy.parts
    )
    return ToyRecord(
        id=toy.id,
        seed=toy.seed,
        color=toy.color.value,
        parts=parts,
        derived=DerivedStats(
            aabb_min=tuple(float(v) for v in lo),
            aabb_max=tuple(float(v) for v in hi),
            volume=float(volume),
            min_caliper_width=float(width),
        ),
    )


def mesh_from_part(part: PlacedPrimitive, tess: Tessellation | None = None) -> TriMesh:
    m = mesh_primitive(part.spec, tess)
    return TriMesh(part.pose.apply(m.vertices), m.triangles)


def record_to_toy(record: ToyRecord) -> ToySpec:
    parts = tuple(
        PlacedPrimitive(
            PrimitiveSpec(PrimitiveKind(p.kind), dict(p.dims)),
            Pose(np.array(p.quaternion), np.array(p.translation)),
        )
        for p in record.parts
    )
    return ToySpec(id=record.id, seed=record.seed, parts=parts, color=Color(record.color))


def build_manifest(
    toys: list[ToySpec],
    config: GenerationConfig,
    tess: Tessellation | None = None,
    n_directions: int = 256,
) -> Manifest:
    tess = tess or Tessellation()
    config_echo = generation_config_to_dict(config)
    config_echo["tessellation"] = {
        "sphere_subdivisions": tess.sphere_subdivisions,
        "radial_segments": tess.radial_segments,
    }
    config_echo["analysis"] = {"n_directions": n_directions}
    return Manifest(
        format_version=MANIFEST_FORMAT_VERSION,
        config=config_echo,
        toys=tuple(toy_record(toy, tess, n_directions) for toy in toys),
    )


def manifest_json_bytes(manifest: Manifest) -> bytes:
    doc = {
        "format_version": manifest.format_version,
        "config": manifest.config,
        "toys": [
            {
                "id": t.id,
                "seed": t.seed,
                "color": t.color,
                "parts": [
                    {
                        "kind": p.kind,
                        "dims": dict(p.dims),
                        "quaternion": list(p.quaternion),
                        "translation": list(p.translation),
                    }
                    for p in t.parts
                ],
                "derived": {
                    "aabb_min": list(t.derived.aabb_min),
                    "aabb_max": list(t.derived.aabb_max),
                    "volume": t.derived.volume,
                    "min_caliper_width": t.derived.min_caliper_width,
                },
            }
            for t in manifest.toys
        ],
    }
    return (json.dumps(doc, indent=2) + "\n").encode()


def write_manifest(
    toys: list[ToySpec],
    config: GenerationConfig,
    path: str | Path,
    *,
    tess: Tessellation | None = None,
    n_directions: int = 256,
) -> Manifest:
    manifest = build_manifest(toys, config, tess, n_directions)
    try:
        Path(path).write_bytes(manifest_json_bytes(manifest))
    except OSError as exc:
        raise IoFailure(f"cannot write manifest to {path}: {exc}") from exc
    return manifest


def _require(doc: dict, key: str, context: str):
    if key not in doc:
        raise SchemaViolation(f"{context}: missing field '{key}'")
    return doc[key]


def read_manifest(path: str | Path) -> Manifest:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read manifest {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"manifest is not valid JSON: {exc}") from exc

    version = _require(doc, "format_version", "manifest")
    if version != MANIFEST_FORMAT_VERSION:
        raise SchemaViolation(f"unknown manifest format_version {version!r}")
    config = _require(doc, "config", "manifest")
    toys = []
    for i, t in enumerate(_require(doc, "toys", "manifest")):
        ctx = f"toys[{i}]"
        derived = _require(t, "derived", ctx)
        toys.append(
            ToyRecord(
                id=_require(t, "id", ctx),
                seed=_require(t, "seed", ctx),
                color=_require(t, "color", ctx),
                parts=tuple(
                    PartRecord(
                        kind=_require(p, "kind", f"{ctx}.parts[{j}]"),
                        dims=tuple(
                            (name, float(value))
                            for name, value in _require(p, "dims", f"{ctx}.parts[{j}]").items()
                        ),
                        quaternion=tuple(_require(p, "quaternion", f"{ctx}.parts[{j}]")),
                        translation=tuple(_require(p, "translation", f"{ctx}.parts[{j}]")),
                    )
                    for j, p in enumerate(_require(t, "parts", ctx))
                ),
                derived=DerivedStats(
                    aabb_min=tuple(_require(derived, "aabb_min", ctx)),
                    aabb_max=tuple(_require(derived, "aabb_max", ctx)),
                    volume=_require(derived, "volume", ctx),
                    min_caliper_width=_require(derived, "min_caliper_width", ctx),
                ),
            )
        )
    return Manifest(format_version=version, config=config, toys=tuple(toys))


# ---------------------------------------------------------------------------
# PGM (P5) segmentation masks
# ---------------------------------------------------------------------------

def read_pgm(path: str | Path) -> np.ndarray:
    """Read a binary PGM (P5) file as a boolean mask (nonzero = object)."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read PGM {path}: {exc}") from exc

    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise SchemaViolation("truncated PGM header")
        tokens.append(raw[start:pos])
    pos += 1  # single whitespace after maxval

    if tokens[0] != b"P5":
        raise SchemaViolation(f"not a binary PGM (P5) file: magic {tokens[0]!r}")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height
    if len(raw) - pos < count * dtype.itemsize:
        raise SchemaViolation("PGM pixel data is truncated")
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=pos)
    return data.reshape(height, width) > 0


# ---------------------------------------------------------------------------
# named-tensor blobs (used for encoder and policy states)
# ---------------------------------------------------------------------------

def tensor_blob_bytes(tensors: dict[str, np.ndarray], meta: dict) -> bytes:
    """Versioned blob: magic, JSON metadata, then (name, shape, float64 data) rows."""
    parts = [_TENSOR_MAGIC]
    meta_bytes = json.dumps(meta).encode()
    parts.append(struct.pack("<I", len(meta_bytes)))
    parts.append(meta_bytes)
    parts.append(struct.pack("<I", len(tensors)))
    for name, tensor in tensors.items():
        data = np.ascontiguousarray(tensor, dtype="<f8")
        name_bytes = name.encode()
        parts.append(struct.pack("<H", len(name_bytes)))
        parts.append(name_bytes)
        parts.append(struct.pack("<B", data.ndim))
        parts.append(struct.pack(f"<{data.ndim}I", *data.shape))
        parts.append(data.tobytes())
    return b"".join(parts)


def save_tensors(path: str | Path, tensors: dict[str, np.ndarray], meta: dict) -> None:
    try:
        Path(path).write_bytes(tensor_blob_bytes(tensors, meta))
    except OSError as exc:
        raise IoFailure(f"cannot write tensor blob to {path}: {exc}") from exc


def load_tensors(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read tensor blob {path}: {exc}") from exc
    if raw[:8] != _TENSOR_MAGIC:
        raise SchemaViolation(f"unknown tensor blob magic {raw[:8]!r}")
    pos = 8
    (meta_len,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    meta = json.loads(raw[pos : pos + meta_len].decode())
    pos += meta_len
    (count,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        name = raw[pos : pos + name_len].decode()
        pos += name_len
        (ndim,) = struct.unpack_from("<B", raw, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", raw, pos)
        pos += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        tensors[name] = (
            np.frombuffer(raw, dtype="<f8", count=size, offset=pos)
            .reshape(shape)
            .astype(np.float64)
        )
        pos += 8 * size
    return tensors, meta
