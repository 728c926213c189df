"""Graspability and print-feasibility analysis of toy meshes.

Widths are support-function (caliper) widths: the extent of the vertex set
along a direction. This is exact for the convex hull and is the closure
width a parallel-jaw gripper sees when spanning the whole object.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .assembler import ToySpec
from .errors import EmptyMesh
from .mesh import TriMesh
from .primitives import PrimitiveKind, PrimitiveSpec


@dataclass(frozen=True)
class GripperModel:
    """Parallel-jaw opening limits in meters (default: 85 mm stroke)."""

    max_opening: float = 0.085
    min_opening: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.min_opening < self.max_opening:
            raise ValueError("need 0 <= min_opening < max_opening")


@dataclass(frozen=True)
class FeasibilityReport:
    aabb_min: tuple[float, float, float]
    aabb_max: tuple[float, float, float]
    fits_build_volume: bool
    suggested_scale: float
    min_ring_wall: float | None
    thin_wall: bool
    min_caliper_width: float | None = None
    graspable: bool | None = None


def directional_width(mesh: TriMesh, direction: np.ndarray) -> float:
    """Max minus min vertex projection onto a unit direction."""
    if mesh.n_vertices == 0:
        raise EmptyMesh("directional width of an empty mesh")
    d = np.asarray(direction, dtype=np.float64)
    if abs(float(d @ d) - 1.0) > 2e-9:
        raise ValueError("direction must be a unit vector within 1e-9")
    proj = mesh.vertices @ d
    return float(proj.max() - proj.min())


def fibonacci_directions(n: int) -> np.ndarray:
    """Deterministic near-uniform unit directions (golden-angle spiral)."""
    i = np.arange(n, dtype=np.float64)
    z = 1.0 - 2.0 * (i + 0.5) / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = i * (math.pi * (3.0 - math.sqrt(5.0)))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def _rotate_about(v: np.ndarray, axis: np.ndarray, angle: float) -> np.ndarray:
    # Rodrigues rotation; axis must be unit length.
    c, s = math.cos(angle), math.sin(angle)
    return v * c + np.cross(axis, v) * s + axis * (axis @ v) * (1.0 - c)


def _golden_section(f, lo: float, hi: float, iters: int = 80):
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    return (c, fc) if fc < fd else (d, fd)


def min_caliper_width(mesh: TriMesh, n_directions: int = 256) -> tuple[float, np.ndarray]:
    """Minimum support width over a Fibonacci direction set, locally refined.

    Refinement re-samples a shrinking spherical-cap patch around the best
    direction (width minima of polyhedra sit in |.|-shaped grooves where
    plain coordinate descent can stall), then polishes with golden-section
    searches on two tangent rotation angles. The result is never above any
    sampled width.
    """
    if n_directions < 32:
        raise ValueError("n_directions must be >= 32")
    if mesh.n_vertices == 0:
        raise EmptyMesh("min caliper width of an empty mesh")

    dirs = fibonacci_directions(n_directions)
    verts = mesh.vertices
    proj = verts @ dirs.T
    widths = proj.max(axis=0) - proj.min(axis=0)
    best_index = int(np.argmin(widths))
    best_width = float(widths[best_index])
    best_dir = dirs[best_index]

    def width_of(d: np.ndarray) -> float:
        p = verts @ d
        return float(p.max() - p.min())

    # Zoom: evaluate a 64-point disc patch of tangent offsets, keep the best,
    # shrink. Patch resolution (~0.25 radius) stays below the next radius, so
    # the running best never escapes the shrinking cap.
    golden_angle = math.pi * (3.0 - math.sqrt(5.0))
    i = np.arange(64)
    rho_unit = np.sqrt((i + 0.5) / len(i))
    phi = i * golden_angle
    radius = 1.5 * math.sqrt(4.0 * math.pi / n_directions)
    for _ in range(12):
        u, v = _tangent_axes(best_dir)
        offsets = (radius * rho_unit)[:, None] * (
            np.cos(phi)[:, None] * u + np.sin(phi)[:, None] * v
        )
        candidates = best_dir + offsets
        candidates /= np.linalg.norm(candidates, axis=1, keepdims=True)
        cand_proj = verts @ candidates.T
        cand_widths = cand_proj.max(axis=0) - cand_proj.min(axis=0)
        j = int(np.argmin(cand_widths))
        if cand_widths[j] < best_width:
            best_width = float(cand_widths[j])
            best_dir = candidates[j]
        radius *= 0.35

    # Golden-section polish on the two tangent angles around the best point.
    d = best_dir
    for axis in _tangent_axes(d):
        angle, w = _golden_section(
            lambda a: width_of(_rotate_about(d, axis, a)), -1e-4, 1e-4
        )
        if w < best_width:
            d = _rotate_about(d, axis, angle)
            d = d / np.linalg.norm(d)
            best_width, best_dir = width_of(d), d
    return best_width, best_dir


def _tangent_axes(d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    helper = np.array([1.0, 0.0, 0.0]) if abs(d[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(d, helper)
    u /= np.linalg.norm(u)
    v = np.cross(d, u)
    v /= np.linalg.norm(v)
    return u, v


def grasp_feasibility(
    mesh: TriMesh, gripper: GripperModel | None = None, n_directions: int = 256
) -> bool:
    """True iff the minimal caliper width fits inside the gripper's stroke."""
    gripper = gripper or GripperModel()
    width, _ = min_caliper_width(mesh, n_directions)
    return gripper.min_opening <= width <= gripper.max_opening


def analytic_min_width(spec: PrimitiveSpec) -> float:
    """Closed-form minimal caliper width of a single primitive."""
    d = spec.dims
    if spec.kind is PrimitiveKind.CUBOID:
        return min(d["width"], d["height"], d["length"])
    if spec.kind is PrimitiveKind.SPHERE:
        return d["diameter"]
    if spec.kind is PrimitiveKind.CYLINDER:
        return min(d["diameter"], d["height"])
    return min(d["outer_diameter"], d["height"])


def print_feasibility(
    toy: ToySpec,
    mesh: TriMesh,
    build_edge: float = 0.256,
    min_wall: float = 0.0,
) -> FeasibilityReport:
    """Build-volume fit, downscale suggestion, and thin-ring-wall flag."""
    lo, hi = mesh.aabb()
    extents = hi - lo
    max_extent = float(extents.max())
    fits = bool((extents <= build_edge).all())
    scale = min(1.0, build_edge / max_extent) if max_extent > 0.0 else 1.0

    walls = [
        p.spec.dims["wall_thickness"]
        for p in toy.parts
        if p.spec.kind is PrimitiveKind.RING
    ]
    min_ring_wall = min(walls) if walls else None
    thin = min_ring_wall is not None and min_ring_wall < min_wall
    return FeasibilityReport(
        aabb_min=tuple(float(v) for v in lo),
        aabb_max=tuple(float(v) for v in hi),
        fits_build_volume=fits,
        suggested_scale=float(scale),
        min_ring_wall=min_ring_wall,
        thin_wall=thin,
    )


def analyze_toy(
    toy: ToySpec,
    mesh: TriMesh,
    gripper: GripperModel | None = None,
    build_edge: float = 0.256,
    min_wall: float = 0.0,
    n_directions: int = 256,
) -> FeasibilityReport:
    """Full report: print feasibility plus caliper width and graspability."""
    gripper = gripper or GripperModel()
    base = print_feasibility(toy, mesh, build_edge, min_wall)
    width, _ = min_caliper_width(mesh, n_directions)
    return FeasibilityReport(
        aabb_min=base.aabb_min,
        aabb_max=base.aabb_max,
        fits_build_volume=base.fits_build_volume,
        suggested_scale=base.suggested_scale,
        min_ring_wall=base.min_ring_wall,
        thin_wall=base.thin_wall,
        min_caliper_width=width,
        graspable=gripper.min_opening <= width <= gripper.max_opening,
    )


def write_feasibility_csv(
    rows: list[tuple[str, FeasibilityReport]], path: str | Path
) -> None:
    """One row per toy: id, min width, graspable, fits, scale, wall flags."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            [
                "id",
                "min_caliper_width",
                "graspable",
                "fits_build_volume",
                "suggested_scale",
                "min_ring_wall",
                "thin_wall",
            ]
        )
        for toy_id, report in rows:
            writer.writerow(
                [
                    toy_id,
                    repr(report.min_caliper_width) if report.min_caliper_width is not None else "",
                    str(report.graspable).lower() if report.graspable is not None else "",
                    str(report.fits_build_volume).lower(),
                    repr(report.suggested_scale),
                    repr(report.min_ring_wall) if report.min_ring_wall is not None else "",
                    str(report.thin_wall).lower(),
                ]
            )
