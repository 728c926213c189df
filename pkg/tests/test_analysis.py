import math

import numpy as np
import pytest

from conftest import random_spec
from toygrasp.analysis import (
    GripperModel,
    analytic_min_width,
    analyze_toy,
    directional_width,
    fibonacci_directions,
    grasp_feasibility,
    min_caliper_width,
    print_feasibility,
    write_feasibility_csv,
)
from toygrasp.assembler import GenerationConfig, assemble_toy
from toygrasp.errors import EmptyMesh
from toygrasp.mesh import Tessellation, TriMesh, mesh_primitive, mesh_toy
from toygrasp.primitives import (
    KIND_ORDER,
    Pose,
    PrimitiveKind,
    PrimitiveSpec,
    quat_to_matrix,
    sample_rotation,
)


def brute_force_width(vertices, direction):
    # Independent scalar-loop projection oracle.
    lo = math.inf
    hi = -math.inf
    for vx, vy, vz in vertices:
        p = vx * direction[0] + vy * direction[1] + vz * direction[2]
        lo = min(lo, p)
        hi = max(hi, p)
    return hi - lo


def unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


class TestDirectionalWidth:
    def test_sphere_width_is_diameter(self):
        mesh = mesh_primitive(PrimitiveSpec(PrimitiveKind.SPHERE, {"diameter": 0.05}))
        for direction in (unit([1, 0, 0]), unit([1, 1, 1]), unit([0.3, -0.7, 0.2])):
            assert directional_width(mesh, direction) == pytest.approx(0.05, rel=0.01)

    def test_axis_aligned_cuboid_exact(self):
        mesh = mesh_primitive(
            PrimitiveSpec(
                PrimitiveKind.CUBOID, {"width": 0.02, "length": 0.10, "height": 0.28}
            )
        )
        assert directional_width(mesh, np.array([1.0, 0.0, 0.0])) == 0.02

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(400)
        for _ in range(30):
            toy = assemble_toy(
                int(rng.integers(1, 6)), GenerationConfig(), rng
            )
            mesh = mesh_toy(toy, Tessellation(sphere_subdivisions=1, radial_segments=16))
            direction = unit(rng.normal(size=3))
            fast = directional_width(mesh, direction)
            slow = brute_force_width(mesh.vertices, direction)
            assert abs(fast - slow) <= 1e-12

    def test_symmetry_exact(self):
        rng = np.random.default_rng(401)
        mesh = mesh_toy(assemble_toy(3, GenerationConfig(), rng))
        for _ in range(20):
            d = unit(rng.normal(size=3))
            assert directional_width(mesh, d) == directional_width(mesh, -d)

    def test_translation_invariance(self):
        rng = np.random.default_rng(402)
        mesh = mesh_toy(assemble_toy(2, GenerationConfig(), rng))
        shifted = TriMesh(mesh.vertices + np.array([0.4, -0.2, 0.1]), mesh.triangles)
        for _ in range(20):
            d = unit(rng.normal(size=3))
            assert directional_width(mesh, d) == pytest.approx(
                directional_width(shifted, d), abs=1e-12
            )

    def test_rotation_equivariance(self):
        rng = np.random.default_rng(403)
        mesh = mesh_toy(assemble_toy(2, GenerationConfig(), rng))
        for _ in range(20):
            q = sample_rotation(rng)
            rotation = quat_to_matrix(q)
            rotated = TriMesh(mesh.vertices @ rotation.T, mesh.triangles)
            d = unit(rng.normal(size=3))
            assert directional_width(rotated, unit(rotation @ d)) == pytest.approx(
                directional_width(mesh, d), abs=1e-9
            )

    def test_empty_mesh_raises(self):
        empty = TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=int))
        with pytest.raises(EmptyMesh):
            directional_width(empty, np.array([1.0, 0.0, 0.0]))

    def test_non_unit_direction_rejected(self):
        mesh = mesh_primitive(PrimitiveSpec(PrimitiveKind.SPHERE, {"diameter": 0.05}))
        with pytest.raises(ValueError):
            directional_width(mesh, np.array([1.0, 1.0, 0.0]))


class TestMinCaliperWidth:
    def test_sphere_isotropic(self):
        mesh = mesh_primitive(PrimitiveSpec(PrimitiveKind.SPHERE, {"diameter": 0.05}))
        width, _ = min_caliper_width(mesh, 32)
        assert width == pytest.approx(0.05, rel=0.01)

    def test_cuboid_min_extent_high_precision(self):
        mesh = mesh_primitive(
            PrimitiveSpec(
                PrimitiveKind.CUBOID, {"width": 0.02, "length": 0.10, "height": 0.28}
            )
        )
        width, direction = min_caliper_width(mesh, 256)
        assert width == pytest.approx(0.02, abs=1e-6)
        assert abs(abs(direction[0]) - 1.0) < 1e-3

    def test_flat_cylinder_height(self):
        mesh = mesh_primitive(
            PrimitiveSpec(PrimitiveKind.CYLINDER, {"diameter": 0.06, "height": 0.04})
        )
        width, _ = min_caliper_width(mesh, 256)
        assert width == pytest.approx(0.04, rel=0.01)

    def test_never_above_sampled_widths(self):
        rng = np.random.default_rng(404)
        for _ in range(5):
            mesh = mesh_toy(assemble_toy(int(rng.integers(1, 6)), GenerationConfig(), rng))
            n = 64
            width, _ = min_caliper_width(mesh, n)
            proj = mesh.vertices @ fibonacci_directions(n).T
            sampled = (proj.max(axis=0) - proj.min(axis=0)).min()
            assert width <= sampled + 1e-15

    @pytest.mark.parametrize("kind", KIND_ORDER)
    def test_matches_analytic_minimum(self, kind):
        rng = np.random.default_rng(500 + KIND_ORDER.index(kind))
        for _ in range(5):
            spec = random_spec(kind, rng)
            # Random rotation should not change the minimal caliper width.
            mesh = mesh_primitive(spec)
            rotated = TriMesh(
                mesh.vertices @ quat_to_matrix(sample_rotation(rng)).T, mesh.triangles
            )
            width, _ = min_caliper_width(rotated, 1024)
            assert width == pytest.approx(analytic_min_width(spec), rel=0.01)

    def test_rejects_small_direction_sets(self):
        mesh = mesh_primitive(PrimitiveSpec(PrimitiveKind.SPHERE, {"diameter": 0.05}))
        with pytest.raises(ValueError):
            min_caliper_width(mesh, 16)


class TestGraspFeasibility:
    def test_small_sphere_graspable(self):
        mesh = mesh_primitive(PrimitiveSpec(PrimitiveKind.SPHERE, {"diameter": 0.05}))
        assert grasp_feasibility(mesh, GripperModel(max_opening=0.085))

    def test_large_sphere_not_graspable(self):
        mesh = mesh_primitive(PrimitiveSpec(PrimitiveKind.SPHERE, {"diameter": 0.09}))
        assert not grasp_feasibility(mesh, GripperModel(max_opening=0.085))

    def test_matches_dense_direction_oracle(self):
        rng = np.random.default_rng(405)
        gripper = GripperModel()
        for _ in range(6):
            mesh = mesh_toy(
                assemble_toy(int(rng.integers(1, 6)), GenerationConfig(), rng),
                Tessellation(sphere_subdivisions=2, radial_segments=32),
            )
            fast = grasp_feasibility(mesh, gripper, 256)
            proj = mesh.vertices @ fibonacci_directions(10**4).T
            dense = float((proj.max(axis=0) - proj.min(axis=0)).min())
            expected = gripper.min_opening <= dense <= gripper.max_opening
            assert fast == expected

    def test_full_default_set_matches_dense_oracle(self):
        # Per-toy graspable booleans over the whole default composition must
        # agree with a brute-force 10^4-direction recomputation. Both routes
        # upper-bound the true minimum; the unrefined oracle's bound is looser
        # by at most its angular resolution, so disagreement is only tolerated
        # when the oracle's width sits inside that band around the threshold.
        from toygrasp.assembler import generate_set

        gripper = GripperModel()
        dense_dirs = fibonacci_directions(10**4)
        tess = Tessellation(sphere_subdivisions=2, radial_segments=32)
        # At 10^4 directions the covering radius is ~0.02 rad; on a width
        # groove of slope ~0.3 m/rad the unrefined estimate can sit ~6e-3
        # above the true minimum.
        resolution_band = 6e-3
        boundary_cases = 0
        for toy in generate_set(GenerationConfig()):
            mesh = mesh_toy(toy, tess)
            fast_width, _ = min_caliper_width(mesh, 256)
            proj = mesh.vertices @ dense_dirs.T
            dense = float((proj.max(axis=0) - proj.min(axis=0)).min())
            # Both routes upper-bound the true minimum; they may land in
            # marginally different local basins, but never far apart.
            assert abs(fast_width - dense) < resolution_band, toy.id
            fast = gripper.min_opening <= fast_width <= gripper.max_opening
            expected = gripper.min_opening <= dense <= gripper.max_opening
            if fast != expected:
                assert abs(dense - gripper.max_opening) < resolution_band, (
                    toy.id,
                    fast_width,
                    dense,
                )
                boundary_cases += 1
        assert boundary_cases <= 3

    def test_single_spheres_all_graspable_at_default_opening(self):
        # Sphere diameters top out at 0.08 < 0.085 stroke.
        rng = np.random.default_rng(408)
        gripper = GripperModel(max_opening=0.085)
        for _ in range(20):
            spec = random_spec(PrimitiveKind.SPHERE, rng)
            assert grasp_feasibility(mesh_primitive(spec), gripper, 64)

    def test_gripper_validation(self):
        with pytest.raises(ValueError):
            GripperModel(max_opening=0.0)


class TestPrintFeasibility:
    def _box_toy(self, width, length, height):
        spec = PrimitiveSpec(
            PrimitiveKind.CUBOID, {"width": width, "length": length, "height": height}
        )
        from toygrasp.assembler import Color, ToySpec
        from toygrasp.primitives import PlacedPrimitive

        toy = ToySpec(
            "toy_test", 0, (PlacedPrimitive(spec, Pose.identity()),), Color.BLUE
        )
        return toy, mesh_toy(toy)

    def test_oversize_toy_downscaled(self):
        toy, mesh = self._box_toy(0.10, 0.30, 0.10)
        report = print_feasibility(toy, mesh, build_edge=0.256)
        assert not report.fits_build_volume
        assert report.suggested_scale == pytest.approx(0.256 / 0.30, abs=1e-4)

    def test_fitting_toy_scale_one(self):
        toy, mesh = self._box_toy(0.10, 0.20, 0.10)
        report = print_feasibility(toy, mesh, build_edge=0.256)
        assert report.fits_build_volume
        assert report.suggested_scale == 1.0

    def test_thin_ring_wall_flagged(self):
        from toygrasp.assembler import Color, ToySpec
        from toygrasp.primitives import PlacedPrimitive

        spec = PrimitiveSpec(
            PrimitiveKind.RING,
            {"outer_diameter": 0.08, "wall_thickness": 0.006, "height": 0.03},
        )
        toy = ToySpec("t", 0, (PlacedPrimitive(spec, Pose.identity()),), Color.RED)
        report = print_feasibility(toy, mesh_toy(toy), min_wall=0.008)
        assert report.min_ring_wall == 0.006
        assert report.thin_wall

    def test_no_rings_no_wall_stat(self):
        toy, mesh = self._box_toy(0.05, 0.05, 0.05)
        report = print_feasibility(toy, mesh, min_wall=0.008)
        assert report.min_ring_wall is None
        assert not report.thin_wall


class TestReportsAndCsv:
    def test_analyze_toy_full_report(self):
        rng = np.random.default_rng(406)
        toy = assemble_toy(2, GenerationConfig(), rng)
        mesh = mesh_toy(toy)
        report = analyze_toy(toy, mesh, GripperModel(), 0.256, 0.008, 64)
        assert report.min_caliper_width is not None
        assert report.graspable == (0.0 <= report.min_caliper_width <= 0.085)
        assert report.suggested_scale <= 1.0

    def test_csv_rows(self, tmp_path):
        rng = np.random.default_rng(407)
        rows = []
        for i in range(3):
            toy = assemble_toy(1, GenerationConfig(), rng)
            mesh = mesh_toy(toy)
            rows.append((f"toy_{i:04d}", analyze_toy(toy, mesh, GripperModel())))
        path = tmp_path / "feasibility.csv"
        write_feasibility_csv(rows, path)
        lines = path.read_text().strip().splitlines()
        assert len(lines) == 4
        assert lines[0].startswith("id,min_caliper_width,graspable")
