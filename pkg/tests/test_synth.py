import numpy as np
import pytest

from endorecon.depth_io import generate_universal_mask
from endorecon.geometry import PointCloud, RigidTransform, rotation_about_axis
from endorecon.synth import (
    Heightfield,
    HeightfieldSpec,
    SyntheticScene,
    make_default_scene,
    make_default_trajectory,
    perturb_cloud,
    render_depth_sequence,
    render_frame_images,
)


def small_scene(**overrides):
    defaults = dict(seed=3, n_frames=3, width=48, height=36, border_px=2)
    defaults.update(overrides)
    return make_default_scene(**defaults)


class TestRendering:
    def test_same_seed_bit_identical(self):
        a, _ = render_depth_sequence(small_scene(noise_sigma=0.01, outlier_fraction=0.05))
        b, _ = render_depth_sequence(small_scene(noise_sigma=0.01, outlier_fraction=0.05))
        for ma, mb in zip(a, b):
            assert np.array_equal(ma.values, mb.values)
            assert np.array_equal(ma.mask, mb.mask)

    def test_different_seed_differs(self):
        a, _ = render_depth_sequence(small_scene(seed=1))
        b, _ = render_depth_sequence(small_scene(seed=2))
        assert not np.array_equal(a[0].values, b[0].values)

    def test_identical_poses_identical_maps(self):
        scene = small_scene()
        scene.trajectory = [RigidTransform.identity()] * 3
        maps, _ = render_depth_sequence(scene)
        assert np.array_equal(maps[0].values, maps[1].values)
        assert np.array_equal(maps[1].values, maps[2].values)

    def test_border_is_exactly_zero_and_masked(self):
        maps, _ = render_depth_sequence(small_scene(border_px=3))
        m = maps[0]
        assert np.all(m.values[:3, :] == 0)
        assert np.all(m.values[:, -3:] == 0)
        assert not m.mask[:3, :].any()
        assert m.mask[3:-3, 3:-3].all()

    def test_rendered_depth_satisfies_ray_surface_equation(self):
        # For the identity pose a pixel ray is (dx, dy, 1) * s with depth s, so
        # the rendered value must solve s = height(s * dx, s * dy).
        scene = small_scene(border_px=0, n_frames=1)
        field = Heightfield.from_seed(scene.surface, scene.seed)
        maps, _ = render_depth_sequence(scene)
        intr = scene.intrinsics
        for v, u in ((0, 0), (17, 23), (35, 47), (10, 40)):
            s = maps[0].values[v, u]
            dx = (u - intr.cx) / intr.fx
            dy = (v - intr.cy) / intr.fy
            height = float(field.height(np.array(s * dx), np.array(s * dy)))
            assert s == pytest.approx(height, abs=1e-9)

    def test_poses_echoed_as_ground_truth(self):
        scene = small_scene()
        _, poses = render_depth_sequence(scene)
        for got, want in zip(poses, scene.trajectory):
            assert np.array_equal(got.R, want.R)
            assert np.array_equal(got.t, want.t)

    def test_outlier_count_exact(self):
        scene = small_scene(outlier_fraction=0.1, border_px=2, n_frames=1)
        clean, _ = render_depth_sequence(small_scene(outlier_fraction=0.0, border_px=2, n_frames=1))
        dirty, _ = render_depth_sequence(scene)
        changed = np.sum(clean[0].values != dirty[0].values)
        assert changed == int(0.1 * clean[0].mask.sum())

    def test_camera_behind_surface_rejected(self):
        scene = small_scene(n_frames=1)
        scene.trajectory = [RigidTransform(np.eye(3), [0.0, 0.0, 100.0])]
        with pytest.raises(ValueError, match="behind the surface"):
            render_depth_sequence(scene)

    def test_sideways_pose_rejected(self):
        scene = small_scene(n_frames=1)
        R = rotation_about_axis([1.0, 0.0, 0.0], np.pi / 2)
        scene.trajectory = [RigidTransform(R, np.zeros(3))]
        with pytest.raises(ValueError, match="degenerate pose"):
            render_depth_sequence(scene)


class TestFrameImages:
    def test_borders_stay_black_and_interior_bright(self):
        maps, _ = render_depth_sequence(small_scene(border_px=4))
        images = render_frame_images(maps)
        img = images[0]
        assert img.shape == (36, 48, 3)
        assert img[:4].max() == 0
        interior = img[4:-4, 4:-4]
        assert interior.min() >= 20

    def test_mask_recoverable_from_frames(self):
        maps, _ = render_depth_sequence(small_scene(border_px=2))
        images = render_frame_images(maps)
        mask = generate_universal_mask([i.astype(float) for i in images], intensity_floor=10)
        assert np.array_equal(mask, maps[0].mask)


class TestPerturbCloud:
    CLOUD = PointCloud(np.random.default_rng(0).uniform(-2, 2, size=(100, 3)))

    def test_identity_noop(self):
        out = perturb_cloud(self.CLOUD, RigidTransform.identity(), 0.0, 0.0, seed=1)
        assert np.array_equal(out.points, self.CLOUD.points)

    def test_outlier_count_exact_floor(self):
        out = perturb_cloud(self.CLOUD, RigidTransform.identity(), 0.0, 0.2, seed=2)
        changed = np.sum(np.any(out.points != self.CLOUD.points, axis=1))
        assert changed == 20
        out2 = perturb_cloud(self.CLOUD, RigidTransform.identity(), 0.0, 0.999, seed=2)
        changed2 = np.sum(np.any(out2.points != self.CLOUD.points, axis=1))
        assert changed2 == 99  # floor(0.999 * 100)

    def test_seed_determinism(self):
        a = perturb_cloud(self.CLOUD, RigidTransform.identity(), 0.05, 0.1, seed=9)
        b = perturb_cloud(self.CLOUD, RigidTransform.identity(), 0.05, 0.1, seed=9)
        assert np.array_equal(a.points, b.points)

    def test_transform_applied(self):
        T = RigidTransform(rotation_about_axis([0, 0, 1], 0.3), [1.0, 2.0, 3.0])
        out = perturb_cloud(self.CLOUD, T, 0.0, 0.0, seed=0)
        want = self.CLOUD.points @ T.R.T + T.t
        assert np.allclose(out.points, want, atol=0)

    def test_bad_fraction_rejected(self):
        with pytest.raises(ValueError, match="fraction"):
            perturb_cloud(self.CLOUD, RigidTransform.identity(), 0.0, 1.0, seed=0)


class TestSceneValidation:
    def test_trajectory_required(self):
        with pytest.raises(ValueError, match="trajectory"):
            SyntheticScene(
                surface=HeightfieldSpec(),
                trajectory=[],
                intrinsics=small_scene().intrinsics,
                width=8,
                height=8,
            )

    def test_default_trajectory_starts_at_identity(self):
        poses = make_default_trajectory(4)
        assert np.array_equal(poses[0].R, np.eye(3))
        assert np.array_equal(poses[0].t, np.zeros(3))
        assert len(poses) == 4
