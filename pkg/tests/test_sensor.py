import numpy as np
import pytest

from avbench.geometry import CameraIntrinsics, look_at, voxel_key_of
from avbench.scene import GroundTruthScene, ScenarioSpec, SemanticClass, generate_scenario
from avbench.sensor import (
    DepthImage,
    apply_depth_noise,
    depth_to_cloud,
    render_view,
    scene_grid,
    write_pgm,
    write_ppm,
)

INTR = CameraIntrinsics(fx=60, fy=60, cx=40, cy=30, width=80, height=60, z_near=0.1, z_far=2.0)


def single_voxel_scene(key=(0, 0, 25), cls=SemanticClass.FRUIT, r=0.02):
    return GroundTruthScene(r=r, voxels={key: cls}, bounds=((-1, -1, 0), (1, 1, 1)))


class TestRenderView:
    def test_empty_region_all_background(self):
        scene = single_voxel_scene(key=(40, 40, 40))  # far off to the side
        pose = look_at((0, 0, -0.5), (0, 0, 1), up=(0, -1, 0))
        depth, labels = render_view(scene, pose, INTR)
        assert not depth.data.any()
        assert not labels.data.any()

    def test_single_voxel_on_axis(self):
        # camera at origin looking +z; fruit voxel centered 0.51m out
        scene = single_voxel_scene(key=(0, 0, 25))
        pose = look_at((0.01, 0.01, 0.0), (0.01, 0.01, 1.0), up=(0, -1, 0))
        depth, labels = render_view(scene, pose, INTR)
        d = depth.data[30, 40]
        assert 0.5 - scene.r <= d <= 0.52
        assert labels.class_at(40, 30) is SemanticClass.FRUIT

    def test_first_hit_wins(self):
        scene = GroundTruthScene(
            r=0.02,
            voxels={(0, 0, 25): SemanticClass.FRUIT, (0, 0, 15): SemanticClass.LEAF},
            bounds=((-1, -1, 0), (1, 1, 1)),
        )
        pose = look_at((0.01, 0.01, 0.0), (0.01, 0.01, 1.0), up=(0, -1, 0))
        depth, labels = render_view(scene, pose, INTR)
        assert labels.class_at(40, 30) is SemanticClass.LEAF
        assert depth.data[30, 40] < 0.4

    def test_render_is_pure(self):
        scene = generate_scenario(ScenarioSpec.preset("single_cluster", seed=3))
        pose = look_at((0, 0.6, 0.5), (0, 0, 0.5))
        d1, l1 = render_view(scene, pose, INTR)
        d2, l2 = render_view(scene, pose, INTR)
        assert np.array_equal(d1.data, d2.data)
        assert np.array_equal(l1.data, l2.data)

    def test_depth_values_within_clip_range(self):
        scene = generate_scenario(ScenarioSpec.preset("multiple_clusters", seed=3))
        pose = look_at((0, 0.7, 0.5), (0, 0, 0.5))
        depth, _ = render_view(scene, pose, INTR)
        nz = depth.data[depth.data > 0]
        assert nz.min() >= INTR.z_near and nz.max() <= INTR.z_far

    def test_reprojection_lands_in_or_next_to_scene_voxel(self):
        # Every rendered pixel must correspond to an occupied voxel or its
        # entry-side neighbour along the viewing ray.
        scene = generate_scenario(ScenarioSpec.preset("multiple_clusters", seed=3))
        pose = look_at((0, 0.7, 0.5), (0, 0, 0.5))
        depth, _ = render_view(scene, pose, INTR, _cache=scene_grid(scene))
        eye = np.asarray(pose.position)
        rot = pose.rotation()
        bad = 0
        total = 0
        vs, us = np.nonzero(depth.data > 0)
        for u, v in zip(us, vs):
            z = depth.data[v, u]
            p_cam = np.array([(u - INTR.cx) * z / INTR.fx, (v - INTR.cy) * z / INTR.fy, z])
            p = rot @ p_cam + eye
            total += 1
            d = p - eye
            d /= np.linalg.norm(d)
            hits = any(
                voxel_key_of(p + d * t, scene.r) in scene.voxels
                for t in np.linspace(-scene.r, scene.r, 9)
            )
            if not hits:
                # Corner-grazing rays may enter the hit voxel through an
                # edge sliver the line probes can step over; one key off
                # is within tolerance.
                k0 = voxel_key_of(p, scene.r)
                hits = any(
                    (k0[0] + di, k0[1] + dj, k0[2] + dk) in scene.voxels
                    for di in (-1, 0, 1)
                    for dj in (-1, 0, 1)
                    for dk in (-1, 0, 1)
                )
            if not hits:
                bad += 1
        assert total > 100
        assert bad == 0


class TestDepthToCloud:
    def test_all_zero_depth_gives_empty_cloud(self):
        depth = DepthImage(INTR.width, INTR.height, np.zeros((INTR.height, INTR.width)))
        pose = look_at((0, 0, 0), (0, 0, 1), up=(0, -1, 0))
        assert depth_to_cloud(depth, None, pose, INTR) == []

    def test_principal_point_identity_pose(self):
        data = np.zeros((INTR.height, INTR.width))
        data[30, 40] = 1.0
        depth = DepthImage(INTR.width, INTR.height, data)
        pose = look_at((0, 0, 0), (0, 0, 1), up=(0, -1, 0))
        cloud = depth_to_cloud(depth, None, pose, INTR)
        assert len(cloud) == 1
        assert np.allclose(cloud[0][0], [0, 0, 1], atol=1e-12)

    def test_stride_sampling_count(self):
        small = CameraIntrinsics(fx=10, fy=10, cx=2, cy=2, width=4, height=4, z_near=0.1, z_far=2.0)
        depth = DepthImage(4, 4, np.full((4, 4), 1.0))
        pose = look_at((0, 0, 0), (0, 0, 1), up=(0, -1, 0))
        cloud = depth_to_cloud(depth, None, pose, small, stride=2)
        assert len(cloud) == 4

    def test_labels_attached(self):
        data = np.zeros((INTR.height, INTR.width))
        data[30, 40] = 1.0
        depth = DepthImage(INTR.width, INTR.height, data)
        labels = np.zeros((INTR.height, INTR.width), dtype=np.uint8)
        labels[30, 40] = 1  # fruit code
        from avbench.sensor import LabelImage

        li = LabelImage(INTR.width, INTR.height, labels)
        pose = look_at((0, 0, 0), (0, 0, 1), up=(0, -1, 0))
        cloud = depth_to_cloud(depth, li, pose, INTR)
        assert cloud[0][1] is SemanticClass.FRUIT

    def test_dimension_mismatch_rejected(self):
        depth = DepthImage(INTR.width, INTR.height, np.zeros((INTR.height, INTR.width)))
        from avbench.sensor import LabelImage

        li = LabelImage(4, 4, np.zeros((4, 4), dtype=np.uint8))
        pose = look_at((0, 0, 0), (0, 0, 1), up=(0, -1, 0))
        with pytest.raises(ValueError):
            depth_to_cloud(depth, li, pose, INTR)

    def test_bad_stride_rejected(self):
        depth = DepthImage(INTR.width, INTR.height, np.zeros((INTR.height, INTR.width)))
        pose = look_at((0, 0, 0), (0, 0, 1), up=(0, -1, 0))
        with pytest.raises(ValueError):
            depth_to_cloud(depth, None, pose, INTR, stride=0)


class TestDepthNoise:
    def _depth(self):
        rng = np.random.default_rng(2)
        data = rng.uniform(0.2, 1.8, size=(INTR.height, INTR.width))
        data[rng.random(data.shape) < 0.3] = 0.0
        return DepthImage(INTR.width, INTR.height, data)

    def test_zero_noise_is_identity(self):
        depth = self._depth()
        out = apply_depth_noise(depth, sigma=0.0, dropout_p=0.0, rng_seed=7)
        assert np.array_equal(out.data, depth.data)

    def test_full_dropout_zeroes_everything(self):
        out = apply_depth_noise(self._depth(), sigma=0.0, dropout_p=1.0, rng_seed=7)
        assert not out.data.any()

    def test_deterministic_per_seed(self):
        depth = self._depth()
        a = apply_depth_noise(depth, sigma=0.005, dropout_p=0.1, rng_seed=42)
        b = apply_depth_noise(depth, sigma=0.005, dropout_p=0.1, rng_seed=42)
        assert np.array_equal(a.data, b.data)
        c = apply_depth_noise(depth, sigma=0.005, dropout_p=0.1, rng_seed=43)
        assert not np.array_equal(a.data, c.data)

    def test_noise_clamped_to_clip_range(self):
        out = apply_depth_noise(self._depth(), sigma=0.5, dropout_p=0.0, rng_seed=1,
                                z_near=INTR.z_near, z_far=INTR.z_far)
        nz = out.data[out.data > 0]
        assert nz.min() >= INTR.z_near and nz.max() <= INTR.z_far

    def test_invalid_params_rejected(self):
        with pytest.raises(ValueError):
            apply_depth_noise(self._depth(), sigma=-1, dropout_p=0.0, rng_seed=1)
        with pytest.raises(ValueError):
            apply_depth_noise(self._depth(), sigma=0.0, dropout_p=1.5, rng_seed=1)


class TestDebugDumps:
    def test_pgm_and_ppm_headers(self, tmp_path):
        scene = generate_scenario(ScenarioSpec.preset("single_cluster", seed=3))
        pose = look_at((0, 0.6, 0.5), (0, 0, 0.5))
        depth, labels = render_view(scene, pose, INTR)
        pgm = tmp_path / "d.pgm"
        ppm = tmp_path / "l.ppm"
        write_pgm(depth, str(pgm))
        write_ppm(labels, str(ppm))
        assert pgm.read_bytes().startswith(b"P5\n80 60\n255\n")
        assert ppm.read_bytes().startswith(b"P6\n80 60\n255\n")
        assert len(ppm.read_bytes()) == len(b"P6\n80 60\n255\n") + 80 * 60 * 3
