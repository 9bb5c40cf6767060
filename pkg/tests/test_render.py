import math

import numpy as np
import pytest

from oracles import GREY
from simflight import procgen
from simflight.errors import ContractError, OutOfBoundsError
from simflight.render import (CameraIntrinsics, CameraPose, bin_depths, camera_basis,
                              freespace_labels, grid_directions, pixel_directions, read_depth,
                              read_ppm, render, render_depth, render_rgb, write_depth, write_ppm)
from simflight.scene import Box, Light, MaterialSpec, Scene, Wall, corridor_scene, raycast

WHITE = MaterialSpec("solid", (0.8, 0.8, 0.8), (0.8, 0.8, 0.8), 1.0)


@pytest.fixture(scope="module")
def furnished():
    return procgen.generate_scene(procgen.GenConfig(seed=3, template_id=4))


def test_camera_basis_is_orthonormal_and_right_handed():
    for yaw, pitch in [(0.0, 0.0), (1.0, 0.2), (-2.5, -0.1)]:
        b = camera_basis(yaw, pitch)
        np.testing.assert_allclose(b @ b.T, np.eye(3), atol=1e-12)
        # x right, y down, z forward: right x down = forward
        np.testing.assert_allclose(np.cross(b[0], b[1]), b[2], atol=1e-12)
    np.testing.assert_allclose(camera_basis(0.0)[0], (0.0, -1.0, 0.0), atol=1e-15)
    np.testing.assert_allclose(camera_basis(0.0)[1], (0.0, 0.0, -1.0), atol=1e-15)


def test_no_light_no_ambient_is_black():
    s = corridor_scene(ambient=0.0, lights=[Light((5.0, 0.0, 3.0), 0.0)])
    img = render_rgb(s, CameraPose((2.0, 0.0, 1.5), 0.3), CameraIntrinsics(16, 16))
    assert np.all(img == 0.0)


def test_full_ambient_wall_shows_albedo():
    s = corridor_scene(ambient=1.0, materials=[WHITE])
    img = render_rgb(s, CameraPose((19.7, 0.0, 2.0), 0.0), CameraIntrinsics(16, 16))
    np.testing.assert_allclose(img, 0.8, atol=1e-12)


def test_single_light_lambert_value():
    # light 2 m straight behind the camera, wall 3 m ahead: n.l = 1 at the centre
    s = corridor_scene(ambient=0.1, materials=[WHITE], lights=[Light((15.0, 0.0, 2.0), 5.0)])
    intr = CameraIntrinsics(9, 9)
    img = render_rgb(s, CameraPose((17.0, 0.0, 2.0), 0.0), intr)
    expect = 0.8 * (0.1 + 5.0 / (1.0 + 5.0 ** 2))
    np.testing.assert_allclose(img[4, 4], expect, rtol=1e-12)


def test_pixel_values_are_in_unit_range(furnished):
    rng = np.random.default_rng(0)
    for _ in range(5):
        pose = procgen.sample_camera_pose(furnished, rng)
        img = render_rgb(furnished, pose, CameraIntrinsics(32, 24))
        assert img.shape == (24, 32, 3)
        assert np.all(np.isfinite(img)) and img.min() >= 0.0 and img.max() <= 1.0


def test_supersampled_centres_match(furnished):
    """Pixel centres of a WxH image coincide with every third pixel of a 3Wx3H image."""
    rng = np.random.default_rng(1)
    for _ in range(4):
        pose = procgen.sample_camera_pose(furnished, rng)
        lo = render_rgb(furnished, pose, CameraIntrinsics(20, 16))
        hi = render_rgb(furnished, pose, CameraIntrinsics(60, 48))
        sub = hi[1::3, 1::3]
        close = np.isclose(lo, sub, atol=1e-9).all(axis=-1)
        # rays agree to rounding; allow the odd pixel straddling a texture edge
        assert close.mean() > 0.99


def test_render_is_bit_reproducible(furnished):
    pose = procgen.sample_camera_pose(furnished, 5)
    a = render_rgb(furnished, pose, CameraIntrinsics(32, 32))
    b = render_rgb(furnished, pose, CameraIntrinsics(32, 32))
    assert a.tobytes() == b.tobytes()


def test_depth_wall_distance():
    s = corridor_scene(width=20.0, height=10.0)
    d = render_depth(s, CameraPose((17.0, 0.0, 5.0), 0.0), CameraIntrinsics(9, 9))
    assert d[4, 4] == pytest.approx(3.0, abs=1e-12)
    # off-axis pixel: range grows with the ray length through the image plane
    u = ((0 + 0.5) / 9 * 2 - 1) * 1.0
    v = u
    assert d[0, 0] == pytest.approx(3.0 * math.sqrt(1 + u * u + v * v), rel=1e-12)


def test_depth_sentinel_beyond_range():
    s = corridor_scene(length=100.0, width=2.0)
    d = render_depth(s, CameraPose((1.0, 0.0, 2.0), 0.0), CameraIntrinsics(9, 9), max_range=50.0)
    assert math.isinf(d[4, 4])


def test_centre_depth_equals_raycast(furnished):
    rng = np.random.default_rng(7)
    intr = CameraIntrinsics(9, 9)
    for _ in range(20):
        pose = procgen.sample_camera_pose(furnished, rng)
        d = render_depth(furnished, pose, intr)
        fwd = camera_basis(pose.yaw, pose.pitch)[2]
        hit = raycast(furnished, pose.position, fwd, 60.0)
        assert d[4, 4] == (math.inf if hit is None else hit.distance)


def test_freespace_facing_wall_and_open_corridor():
    s = corridor_scene()
    intr = CameraIntrinsics(16, 16)
    assert freespace_labels(s, CameraPose((19.5, 0.0, 2.0), 0.0), intr, 5)[2, 2] == 0
    assert freespace_labels(s, CameraPose((2.0, 0.0, 2.0), 0.0), intr, 5)[2, 2] == 1


def test_labels_are_thresholded_bin_depths(furnished):
    rng = np.random.default_rng(2)
    intr = CameraIntrinsics(32, 32)
    for _ in range(30):
        pose = procgen.sample_camera_pose(furnished, rng)
        lab = freespace_labels(furnished, pose, intr, 11)
        depth = bin_depths(furnished, pose, intr, 11)
        assert lab.dtype == np.uint8
        np.testing.assert_array_equal(lab == 1, depth > 1.0)


def test_labels_ignore_appearance(furnished):
    rng = np.random.default_rng(3)
    pool = procgen.texture_pool(procgen.TRAIN_TEXTURE_SEED, 50)
    other = procgen.randomize_appearance(furnished, rng, pool)
    intr = CameraIntrinsics(16, 16)
    for _ in range(10):
        pose = procgen.sample_camera_pose(furnished, rng)
        np.testing.assert_array_equal(freespace_labels(furnished, pose, intr, 7),
                                      freespace_labels(other, pose, intr, 7))
        assert not np.array_equal(render_rgb(furnished, pose, intr), render_rgb(other, pose, intr))


def _mirror_y(scene):
    walls = [Wall((w.a[0], -w.a[1]), (w.b[0], -w.b[1]), w.z0, w.z1, w.material)
             for w in scene.walls]
    boxes = [Box((b.lo[0], -b.hi[1], b.lo[2]), (b.hi[0], -b.lo[1], b.hi[2]), b.material)
             for b in scene.obstacles]
    lights = [Light((l.position[0], -l.position[1], l.position[2]), l.intensity, l.color)
              for l in scene.lights]
    x0, y0, x1, y1 = scene.bounds
    return Scene(walls=walls, obstacles=boxes, floor_height=scene.floor_height,
                 ceiling_height=scene.ceiling_height, materials=scene.materials,
                 floor_material=scene.floor_material, ceiling_material=scene.ceiling_material,
                 lights=lights, ambient=scene.ambient, bounds=(x0, -y1, x1, -y0))


def test_mirrored_scene_mirrors_image_and_labels():
    mats = [MaterialSpec("solid", (0.9, 0.2, 0.2), (0, 0, 0), 1.0),
            MaterialSpec("solid", (0.2, 0.8, 0.3), (0, 0, 0), 1.0), GREY]
    s = Scene(walls=[Wall((0, -1.5), (10, -1.5), 0, 3, 0), Wall((0, 1.5), (10, 1.5), 0, 3, 1),
                     Wall((10, -1.5), (10, 1.5), 0, 3, 2)],
              obstacles=[Box((3.0, 0.2, 0.0), (3.6, 1.5, 1.2), 1)], floor_height=0.0,
              ceiling_height=3.0, materials=mats, floor_material=2, ceiling_material=2,
              lights=[Light((4.0, 0.7, 2.8), 6.0)], ambient=0.1, bounds=(0, -1.5, 10, 1.5))
    m = _mirror_y(s)
    pose = CameraPose((1.0, 0.0, 1.3), 0.0)
    intr = CameraIntrinsics(33, 25)
    a, da = render(s, pose, intr)
    b, db = render(m, pose, intr)
    np.testing.assert_allclose(a[:, ::-1], b, atol=1e-9)
    np.testing.assert_allclose(da[:, ::-1], db, atol=1e-9)
    np.testing.assert_array_equal(freespace_labels(s, CameraPose((2.6, 0.0, 0.8), 0.0), intr, 9)
                                  [:, ::-1],
                                  freespace_labels(m, CameraPose((2.6, 0.0, 0.8), 0.0), intr, 9))


def test_grid_and_pixel_directions_are_unit():
    intr = CameraIntrinsics(20, 12)
    for d in (pixel_directions(intr), grid_directions(7, intr)):
        np.testing.assert_allclose(np.linalg.norm(d, axis=-1), 1.0, atol=1e-12)
    np.testing.assert_allclose(grid_directions(7, intr)[3, 3], (0.0, 0.0, 1.0))


def test_pose_outside_scene_rejected():
    s = corridor_scene()
    with pytest.raises(OutOfBoundsError):
        render_rgb(s, CameraPose((30.0, 0.0, 1.0), 0.0), CameraIntrinsics(8, 8))
    with pytest.raises(ContractError):
        render_rgb(s, CameraPose((3.0, 0.0, 1.0), math.nan), CameraIntrinsics(8, 8))


@pytest.mark.parametrize("kw", [dict(width=4), dict(height=7), dict(horizontal_fov=math.pi),
                                dict(horizontal_fov=0.0)])
def test_intrinsics_validation(kw):
    with pytest.raises(ContractError):
        CameraIntrinsics(**kw)


@pytest.mark.parametrize("M", [0, 2, 4])
def test_even_grid_rejected(M):
    with pytest.raises(ContractError):
        grid_directions(M, CameraIntrinsics())


def test_ppm_and_depth_roundtrip(tmp_path, furnished):
    pose = procgen.sample_camera_pose(furnished, 9)
    img, depth = render(furnished, pose, CameraIntrinsics(24, 16))
    write_ppm(tmp_path / "a.ppm", img)
    back = read_ppm(tmp_path / "a.ppm")
    assert back.shape == img.shape
    assert np.max(np.abs(back - img)) <= 0.5 / 255 + 1e-12
    assert (tmp_path / "a.ppm").read_bytes().startswith(b"P6\n24 16\n255\n")
    depth[0, 0] = math.inf
    write_depth(tmp_path / "a.depth", depth)
    np.testing.assert_array_equal(read_depth(tmp_path / "a.depth"), depth.astype(np.float32))
    raw = (tmp_path / "a.depth").read_bytes()
    assert len(raw) == 8 + 8 + 4 * 24 * 16
