import numpy as np
import pytest

from scaffusion.geometry import Intrinsics, Pose
from scaffusion.scenegen import (Plane, RenderedFrame, Scene, SceneConfig, Sphere, Texture,
                                 generate_scene, make_triplets)


def flat_texture():
    return Texture(np.array([0.5, 0.5, 0.5]))


def test_fronto_parallel_plane_has_constant_depth():
    scene = Scene([Plane(np.array([0, 0, 2.0]), np.array([0, 0, -1.0]), flat_texture())])
    image, depth = scene.render(Pose.identity(), Intrinsics.from_fov(40, 30))
    np.testing.assert_allclose(depth, 2.0, rtol=0, atol=1e-12)
    assert np.isfinite(image).all() and image.min() >= 0 and image.max() <= 1


def test_sphere_on_axis_nearest_point():
    D, r = 5.0, 1.5
    scene = Scene([Plane(np.array([0, 0, 20.0]), np.array([0, 0, -1.0]), flat_texture()),
                   Sphere(np.array([0, 0, D]), r, flat_texture())])
    K = Intrinsics.from_fov(33, 33)
    _, depth = scene.render(Pose.identity(), K)
    assert depth[16, 16] == pytest.approx(D - r, abs=1e-12)
    assert depth.min() == pytest.approx(D - r, abs=1e-12)


def test_same_seed_is_bit_identical():
    cfg = SceneConfig(seed=5, layout="corridor", n_frames=3, width=48, height=32)
    a, b = generate_scene(cfg), generate_scene(cfg)
    for fa, fb in zip(a, b):
        assert np.array_equal(fa.image, fb.image) and np.array_equal(fa.depth, fb.depth)
        assert np.array_equal(fa.pose.matrix(), fb.pose.matrix())


@pytest.mark.parametrize("layout", ["room", "corridor", "outdoor-strip"])
def test_frames_respect_depth_range_and_motion_bounds(layout):
    cfg = SceneConfig(seed=1, layout=layout, n_frames=6, width=48, height=32)
    frames = generate_scene(cfg)
    lo, hi = cfg.depth_range
    for f in frames:
        assert lo <= f.depth.min() and f.depth.max() <= hi
    for a, b in zip(frames, frames[1:]):
        rel = b.pose @ a.pose.inverse()
        centers = [-(p.rotation.T @ p.translation) for p in (a.pose, b.pose)]
        assert np.linalg.norm(centers[1] - centers[0]) <= cfg.max_step + 1e-9
        angle = np.degrees(np.arccos(np.clip((np.trace(rel.rotation) - 1) / 2, -1, 1)))
        assert angle <= 2 * cfg.max_rot_deg


def test_depth_is_piecewise_smooth():
    frames = generate_scene(SceneConfig(seed=2, layout="room", n_frames=3))
    for f in frames:
        jumps = (np.abs(np.diff(f.depth, axis=1)) > 0.5).mean() + (np.abs(np.diff(f.depth, axis=0)) > 0.5).mean()
        assert jumps < 0.10


def test_config_validation():
    with pytest.raises(ValueError):
        SceneConfig(layout="cave")
    with pytest.raises(ValueError):
        SceneConfig(depth_range=(0.0, 3.0))
    with pytest.raises(ValueError):
        SceneConfig(depth_range=(3.0, 2.0))
    with pytest.raises(ValueError):
        SceneConfig(n_frames=2)


def test_triplet_counts_and_relative_poses():
    frames = generate_scene(SceneConfig(seed=0, n_frames=5, width=32, height=32))
    assert len(make_triplets(frames[:3])) == 1
    trips = make_triplets(frames)
    assert len(trips) == 3
    t = trips[0]
    expected = frames[0].pose.matrix() @ np.linalg.inv(frames[1].pose.matrix())
    np.testing.assert_allclose(t.pose_prev.matrix(), expected, atol=1e-12)
    with pytest.raises(ValueError):
        make_triplets(frames[:2])


def test_static_camera_gives_identity_relative_pose():
    f = generate_scene(SceneConfig(seed=0, n_frames=3, width=32, height=32))[0]
    frames = [RenderedFrame(f.image, f.depth, f.pose, f.intrinsics)] * 3
    t = make_triplets(frames)[0]
    np.testing.assert_allclose(t.pose_prev.matrix(), np.eye(4), atol=1e-12)
    np.testing.assert_allclose(t.pose_next.matrix(), np.eye(4), atol=1e-12)
