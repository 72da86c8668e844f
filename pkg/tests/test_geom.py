import numpy as np
import pytest

from pseudobox.errors import GeometryError
from pseudobox.geom import (
    CameraIntrinsics,
    CameraPose,
    DepthMap,
    VoxelGridSpec,
    backproject_pixel,
    backproject_pixels,
    project_point,
    project_points,
    voxel_key_of,
    voxel_keys_of,
)

from conftest import random_rotation

INTR = CameraIntrinsics(fx=100.0, fy=100.0, cx=80.0, cy=60.0, width=160, height=120)
IDENT = CameraPose(np.eye(3), np.zeros(3))


def test_backproject_principal_point_is_on_axis():
    p = backproject_pixel(INTR, IDENT, 2.0, 80.0, 60.0)
    assert np.allclose(p, [0.0, 0.0, 2.0])


def test_backproject_known_offsets():
    # one pixel right of center at depth 2 m -> x = 2 * 1/100
    p = backproject_pixel(INTR, IDENT, 2.0, 81.0, 60.0)
    assert np.allclose(p, [0.02, 0.0, 2.0])
    p = backproject_pixel(INTR, IDENT, 2.0, 80.0, 61.0)
    assert np.allclose(p, [0.0, 0.02, 2.0])


def test_project_inverts_backproject():
    rng = np.random.default_rng(3)
    for _ in range(50):
        pose = CameraPose(random_rotation(rng), rng.uniform(-2, 2, 3))
        u = rng.uniform(0, INTR.width - 1e-3)
        v = rng.uniform(0, INTR.height - 1e-3)
        d = rng.uniform(0.1, 10.0)
        world = backproject_pixel(INTR, pose, d, u, v)
        u2, v2, d2 = project_point(INTR, pose, world)
        assert abs(u - u2) < 1e-9 and abs(v - v2) < 1e-9 and abs(d - d2) < 1e-9


def test_vectorized_backproject_matches_scalar():
    rng = np.random.default_rng(4)
    pose = CameraPose(random_rotation(rng), rng.uniform(-1, 1, 3))
    u = rng.uniform(0, 159, 20)
    v = rng.uniform(0, 119, 20)
    d = rng.uniform(0.2, 5.0, 20)
    pts = backproject_pixels(INTR, pose, d, u, v)
    for i in range(20):
        assert np.allclose(pts[i], backproject_pixel(INTR, pose, d[i], u[i], v[i]))


def test_vectorized_project_matches_scalar():
    rng = np.random.default_rng(5)
    pose = CameraPose(random_rotation(rng), rng.uniform(-1, 1, 3))
    pts = pose.camera_center() + rng.uniform(-0.3, 0.3, (15, 3))
    # keep the points in front of the camera
    pts += pose.rotation.T @ np.array([0, 0, 2.0])
    us, vs, ds = project_points(INTR, pose, pts)
    for i in range(15):
        u, v, d = project_point(INTR, pose, pts[i])
        assert np.allclose((us[i], vs[i], ds[i]), (u, v, d))


def test_backproject_rejects_bad_pixels_and_depth():
    with pytest.raises(GeometryError):
        backproject_pixel(INTR, IDENT, 0.0, 10, 10)
    with pytest.raises(GeometryError):
        backproject_pixel(INTR, IDENT, -1.0, 10, 10)
    with pytest.raises(GeometryError):
        backproject_pixel(INTR, IDENT, 1.0, 160.0, 10)
    with pytest.raises(GeometryError):
        backproject_pixel(INTR, IDENT, 1.0, 10, -0.5)


def test_project_rejects_point_behind_camera():
    with pytest.raises(GeometryError):
        project_point(INTR, IDENT, np.array([0.0, 0.0, -1.0]))


def test_intrinsics_validation():
    with pytest.raises(GeometryError):
        CameraIntrinsics(fx=-1, fy=100, cx=80, cy=60, width=160, height=120)
    with pytest.raises(GeometryError):
        CameraIntrinsics(fx=100, fy=100, cx=200, cy=60, width=160, height=120)
    assert INTR.matrix()[0, 0] == 100.0


def test_pose_validation_rejects_non_rotation():
    with pytest.raises(GeometryError):
        CameraPose(np.eye(3) * 2.0, np.zeros(3))
    flip = np.diag([1.0, 1.0, -1.0])  # orthonormal but det = -1
    with pytest.raises(GeometryError):
        CameraPose(flip, np.zeros(3))


def test_camera_center():
    rng = np.random.default_rng(6)
    r = random_rotation(rng)
    t = rng.uniform(-1, 1, 3)
    pose = CameraPose(r, t)
    assert np.allclose(pose.camera_center(), -r.T @ t)
    # the camera center projects to depth 0; anything at the center is singular
    u, v, d = project_point(INTR, pose, pose.camera_center() + r.T @ [0, 0, 1.5])
    assert np.allclose((u, v, d), (80.0, 60.0, 1.5))


def test_depth_map_validity():
    dm = DepthMap(np.array([[0.0, 1.5], [2.0, 0.0]]))
    assert dm.validity.sum() == 2
    assert dm.width == 2 and dm.height == 2
    with pytest.raises(GeometryError):
        DepthMap(np.array([1.0, 2.0]))
    with pytest.raises(GeometryError):
        DepthMap(np.array([[np.nan, 1.0]]))
    with pytest.raises(GeometryError):
        DepthMap(np.array([[-0.1, 1.0]]))


def test_voxel_keys_floor_semantics():
    spec = VoxelGridSpec(0.05)
    assert voxel_key_of(spec, np.array([0.0, 0.0, 0.0])) == (0, 0, 0)
    assert voxel_key_of(spec, np.array([0.049, 0.05, 0.1])) == (0, 1, 2)
    assert voxel_key_of(spec, np.array([-0.01, 0.0, 0.0])) == (-1, 0, 0)
    pts = np.array([[0.0, 0.0, 0.0], [-0.01, 0.06, 0.11]])
    keys = voxel_keys_of(spec, pts)
    assert keys.dtype == np.int64
    assert keys.tolist() == [[0, 0, 0], [-1, 1, 2]]


def test_voxel_grid_origin_shift():
    spec = VoxelGridSpec(0.1, origin=np.array([0.05, 0.0, 0.0]))
    assert voxel_key_of(spec, np.array([0.0, 0.0, 0.0])) == (-1, 0, 0)


def test_voxel_grid_validation():
    with pytest.raises(GeometryError):
        VoxelGridSpec(0.0)
    with pytest.raises(GeometryError):
        VoxelGridSpec(0.1, origin=np.zeros(2))
