import json

import numpy as np
import pytest

from pseudobox.boxes import AxisAlignedBox3D, read_boxes_jsonl
from pseudobox.errors import ConfigError, DomainError
from pseudobox.eval import iou_aabb
from pseudobox.geom import CameraIntrinsics
from pseudobox.synth import (
    NoiseConfig,
    RenderConfig,
    SyntheticScene,
    build_scene_mesh,
    generate_scene,
    ground_truth_boxes,
    look_at,
    render_depth_and_masks,
    write_scene,
)


def _single_camera_scene(objects, room=(4.0, 4.0, 3.0)):
    """One camera at (1, 2, 1.5) looking down +x at the far wall.

    With fx = fy = 40 on a 40x30 raster every ray exits through the x = 4
    wall, so the empty-room depth is exactly 3 m at every pixel.
    """
    intr = CameraIntrinsics(fx=40.0, fy=40.0, cx=20.0, cy=15.0, width=40, height=30)
    pose = look_at(np.array([1.0, 2.0, 1.5]), np.array([4.0, 2.0, 1.5]))
    return SyntheticScene(np.asarray(room), objects, [(intr, pose)])


def test_generate_is_deterministic():
    a = generate_scene(5, 3)
    b = generate_scene(5, 3)
    assert len(a.objects) == len(b.objects) == 3
    for x, y in zip(a.objects, b.objects):
        assert np.array_equal(x.center, y.center)
        assert np.array_equal(x.size, y.size)
    for (ia, pa), (ib, pb) in zip(a.cameras, b.cameras):
        assert ia == ib
        assert np.array_equal(pa.rotation, pb.rotation)
        assert np.array_equal(pa.translation, pb.translation)
    assert a.scene_id == "synth-000005"


def test_generated_objects_are_disjoint_and_floating():
    scene = generate_scene(11, 8, room_size=(7.0, 7.0, 3.0))
    objs = scene.objects
    assert len(objs) == 8
    for i in range(len(objs)):
        lo, hi = objs[i].bounds()
        assert lo[2] >= 0.15 - 1e-9          # floats above the floor
        assert (lo[:2] >= 0.45 - 1e-9).all() # clear of the walls
        assert (hi[:2] <= 7.0 - 0.45 + 1e-9).all()
        for j in range(i + 1, len(objs)):
            assert iou_aabb(objs[i], objs[j]) == 0.0


def test_generate_validation():
    with pytest.raises(ConfigError):
        generate_scene(0, -1)
    with pytest.raises(ConfigError):
        generate_scene(0, 1, n_cameras=7)
    with pytest.raises(DomainError):
        generate_scene(0, 1, room_size=(1.4, 1.4, 3.0))  # no room between margins


def test_look_at_is_rigid():
    pose = look_at(np.array([1.0, 2.0, 1.5]), np.array([4.0, 2.0, 1.5]))
    assert np.allclose(pose.rotation @ pose.rotation.T, np.eye(3), atol=1e-12)
    assert np.allclose(pose.camera_center(), [1.0, 2.0, 1.5])
    # forward (third row) points from eye to target, world z maps to -y (down)
    assert np.allclose(pose.rotation[2], [1.0, 0.0, 0.0])
    assert np.allclose(pose.rotation[1], [0.0, 0.0, -1.0])


def test_look_at_straight_down_uses_fallback_up():
    pose = look_at(np.array([0.0, 0.0, 2.0]), np.zeros(3))
    assert np.allclose(pose.rotation @ pose.rotation.T, np.eye(3), atol=1e-12)
    assert np.allclose(pose.rotation[2], [0.0, 0.0, -1.0])
    with pytest.raises(DomainError):
        look_at(np.ones(3), np.ones(3))


def test_empty_room_depth_is_wall_distance():
    scene = _single_camera_scene([])
    (depth, mask), = render_depth_and_masks(scene, RenderConfig(40, 30))
    assert np.allclose(depth.values, 3.0)
    assert not mask.ids.any()


def test_object_depth_and_mask_at_center_ray():
    box = AxisAlignedBox3D(np.array([2.3, 2.0, 1.5]), np.array([0.6, 0.8, 0.8]), 1, 1)
    scene = _single_camera_scene([box])
    (depth, mask), = render_depth_and_masks(scene, RenderConfig(40, 30))
    # the center ray is (1, 0, 0): it enters the box at x = 2.0, one meter out
    assert depth.values[15, 20] == pytest.approx(1.0)
    assert mask.ids[15, 20] == 1
    # a corner ray misses the box and still reaches the far wall
    assert depth.values[0, 0] == pytest.approx(3.0)
    assert mask.ids[0, 0] == 0


def test_nearest_object_wins():
    far_box = AxisAlignedBox3D(np.array([3.0, 2.0, 1.5]), np.array([0.4, 1.2, 1.2]), 1, 1)
    near_box = AxisAlignedBox3D(np.array([2.0, 2.0, 1.5]), np.array([0.4, 0.6, 0.6]), 2, 1)
    scene = _single_camera_scene([far_box, near_box])
    (depth, mask), = render_depth_and_masks(scene, RenderConfig(40, 30))
    assert depth.values[15, 20] == pytest.approx(0.8)  # near box front at x = 1.8
    assert mask.ids[15, 20] == 2
    # scene order reversed gives the same winner
    scene2 = _single_camera_scene([near_box, far_box])
    (depth2, mask2), = render_depth_and_masks(scene2, RenderConfig(40, 30))
    assert np.array_equal(depth.values, depth2.values)
    assert np.array_equal(mask.ids, mask2.ids)


def test_render_rejects_raster_mismatch():
    scene = _single_camera_scene([])
    with pytest.raises(ConfigError):
        render_depth_and_masks(scene, RenderConfig(64, 48))


def test_render_is_repeatable_with_noise():
    scene = generate_scene(2, 2, room_size=(5.0, 5.0, 3.0), image_size=(80, 60),
                           noise=NoiseConfig(depth_sigma=0.01, split_prob=0.5))
    cfg = RenderConfig(80, 60)
    a = render_depth_and_masks(scene, cfg)
    b = render_depth_and_masks(scene, cfg)
    for (da, ma), (db, mb) in zip(a, b):
        assert np.array_equal(da.values, db.values)
        assert np.array_equal(ma.ids, mb.ids)


def test_depth_noise_perturbs_but_preserves_structure():
    clean = generate_scene(4, 2, image_size=(80, 60))
    noisy = generate_scene(4, 2, image_size=(80, 60), noise=NoiseConfig(depth_sigma=0.01))
    cfg = RenderConfig(80, 60)
    (d0, m0) = render_depth_and_masks(clean, cfg)[0]
    (d1, m1) = render_depth_and_masks(noisy, cfg)[0]
    assert np.array_equal(m0.ids, m1.ids)  # masks untouched by depth jitter
    diff = np.abs(d1.values - d0.values)
    assert diff.max() > 0
    mean = diff[d0.values > 0].mean()
    assert 0.004 < mean < 0.012  # folded-normal mean of sigma = 0.01 is ~0.008


def test_mask_erosion_shrinks_segments():
    clean = generate_scene(6, 3, image_size=(80, 60))
    eroded = generate_scene(6, 3, image_size=(80, 60), noise=NoiseConfig(mask_erosion_px=2))
    cfg = RenderConfig(80, 60)
    saw_object = False
    for (_, m0), (_, m1) in zip(render_depth_and_masks(clean, cfg),
                                render_depth_and_masks(eroded, cfg)):
        assert (m1.ids[m1.ids > 0] == m0.ids[m1.ids > 0]).all()  # subset, same ids
        if m0.ids.any():
            saw_object = True
            assert (m1.ids > 0).sum() < (m0.ids > 0).sum()
    assert saw_object


def test_split_noise_mints_new_ids():
    clean = generate_scene(8, 3, image_size=(80, 60))
    split = generate_scene(8, 3, image_size=(80, 60), noise=NoiseConfig(split_prob=1.0))
    cfg = RenderConfig(80, 60)
    n_clean = len(np.unique(np.concatenate(
        [m.ids[m.ids > 0] for _, m in render_depth_and_masks(clean, cfg)])))
    split_ids = np.unique(np.concatenate(
        [m.ids[m.ids > 0] for _, m in render_depth_and_masks(split, cfg)]))
    assert split_ids.max() > 3  # ids beyond the true objects exist
    assert len(split_ids) > n_clean


def test_noise_config_validation():
    with pytest.raises(ConfigError):
        NoiseConfig(depth_sigma=-0.1)
    with pytest.raises(ConfigError):
        NoiseConfig(mask_erosion_px=-1)
    with pytest.raises(ConfigError):
        NoiseConfig(split_prob=1.5)
    assert not NoiseConfig().active
    assert NoiseConfig(depth_sigma=0.01).active
    with pytest.raises(ConfigError):
        RenderConfig(near=1.0, far=0.5)


def test_scene_rejects_object_outside_room():
    box = AxisAlignedBox3D(np.array([3.9, 2.0, 1.5]), np.array([0.6, 0.6, 0.6]), 1, 1)
    with pytest.raises(ConfigError, match="leaves the room"):
        _single_camera_scene([box])


def test_scene_mesh_is_flat_shaded_shell():
    scene = _single_camera_scene(
        [AxisAlignedBox3D(np.array([2.0, 2.0, 1.0]), np.array([0.6, 0.6, 0.6]), 1, 1)]
    )
    mesh = build_scene_mesh(scene, spacing=0.25)
    assert np.allclose(np.linalg.norm(mesh.normals, axis=1), 1.0)
    assert mesh.faces.min() >= 0 and mesh.faces.max() < len(mesh.vertices)
    # room shell normals point inward: the floor face (z = 0) has normal +z
    floor = np.flatnonzero(mesh.vertices[:, 2] == 0.0)
    on_floor = floor[np.linalg.norm(mesh.normals[floor] - [0, 0, 1], axis=1) < 1e-12]
    assert on_floor.size > 0
    # object top face (z = 1.3) has an outward +z normal too
    top = np.flatnonzero((np.abs(mesh.vertices[:, 2] - 1.3) < 1e-12)
                         & (np.linalg.norm(mesh.normals - [0, 0, 1], axis=1) < 1e-12))
    assert top.size > 0


def test_write_scene_layout_and_gt_round_trip(tmp_path):
    scene = generate_scene(9, 2, room_size=(5.0, 5.0, 3.0), image_size=(64, 48))
    manifest = write_scene(scene, tmp_path / "s", cfg=RenderConfig(64, 48),
                           with_mesh=True, dataset_profile="scannet-like")
    doc = json.loads(manifest.read_text())
    assert doc["scene_id"] == "synth-000009"
    assert doc["dataset_profile"] == "scannet-like"
    assert doc["mesh"] == "mesh.ply"
    assert len(doc["frames"]) == 8
    for i in range(8):
        assert (tmp_path / "s" / f"depth_{i:03d}.pgm").exists()
        assert (tmp_path / "s" / f"mask_{i:03d}.pgm").exists()
    assert (tmp_path / "s" / "mesh.ply").exists()

    gt = read_boxes_jsonl(tmp_path / "s" / "gt_boxes.jsonl")
    assert len(gt) == 2
    for (sid, box), orig in zip(gt, ground_truth_boxes(scene)):
        assert sid == "synth-000009"
        assert box.segment_id == orig.segment_id
        assert np.array_equal(box.center, orig.center)
        assert np.array_equal(box.size, orig.size)


def test_zero_objects_gives_empty_gt(tmp_path):
    scene = generate_scene(1, 0, image_size=(32, 24))
    assert ground_truth_boxes(scene) == []
    write_scene(scene, tmp_path, cfg=RenderConfig(32, 24))
    assert read_boxes_jsonl(tmp_path / "gt_boxes.jsonl") == []
