import json

import numpy as np
import pytest

from pseudobox import formats
from pseudobox.errors import DomainError, LoadError
from pseudobox.geom import DepthMap
from pseudobox.ingest import (
    EmbeddingTable,
    SegmentMask2D,
    filter_segments_2d,
    load_embedding_table,
    load_scene,
    select_by_scores,
    select_frames,
    sharpness_score,
)


def _write_minimal_scene(root, n_frames=2, width=8, height=6, mutate=None):
    """Tiny hand-built scene; mutate(manifest_dict) can corrupt it."""
    frames = []
    for i in range(n_frames):
        depth = np.full((height, width), 1500, dtype=np.uint16)
        mask = np.zeros((height, width), dtype=np.uint16)
        formats.write_pgm(root / f"d{i}.pgm", depth)
        formats.write_pgm(root / f"m{i}.pgm", mask)
        frames.append({
            "index": i, "fx": 10.0, "fy": 10.0, "cx": 4.0, "cy": 3.0,
            "width": width, "height": height,
            "rotation": [1, 0, 0, 0, 1, 0, 0, 0, 1],
            "translation": [0.0, 0.0, 0.0],
            "depth": f"d{i}.pgm", "mask": f"m{i}.pgm",
        })
    manifest = {"scene_id": "toy", "dataset_profile": "custom", "frames": frames}
    if mutate is not None:
        mutate(manifest)
    path = root / "manifest.json"
    path.write_text(json.dumps(manifest))
    return path


def test_load_minimal_scene(tmp_path):
    path = _write_minimal_scene(tmp_path)
    scene = load_scene(path)
    assert scene.scene_id == "toy"
    assert scene.dataset_profile == "custom"
    assert len(scene.frames) == 2
    # 1500 mm on disk -> 1.5 m in memory
    assert np.allclose(scene.frames[0].depth.values, 1.5)


def test_load_scene_accepts_directory(tmp_path):
    _write_minimal_scene(tmp_path)
    scene = load_scene(tmp_path / "manifest.json")
    assert len(scene.frames) == 2


def test_unknown_manifest_key_rejected(tmp_path):
    def mutate(m):
        m["extra"] = 1
    path = _write_minimal_scene(tmp_path, mutate=mutate)
    with pytest.raises(LoadError, match="extra"):
        load_scene(path)


def test_unknown_frame_key_rejected(tmp_path):
    def mutate(m):
        m["frames"][0]["weird"] = 1
    path = _write_minimal_scene(tmp_path, mutate=mutate)
    with pytest.raises(LoadError, match="weird"):
        load_scene(path)


def test_missing_frame_key_rejected(tmp_path):
    def mutate(m):
        del m["frames"][0]["fx"]
    path = _write_minimal_scene(tmp_path, mutate=mutate)
    with pytest.raises(LoadError, match="fx"):
        load_scene(path)


def test_indices_must_strictly_increase(tmp_path):
    def mutate(m):
        m["frames"][1]["index"] = 0
    path = _write_minimal_scene(tmp_path, mutate=mutate)
    with pytest.raises(LoadError):
        load_scene(path)


def test_unknown_profile_rejected(tmp_path):
    def mutate(m):
        m["dataset_profile"] = "kitti"
    path = _write_minimal_scene(tmp_path, mutate=mutate)
    with pytest.raises(LoadError, match="kitti"):
        load_scene(path)


def test_empty_frames_rejected(tmp_path):
    def mutate(m):
        m["frames"] = []
    path = _write_minimal_scene(tmp_path, mutate=mutate)
    with pytest.raises(LoadError):
        load_scene(path)


def test_missing_depth_file_names_path(tmp_path):
    path = _write_minimal_scene(tmp_path)
    (tmp_path / "d0.pgm").unlink()
    with pytest.raises(LoadError, match="d0.pgm"):
        load_scene(path)


def test_dimension_mismatch_names_path_and_size(tmp_path):
    def mutate(m):
        m["frames"][0]["width"] = 640
        m["frames"][0]["height"] = 480
    path = _write_minimal_scene(tmp_path, mutate=mutate)
    with pytest.raises(LoadError, match=r"d0\.pgm"):
        load_scene(path)


def test_ignore_ids_zeroed(tmp_path):
    def mutate(m):
        m["frames"][0]["ignore_ids"] = [2]
    path = _write_minimal_scene(tmp_path, mutate=mutate)
    mask = np.zeros((6, 8), dtype=np.uint16)
    mask[0:3, 0:4] = 2
    mask[3:, 4:] = 3
    formats.write_pgm(tmp_path / "m0.pgm", mask)
    scene = load_scene(path)
    ids = scene.frames[0].mask.segment_ids()
    assert 2 not in ids and 3 in ids


def test_synth_scene_round_trip(tiny_scene):
    scene = load_scene(tiny_scene / "manifest.json")
    assert len(scene.frames) == 8
    assert scene.mesh_path is not None and scene.mesh_path.exists()
    # rasters reload bit-exactly
    depth_mm = formats.read_pgm(scene.frames[0].record.depth_path)
    assert np.array_equal(
        depth_mm.astype(np.float64) / 1000.0, scene.frames[0].depth.values
    )


def test_sharpness_zero_for_constant_image():
    img = np.full((16, 16), 77, dtype=np.uint8)
    assert sharpness_score(img) == 0.0


def test_sharpness_invariant_to_offset():
    rng = np.random.default_rng(0)
    img = rng.integers(0, 100, (12, 12)).astype(np.uint8)
    a = sharpness_score(img)
    b = sharpness_score(img + 50)
    assert np.isclose(a, b)


def test_sharpness_drops_after_blur():
    n = 24
    img = np.indices((n, n)).sum(axis=0) % 2 * 200
    img = img.astype(np.float64)
    blurred = img.copy()
    for _ in range(1):
        padded = np.pad(blurred, 1, mode="edge")
        blurred = sum(
            padded[1 + di : n + 1 + di, 1 + dj : n + 1 + dj]
            for di in (-1, 0, 1)
            for dj in (-1, 0, 1)
        ) / 9.0
    assert sharpness_score(blurred) < sharpness_score(img)


def test_sharpness_requires_3x3():
    with pytest.raises(DomainError):
        sharpness_score(np.zeros((2, 5), dtype=np.uint8))


def test_select_by_scores_interval_example():
    # 10 frames, target 5, score = index: sharpest of each 2-frame interval
    keep = select_by_scores(np.arange(10, dtype=float), 5)
    assert keep.tolist() == [1, 3, 5, 7, 9]


def test_select_by_scores_rounds_fill_target():
    # one interval is much sharper; later rounds must revisit it
    scores = np.array([9.0, 8.0, 7.0, 0.1, 0.2, 0.3])
    keep = select_by_scores(scores, 4)
    assert len(keep) == 4
    assert sorted(set(keep.tolist())) == keep.tolist()


def test_select_by_scores_tie_prefers_earlier():
    keep = select_by_scores(np.zeros(4), 2)
    assert keep.tolist() == [0, 2]


def test_select_frames_exhaustion(tmp_path):
    path = _write_minimal_scene(tmp_path, n_frames=3)
    scene = load_scene(path)
    assert len(select_frames(scene, 20)) == 3


def test_select_frames_uniform_without_gray(tmp_path):
    path = _write_minimal_scene(tmp_path, n_frames=6)
    scene = load_scene(path)
    picked = select_frames(scene, 3)
    assert len(picked) == 3
    idx = [f.index for f in picked]
    assert idx == sorted(idx) and len(set(idx)) == 3


def _mask_depth(mask_ids, depth_m):
    return (
        SegmentMask2D(mask_ids.astype(np.int32), 0),
        DepthMap(depth_m.astype(np.float64)),
    )


def test_filter_drops_small_bbox():
    ids = np.zeros((100, 120), dtype=np.int32)
    ids[10:39, 10:90] = 1  # 29 px tall: under the 30 px minimum
    mask, depth = _mask_depth(ids, np.ones((100, 120)))
    out = filter_segments_2d(mask, depth)
    assert out.segment_ids().size == 0


def test_filter_drops_mostly_invalid_depth():
    ids = np.zeros((120, 120), dtype=np.int32)
    ids[10:110, 10:110] = 1  # 100x100 bbox
    depth = np.zeros((120, 120))
    member = np.flatnonzero(ids.ravel() == 1)[:50]
    flat = depth.ravel()
    flat[member] = 2.0  # 50 valid of 10000: ratio 0.005 < 0.02
    mask, depth = _mask_depth(ids, flat.reshape(120, 120))
    out = filter_segments_2d(mask, depth)
    assert out.segment_ids().size == 0


def test_filter_keeps_valid_segment():
    ids = np.zeros((120, 120), dtype=np.int32)
    ids[10:110, 10:110] = 1
    depth = np.zeros((120, 120))
    flat = depth.ravel()
    flat[np.flatnonzero(ids.ravel() == 1)[:5000]] = 2.0
    mask, depth = _mask_depth(ids, flat.reshape(120, 120))
    out = filter_segments_2d(mask, depth)
    assert out.segment_ids().tolist() == [1]


def test_filter_idempotent():
    rng = np.random.default_rng(1)
    ids = np.zeros((90, 90), dtype=np.int32)
    ids[5:80, 5:80] = 1
    ids[40:60, 40:55] = 2
    depth = rng.uniform(0.5, 3.0, (90, 90))
    mask, dm = _mask_depth(ids, depth)
    once = filter_segments_2d(mask, dm)
    twice = filter_segments_2d(once, dm)
    assert np.array_equal(once.ids, twice.ids)


def test_filter_dimension_mismatch():
    mask, _ = _mask_depth(np.zeros((4, 4), dtype=np.int32), np.ones((4, 4)))
    with pytest.raises(DomainError):
        filter_segments_2d(mask, DepthMap(np.ones((5, 5))))


def test_load_embedding_table(tmp_path):
    rng = np.random.default_rng(2)
    segs = [(0, 1, rng.standard_normal(6)), (2, 1, rng.standard_normal(6))]
    bank = [
        (formats.TEXT_BANK_FRAME, 0, rng.standard_normal(6)),
        (formats.TEXT_BANK_FRAME, 1, rng.standard_normal(6)),
    ]
    p = tmp_path / "mixed.emb"
    formats.write_embeddings(p, 6, segs + bank)
    formats.sidecar_path(p).write_text('["sofa", "lamp"]')
    table = load_embedding_table(p)
    assert isinstance(table, EmbeddingTable)
    assert table.dim == 6
    assert set(table.segment_vectors) == {(0, 1), (2, 1)}
    assert table.class_names == ["sofa", "lamp"]
    assert table.text_vectors.shape == (2, 6)
    assert np.allclose(table.text_vectors[0], bank[0][2], atol=1e-6)


def test_load_embedding_table_requires_dense_class_indices(tmp_path):
    rng = np.random.default_rng(3)
    p = tmp_path / "sparse.emb"
    formats.write_embeddings(
        p, 4, [(formats.TEXT_BANK_FRAME, 0, rng.standard_normal(4)),
               (formats.TEXT_BANK_FRAME, 2, rng.standard_normal(4))]
    )
    formats.sidecar_path(p).write_text('["a", "b", "c"]')
    with pytest.raises(LoadError):
        load_embedding_table(p)
