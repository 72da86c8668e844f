"""Scene loading, sharpness-based frame selection, and 2D segment filtering.

A scene lives in a directory with a JSON manifest naming per-frame depth,
mask, and optional grayscale rasters (paths relative to the manifest), an
optional mesh, and an optional embedding table. Depth is stored in
millimeters and converted to meters here.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import formats
from .errors import DomainError, LoadError
from .geom import CameraIntrinsics, CameraPose, DepthMap

MIN_BBOX_SIDE_PX = 30
MIN_VALID_DEPTH_RATIO = 0.02

DATASET_PROFILES = ("scannet-like", "arkit-like", "custom")

_MANIFEST_KEYS = {"scene_id", "dataset_profile", "frames", "mesh", "embeddings"}
_FRAME_KEYS = {
    "index", "fx", "fy", "cx", "cy", "width", "height",
    "rotation", "translation", "depth", "mask", "gray", "ignore_ids",
}


@dataclass(frozen=True)
class SegmentMask2D:
    """Per-pixel segment ids for one frame; 0 is background."""

    ids: np.ndarray
    frame_index: int

    def __post_init__(self):
        ids = np.asarray(self.ids)
        if ids.ndim != 2 or not np.issubdtype(ids.dtype, np.integer):
            raise LoadError(f"mask must be a 2-D integer raster, got {ids.dtype} {ids.shape}")
        object.__setattr__(self, "ids", ids.astype(np.int32))

    @property
    def height(self) -> int:
        return self.ids.shape[0]

    @property
    def width(self) -> int:
        return self.ids.shape[1]

    def segment_ids(self) -> np.ndarray:
        ids = np.unique(self.ids)
        return ids[ids > 0]


@dataclass(frozen=True)
class FrameRecord:
    index: int
    intrinsics: CameraIntrinsics
    pose: CameraPose
    depth_path: Path
    mask_path: Path
    gray_path: Path | None = None
    ignore_ids: tuple[int, ...] = ()


@dataclass
class LoadedFrame:
    record: FrameRecord
    depth: DepthMap
    mask: SegmentMask2D
    gray: np.ndarray | None = None

    @property
    def index(self) -> int:
        return self.record.index

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return self.record.intrinsics

    @property
    def pose(self) -> CameraPose:
        return self.record.pose


@dataclass
class LoadedScene:
    scene_id: str
    dataset_profile: str
    frames: list[LoadedFrame]
    root: Path
    mesh_path: Path | None = None
    embeddings_path: Path | None = None


@dataclass
class EmbeddingTable:
    """Per-(frame, segment) feature vectors plus an optional text-prompt bank."""

    dim: int
    segment_vectors: dict = field(default_factory=dict)
    class_names: list[str] = field(default_factory=list)
    text_vectors: np.ndarray | None = None


def _parse_frame(entry: dict, root: Path, manifest_path: Path) -> FrameRecord:
    unknown = set(entry) - _FRAME_KEYS
    if unknown:
        raise LoadError(f"{manifest_path}: unknown frame keys {sorted(unknown)}")
    missing = {"index", "fx", "fy", "cx", "cy", "width", "height",
               "rotation", "translation", "depth", "mask"} - set(entry)
    if missing:
        raise LoadError(f"{manifest_path}: frame missing keys {sorted(missing)}")
    intr = CameraIntrinsics(
        fx=float(entry["fx"]), fy=float(entry["fy"]),
        cx=float(entry["cx"]), cy=float(entry["cy"]),
        width=int(entry["width"]), height=int(entry["height"]),
    )
    rotation = np.asarray(entry["rotation"], dtype=np.float64)
    if rotation.size != 9:
        raise LoadError(f"{manifest_path}: rotation must have 9 entries (row-major)")
    pose = CameraPose(rotation.reshape(3, 3), np.asarray(entry["translation"], dtype=np.float64))
    gray = entry.get("gray")
    return FrameRecord(
        index=int(entry["index"]),
        intrinsics=intr,
        pose=pose,
        depth_path=root / entry["depth"],
        mask_path=root / entry["mask"],
        gray_path=(root / gray) if gray else None,
        ignore_ids=tuple(int(i) for i in entry.get("ignore_ids", ())),
    )


def _load_frame(rec: FrameRecord) -> LoadedFrame:
    expected = (rec.intrinsics.height, rec.intrinsics.width)
    depth_raw = formats.read_pgm(rec.depth_path)
    if depth_raw.shape != expected:
        raise LoadError(
            f"{rec.depth_path}: raster is {depth_raw.shape[1]}x{depth_raw.shape[0]}, "
            f"manifest declares {expected[1]}x{expected[0]}"
        )
    mask_raw = formats.read_pgm(rec.mask_path)
    if mask_raw.shape != expected:
        raise LoadError(
            f"{rec.mask_path}: raster is {mask_raw.shape[1]}x{mask_raw.shape[0]}, "
            f"manifest declares {expected[1]}x{expected[0]}"
        )
    gray = None
    if rec.gray_path is not None:
        gray = formats.read_pgm(rec.gray_path)
        if gray.shape != expected:
            raise LoadError(f"{rec.gray_path}: grayscale raster size mismatch")
    mask = mask_raw.astype(np.int32)
    for ignored in rec.ignore_ids:
        mask[mask == ignored] = 0
    return LoadedFrame(
        record=rec,
        depth=DepthMap(depth_raw.astype(np.float64) / 1000.0),
        mask=SegmentMask2D(mask, rec.index),
        gray=gray,
    )


def load_scene(manifest_path, threads: int = 1) -> LoadedScene:
    """Load and validate a scene directory from its manifest."""
    manifest_path = Path(manifest_path)
    try:
        doc = json.loads(manifest_path.read_text())
    except OSError as exc:
        raise LoadError(f"{manifest_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise LoadError(f"{manifest_path}: malformed JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise LoadError(f"{manifest_path}: manifest must be a JSON object")
    unknown = set(doc) - _MANIFEST_KEYS
    if unknown:
        raise LoadError(f"{manifest_path}: unknown manifest keys {sorted(unknown)}")
    for key in ("scene_id", "dataset_profile", "frames"):
        if key not in doc:
            raise LoadError(f"{manifest_path}: missing '{key}'")
    if doc["dataset_profile"] not in DATASET_PROFILES:
        raise LoadError(
            f"{manifest_path}: dataset_profile '{doc['dataset_profile']}' "
            f"not one of {DATASET_PROFILES}"
        )
    if not doc["frames"]:
        raise LoadError(f"{manifest_path}: frame list is empty")

    root = manifest_path.parent
    records = [_parse_frame(entry, root, manifest_path) for entry in doc["frames"]]
    indices = [r.index for r in records]
    if any(b <= a for a, b in zip(indices, indices[1:])):
        raise LoadError(f"{manifest_path}: frame indices must be strictly increasing")

    for rec in records:
        for p in (rec.depth_path, rec.mask_path, rec.gray_path):
            if p is not None and not p.is_file():
                raise LoadError(f"{p}: file not found")

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            frames = list(pool.map(_load_frame, records))
    else:
        frames = [_load_frame(rec) for rec in records]

    mesh_path = root / doc["mesh"] if "mesh" in doc else None
    if mesh_path is not None and not mesh_path.is_file():
        raise LoadError(f"{mesh_path}: file not found")
    emb_path = root / doc["embeddings"] if "embeddings" in doc else None
    if emb_path is not None and not emb_path.is_file():
        raise LoadError(f"{emb_path}: file not found")

    return LoadedScene(
        scene_id=str(doc["scene_id"]),
        dataset_profile=doc["dataset_profile"],
        frames=frames,
        root=root,
        mesh_path=mesh_path,
        embeddings_path=emb_path,
    )


def sharpness_score(gray: np.ndarray) -> float:
    """Variance of the 3x3 discrete Laplacian over interior pixels."""
    g = np.asarray(gray, dtype=np.float64)
    if g.ndim != 2 or g.shape[0] < 3 or g.shape[1] < 3:
        raise DomainError(f"image must be at least 3x3, got shape {g.shape}")
    lap = (
        4.0 * g[1:-1, 1:-1]
        - g[:-2, 1:-1]
        - g[2:, 1:-1]
        - g[1:-1, :-2]
        - g[1:-1, 2:]
    )
    return float(lap.var())


def select_by_scores(scores: np.ndarray, target: int) -> np.ndarray:
    """Positions of selected frames given per-frame sharpness scores.

    Chronological order is the array order. The range is split into `target`
    equal-cardinality contiguous runs; each round takes the sharpest unchosen
    frame of every run (ties to the earlier frame) until `target` frames are
    chosen or none remain.
    """
    scores = np.asarray(scores, dtype=np.float64)
    n = len(scores)
    if target <= 0:
        raise DomainError(f"target count must be positive, got {target}")
    if n <= target:
        return np.arange(n)
    intervals = np.array_split(np.arange(n), target)
    chosen = np.zeros(n, dtype=bool)
    n_chosen = 0
    while n_chosen < target:
        progressed = False
        for run in intervals:
            free = run[~chosen[run]]
            if free.size == 0:
                continue
            # stable argmax: earliest frame wins ties
            best = free[np.argmax(scores[free])]
            chosen[best] = True
            n_chosen += 1
            progressed = True
            if n_chosen == target:
                break
        if not progressed:
            break
    return np.flatnonzero(chosen)


def select_frames(scene: LoadedScene, target: int) -> list[LoadedFrame]:
    """Pick `target` sharp frames spread over the scene, sorted by index.

    Without grayscale rasters on every frame there is no sharpness signal and
    selection degenerates to uniform chronological sampling.
    """
    frames = scene.frames
    n = len(frames)
    if target <= 0:
        raise DomainError(f"target count must be positive, got {target}")
    if n <= target:
        return list(frames)
    if all(f.gray is not None for f in frames):
        scores = np.array([sharpness_score(f.gray) for f in frames])
        keep = select_by_scores(scores, target)
    else:
        keep = np.round(np.linspace(0, n - 1, target)).astype(np.int64)
    return [frames[i] for i in keep]


def filter_segments_2d(
    mask: SegmentMask2D,
    depth: DepthMap,
    min_side: int = MIN_BBOX_SIDE_PX,
    min_valid_ratio: float = MIN_VALID_DEPTH_RATIO,
) -> SegmentMask2D:
    """Drop segments with tiny bounding boxes or mostly invalid depth.

    A segment survives iff min(bbox width, bbox height) >= min_side and
    (valid-depth pixels in segment) / (bbox area) >= min_valid_ratio.
    Surviving segments keep their ids.
    """
    if mask.ids.shape != depth.values.shape:
        raise DomainError(
            f"mask {mask.ids.shape} and depth {depth.values.shape} dimensions differ"
        )
    ids = mask.ids
    valid = depth.validity
    out = ids.copy()
    for sid in mask.segment_ids():
        member = ids == sid
        ys, xs = np.nonzero(member)
        h = ys.max() - ys.min() + 1
        w = xs.max() - xs.min() + 1
        if min(w, h) < min_side or valid[member].sum() / (w * h) < min_valid_ratio:
            out[member] = 0
    return SegmentMask2D(out, mask.frame_index)


def load_embedding_table(path, class_names: list[str] | None = None) -> EmbeddingTable:
    """Read an EMB1 file into segment vectors plus any embedded text bank."""
    dim, records = formats.read_embeddings(path)
    seg_vectors = {}
    text = {}
    for frame, seg, vec in records:
        if frame == formats.TEXT_BANK_FRAME:
            text[seg] = vec
        else:
            seg_vectors[(frame, seg)] = vec
    names: list[str] = []
    matrix = None
    if text:
        if class_names is None:
            class_names = formats.read_class_names(path)
        if len(class_names) != len(text):
            raise LoadError(
                f"{path}: {len(text)} text records but {len(class_names)} class names"
            )
        if sorted(text) != list(range(len(text))):
            raise LoadError(f"{path}: text-bank class indices must be dense from 0")
        names = list(class_names)
        matrix = np.stack([text[i] for i in range(len(text))])
    return EmbeddingTable(dim=dim, segment_vectors=seg_vectors,
                          class_names=names, text_vectors=matrix)
