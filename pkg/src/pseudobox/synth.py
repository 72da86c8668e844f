"""Synthetic-scene oracle: seeded rooms of known cuboids, a slab-method
depth/mask renderer, optional sensor-style noise, and an ingest-compatible
scene writer. This is the independent harness the end-to-end tests run on.

Objects float above the floor and keep a margin from the walls so their
surface points never snap onto room geometry; sizes are chosen so that every
object resolves to well more than a box-filter's worth of canonical vertices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .boxes import AxisAlignedBox3D, write_boxes_jsonl
from .errors import ConfigError, DomainError
from .formats import write_pgm, write_ply
from .geom import CameraIntrinsics, CameraPose, DepthMap
from .ingest import SegmentMask2D
from .meshref import TriangleMesh

WALL_MARGIN_M = 0.45
OBJECT_GAP_M = 0.3
FLOAT_HEIGHT_M = 0.15
SIZE_RANGE_M = (0.55, 1.2)
HEIGHT_RANGE_M = (0.45, 1.0)
PLACEMENT_RETRIES = 400


@dataclass(frozen=True)
class NoiseConfig:
    depth_sigma: float = 0.0
    mask_erosion_px: int = 0
    split_prob: float = 0.0

    def __post_init__(self):
        if self.depth_sigma < 0:
            raise ConfigError(f"depth sigma must be >= 0, got {self.depth_sigma}")
        if self.mask_erosion_px < 0:
            raise ConfigError(f"erosion must be >= 0, got {self.mask_erosion_px}")
        if not 0.0 <= self.split_prob <= 1.0:
            raise ConfigError(f"split probability must lie in [0, 1], got {self.split_prob}")

    @property
    def active(self) -> bool:
        return self.depth_sigma > 0 or self.mask_erosion_px > 0 or self.split_prob > 0


@dataclass(frozen=True)
class RenderConfig:
    width: int = 320
    height: int = 240
    near: float = 0.05
    far: float = 50.0

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ConfigError("raster dimensions must be positive")
        if not 0 < self.near < self.far:
            raise ConfigError(f"need 0 < near < far, got ({self.near}, {self.far})")


@dataclass(frozen=True)
class SyntheticScene:
    room_size: np.ndarray
    objects: list[AxisAlignedBox3D]
    cameras: list[tuple[CameraIntrinsics, CameraPose]]
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    seed: int = 0

    def __post_init__(self):
        room = np.asarray(self.room_size, dtype=np.float64).reshape(3)
        if (room <= 0).any():
            raise ConfigError(f"room size must be positive, got {room}")
        for b in self.objects:
            lo, hi = b.bounds()
            if (lo < -1e-9).any() or (hi > room + 1e-9).any():
                raise ConfigError(f"object {b.segment_id} leaves the room")
        object.__setattr__(self, "room_size", room)

    @property
    def scene_id(self) -> str:
        return f"synth-{self.seed:06d}"


def look_at(eye: np.ndarray, target: np.ndarray) -> CameraPose:
    """World-to-camera pose with +z forward, +x right, +y down, world z up."""
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    norm = np.linalg.norm(forward)
    if norm == 0:
        raise DomainError("camera eye coincides with target")
    forward /= norm
    up = np.array([0.0, 0.0, 1.0])
    right = np.cross(forward, up)
    if np.linalg.norm(right) < 1e-9:  # looking straight up/down
        up = np.array([0.0, 1.0, 0.0])
        right = np.cross(forward, up)
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    rotation = np.stack([right, down, forward])
    return CameraPose(rotation, -rotation @ eye)


def generate_scene(
    seed: int,
    n_objects: int,
    room_size=(6.0, 6.0, 3.0),
    n_cameras: int = 8,
    image_size: tuple[int, int] = (320, 240),
    noise: NoiseConfig = NoiseConfig(),
) -> SyntheticScene:
    """Seeded room with non-overlapping floating cuboids and a camera ring."""
    if n_objects < 0:
        raise ConfigError(f"object count must be >= 0, got {n_objects}")
    if n_cameras < 8:
        raise ConfigError(f"need at least 8 cameras, got {n_cameras}")
    room = np.asarray(room_size, dtype=np.float64).reshape(3)
    rng = np.random.default_rng(seed)

    objects: list[AxisAlignedBox3D] = []
    placed_bounds: list[tuple[np.ndarray, np.ndarray]] = []
    for obj_id in range(1, n_objects + 1):
        for _ in range(PLACEMENT_RETRIES):
            size = np.array([
                rng.uniform(*SIZE_RANGE_M),
                rng.uniform(*SIZE_RANGE_M),
                rng.uniform(*HEIGHT_RANGE_M),
            ])
            z_lo = rng.uniform(FLOAT_HEIGHT_M, 0.45)
            lo_min = np.array([WALL_MARGIN_M, WALL_MARGIN_M, z_lo])
            hi_max = room - np.array([WALL_MARGIN_M, WALL_MARGIN_M, 0.0])
            span = hi_max - lo_min - np.array([size[0], size[1], 0.0])
            if span[0] <= 0 or span[1] <= 0 or z_lo + size[2] > room[2] - 0.4:
                continue
            lo = np.array([
                lo_min[0] + rng.uniform(0, span[0]),
                lo_min[1] + rng.uniform(0, span[1]),
                z_lo,
            ])
            hi = lo + size
            # require a clear gap to every placed object
            ok = True
            for plo, phi in placed_bounds:
                if (lo - OBJECT_GAP_M < phi).all() and (hi + OBJECT_GAP_M > plo).all():
                    ok = False
                    break
            if ok:
                objects.append(
                    AxisAlignedBox3D((lo + hi) / 2.0, size, obj_id, 1)
                )
                placed_bounds.append((lo, hi))
                break
        else:
            raise DomainError(
                f"could not place object {obj_id} after {PLACEMENT_RETRIES} tries"
            )

    width, height = image_size
    # wide lens so the ring of inward cameras covers the whole placement zone
    intr = CameraIntrinsics(
        fx=0.6 * width, fy=0.6 * width, cx=width / 2.0, cy=height / 2.0,
        width=width, height=height,
    )
    center = np.array([room[0] / 2.0, room[1] / 2.0, 0.0])
    ring_r = 0.38 * min(room[0], room[1])
    # high vantage clears sightlines over mid-room objects to the far wall
    cam_h = min(2.2, room[2] - 0.3)
    target = center + np.array([0.0, 0.0, 0.8])
    cameras = []
    for k in range(n_cameras):
        ang = 2.0 * np.pi * k / n_cameras
        eye = center + np.array([ring_r * np.cos(ang), ring_r * np.sin(ang), cam_h])
        cameras.append((intr, look_at(eye, target)))

    return SyntheticScene(room, objects, cameras, noise=noise, seed=seed)


def _slab_hits(eye, dirs, lo, hi):
    """Entry and exit ray parameters of an AABB for a bundle of rays."""
    d = np.where(np.abs(dirs) < 1e-12, np.copysign(1e-12, dirs), dirs)
    t1 = (lo - eye) / d
    t2 = (hi - eye) / d
    entry = np.minimum(t1, t2).max(axis=-1)
    exit_ = np.maximum(t1, t2).min(axis=-1)
    return entry, exit_


def _render_camera(
    scene: SyntheticScene, intr: CameraIntrinsics, pose: CameraPose, cfg: RenderConfig
) -> tuple[np.ndarray, np.ndarray]:
    h, w = cfg.height, cfg.width
    vs, us = np.mgrid[0:h, 0:w]
    dirs_cam = np.stack(
        [(us - intr.cx) / intr.fx, (vs - intr.cy) / intr.fy, np.ones((h, w))], axis=-1
    )
    dirs = dirs_cam @ pose.rotation  # row-vector form of R^T d
    eye = pose.camera_center()

    # room walls: the camera is inside, so the exit parameter is the wall hit
    entry, exit_ = _slab_hits(eye, dirs, np.zeros(3), scene.room_size)
    depth = exit_.copy()
    mask = np.zeros((h, w), dtype=np.int32)

    for box in scene.objects:
        lo, hi = box.bounds()
        entry, exit_ = _slab_hits(eye, dirs, lo, hi)
        hit = (entry <= exit_) & (entry >= cfg.near) & (entry < depth)
        depth[hit] = entry[hit]
        mask[hit] = box.segment_id

    invalid = (depth < cfg.near) | (depth > cfg.far) | ~np.isfinite(depth)
    depth[invalid] = 0.0
    mask[invalid] = 0
    return depth, mask


def _apply_noise(
    depth: np.ndarray, mask: np.ndarray, noise: NoiseConfig, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    if noise.depth_sigma > 0:
        valid = depth > 0
        depth = depth.copy()
        jitter = rng.normal(0.0, noise.depth_sigma, depth.shape)
        depth[valid] = np.maximum(depth[valid] + jitter[valid], 1e-3)
    if noise.mask_erosion_px > 0:
        eroded = np.zeros_like(mask)
        for sid in np.unique(mask):
            if sid == 0:
                continue
            keep = ndimage.binary_erosion(mask == sid, iterations=noise.mask_erosion_px)
            eroded[keep] = sid
        mask = eroded
    if noise.split_prob > 0:
        mask = mask.copy()
        next_id = int(mask.max()) + 1
        for sid in [s for s in np.unique(mask) if s > 0]:
            if rng.random() >= noise.split_prob:
                continue
            ys, xs = np.nonzero(mask == sid)
            axis_vals = xs if (xs.max() - xs.min()) >= (ys.max() - ys.min()) else ys
            cut = (axis_vals.min() + axis_vals.max() + 1) // 2
            moved = axis_vals >= cut
            if moved.all() or not moved.any():
                continue
            mask[ys[moved], xs[moved]] = next_id
            next_id += 1
    return depth, mask


def render_depth_and_masks(
    scene: SyntheticScene, cfg: RenderConfig
) -> list[tuple[DepthMap, SegmentMask2D]]:
    """Per-camera depth and instance masks; noise per scene.noise."""
    rng = np.random.default_rng([scene.seed, 0xD1CE])
    out = []
    for frame_idx, (intr, pose) in enumerate(scene.cameras):
        if (intr.width, intr.height) != (cfg.width, cfg.height):
            raise ConfigError(
                f"render raster {cfg.width}x{cfg.height} does not match camera "
                f"intrinsics {intr.width}x{intr.height}"
            )
        depth, mask = _render_camera(scene, intr, pose, cfg)
        if scene.noise.active:
            depth, mask = _apply_noise(depth, mask, scene.noise, rng)
        out.append((DepthMap(depth), SegmentMask2D(mask, frame_idx)))
    return out


def ground_truth_boxes(scene: SyntheticScene) -> list[AxisAlignedBox3D]:
    return list(scene.objects)


def _box_face_grids(lo, hi, inward: bool, spacing: float):
    """Per-face vertex grids of an AABB, each face its own sub-mesh.

    Yields (points, normal, nu, nv) per face; the normal points outward
    unless `inward` (used for the room shell).
    """
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    size = hi - lo
    for axis in range(3):
        for side, coord in ((0, lo[axis]), (1, hi[axis])):
            u_axis, v_axis = [a for a in range(3) if a != axis]
            nu = max(1, int(np.ceil(size[u_axis] / spacing)))
            nv = max(1, int(np.ceil(size[v_axis] / spacing)))
            uu = np.linspace(lo[u_axis], hi[u_axis], nu + 1)
            vv = np.linspace(lo[v_axis], hi[v_axis], nv + 1)
            pts = np.zeros(((nu + 1) * (nv + 1), 3))
            grid_u, grid_v = np.meshgrid(uu, vv, indexing="ij")
            pts[:, u_axis] = grid_u.ravel()
            pts[:, v_axis] = grid_v.ravel()
            pts[:, axis] = coord
            normal = np.zeros(3)
            normal[axis] = (1.0 if side else -1.0) * (-1.0 if inward else 1.0)
            yield pts, normal, nu, nv


def build_scene_mesh(scene: SyntheticScene, spacing: float = 0.08) -> TriangleMesh:
    """Tessellated room shell (inward normals) plus object shells (outward).

    Faces do not share vertices across creases, so every face is flat-shaded
    and crease edges never average normals.
    """
    verts = []
    normals = []
    faces = []
    offset = 0

    def add_box(lo, hi, inward):
        nonlocal offset
        for pts, normal, nu, nv in _box_face_grids(lo, hi, inward, spacing):
            n_pts = len(pts)
            verts.append(pts)
            normals.append(np.tile(normal, (n_pts, 1)))
            stride = nv + 1
            iu, iv = np.meshgrid(np.arange(nu), np.arange(nv), indexing="ij")
            a = (iu * stride + iv).ravel() + offset
            b = a + stride
            c = a + 1
            d = b + 1
            faces.append(np.stack([a, b, c], axis=1))
            faces.append(np.stack([c, b, d], axis=1))
            offset += n_pts

    add_box(np.zeros(3), scene.room_size, inward=True)
    for box in scene.objects:
        lo, hi = box.bounds()
        add_box(lo, hi, inward=False)
    return TriangleMesh(
        np.concatenate(verts), np.concatenate(normals), np.concatenate(faces)
    )


def write_scene(
    scene: SyntheticScene,
    out_dir,
    cfg: RenderConfig = RenderConfig(),
    with_mesh: bool = False,
    mesh_spacing: float = 0.08,
    dataset_profile: str = "custom",
) -> Path:
    """Emit a loadable scene directory; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    renders = render_depth_and_masks(scene, cfg)
    frames = []
    for i, ((intr, pose), (depth, mask)) in enumerate(zip(scene.cameras, renders)):
        depth_name = f"depth_{i:03d}.pgm"
        mask_name = f"mask_{i:03d}.pgm"
        depth_mm = np.clip(np.round(depth.values * 1000.0), 0, 65535).astype(np.uint16)
        write_pgm(out_dir / depth_name, depth_mm)
        if mask.ids.max(initial=0) > 65535:
            raise DomainError("mask ids exceed 16-bit storage")
        write_pgm(out_dir / mask_name, mask.ids.astype(np.uint16))
        frames.append({
            "index": i,
            "fx": intr.fx, "fy": intr.fy, "cx": intr.cx, "cy": intr.cy,
            "width": intr.width, "height": intr.height,
            "rotation": [float(x) for x in pose.rotation.ravel()],
            "translation": [float(x) for x in pose.translation],
            "depth": depth_name,
            "mask": mask_name,
        })
    manifest = {
        "scene_id": scene.scene_id,
        "dataset_profile": dataset_profile,
        "frames": frames,
    }
    if with_mesh:
        mesh = build_scene_mesh(scene, spacing=mesh_spacing)
        write_ply(out_dir / "mesh.ply", mesh.vertices, mesh.normals, mesh.faces)
        manifest["mesh"] = "mesh.ply"
    write_boxes_jsonl(out_dir / "gt_boxes.jsonl", scene.objects, scene.scene_id)
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=1))
    return manifest_path
