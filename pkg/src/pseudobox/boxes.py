"""Axis-aligned boxes from complete segments, plus the degenerate-box filter.

Box size is always the tight extent of the member vertices. The center is
the extent midpoint by default so the box encloses every member point; mean
mode centers on the average position instead (same size vector) and can
leave extreme points outside.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cluster import CompleteSegment3D
from .errors import ConfigError, DomainError, LoadError
from .lift import CanonicalCloud

MAX_VOLUME_M3 = 8.5
MIN_POINTS_BY_PROFILE = {"scannet-like": 300, "arkit-like": 500}
CENTER_MODES = ("midpoint", "mean")


@dataclass(frozen=True)
class AxisAlignedBox3D:
    center: np.ndarray
    size: np.ndarray
    segment_id: int
    n_points: int

    def __post_init__(self):
        c = np.asarray(self.center, dtype=np.float64).reshape(3)
        s = np.asarray(self.size, dtype=np.float64).reshape(3)
        if (s < 0).any():
            raise DomainError(f"box size must be non-negative, got {s}")
        if self.n_points < 1:
            raise DomainError(f"box needs at least one point, got {self.n_points}")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "size", s)

    @property
    def volume(self) -> float:
        return float(self.size.prod())

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        half = self.size / 2.0
        return self.center - half, self.center + half


@dataclass(frozen=True)
class BoxFilterConfig:
    min_points: int = MIN_POINTS_BY_PROFILE["scannet-like"]
    max_volume: float = MAX_VOLUME_M3
    center_mode: str = "midpoint"

    def __post_init__(self):
        if self.min_points < 1:
            raise ConfigError(f"min points must be >= 1, got {self.min_points}")
        if not self.max_volume > 0:
            raise ConfigError(f"max volume must be positive, got {self.max_volume}")
        if self.center_mode not in CENTER_MODES:
            raise ConfigError(f"center mode must be one of {CENTER_MODES}")

    @staticmethod
    def for_profile(profile: str, custom_min_points: int = 300,
                    center_mode: str = "midpoint") -> "BoxFilterConfig":
        min_points = MIN_POINTS_BY_PROFILE.get(profile, custom_min_points)
        return BoxFilterConfig(min_points=min_points, center_mode=center_mode)


def box_from_segment(
    seg: CompleteSegment3D, canon: CanonicalCloud, mode: str = "midpoint"
) -> AxisAlignedBox3D:
    if mode not in CENTER_MODES:
        raise ConfigError(f"center mode must be one of {CENTER_MODES}")
    pos = canon.vertices[seg.vertex_ids]
    lo = pos.min(axis=0)
    hi = pos.max(axis=0)
    center = (lo + hi) / 2.0 if mode == "midpoint" else pos.mean(axis=0)
    return AxisAlignedBox3D(center, hi - lo, seg.segment_id, seg.n_points)


def filter_boxes(boxes: list[AxisAlignedBox3D], cfg: BoxFilterConfig) -> list[AxisAlignedBox3D]:
    """Drop boxes with too few points or too much volume; order preserved."""
    return [
        b for b in boxes
        if b.n_points >= cfg.min_points and b.volume <= cfg.max_volume
    ]


def write_boxes_jsonl(path, boxes: list[AxisAlignedBox3D], scene_id: str) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for b in boxes:
            fh.write(json.dumps({
                "scene_id": scene_id,
                "segment_id": int(b.segment_id),
                "center": [float(x) for x in b.center],
                "size": [float(x) for x in b.size],
                "n_points": int(b.n_points),
            }) + "\n")


def read_boxes_jsonl(path) -> list[tuple[str, AxisAlignedBox3D]]:
    """Read a boxes file; returns (scene_id, box) per line, order preserved."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise LoadError(f"{path}: {exc}") from exc
    out = []
    for ln, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            box = AxisAlignedBox3D(
                np.array(doc["center"], dtype=np.float64),
                np.array(doc["size"], dtype=np.float64),
                int(doc["segment_id"]),
                int(doc["n_points"]),
            )
            out.append((str(doc["scene_id"]), box))
        except (KeyError, ValueError, TypeError, json.JSONDecodeError) as exc:
            raise LoadError(f"{path}:{ln}: malformed box record ({exc})") from exc
    return out
