"""Class-agnostic box evaluation: AABB IoU, one-to-one greedy matching,
and pooled precision/recall at IoU thresholds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .boxes import AxisAlignedBox3D
from .errors import ConfigError

DEFAULT_THRESHOLDS = (0.25, 0.5)


@dataclass(frozen=True)
class MatchResult:
    pairs: tuple[tuple[int, int, float], ...]
    unmatched_preds: tuple[int, ...]
    unmatched_gts: tuple[int, ...]

    @property
    def n_preds(self) -> int:
        return len(self.pairs) + len(self.unmatched_preds)

    @property
    def n_gts(self) -> int:
        return len(self.pairs) + len(self.unmatched_gts)


@dataclass
class EvalReport:
    thresholds: tuple[float, ...]
    pooled: dict = field(default_factory=dict)
    per_scene: list = field(default_factory=list)
    scene_count: int = 0

    def to_json(self) -> str:
        return json.dumps(
            {
                "thresholds": list(self.thresholds),
                "scene_count": self.scene_count,
                "pooled": self.pooled,
                "per_scene": self.per_scene,
            },
            indent=2,
        )

    def to_text(self) -> str:
        taus = self.thresholds
        head_p = "  ".join(f"P@{t:g}" for t in taus)
        head_r = "  ".join(f"R@{t:g}" for t in taus)
        vals_p = "  ".join(f"{100 * self.pooled[t]['precision']:5.1f}" for t in taus)
        vals_r = "  ".join(f"{100 * self.pooled[t]['recall']:5.1f}" for t in taus)
        return (
            f"scenes: {self.scene_count}\n"
            f"          {head_p}  |  {head_r}\n"
            f"pooled   {vals_p}  |  {vals_r}\n"
        )


def iou_aabb(a: AxisAlignedBox3D, b: AxisAlignedBox3D) -> float:
    """Intersection over union of two axis-aligned boxes; 0 for zero union."""
    lo_a, hi_a = a.bounds()
    lo_b, hi_b = b.bounds()
    overlap = np.minimum(hi_a, hi_b) - np.maximum(lo_a, lo_b)
    if (overlap <= 0).any():
        inter = 0.0
    else:
        inter = float(overlap.prod())
    union = a.volume + b.volume - inter
    if union <= 0:
        return 0.0
    return inter / union


def iou_matrix(preds: list[AxisAlignedBox3D], gts: list[AxisAlignedBox3D]) -> np.ndarray:
    out = np.zeros((len(preds), len(gts)))
    for i, p in enumerate(preds):
        for j, g in enumerate(gts):
            out[i, j] = iou_aabb(p, g)
    return out


def match_boxes(
    preds: list[AxisAlignedBox3D], gts: list[AxisAlignedBox3D], tau: float
) -> MatchResult:
    """Greedy one-to-one matching in descending IoU order.

    Ties break on lower prediction index, then lower ground-truth index;
    pairs below tau are never matched.
    """
    if not 0 < tau <= 1:
        raise ConfigError(f"IoU threshold must lie in (0, 1], got {tau}")
    ious = iou_matrix(preds, gts)
    pi, gi = np.meshgrid(np.arange(len(preds)), np.arange(len(gts)), indexing="ij")
    pi, gi = pi.ravel(), gi.ravel()
    flat = ious.ravel()
    order = np.lexsort((gi, pi, -flat))
    pred_used = np.zeros(len(preds), dtype=bool)
    gt_used = np.zeros(len(gts), dtype=bool)
    pairs = []
    for idx in order:
        if flat[idx] < tau:
            break
        p, g = pi[idx], gi[idx]
        if pred_used[p] or gt_used[g]:
            continue
        pred_used[p] = True
        gt_used[g] = True
        pairs.append((int(p), int(g), float(flat[idx])))
    return MatchResult(
        pairs=tuple(pairs),
        unmatched_preds=tuple(np.flatnonzero(~pred_used)),
        unmatched_gts=tuple(np.flatnonzero(~gt_used)),
    )


def precision_recall(
    matches_by_threshold: dict[float, list[MatchResult]]
) -> EvalReport:
    """Pool match results over scenes into precision/recall per threshold.

    Precision is 0 when there are no predictions; recall is 1 when there are
    no ground truths.
    """
    if not matches_by_threshold:
        raise ConfigError("no thresholds to report")
    taus = tuple(sorted(matches_by_threshold))
    counts = {len(v) for v in matches_by_threshold.values()}
    if len(counts) != 1:
        raise ConfigError("threshold lists cover different scene counts")
    report = EvalReport(thresholds=taus, scene_count=counts.pop())
    for tau in taus:
        results = matches_by_threshold[tau]
        tp = sum(len(r.pairs) for r in results)
        fp = sum(len(r.unmatched_preds) for r in results)
        fn = sum(len(r.unmatched_gts) for r in results)
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 1.0
        report.pooled[tau] = {
            "precision": precision,
            "recall": recall,
            "tp": tp,
            "fp": fp,
            "fn": fn,
        }
    return report


def evaluate_scenes(
    scenes: list[tuple[str, list[AxisAlignedBox3D], list[AxisAlignedBox3D]]],
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS,
) -> EvalReport:
    """Match per scene at every threshold and pool into one report.

    `scenes` holds (scene id, predictions, ground truths) triples.
    """
    if not thresholds:
        raise ConfigError("thresholds list is empty")
    by_tau: dict[float, list[MatchResult]] = {t: [] for t in thresholds}
    for _, preds, gts in scenes:
        for t in thresholds:
            by_tau[t].append(match_boxes(preds, gts, t))
    report = precision_recall(by_tau)
    for i, (scene_id, preds, gts) in enumerate(scenes):
        entry = {"scene_id": scene_id, "n_preds": len(preds), "n_gts": len(gts)}
        for t in thresholds:
            r = by_tau[t][i]
            n_tp = len(r.pairs)
            entry[f"tp@{t:g}"] = n_tp
            entry[f"precision@{t:g}"] = n_tp / len(preds) if preds else 0.0
            entry[f"recall@{t:g}"] = n_tp / len(gts) if gts else 1.0
        report.per_scene.append(entry)
    return report
