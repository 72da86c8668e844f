"""Stage orchestration: ingest -> lift -> graph -> cluster -> [meshref] -> boxes.

Also houses PipelineConfig (the one flat config object behind the CLI), the
evaluation driver, and open-vocabulary classification of finished box files.
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import _kernels, boxes, cluster, eval as evalmod, graph, ingest, lift, meshref
from .errors import ConfigError, LoadError, PipelineError
from .formats import read_ply, write_embeddings
from .geom import VoxelGridSpec
from .semalign import TextPromptBank, average_box_feature, ov_classify

log = logging.getLogger("pseudobox")


@dataclass(frozen=True)
class PipelineConfig:
    frame_target: int = 300
    standardize_cell: float = lift.STANDARDIZE_CELL_M
    snap_radius: float = lift.SNAP_RADIUS_M
    canon_mode: str = "auto"  # auto | voxel-centroids | mesh-vertices
    bucket_cell: float = graph.BUCKET_CELL_M
    theta: float = graph.EDGE_THETA
    walks_per_node: int = 10
    walk_length: int = 40
    window: int = 5
    dim: int = 64
    negatives: int = 5
    epochs: int = 5
    lr: float = 0.025
    lr_min: float = 0.0001
    kmeans_k: int = cluster.KMEANS_K
    kmeans_iters: int = cluster.KMEANS_MAX_ITERS
    link_radius: float = cluster.LINK_RADIUS_M
    msr: bool = False
    msr_k: float = meshref.FH_K
    msr_min_size: int = meshref.FH_MIN_SIZE
    min_points: int = 0  # 0 = use the dataset profile's value
    max_volume: float = boxes.MAX_VOLUME_M3
    center_mode: str = "midpoint"
    thresholds: tuple[float, ...] = evalmod.DEFAULT_THRESHOLDS
    temperature: float = 1.0
    topk: int = 5
    seed: int = 0
    threads: int = 0  # 0 = machine parallelism
    deterministic: bool = True
    dump_nodes: bool = False
    dump_graph: bool = False
    dump_segments: bool = False

    def __post_init__(self):
        if self.frame_target < 1:
            raise ConfigError(f"frame_target must be >= 1, got {self.frame_target}")
        for name in ("standardize_cell", "snap_radius", "bucket_cell", "link_radius",
                     "msr_k", "max_volume", "temperature"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0 < self.theta < 1:
            raise ConfigError(f"theta must lie in (0, 1), got {self.theta}")
        if self.canon_mode not in ("auto", "voxel-centroids", "mesh-vertices"):
            raise ConfigError(f"unknown canon_mode '{self.canon_mode}'")
        if self.kmeans_k < 1:
            raise ConfigError(f"kmeans_k must be >= 1, got {self.kmeans_k}")
        if self.msr_min_size < 1:
            raise ConfigError(f"msr_min_size must be >= 1, got {self.msr_min_size}")
        if self.min_points < 0:
            raise ConfigError(f"min_points must be >= 0, got {self.min_points}")
        if self.center_mode not in boxes.CENTER_MODES:
            raise ConfigError(f"center_mode must be one of {boxes.CENTER_MODES}")
        if not self.thresholds or not all(0 < t <= 1 for t in self.thresholds):
            raise ConfigError(f"thresholds must lie in (0, 1], got {self.thresholds}")
        if self.topk < 1:
            raise ConfigError(f"topk must be >= 1, got {self.topk}")
        if self.threads < 0:
            raise ConfigError(f"threads must be >= 0, got {self.threads}")
        self.walk_config()  # validates the DeepWalk block

    def walk_config(self) -> graph.WalkConfig:
        return graph.WalkConfig(
            walks_per_node=self.walks_per_node,
            walk_length=self.walk_length,
            window=self.window,
            dim=self.dim,
            negatives=self.negatives,
            epochs=self.epochs,
            lr=self.lr,
            lr_min=self.lr_min,
            seed=self.seed,
        )

    def box_filter(self, profile: str) -> boxes.BoxFilterConfig:
        if self.min_points > 0:
            min_points = self.min_points
        else:
            min_points = boxes.MIN_POINTS_BY_PROFILE.get(profile, 300)
        return boxes.BoxFilterConfig(
            min_points=min_points, max_volume=self.max_volume,
            center_mode=self.center_mode,
        )


_CONFIG_FIELDS = {f.name: f for f in fields(PipelineConfig)}


def _parse_value(name: str, raw: str):
    raw = raw.strip().strip('"').strip("'")
    if name not in _CONFIG_FIELDS:
        raise ConfigError(f"unknown config key '{name}'")
    if name == "thresholds":
        try:
            return tuple(float(x) for x in raw.split(",") if x.strip())
        except ValueError as exc:
            raise ConfigError(f"bad thresholds value '{raw}'") from exc
    current = getattr(PipelineConfig(), name)
    if isinstance(current, bool):
        if raw.lower() in ("true", "1", "yes", "on"):
            return True
        if raw.lower() in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"bad boolean for {name}: '{raw}'")
    if isinstance(current, int):
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"bad integer for {name}: '{raw}'") from exc
    if isinstance(current, float):
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"bad number for {name}: '{raw}'") from exc
    return raw


def load_config(path=None, overrides: list[str] | None = None) -> PipelineConfig:
    """Build a config from an optional key=value file plus --set overrides."""
    values = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        for ln, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{ln}: expected key = value")
            key, raw = line.split("=", 1)
            key = key.strip()
            values[key] = _parse_value(key, raw)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set needs key=value, got '{item}'")
        key, raw = item.split("=", 1)
        key = key.strip()
        values[key] = _parse_value(key, raw)
    return PipelineConfig(**values)


class _StageTimer:
    def __init__(self):
        self.stages: list[dict] = []

    def record(self, name: str, seconds: float, **counts):
        entry = {"stage": name, "seconds": round(seconds, 6)}
        entry.update(counts)
        self.stages.append(entry)
        detail = ", ".join(f"{k}={v}" for k, v in counts.items())
        log.info("stage %-8s %7.3fs  %s", name, seconds, detail)


def run_pipeline(scene_path, config: PipelineConfig, out_dir) -> dict:
    """Run the full generation pipeline for one scene directory.

    Returns {"boxes": path, "log": path, "n_boxes": int}. On failure all
    partially written outputs are removed and the error names the stage.
    """
    scene_path = Path(scene_path)
    manifest = scene_path if scene_path.suffix == ".json" else scene_path / "manifest.json"
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    created: list[Path] = []
    timer = _StageTimer()
    stage = "ingest"
    try:
        t0 = time.perf_counter()
        scene = ingest.load_scene(manifest)
        frames = ingest.select_frames(scene, config.frame_target)
        filtered = [
            ingest.filter_segments_2d(f.mask, f.depth) for f in frames
        ]
        n_segments = sum(len(m.segment_ids()) for m in filtered)
        timer.record(stage, time.perf_counter() - t0,
                     frames_total=len(scene.frames), frames_used=len(frames),
                     segments_2d=n_segments)

        stage = "lift"
        t0 = time.perf_counter()
        mesh = None
        canon_mode = config.canon_mode
        if canon_mode == "auto":
            canon_mode = "mesh-vertices" if config.msr else "voxel-centroids"
        if config.msr and canon_mode != "mesh-vertices":
            raise ConfigError("msr requires canon_mode = mesh-vertices")
        if canon_mode == "mesh-vertices":
            if scene.mesh_path is None:
                raise ConfigError(
                    f"{manifest}: mesh-vertices mode needs a mesh in the manifest"
                )
            mesh = meshref.TriangleMesh(*read_ply(scene.mesh_path))
            canon = lift.build_canonical_cloud("mesh-vertices", mesh_vertices=mesh.vertices)
        else:
            pooled = []
            for frame, mask in zip(frames, filtered):
                for sid in mask.segment_ids():
                    pts = lift.segment_points(
                        ingest.LoadedFrame(frame.record, frame.depth, mask, frame.gray), sid
                    )
                    if len(pts):
                        pooled.append(pts)
            if not pooled:
                canon = None
            else:
                canon = lift.build_canonical_cloud(
                    "voxel-centroids",
                    scene_points=np.concatenate(pooled),
                    cell=config.standardize_cell,
                )
        nodes: list[lift.PartialSegment3D] = []
        if canon is not None:
            for frame, mask in zip(frames, filtered):
                view = ingest.LoadedFrame(frame.record, frame.depth, mask, frame.gray)
                for sid in mask.segment_ids():
                    node = lift.lift_segment(
                        view, sid, canon, node_id=len(nodes),
                        snap_radius=config.snap_radius,
                    )
                    if node is None:
                        log.debug("frame %d segment %d lifted empty; skipped",
                                  frame.index, sid)
                        continue
                    nodes.append(node)
        timer.record(stage, time.perf_counter() - t0,
                     nodes=len(nodes), canon=0 if canon is None else len(canon))
        if config.dump_nodes and nodes:
            p = out_dir / "nodes.jsonl"
            with open(p, "w") as fh:
                for nd in nodes:
                    fh.write(json.dumps({
                        "node_id": nd.node_id, "frame": nd.frame_index,
                        "seg2d": nd.seg2d_id, "n_points": nd.n_points,
                    }) + "\n")
            created.append(p)

        stage = "graph"
        t0 = time.perf_counter()
        emb = None
        g = None
        if nodes:
            g = graph.build_edges(
                nodes, canon, VoxelGridSpec(config.bucket_cell), config.theta
            )
            n_workers = config.threads if config.threads > 0 else (os.cpu_count() or 1)
            emb = graph.embed_graph(
                g, config.walk_config(),
                deterministic=config.deterministic, threads=n_workers,
            )
        timer.record(stage, time.perf_counter() - t0,
                     edges=0 if g is None else g.n_edges,
                     backend=_kernels.backend_name())
        if config.dump_graph and g is not None:
            p = out_dir / "edges.txt"
            graph.dump_edges(g, p)
            created.append(p)
            p = out_dir / "embeddings.emb"
            graph.dump_embeddings(emb, p)
            created.append(p)

        stage = "cluster"
        t0 = time.perf_counter()
        segments: list[cluster.CompleteSegment3D] = []
        if nodes:
            assignment = cluster.kmeans(
                emb.vectors, min(config.kmeans_k, len(nodes)),
                seed=config.seed, max_iters=config.kmeans_iters,
            )
            verts, labels = cluster.assign_points_majority(g.nodes, assignment)
            segments = cluster.split_connected_components(
                verts, labels, canon, config.link_radius, nodes=g.nodes
            )
        timer.record(stage, time.perf_counter() - t0, segments=len(segments))

        if config.msr:
            stage = "meshref"
            t0 = time.perf_counter()
            mesh_segments = meshref.segment_mesh_felzenszwalb(
                mesh, k=config.msr_k, min_size=config.msr_min_size
            )
            if segments:
                segments = meshref.fuse_msr(mesh_segments, segments, canon)
            timer.record(stage, time.perf_counter() - t0,
                         mesh_segments=len(mesh_segments), segments=len(segments))
        if config.dump_segments and segments:
            p = out_dir / "segments.jsonl"
            with open(p, "w") as fh:
                for s in segments:
                    fh.write(json.dumps({
                        "segment_id": s.segment_id, "n_points": s.n_points,
                        "node_ids": list(s.node_ids),
                    }) + "\n")
            created.append(p)

        stage = "boxes"
        t0 = time.perf_counter()
        all_boxes = [
            boxes.box_from_segment(s, canon, config.center_mode) for s in segments
        ]
        kept = boxes.filter_boxes(all_boxes, config.box_filter(scene.dataset_profile))
        box_path = out_dir / "boxes.jsonl"
        boxes.write_boxes_jsonl(box_path, kept, scene.scene_id)
        created.append(box_path)
        timer.record(stage, time.perf_counter() - t0,
                     boxes_raw=len(all_boxes), boxes=len(kept))

        log_path = out_dir / "run_log.json"
        log_path.write_text(json.dumps({
            "scene_id": scene.scene_id,
            "backend": _kernels.backend_name(),
            "stages": timer.stages,
        }, indent=2))
        return {"boxes": box_path, "log": log_path, "n_boxes": len(kept)}
    except Exception as exc:
        for p in created:
            try:
                p.unlink()
            except OSError:
                pass
        if isinstance(exc, PipelineError):
            raise
        raise PipelineError(stage, str(exc)) from exc


def run_eval(pred_path, gt_path, thresholds, out_dir) -> evalmod.EvalReport:
    """Evaluate a predictions file against ground truth, write reports."""
    preds = boxes.read_boxes_jsonl(pred_path)
    gts = boxes.read_boxes_jsonl(gt_path)
    scene_ids = sorted({sid for sid, _ in gts} | {sid for sid, _ in preds})
    scenes = []
    for sid in scene_ids:
        scenes.append((
            sid,
            [b for s, b in preds if s == sid],
            [b for s, b in gts if s == sid],
        ))
    report = evalmod.evaluate_scenes(scenes, tuple(thresholds))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(report.to_json())
    (out_dir / "report.txt").write_text(report.to_text())
    return report


def run_classify(box_path, features_path, bank_path, out_path,
                 temperature: float = 1.0, topk: int = 5) -> int:
    """Attach open-vocabulary classes to each box; returns boxes written."""
    box_records = boxes.read_boxes_jsonl(box_path)
    table = ingest.load_embedding_table(features_path)
    bank_table = ingest.load_embedding_table(bank_path)
    if bank_table.text_vectors is None:
        raise LoadError(f"{bank_path}: no text-prompt records found")
    bank = TextPromptBank(
        tuple(bank_table.class_names), bank_table.text_vectors, temperature
    )
    out_path = Path(out_path)
    n = 0
    with open(out_path, "w", encoding="ascii") as fh:
        for scene_id, box in box_records:
            vecs = [
                v for (_, seg), v in sorted(table.segment_vectors.items())
                if seg == box.segment_id
            ]
            rec = {
                "scene_id": scene_id,
                "segment_id": int(box.segment_id),
                "center": [float(x) for x in box.center],
                "size": [float(x) for x in box.size],
                "n_points": int(box.n_points),
            }
            if not vecs:
                log.warning("no features for segment %d; class is null", box.segment_id)
                rec.update({"class": None, "prob": None, "topk": []})
            else:
                probs = ov_classify(average_box_feature(vecs), bank)
                order = np.argsort(-probs, kind="stable")[:topk]
                rec.update({
                    "class": bank.class_names[order[0]],
                    "prob": float(probs[order[0]]),
                    "topk": [
                        {"class": bank.class_names[i], "prob": float(probs[i])}
                        for i in order
                    ],
                })
            fh.write(json.dumps(rec) + "\n")
            n += 1
    return n


def dump_table(table: ingest.EmbeddingTable, path) -> None:
    """Write an EmbeddingTable back to EMB1 (testing helper)."""
    records = [(f, s, v) for (f, s), v in sorted(table.segment_vectors.items())]
    write_embeddings(path, table.dim, records)
