"""Command-line front end.

Subcommands: gen (scenes -> box files), eval (boxes vs ground truth),
classify (attach open-vocabulary classes), synth (render a toy scene).
Exit codes: 0 ok, 1 config error, 2 I/O error, 3 pipeline error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__, _kernels
from .errors import ConfigError, LoadError, PipelineError
from .pipeline import load_config, run_classify, run_eval, run_pipeline
from .synth import NoiseConfig, RenderConfig, generate_scene, write_scene

log = logging.getLogger("pseudobox")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_PIPELINE = 3


def _exit_code_for(exc: BaseException) -> int:
    cause = exc.__cause__ if isinstance(exc, PipelineError) else exc
    if isinstance(cause, ConfigError):
        return EXIT_CONFIG
    if isinstance(cause, (LoadError, OSError)):
        return EXIT_IO
    return EXIT_PIPELINE


def _resolve_threads(flag_value: int | None) -> int:
    if flag_value is not None:
        return flag_value
    env = os.environ.get("PSEUDOBOX_THREADS", "").strip()
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise ConfigError(f"PSEUDOBOX_THREADS must be an integer, got '{env}'") from exc
        if n < 1:
            raise ConfigError(f"PSEUDOBOX_THREADS must be >= 1, got {n}")
        return n
    return os.cpu_count() or 1


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="pseudobox",
        description="3D pseudo-box generation from posed RGB-D and 2D masks",
    )
    ap.add_argument("--version", action="version",
                    version=f"pseudobox {__version__} ({_kernels.backend_name()} backend)")
    sub = ap.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="run the box-generation pipeline on scenes")
    gen.add_argument("scenes", nargs="+",
                     help="scene directories (or manifest.json paths)")
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--config", default=None, help="key = value config file")
    gen.add_argument("--set", dest="overrides", action="append", default=[],
                     metavar="KEY=VALUE", help="override one config key")
    gen.add_argument("--msr", action="store_true",
                     help="enable mesh segmentation refinement (needs a scene mesh)")
    gen.add_argument("--deterministic", action="store_true",
                     help="force the serial, byte-reproducible training path")
    gen.add_argument("--threads", type=int, default=None,
                     help="worker threads (default: PSEUDOBOX_THREADS or all cores)")
    gen.add_argument("-v", "--verbose", action="store_true")

    ev = sub.add_parser("eval", help="score predicted boxes against ground truth")
    ev.add_argument("--pred", required=True, help="predicted boxes (JSON lines)")
    ev.add_argument("--gt", required=True, help="ground-truth boxes (JSON lines)")
    ev.add_argument("--out", required=True, help="report output directory")
    ev.add_argument("--thresholds", default="0.25,0.5",
                    help="comma-separated IoU thresholds")
    ev.add_argument("-v", "--verbose", action="store_true")

    cl = sub.add_parser("classify", help="attach open-vocabulary classes to boxes")
    cl.add_argument("--boxes", required=True, help="box file (JSON lines)")
    cl.add_argument("--features", required=True, help="segment feature bank")
    cl.add_argument("--bank", required=True, help="text prompt bank")
    cl.add_argument("--out", required=True, help="classified box file to write")
    cl.add_argument("--temperature", type=float, default=1.0)
    cl.add_argument("--topk", type=int, default=5)
    cl.add_argument("-v", "--verbose", action="store_true")

    sy = sub.add_parser("synth", help="render a synthetic scene directory")
    sy.add_argument("--out", required=True, help="scene directory to write")
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("--objects", type=int, default=5)
    sy.add_argument("--room", default="6,6,3", help="room size in meters, X,Y,Z")
    sy.add_argument("--cameras", type=int, default=8)
    sy.add_argument("--size", default="320x240", help="raster size WxH")
    sy.add_argument("--depth-noise", type=float, default=0.0,
                    help="Gaussian depth noise sigma (meters)")
    sy.add_argument("--erode", type=int, default=0,
                    help="mask erosion radius in pixels")
    sy.add_argument("--split-prob", type=float, default=0.0,
                    help="probability of splitting each mask in two")
    sy.add_argument("--mesh", action="store_true", help="also write a scene mesh")
    sy.add_argument("-v", "--verbose", action="store_true")
    return ap


def _cmd_gen(args) -> int:
    overrides = list(args.overrides)
    if args.msr:
        overrides.append("msr=true")
    if args.deterministic:
        overrides.append("deterministic=true")
    threads = _resolve_threads(args.threads)
    overrides.append(f"threads={threads}")
    config = load_config(args.config, overrides)

    out_root = Path(args.out)
    jobs: list[tuple[str, Path]] = []
    for scene in args.scenes:
        p = Path(scene)
        name = (p.parent if p.suffix == ".json" else p).name
        dest = out_root if len(args.scenes) == 1 else out_root / name
        jobs.append((scene, dest))

    failures: list[tuple[str, BaseException]] = []
    def _one(job):
        scene, dest = job
        return run_pipeline(scene, config, dest)

    n_workers = min(threads, len(jobs))
    if n_workers <= 1:
        results = []
        for job in jobs:
            try:
                results.append(_one(job))
            except Exception as exc:
                failures.append((job[0], exc))
    else:
        results = []
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            futs = {pool.submit(_one, job): job for job in jobs}
            for fut, job in futs.items():
                try:
                    results.append(fut.result())
                except Exception as exc:
                    failures.append((job[0], exc))

    for res in results:
        print(f"{res['boxes']}: {res['n_boxes']} boxes")
    for scene, exc in failures:
        print(f"error: {scene}: {exc}", file=sys.stderr)
    if failures:
        return max(_exit_code_for(exc) for _, exc in failures)
    return EXIT_OK


def _cmd_eval(args) -> int:
    try:
        thresholds = tuple(float(t) for t in args.thresholds.split(",") if t.strip())
    except ValueError as exc:
        raise ConfigError(f"bad --thresholds value '{args.thresholds}'") from exc
    if not thresholds:
        raise ConfigError("--thresholds must name at least one value")
    report = run_eval(args.pred, args.gt, thresholds, args.out)
    print(report.to_text(), end="")
    return EXIT_OK


def _cmd_classify(args) -> int:
    n = run_classify(
        args.boxes, args.features, args.bank, args.out,
        temperature=args.temperature, topk=args.topk,
    )
    print(f"{args.out}: {n} boxes classified")
    return EXIT_OK


def _cmd_synth(args) -> int:
    try:
        room = tuple(float(x) for x in args.room.split(","))
        width, height = (int(x) for x in args.size.lower().split("x"))
    except ValueError as exc:
        raise ConfigError(f"bad --room or --size value: {exc}") from exc
    if len(room) != 3:
        raise ConfigError(f"--room needs three values, got '{args.room}'")
    noise = NoiseConfig(
        depth_sigma=args.depth_noise,
        mask_erosion_px=args.erode,
        split_prob=args.split_prob,
    )
    scene = generate_scene(
        args.seed, args.objects, room_size=room, n_cameras=args.cameras,
        image_size=(width, height), noise=noise,
    )
    manifest = write_scene(
        scene, args.out, cfg=RenderConfig(width=width, height=height),
        with_mesh=args.mesh,
    )
    print(f"{manifest}: {len(scene.objects)} objects, {args.cameras} views")
    return EXIT_OK


_COMMANDS = {
    "gen": _cmd_gen,
    "eval": _cmd_eval,
    "classify": _cmd_classify,
    "synth": _cmd_synth,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _COMMANDS[args.command](args)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code_for(exc)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (LoadError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # pragma: no cover - last resort
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
