"""Command-line harness: scene generation, corruption, sweeps, manifests.

Exit codes: 0 on success, 1 for configuration errors, 2 for runtime
failures.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from .bench import (
    ConfigError,
    MANIFEST_CLEAN_RATIO,
    SceneConfig,
    emit_heatmap,
    gen_manifest,
    gen_scene,
    load_sweep_config,
    run_sweep,
    write_manifest_csv,
    write_report_csv,
)
from .core import (
    Rng,
    default_grid,
    read_point_cloud_csv,
    write_boxes_csv,
    write_point_cloud_csv,
)
from .corruption import CorruptionKind, CorruptionSpec, apply_corruption

KIND_ALIASES = {
    "c1": CorruptionKind.SPURIOUS_POINTS,
    "spurious": CorruptionKind.SPURIOUS_POINTS,
    "c2": CorruptionKind.NON_POSITIONAL_DISTURBANCE,
    "nonpositional": CorruptionKind.NON_POSITIONAL_DISTURBANCE,
    "c3": CorruptionKind.BEAM_DROP,
    "beamdrop": CorruptionKind.BEAM_DROP,
    "c4": CorruptionKind.POINT_SHIFTING,
    "shift": CorruptionKind.POINT_SHIFTING,
    "keypoint": CorruptionKind.KEY_POINT_MISSING,
}


def _cmd_run(args) -> int:
    cfg = load_sweep_config(args.config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    rows, heatmaps = run_sweep(cfg, jobs=args.jobs, want_heatmaps=args.emit_heatmaps)
    elapsed = time.perf_counter() - started
    write_report_csv(rows, out_dir / "report.csv", include_timing=args.timing)
    if args.emit_heatmaps:
        heatmap_dir = out_dir / "heatmaps"
        heatmap_dir.mkdir(exist_ok=True)
        for name in sorted(heatmaps):
            emit_heatmap(heatmaps[name], heatmap_dir / f"{name}.pgm")
    errors = sum(1 for row in rows if row.error is not None)
    print(
        f"wrote {len(rows)} rows ({errors} errored) to {out_dir / 'report.csv'} "
        f"in {elapsed:.2f}s",
        file=sys.stderr,
    )
    return 0


def _cmd_gen_scene(args) -> int:
    scene = gen_scene(SceneConfig(), default_grid(), Rng(args.seed))
    out = Path(args.out)
    write_point_cloud_csv(scene.cloud, out)
    boxes_out = (
        Path(args.boxes_out)
        if args.boxes_out
        else out.with_name(out.stem + "_boxes.csv")
    )
    write_boxes_csv(scene.boxes, boxes_out, frame_id=scene.cloud.frame_id)
    print(f"wrote {len(scene.cloud)} points to {out}", file=sys.stderr)
    return 0


def _cmd_corrupt(args) -> int:
    kind_key = args.kind.lower()
    if kind_key not in KIND_ALIASES:
        raise ConfigError(
            f"unknown corruption kind {args.kind!r}; choose from "
            f"{sorted(KIND_ALIASES)}"
        )
    kind = KIND_ALIASES[kind_key]
    if kind in (CorruptionKind.BEAM_DROP, CorruptionKind.KEY_POINT_MISSING):
        if args.level != int(args.level) or args.level < 0:
            raise ConfigError(f"{kind.value} level must be a non-negative integer")
        spec = CorruptionSpec(kind=kind, seed=args.seed, drop_count=int(args.level))
    else:
        if not args.level > 0:
            raise ConfigError(f"{kind.value} level must be positive")
        spec = CorruptionSpec(kind=kind, seed=args.seed, sigma=args.level)
    cloud = read_point_cloud_csv(args.in_path)
    corrupted = apply_corruption(cloud, spec, bounds=default_grid())
    write_point_cloud_csv(corrupted, args.out)
    print(
        f"{kind.value} level={args.level:g}: {len(cloud)} -> {len(corrupted)} points",
        file=sys.stderr,
    )
    return 0


def _cmd_gen_manifest(args) -> int:
    if args.count < 1:
        raise ConfigError("--count must be at least 1")
    if not 0.0 <= args.clean_ratio <= 1.0:
        raise ConfigError("--clean-ratio must lie in [0, 1]")
    rows = gen_manifest(args.count, args.clean_ratio, master_seed=args.seed)
    write_manifest_csv(rows, args.out)
    noisy = sum(1 for row in rows if row.group == "noisy")
    print(f"wrote {len(rows)} scenes ({noisy} noisy) to {args.out}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bench",
        description="Radar robustness benchmark: scenes, corruptions, sweeps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a corruption sweep from a JSON config")
    run.add_argument("--config", required=True, help="sweep config JSON path")
    run.add_argument("--out-dir", required=True, help="output directory")
    run.add_argument("--jobs", type=int, default=1, help="parallel workers")
    run.add_argument(
        "--emit-heatmaps", action="store_true", help="write per-row BEV PGM heatmaps"
    )
    run.add_argument(
        "--timing",
        action="store_true",
        help="record measured wall_ms in the report (breaks byte-determinism)",
    )
    run.set_defaults(func=_cmd_run)

    gen = sub.add_parser("gen-scene", help="generate a synthetic scene CSV")
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--out", required=True, help="point-cloud CSV path")
    gen.add_argument("--boxes-out", help="box CSV path (default: <out>_boxes.csv)")
    gen.set_defaults(func=_cmd_gen_scene)

    corrupt = sub.add_parser("corrupt", help="corrupt a point-cloud CSV")
    corrupt.add_argument("--kind", required=True, help="c1..c4 or a kind name")
    corrupt.add_argument(
        "--level",
        type=float,
        required=True,
        help="sigma, or beam/point count for the removal kinds",
    )
    corrupt.add_argument("--seed", type=int, required=True)
    corrupt.add_argument("--in", dest="in_path", required=True, help="input CSV")
    corrupt.add_argument("--out", required=True, help="output CSV")
    corrupt.set_defaults(func=_cmd_corrupt)

    manifest = sub.add_parser(
        "gen-manifest", help="emit a clean/noisy dataset manifest"
    )
    manifest.add_argument("--clean-ratio", type=float, default=MANIFEST_CLEAN_RATIO)
    manifest.add_argument("--out", required=True)
    manifest.add_argument("--count", type=int, default=100)
    manifest.add_argument("--seed", type=int, default=0)
    manifest.set_defaults(func=_cmd_gen_manifest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses status 2 for usage problems; those are config errors.
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
