"""Synthetic-scene robustness harness.

Generates seeded scenes shaped like real radar frames (dense target
clusters plus sparse isolated clutter), applies corruption sweeps,
optionally runs the Gaussian-expansion pipeline, and measures noise
suppression and peak preservation into CSV reports and PGM heatmaps.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import (
    BoxAnnotation,
    GridSpec,
    PointCloud,
    Rng,
    Scene,
    default_grid,
    derive64,
    float_bits,
)
from .corruption import (
    DEFAULT_BEAM_COUNT,
    DEFAULT_SPURIOUS_RATIO,
    CorruptionKind,
    CorruptionSpec,
    SpuriousMode,
    apply_corruption,
)
from .expansion import (
    ISOTROPIC_3D,
    PLANAR_XY,
    ProjectorWeights,
    bev_project,
    expand,
    kernel_params_for_cloud,
    load_projector_weights,
    merge_residual,
    voxelize,
)

PIPELINES = ("raw", "3dge_planar", "3dge_isotropic")
PROJECTOR_MODES = ("heuristic", "weights-file")

# Clean fraction of the noisy-training data recipe.
MANIFEST_CLEAN_RATIO = 0.8

REPORT_COLUMNS = (
    "kind",
    "level",
    "replicate",
    "pipeline",
    "snr_before",
    "snr_after",
    "peak_consistent",
    "peak_l2_cells",
    "chamfer_m",
    "points_in",
    "points_out",
    "wall_ms",
)

# Stable per-kind ids feeding the row-seed hash; never reorder.
KIND_IDS = {
    CorruptionKind.KEY_POINT_MISSING: 1,
    CorruptionKind.SPURIOUS_POINTS: 2,
    CorruptionKind.POINT_SHIFTING: 3,
    CorruptionKind.NON_POSITIONAL_DISTURBANCE: 4,
    CorruptionKind.BEAM_DROP: 5,
}

_SIGMA_KINDS = (
    CorruptionKind.SPURIOUS_POINTS,
    CorruptionKind.POINT_SHIFTING,
    CorruptionKind.NON_POSITIONAL_DISTURBANCE,
)


class ConfigError(ValueError):
    """Raised for malformed or inconsistent sweep configuration."""


@dataclass(frozen=True)
class SceneConfig:
    """Synthetic scene recipe: dense annotated clusters plus sparse clutter."""

    cluster_count: int = 1
    points_per_cluster: int = 30
    cluster_radius_m: float = 2.0
    noise_points: int = 50
    target_rcs_range: tuple[float, float] = (5.0, 10.0)
    noise_rcs_range: tuple[float, float] = (0.5, 2.0)
    doppler_range: tuple[float, float] = (-5.0, 5.0)
    box_height_m: float = 2.0
    cluster_centers: tuple[tuple[float, float, float], ...] | None = None

    def __post_init__(self) -> None:
        if self.cluster_count < 0 or self.points_per_cluster < 0 or self.noise_points < 0:
            raise ConfigError("scene counts must be non-negative")
        if self.cluster_radius_m <= 0 or self.box_height_m <= 0:
            raise ConfigError("cluster radius and box height must be positive")
        for name in ("target_rcs_range", "noise_rcs_range", "doppler_range"):
            lo, hi = getattr(self, name)
            if not hi >= lo:
                raise ConfigError(f"{name} must be ordered, got ({lo}, {hi})")
        if self.cluster_centers is not None:
            centers = tuple(tuple(float(c) for c in ctr) for ctr in self.cluster_centers)
            if len(centers) != self.cluster_count:
                raise ConfigError("cluster_centers length must equal cluster_count")
            object.__setattr__(self, "cluster_centers", centers)


@dataclass(frozen=True)
class SweepEntry:
    """One corruption kind with its severity levels and fixed parameters."""

    kind: CorruptionKind
    levels: tuple[float, ...]
    mode: SpuriousMode = SpuriousMode.POINT_RELATED
    spurious_ratio: float = DEFAULT_SPURIOUS_RATIO
    gamma: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", CorruptionKind(self.kind))
        object.__setattr__(self, "mode", SpuriousMode(self.mode))
        levels = tuple(float(lv) for lv in self.levels)
        if not levels:
            raise ConfigError(f"empty level list for {self.kind.value}")
        if self.kind in (CorruptionKind.BEAM_DROP, CorruptionKind.KEY_POINT_MISSING):
            for lv in levels:
                if lv != int(lv) or lv < 0:
                    raise ConfigError(
                        f"{self.kind.value} levels must be non-negative integers"
                    )
        else:
            for lv in levels:
                if not lv > 0:
                    raise ConfigError(f"{self.kind.value} levels must be positive")
        object.__setattr__(self, "levels", levels)

    def spec_for(self, level: float, seed: int) -> CorruptionSpec:
        if self.kind in _SIGMA_KINDS:
            return CorruptionSpec(
                kind=self.kind,
                seed=seed,
                mode=self.mode,
                sigma=level,
                spurious_ratio=self.spurious_ratio,
            )
        return CorruptionSpec(
            kind=self.kind, seed=seed, gamma=self.gamma, drop_count=int(level)
        )


@dataclass(frozen=True)
class SweepConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    grid: GridSpec = field(default_factory=default_grid)
    corruptions: tuple[SweepEntry, ...] = ()
    pipelines: tuple[str, ...] = ("raw", "3dge_planar")
    projector: str = "heuristic"
    projector_weights: str | None = None
    replicates: int = 10
    master_seed: int = 0
    total_beams: int = DEFAULT_BEAM_COUNT

    def __post_init__(self) -> None:
        object.__setattr__(self, "corruptions", tuple(self.corruptions))
        object.__setattr__(self, "pipelines", tuple(self.pipelines))
        if not self.corruptions:
            raise ConfigError("at least one corruption entry is required")
        if not self.pipelines:
            raise ConfigError("at least one pipeline is required")
        for pipeline in self.pipelines:
            if pipeline not in PIPELINES:
                raise ConfigError(f"unknown pipeline {pipeline!r}")
        if self.projector not in PROJECTOR_MODES:
            raise ConfigError(f"unknown projector mode {self.projector!r}")
        if self.projector == "weights-file" and not self.projector_weights:
            raise ConfigError("projector mode 'weights-file' requires a weights path")
        if self.replicates < 1:
            raise ConfigError("replicate count must be >= 1")
        if self.total_beams < 1:
            raise ConfigError("total_beams must be positive")


def default_sweep_config() -> SweepConfig:
    """The default sweep: four corruption kinds at two levels each."""
    return SweepConfig(
        corruptions=(
            SweepEntry(kind=CorruptionKind.SPURIOUS_POINTS, levels=(3.0, 5.0)),
            SweepEntry(kind=CorruptionKind.NON_POSITIONAL_DISTURBANCE, levels=(3.0, 5.0)),
            SweepEntry(kind=CorruptionKind.BEAM_DROP, levels=(10, 14)),
            SweepEntry(kind=CorruptionKind.POINT_SHIFTING, levels=(3.0, 5.0)),
        )
    )


_SCENE_KEYS = {
    "cluster_count",
    "points_per_cluster",
    "cluster_radius_m",
    "noise_points",
    "target_rcs_range",
    "noise_rcs_range",
    "doppler_range",
    "box_height_m",
    "cluster_centers",
}
_GRID_KEYS = {"x_range", "y_range", "z_range", "cells"}
_ENTRY_KEYS = {"kind", "levels", "mode", "spurious_ratio", "gamma"}
_CONFIG_KEYS = {
    "scene",
    "grid",
    "corruptions",
    "pipelines",
    "projector",
    "projector_weights",
    "replicates",
    "master_seed",
    "total_beams",
}


def _check_keys(payload: dict, allowed: set, context: str) -> None:
    unknown = set(payload) - allowed
    if unknown:
        raise ConfigError(f"unknown {context} fields: {sorted(unknown)}")


def _tupled(value):
    if isinstance(value, list):
        return tuple(_tupled(v) for v in value)
    return value


def sweep_config_from_json_dict(payload: dict) -> SweepConfig:
    if not isinstance(payload, dict):
        raise ConfigError("config root must be a JSON object")
    _check_keys(payload, _CONFIG_KEYS, "config")
    kwargs: dict = {}
    try:
        if "scene" in payload:
            _check_keys(payload["scene"], _SCENE_KEYS, "scene")
            kwargs["scene"] = SceneConfig(
                **{k: _tupled(v) for k, v in payload["scene"].items()}
            )
        if "grid" in payload:
            _check_keys(payload["grid"], _GRID_KEYS, "grid")
            kwargs["grid"] = GridSpec(**{k: _tupled(v) for k, v in payload["grid"].items()})
        entries = []
        for entry in payload.get("corruptions", ()):
            _check_keys(entry, _ENTRY_KEYS, "corruption entry")
            entries.append(SweepEntry(**{k: _tupled(v) for k, v in entry.items()}))
        if entries:
            kwargs["corruptions"] = tuple(entries)
        else:
            kwargs["corruptions"] = default_sweep_config().corruptions
        for key in (
            "pipelines",
            "projector",
            "projector_weights",
            "replicates",
            "master_seed",
            "total_beams",
        ):
            if key in payload:
                kwargs[key] = _tupled(payload[key])
        return SweepConfig(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid sweep config: {exc}") from exc


def sweep_config_to_json_dict(cfg: SweepConfig) -> dict:
    scene = cfg.scene
    return {
        "scene": {
            "cluster_count": scene.cluster_count,
            "points_per_cluster": scene.points_per_cluster,
            "cluster_radius_m": scene.cluster_radius_m,
            "noise_points": scene.noise_points,
            "target_rcs_range": list(scene.target_rcs_range),
            "noise_rcs_range": list(scene.noise_rcs_range),
            "doppler_range": list(scene.doppler_range),
            "box_height_m": scene.box_height_m,
            "cluster_centers": (
                None
                if scene.cluster_centers is None
                else [list(c) for c in scene.cluster_centers]
            ),
        },
        "grid": {
            "x_range": list(cfg.grid.x_range),
            "y_range": list(cfg.grid.y_range),
            "z_range": list(cfg.grid.z_range),
            "cells": list(cfg.grid.cells),
        },
        "corruptions": [
            {
                "kind": entry.kind.value,
                "levels": list(entry.levels),
                "mode": entry.mode.value,
                "spurious_ratio": entry.spurious_ratio,
                "gamma": entry.gamma,
            }
            for entry in cfg.corruptions
        ],
        "pipelines": list(cfg.pipelines),
        "projector": cfg.projector,
        "projector_weights": cfg.projector_weights,
        "replicates": cfg.replicates,
        "master_seed": cfg.master_seed,
        "total_beams": cfg.total_beams,
    }


def load_sweep_config(path) -> SweepConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return sweep_config_from_json_dict(payload)


def gen_scene(cfg: SceneConfig, grid: GridSpec, rng: Rng) -> Scene:
    """Deterministic synthetic scene: annotated clusters plus clutter.

    Cluster points are uniform over a planar disc at the cluster center;
    each cluster gets a box annotation twice the cluster radius in planar
    extent. Clutter points are uniform over the whole grid volume.
    """
    gen = rng.generator()
    rows = []
    boxes = []
    (x_lo, x_hi), (y_lo, y_hi), (z_lo, z_hi) = grid.ranges
    for ci in range(cfg.cluster_count):
        if cfg.cluster_centers is not None:
            cx, cy, cz = cfg.cluster_centers[ci]
        else:
            margin = cfg.cluster_radius_m
            cx = float(gen.uniform(x_lo + margin, x_hi - margin))
            cy = float(gen.uniform(y_lo + margin, y_hi - margin))
            cz = 0.0
        n = cfg.points_per_cluster
        radius = cfg.cluster_radius_m * np.sqrt(gen.uniform(0.0, 1.0, size=n))
        theta = gen.uniform(0.0, 2.0 * math.pi, size=n)
        cluster = np.column_stack(
            [
                cx + radius * np.cos(theta),
                cy + radius * np.sin(theta),
                np.full(n, cz),
                gen.uniform(*cfg.target_rcs_range, size=n),
                gen.uniform(*cfg.doppler_range, size=n),
            ]
        )
        rows.append(cluster)
        boxes.append(
            BoxAnnotation(
                center=(cx, cy, cz),
                size=(
                    2.0 * cfg.cluster_radius_m,
                    2.0 * cfg.cluster_radius_m,
                    cfg.box_height_m,
                ),
                yaw=0.0,
            )
        )
    m = cfg.noise_points
    if m:
        rows.append(
            np.column_stack(
                [
                    gen.uniform(x_lo, x_hi, size=m),
                    gen.uniform(y_lo, y_hi, size=m),
                    gen.uniform(z_lo, z_hi, size=m),
                    gen.uniform(*cfg.noise_rcs_range, size=m),
                    gen.uniform(*cfg.doppler_range, size=m),
                ]
            )
        )
    data = np.vstack(rows) if rows else np.empty((0, 5))
    cloud = PointCloud(data=data, frame_id=f"{rng.seed:016x}")
    return Scene(cloud=cloud, boxes=tuple(boxes), seed=rng.seed)


def scripted_scene(seed: int) -> Scene:
    """The canonical single-cluster benchmark scene on the default grid."""
    cfg = SceneConfig(cluster_centers=((10.0, 5.0, 0.0),))
    return gen_scene(cfg, default_grid(), Rng(seed))


def pipeline_bev(
    cloud: PointCloud,
    grid: GridSpec,
    pipeline: str,
    weights: ProjectorWeights | None = None,
) -> np.ndarray:
    """BEV heatmap of a cloud under one of the named pipelines."""
    if pipeline not in PIPELINES:
        raise ValueError(f"unknown pipeline {pipeline!r}")
    base = voxelize(cloud, grid)
    if pipeline == "raw":
        return bev_project(base)
    mode = PLANAR_XY if pipeline == "3dge_planar" else ISOTROPIC_3D
    params = kernel_params_for_cloud(cloud, weights)
    expanded = expand(cloud, grid, params, mode)
    return bev_project(merge_residual(base, expanded))


def _planar_box_mask(bev_shape, boxes, spec: GridSpec) -> np.ndarray:
    nx, ny = bev_shape
    csx, csy, _ = spec.cell_sizes
    centers_x = spec.x_range[0] + (np.arange(nx) + 0.5) * csx
    centers_y = spec.y_range[0] + (np.arange(ny) + 0.5) * csy
    gx = centers_x[:, None]
    gy = centers_y[None, :]
    mask = np.zeros((nx, ny), dtype=bool)
    for box in boxes:
        dx = gx - box.center[0]
        dy = gy - box.center[1]
        c, s = math.cos(box.yaw), math.sin(box.yaw)
        local_x = c * dx + s * dy
        local_y = -s * dx + c * dy
        mask |= (np.abs(local_x) <= box.size[0] / 2.0) & (
            np.abs(local_y) <= box.size[1] / 2.0
        )
    return mask


def metric_snr(bev: np.ndarray, boxes, spec: GridSpec) -> float:
    """In-box vs out-of-box mean amplitude ratio of a BEV heatmap.

    The numerator averages |heatmap| over every cell whose center falls
    in some box footprint; the denominator averages over occupied cells
    outside all boxes. With no occupied outside cells the ratio is +inf.
    """
    if not boxes:
        raise ValueError("metric_snr requires at least one box")
    amplitude = np.abs(np.asarray(bev, dtype=np.float64))
    in_mask = _planar_box_mask(amplitude.shape, boxes, spec)
    if not in_mask.any():
        raise ValueError("no grid cells fall inside the boxes")
    outside_occupied = ~in_mask & (amplitude > 0.0)
    if not outside_occupied.any():
        return math.inf
    return float(amplitude[in_mask].mean() / amplitude[outside_occupied].mean())


def metric_peak(clean_bev: np.ndarray, processed_bev: np.ndarray) -> tuple[bool, float]:
    """Compare argmax cells (row-major first-occurrence tie-break)."""
    clean_bev = np.asarray(clean_bev)
    processed_bev = np.asarray(processed_bev)
    if clean_bev.shape != processed_bev.shape:
        raise ValueError("heatmaps must share a shape")
    a = np.unravel_index(int(np.argmax(clean_bev)), clean_bev.shape)
    b = np.unravel_index(int(np.argmax(processed_bev)), processed_bev.shape)
    l2 = math.dist(a, b)
    return a == b, l2


def metric_chamfer(a: PointCloud, b: PointCloud) -> float:
    """Symmetric Chamfer distance on positions, brute-force O(|a| |b|)."""
    if len(a) == 0 or len(b) == 0:
        raise ValueError("chamfer distance requires non-empty clouds")
    diff = a.xyz[:, None, :] - b.xyz[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))
    return float(0.5 * (dist.min(axis=1).mean() + dist.min(axis=0).mean()))


@dataclass(frozen=True)
class BenchRow:
    kind: str
    level: float
    replicate: int
    pipeline: str
    snr_before: float | None = None
    snr_after: float | None = None
    peak_consistent: bool | None = None
    peak_l2_cells: float | None = None
    chamfer_m: float | None = None
    points_in: int | None = None
    points_out: int | None = None
    wall_ms: float | None = None
    error: str | None = None


def _run_task(
    cfg: SweepConfig,
    entry: SweepEntry,
    level: float,
    replicate: int,
    weights: ProjectorWeights | None,
    want_heatmaps: bool,
):
    row_seed = derive64(
        cfg.master_seed, KIND_IDS[entry.kind], float_bits(level), replicate
    )
    scene = gen_scene(cfg.scene, cfg.grid, Rng(row_seed))
    spec = entry.spec_for(level, seed=derive64(row_seed, 1))
    corrupt_error: str | None = None
    corrupted: PointCloud | None = None
    try:
        corrupted = apply_corruption(
            scene.cloud,
            spec,
            boxes=scene.boxes,
            bounds=cfg.grid,
            total_beams=cfg.total_beams,
        )
    except Exception as exc:
        corrupt_error = f"{type(exc).__name__}: {exc}"

    rows = []
    heatmaps: dict[str, np.ndarray] = {}
    for pipeline in cfg.pipelines:
        base = dict(
            kind=entry.kind.value,
            level=level,
            replicate=replicate,
            pipeline=pipeline,
        )
        if corrupt_error is not None:
            rows.append(BenchRow(**base, error=corrupt_error))
            continue
        start = time.perf_counter()
        try:
            raw_bev = pipeline_bev(corrupted, cfg.grid, "raw")
            snr_before = metric_snr(raw_bev, scene.boxes, cfg.grid)
            clean_bev = pipeline_bev(scene.cloud, cfg.grid, pipeline, weights)
            processed_bev = pipeline_bev(corrupted, cfg.grid, pipeline, weights)
            snr_after = (
                snr_before
                if pipeline == "raw"
                else metric_snr(processed_bev, scene.boxes, cfg.grid)
            )
            consistent, l2 = metric_peak(clean_bev, processed_bev)
            chamfer = metric_chamfer(scene.cloud, corrupted)
        except Exception as exc:
            rows.append(BenchRow(**base, error=f"{type(exc).__name__}: {exc}"))
            continue
        wall_ms = (time.perf_counter() - start) * 1000.0
        rows.append(
            BenchRow(
                **base,
                snr_before=snr_before,
                snr_after=snr_after,
                peak_consistent=consistent,
                peak_l2_cells=l2,
                chamfer_m=chamfer,
                points_in=len(scene.cloud),
                points_out=len(corrupted),
                wall_ms=wall_ms,
            )
        )
        if want_heatmaps:
            tag = f"{entry.kind.value}_l{level:g}_r{replicate}_{pipeline}"
            heatmaps[f"bev_{tag}"] = processed_bev
            heatmaps[f"bev_clean_{tag}"] = clean_bev
    return rows, heatmaps


def _run_task_star(args):
    return _run_task(*args)


def run_sweep(
    cfg: SweepConfig, jobs: int = 1, want_heatmaps: bool = False
) -> tuple[list[BenchRow], dict[str, np.ndarray]]:
    """Run every (kind x level x replicate x pipeline) combination.

    Rows come back in config-declaration order regardless of job count,
    so reports are byte-stable. A failing combination yields an
    error-marked row instead of aborting the sweep.
    """
    weights = None
    if cfg.projector == "weights-file":
        try:
            weights = load_projector_weights(cfg.projector_weights)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot load projector weights: {exc}") from exc
    tasks = [
        (cfg, entry, level, replicate, weights, want_heatmaps)
        for entry in cfg.corruptions
        for level in entry.levels
        for replicate in range(cfg.replicates)
    ]
    if jobs <= 1:
        results = [_run_task_star(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_task_star, tasks))
    rows: list[BenchRow] = []
    heatmaps: dict[str, np.ndarray] = {}
    for task_rows, task_maps in results:
        rows.extend(task_rows)
        heatmaps.update(task_maps)
    return rows, heatmaps


def _format_cell(value) -> str:
    if value is None:
        return "ERROR"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_report_csv(rows, path, include_timing: bool = False) -> None:
    """Serialize rows in declaration order.

    Timing is omitted by default so repeated runs of the same config
    produce byte-identical reports; pass include_timing=True to record
    the measured per-row wall time instead.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for row in rows:
            record = [
                row.kind,
                repr(float(row.level)),
                str(row.replicate),
                row.pipeline,
            ]
            metrics = (
                row.snr_before,
                row.snr_after,
                row.peak_consistent,
                row.peak_l2_cells,
                row.chamfer_m,
                row.points_in,
                row.points_out,
            )
            record.extend(_format_cell(v) for v in metrics)
            if not include_timing:
                record.append("")
            elif row.wall_ms is None:
                record.append("ERROR")
            else:
                record.append(f"{row.wall_ms:.3f}")
            writer.writerow(record)


def emit_heatmap(bev: np.ndarray, path) -> None:
    """Write a BEV heatmap as 8-bit PGM, min-max scaled to [0, 255].

    Pixel rows follow the heatmap's first axis. An all-constant map
    writes all-zero pixels rather than dividing by zero.
    """
    a = np.asarray(bev, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"heatmap must be 2-D, got shape {a.shape}")
    vmin, vmax = float(a.min()), float(a.max())
    if vmax > vmin:
        q = np.floor((a - vmin) * 255.0 / (vmax - vmin))
    else:
        q = np.zeros_like(a)
    pixels = np.clip(q, 0.0, 255.0).astype(np.uint8)
    header = b"P5\n%d %d\n255\n" % (a.shape[1], a.shape[0])
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(pixels.tobytes())


@dataclass(frozen=True)
class ManifestRow:
    scene_id: int
    group: str
    kind: str | None
    level: float | None
    seed: int


def gen_manifest(
    count: int,
    clean_ratio: float = MANIFEST_CLEAN_RATIO,
    master_seed: int = 0,
    total_beams: int = DEFAULT_BEAM_COUNT,
) -> list[ManifestRow]:
    """Dataset manifest following the clean/noisy mix recipe.

    A ``1 - clean_ratio`` fraction of scenes gets a uniformly chosen
    corruption kind at a random level: sigma ~ U[1, 50] for the
    sigma-parameterized kinds, a uniform beam count in [1, total/2] for
    beam dropping.
    """
    if count < 1:
        raise ValueError("manifest needs at least one scene")
    if not 0.0 <= clean_ratio <= 1.0:
        raise ValueError(f"clean_ratio must lie in [0, 1], got {clean_ratio}")
    gen = Rng(master_seed).generator()
    noisy_count = count - int(round(count * clean_ratio))
    noisy_ids = set(int(i) for i in gen.permutation(count)[:noisy_count])
    kinds = (
        CorruptionKind.SPURIOUS_POINTS,
        CorruptionKind.NON_POSITIONAL_DISTURBANCE,
        CorruptionKind.KEY_POINT_MISSING,
        CorruptionKind.POINT_SHIFTING,
    )
    rows = []
    for scene_id in range(count):
        seed = derive64(master_seed, scene_id)
        if scene_id not in noisy_ids:
            rows.append(ManifestRow(scene_id, "clean", None, None, seed))
            continue
        kind = kinds[int(gen.integers(0, len(kinds)))]
        if kind is CorruptionKind.KEY_POINT_MISSING:
            level = float(gen.integers(1, total_beams // 2 + 1))
        else:
            level = float(gen.uniform(1.0, 50.0))
        rows.append(ManifestRow(scene_id, "noisy", kind.value, level, seed))
    return rows


def write_manifest_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("scene_id", "group", "kind", "level", "seed"))
        for row in rows:
            writer.writerow(
                (
                    str(row.scene_id),
                    row.group,
                    row.kind if row.kind is not None else "",
                    repr(float(row.level)) if row.level is not None else "",
                    str(row.seed),
                )
            )
