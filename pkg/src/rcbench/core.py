"""Shared geometry, point-cloud, grid, and randomness primitives.

Everything here is an immutable value; the operations are pure functions,
so all of it is safe to use from concurrent workers.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1

# Default planar detection range and BEV resolution (0.8 m cells).
DEFAULT_PLANAR_RANGE = (-51.2, 51.2)
DEFAULT_PLANAR_CELLS = 128
# The vertical extent is a package default, not a published constant:
# [-5, 3] m at 1 m cells covers road-level radar returns.
DEFAULT_Z_RANGE = (-5.0, 3.0)
DEFAULT_Z_CELLS = 8

POINT_CLOUD_CSV_HEADER = ("frame_id", "x", "y", "z", "rcs", "v")
BOX_CSV_HEADER = ("frame_id", "cx", "cy", "cz", "l", "w", "h", "yaw")


def splitmix64(value: int) -> int:
    """One SplitMix64 scrambling step on a 64-bit integer."""
    z = (value + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def derive64(*parts: int) -> int:
    """Stable, order-sensitive 64-bit hash of integer parts.

    Used to derive per-task seeds so that adding tasks to a sweep never
    perturbs the seeds of existing ones.
    """
    h = 0
    for part in parts:
        h = splitmix64(h ^ (int(part) & _MASK64))
    return h


def float_bits(value: float) -> int:
    """IEEE-754 bit pattern of a float, for hashing levels exactly."""
    return int(np.float64(value).view(np.uint64))


@dataclass(frozen=True)
class Rng:
    """Counter-based random stream identified by (seed, stream).

    Two instances built from the same pair replay bit-identical draw
    sequences on any platform, and distinct streams are independent, so
    every scene/corruption can own a private substream.
    """

    seed: int
    stream: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.seed <= _MASK64:
            raise ValueError(f"seed out of 64-bit range: {self.seed}")
        if not 0 <= self.stream <= _MASK64:
            raise ValueError(f"stream out of 64-bit range: {self.stream}")

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        key = (self.stream << 64) | self.seed
        return np.random.Generator(np.random.Philox(key=key))

    def substream(self, index: int) -> "Rng":
        """Independent child stream, stable in (stream, index)."""
        return Rng(self.seed, derive64(self.stream, index))


@dataclass(frozen=True)
class RadarPoint:
    """A single 5-D radar return: position, normalized RCS, Doppler speed."""

    x: float
    y: float
    z: float
    rcs: float
    v: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "z", "rcs", "v"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"non-finite {name} in RadarPoint")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.rcs, self.v], dtype=np.float64)


@dataclass(frozen=True)
class PointCloud:
    """Ordered radar point set stored as an (n, 5) float64 array.

    Column order is (x, y, z, rcs, v). The backing array is locked
    read-only; derive modified clouds through ``with_data``.
    """

    data: np.ndarray
    frame_id: str = "0"

    def __post_init__(self) -> None:
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.size == 0:
            arr = arr.reshape(0, 5)
        if arr.ndim != 2 or arr.shape[1] != 5:
            raise ValueError(f"point cloud must be (n, 5), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("point cloud contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    def __len__(self) -> int:
        return self.data.shape[0]

    @property
    def xyz(self) -> np.ndarray:
        return self.data[:, 0:3]

    @property
    def rcs(self) -> np.ndarray:
        return self.data[:, 3]

    @property
    def v(self) -> np.ndarray:
        return self.data[:, 4]

    def point(self, index: int) -> RadarPoint:
        x, y, z, rcs, v = self.data[index]
        return RadarPoint(x, y, z, rcs, v)

    def with_data(self, data: np.ndarray) -> "PointCloud":
        return PointCloud(data=data, frame_id=self.frame_id)

    @classmethod
    def from_points(cls, points, frame_id: str = "0") -> "PointCloud":
        rows = [p.as_array() for p in points]
        data = np.stack(rows) if rows else np.empty((0, 5))
        return cls(data=data, frame_id=frame_id)


@dataclass(frozen=True)
class BoxAnnotation:
    """Axis-extent box with planar yaw, marking a target region."""

    center: tuple[float, float, float]
    size: tuple[float, float, float]
    yaw: float

    def __post_init__(self) -> None:
        center = tuple(float(c) for c in self.center)
        size = tuple(float(s) for s in self.size)
        if len(center) != 3 or len(size) != 3:
            raise ValueError("center and size must have three components")
        if not all(math.isfinite(c) for c in center) or not math.isfinite(self.yaw):
            raise ValueError("non-finite box parameters")
        if any(s <= 0 or not math.isfinite(s) for s in size):
            raise ValueError(f"box size components must be positive, got {size}")
        if not -math.pi <= self.yaw <= math.pi:
            raise ValueError(f"yaw must lie in [-pi, pi], got {self.yaw}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "size", size)


@dataclass(frozen=True)
class Scene:
    """A point cloud plus target annotations; ``seed`` fully determines
    any stochastic derivation made from the scene."""

    cloud: PointCloud
    boxes: tuple[BoxAnnotation, ...]
    seed: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "boxes", tuple(self.boxes))


@dataclass(frozen=True)
class GridSpec:
    """Regular 3D voxel grid geometry: per-axis ranges and cell counts."""

    x_range: tuple[float, float]
    y_range: tuple[float, float]
    z_range: tuple[float, float]
    cells: tuple[int, int, int]

    def __post_init__(self) -> None:
        for name in ("x_range", "y_range", "z_range"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi) and hi > lo):
                raise ValueError(f"{name} must satisfy max > min, got ({lo}, {hi})")
            object.__setattr__(self, name, (float(lo), float(hi)))
        cells = tuple(int(c) for c in self.cells)
        if len(cells) != 3 or any(c <= 0 for c in cells):
            raise ValueError(f"cell counts must be positive, got {self.cells}")
        object.__setattr__(self, "cells", cells)

    @property
    def ranges(self) -> tuple[tuple[float, float], ...]:
        return (self.x_range, self.y_range, self.z_range)

    @property
    def cell_sizes(self) -> tuple[float, float, float]:
        return tuple(
            (hi - lo) / n for (lo, hi), n in zip(self.ranges, self.cells)
        )


def default_grid() -> GridSpec:
    """The package-default grid: +/-51.2 m planar at 128x128, 8 z-cells."""
    return GridSpec(
        x_range=DEFAULT_PLANAR_RANGE,
        y_range=DEFAULT_PLANAR_RANGE,
        z_range=DEFAULT_Z_RANGE,
        cells=(DEFAULT_PLANAR_CELLS, DEFAULT_PLANAR_CELLS, DEFAULT_Z_CELLS),
    )


@dataclass(frozen=True)
class VoxelGrid:
    """Discretized radar field with RCS / velocity / count channels.

    ``out_of_range`` reports how many points were skipped because they
    fell outside the grid during voxelization or expansion.
    """

    spec: GridSpec
    rcs: np.ndarray
    vel: np.ndarray
    count: np.ndarray
    out_of_range: int = 0

    def __post_init__(self) -> None:
        shape = self.spec.cells
        rcs = np.asarray(self.rcs, dtype=np.float64)
        vel = np.asarray(self.vel, dtype=np.float64)
        count = np.asarray(self.count, dtype=np.int64)
        for name, arr in (("rcs", rcs), ("vel", vel), ("count", count)):
            if arr.shape != shape:
                raise ValueError(f"{name} field shape {arr.shape} != grid {shape}")
        if np.any(count < 0):
            raise ValueError("count field must be non-negative")
        for arr in (rcs, vel, count):
            arr.setflags(write=False)
        object.__setattr__(self, "rcs", rcs)
        object.__setattr__(self, "vel", vel)
        object.__setattr__(self, "count", count)


def empty_grid(spec: GridSpec) -> VoxelGrid:
    shape = spec.cells
    return VoxelGrid(
        spec=spec,
        rcs=np.zeros(shape),
        vel=np.zeros(shape),
        count=np.zeros(shape, dtype=np.int64),
    )


def point_in_box(pt: RadarPoint, box: BoxAnnotation) -> bool:
    """True iff the point lies within the box's yaw-rotated half-extents.

    Boundaries are inclusive on every axis.
    """
    mask = points_in_box_mask(
        np.array([[pt.x, pt.y, pt.z]], dtype=np.float64), box
    )
    return bool(mask[0])


def points_in_box_mask(xyz: np.ndarray, box: BoxAnnotation) -> np.ndarray:
    """Vectorized membership test for an (n, 3) position array."""
    cx, cy, cz = box.center
    dx = xyz[:, 0] - cx
    dy = xyz[:, 1] - cy
    dz = xyz[:, 2] - cz
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    # Rotate the offset into the box frame (inverse planar rotation).
    local_x = c * dx + s * dy
    local_y = -s * dx + c * dy
    hl, hw, hh = box.size[0] / 2.0, box.size[1] / 2.0, box.size[2] / 2.0
    return (
        (np.abs(local_x) <= hl) & (np.abs(local_y) <= hw) & (np.abs(dz) <= hh)
    )


def points_in_any_box_mask(xyz: np.ndarray, boxes) -> np.ndarray:
    mask = np.zeros(xyz.shape[0], dtype=bool)
    for box in boxes:
        mask |= points_in_box_mask(xyz, box)
    return mask


def voxel_index(
    spec: GridSpec, position: tuple[float, float, float]
) -> tuple[int, int, int] | None:
    """Floor-based cell index of a position, or None when out of range.

    Both range ends are closed; a coordinate exactly at max bins to the
    last cell so boundary points are never silently dropped.
    """
    idx = []
    for p, (lo, hi), n in zip(position, spec.ranges, spec.cells):
        if not lo <= p <= hi:
            return None
        i = int(math.floor((p - lo) * n / (hi - lo)))
        idx.append(min(max(i, 0), n - 1))
    return tuple(idx)


def voxel_indices(
    spec: GridSpec, xyz: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized voxel_index: (in-range mask, ix, iy, iz).

    Index arrays are only meaningful where the mask is True.
    """
    n_pts = xyz.shape[0]
    mask = np.ones(n_pts, dtype=bool)
    indices = []
    for axis, ((lo, hi), n) in enumerate(zip(spec.ranges, spec.cells)):
        coord = xyz[:, axis]
        mask &= (coord >= lo) & (coord <= hi)
        i = np.floor((coord - lo) * n / (hi - lo)).astype(np.int64)
        indices.append(np.clip(i, 0, n - 1))
    return mask, indices[0], indices[1], indices[2]


def _format_float(value: float) -> str:
    # repr round-trips float64 exactly and is byte-stable across runs.
    return repr(float(value))


def write_point_cloud_csv(cloud: PointCloud, path) -> None:
    """Write the mandatory-header `frame_id,x,y,z,rcs,v` format."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(POINT_CLOUD_CSV_HEADER)
        for row in cloud.data:
            writer.writerow([cloud.frame_id] + [_format_float(v) for v in row])


def read_point_cloud_csv(path) -> PointCloud:
    """Read a single-frame point cloud; row order is preserved."""
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != POINT_CLOUD_CSV_HEADER:
            raise ValueError(f"bad point-cloud CSV header in {path}: {header}")
        frame_id = None
        rows = []
        for record in reader:
            if not record:
                continue
            if len(record) != 6:
                raise ValueError(f"bad point-cloud CSV row: {record}")
            if frame_id is None:
                frame_id = record[0]
            elif record[0] != frame_id:
                raise ValueError(
                    f"multiple frame ids in {path}: {frame_id!r} vs {record[0]!r}"
                )
            rows.append([float(v) for v in record[1:]])
    data = np.array(rows, dtype=np.float64) if rows else np.empty((0, 5))
    return PointCloud(data=data, frame_id=frame_id if frame_id is not None else "0")


def write_boxes_csv(boxes, path, frame_id: str = "0") -> None:
    """Write the `frame_id,cx,cy,cz,l,w,h,yaw` annotation format."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(BOX_CSV_HEADER)
        for box in boxes:
            values = list(box.center) + list(box.size) + [box.yaw]
            writer.writerow([frame_id] + [_format_float(v) for v in values])


def read_boxes_csv(path) -> tuple[BoxAnnotation, ...]:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != BOX_CSV_HEADER:
            raise ValueError(f"bad box CSV header in {path}: {header}")
        boxes = []
        for record in reader:
            if not record:
                continue
            if len(record) != 8:
                raise ValueError(f"bad box CSV row: {record}")
            vals = [float(v) for v in record[1:]]
            boxes.append(
                BoxAnnotation(
                    center=(vals[0], vals[1], vals[2]),
                    size=(vals[3], vals[4], vals[5]),
                    yaw=vals[6],
                )
            )
    return tuple(boxes)
