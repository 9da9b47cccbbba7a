"""Seeded radar point-cloud corruption models.

Five corruption families over 5-D radar points: key-point removal,
spurious-point injection, positional shifting, RCS/velocity disturbance,
and azimuth beam dropping. Every operation is a pure function of its
inputs and the supplied random stream.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import GridSpec, PointCloud, Rng, points_in_any_box_mask

# Severity sampler bounds for sigma-parameterized corruptions.
SIGMA_RANGE = (1.0, 50.0)
# Azimuth sectors used to emulate radar beams; points carry no beam index,
# so beams are synthesized as equal sectors around the sensor origin.
DEFAULT_BEAM_COUNT = 32
# Injected points as a fraction of the input cloud size.
DEFAULT_SPURIOUS_RATIO = 0.2

# Cap on removable points when deleting inside target regions.
TARGETED_REMOVAL_CAP = 8


class CorruptionKind(str, Enum):
    KEY_POINT_MISSING = "KeyPointMissing"
    SPURIOUS_POINTS = "SpuriousPoints"
    POINT_SHIFTING = "PointShifting"
    NON_POSITIONAL_DISTURBANCE = "NonPositionalDisturbance"
    BEAM_DROP = "BeamDrop"


class SpuriousMode(str, Enum):
    POINT_RELATED = "PointRelated"
    RANDOM = "Random"


def sample_sigma(rng: Rng) -> float:
    """Draw a corruption severity uniformly from [1, 50]."""
    return float(rng.generator().uniform(*SIGMA_RANGE))


def _sample_without_replacement(
    gen: np.random.Generator, pool: np.ndarray, k: int
) -> np.ndarray:
    """Uniform k-subset of pool via a partial Fisher-Yates shuffle."""
    pool = pool.copy()
    n = pool.shape[0]
    for i in range(k):
        j = i + int(gen.integers(0, n - i))
        pool[i], pool[j] = pool[j], pool[i]
    return pool[:k]


def key_point_missing(
    cloud: PointCloud, boxes, gamma: int, k: int, rng: Rng
) -> PointCloud:
    """Remove k points, either cloud-wide (gamma=0) or from target regions.

    gamma=0 deletes k points uniformly without replacement from the whole
    cloud, with k capped at half the cloud size. gamma=1 deletes
    min(k, points inside any box) from the in-box subset, k capped at
    TARGETED_REMOVAL_CAP. Survivors keep their values and relative order.
    """
    n = len(cloud)
    if n == 0:
        raise ValueError("cannot remove points from an empty cloud")
    if gamma not in (0, 1):
        raise ValueError(f"gamma must be 0 or 1, got {gamma}")
    cap = n // 2 if gamma == 0 else TARGETED_REMOVAL_CAP
    if not 1 <= k <= cap:
        raise ValueError(f"k={k} outside [1, {cap}] for gamma={gamma}")

    if gamma == 0:
        eligible = np.arange(n)
    else:
        eligible = np.flatnonzero(points_in_any_box_mask(cloud.xyz, boxes))
    removable = min(k, eligible.shape[0])
    if removable == 0:
        return cloud
    removed = _sample_without_replacement(rng.generator(), eligible, removable)
    keep = np.ones(n, dtype=bool)
    keep[removed] = False
    return cloud.with_data(cloud.data[keep])


def spurious_points(
    cloud: PointCloud,
    mode: SpuriousMode,
    spurious_ratio: float,
    sigma: float,
    bounds: GridSpec,
    rng: Rng,
) -> PointCloud:
    """Append false-positive points drawn around a base location.

    The base of each injected point is either a uniformly chosen existing
    point (PointRelated) or a uniform draw over the grid bounds for
    position and the cloud's empirical range for RCS/velocity (Random).
    Each base is then perturbed by i.i.d. per-dimension N(0, sigma^2)
    noise. In Random mode the perturbed positions are clipped back into
    the bounds so injected points never leave the scene volume.
    """
    n = len(cloud)
    if n == 0:
        raise ValueError("spurious_points requires a non-empty cloud")
    if not 0.0 < spurious_ratio <= 1.0:
        raise ValueError(f"spurious_ratio must lie in (0, 1], got {spurious_ratio}")
    if not sigma > 0 or not math.isfinite(sigma):
        raise ValueError(f"sigma must be a positive real, got {sigma}")

    gen = rng.generator()
    m = max(1, int(round(spurious_ratio * n)))
    mode = SpuriousMode(mode)
    if mode is SpuriousMode.POINT_RELATED:
        base_idx = gen.integers(0, n, size=m)
        base = cloud.data[base_idx]
    else:
        cols = [gen.uniform(lo, hi, size=m) for lo, hi in bounds.ranges]
        cols.append(gen.uniform(cloud.rcs.min(), cloud.rcs.max(), size=m))
        cols.append(gen.uniform(cloud.v.min(), cloud.v.max(), size=m))
        base = np.column_stack(cols)
    added = base + gen.normal(0.0, sigma, size=(m, 5))
    if mode is SpuriousMode.RANDOM:
        for axis, (lo, hi) in enumerate(bounds.ranges):
            added[:, axis] = np.clip(added[:, axis], lo, hi)
    return cloud.with_data(np.vstack([cloud.data, added]))


def point_shift(cloud: PointCloud, sigma: float, rng: Rng) -> PointCloud:
    """Displace each point's position by i.i.d. N(0, sigma^2) per axis.

    RCS and velocity are untouched; this corruption is positional only.
    """
    if not sigma > 0 or not math.isfinite(sigma):
        raise ValueError(f"sigma must be a positive real, got {sigma}")
    data = cloud.data.copy()
    data[:, 0:3] += rng.generator().normal(0.0, sigma, size=(len(cloud), 3))
    return cloud.with_data(data)


def non_positional_disturbance(cloud: PointCloud, sigma: float, rng: Rng) -> PointCloud:
    """Add N(0, sigma^2) noise to RCS and velocity, keeping positions."""
    if not sigma > 0 or not math.isfinite(sigma):
        raise ValueError(f"sigma must be a positive real, got {sigma}")
    data = cloud.data.copy()
    data[:, 3:5] += rng.generator().normal(0.0, sigma, size=(len(cloud), 2))
    return cloud.with_data(data)


def beam_azimuth_sector(x, y, total_beams: int):
    """Sector index of the azimuth atan2(y, x) in [-pi, pi), vectorized."""
    angle = np.arctan2(y, x)
    sector = np.floor((angle + math.pi) * total_beams / (2.0 * math.pi))
    return sector.astype(np.int64) % total_beams


def beam_drop(
    cloud: PointCloud, total_beams: int, drop_count: int, rng: Rng
) -> PointCloud:
    """Remove all points whose azimuth falls in dropped beam sectors.

    The azimuth circle is split into total_beams equal sectors and
    drop_count of them are chosen uniformly without replacement.
    """
    if total_beams < 1:
        raise ValueError(f"total_beams must be positive, got {total_beams}")
    if not 0 <= drop_count <= total_beams:
        raise ValueError(
            f"drop_count={drop_count} outside [0, total_beams={total_beams}]"
        )
    if drop_count == 0 or len(cloud) == 0:
        return cloud
    dropped = _sample_without_replacement(
        rng.generator(), np.arange(total_beams), drop_count
    )
    sectors = beam_azimuth_sector(cloud.data[:, 0], cloud.data[:, 1], total_beams)
    keep = ~np.isin(sectors, dropped)
    return cloud.with_data(cloud.data[keep])


_SPEC_FIELDS = (
    "kind",
    "gamma",
    "mode",
    "sigma",
    "drop_count",
    "spurious_ratio",
    "seed",
)


@dataclass(frozen=True)
class CorruptionSpec:
    """Declarative corruption configuration.

    Only the fields relevant to ``kind`` are interpreted; the rest keep
    their defaults and are ignored.
    """

    kind: CorruptionKind
    seed: int = 0
    gamma: int = 0
    mode: SpuriousMode = SpuriousMode.POINT_RELATED
    sigma: float | None = None
    drop_count: int = 0
    spurious_ratio: float = DEFAULT_SPURIOUS_RATIO

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", CorruptionKind(self.kind))
        object.__setattr__(self, "mode", SpuriousMode(self.mode))
        if self.gamma not in (0, 1):
            raise ValueError(f"gamma must be 0 or 1, got {self.gamma}")
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.drop_count < 0:
            raise ValueError(f"drop_count must be non-negative, got {self.drop_count}")

    def to_json_dict(self) -> dict:
        out: dict = {"kind": self.kind.value, "seed": self.seed}
        if self.kind is CorruptionKind.KEY_POINT_MISSING:
            out["gamma"] = self.gamma
            out["drop_count"] = self.drop_count
        elif self.kind is CorruptionKind.SPURIOUS_POINTS:
            out["mode"] = self.mode.value
            out["spurious_ratio"] = self.spurious_ratio
            if self.sigma is not None:
                out["sigma"] = self.sigma
        elif self.kind is CorruptionKind.BEAM_DROP:
            out["drop_count"] = self.drop_count
        else:
            if self.sigma is not None:
                out["sigma"] = self.sigma
        return out

    @classmethod
    def from_json_dict(cls, payload: dict) -> "CorruptionSpec":
        unknown = set(payload) - set(_SPEC_FIELDS)
        if unknown:
            raise ValueError(f"unknown CorruptionSpec fields: {sorted(unknown)}")
        if "kind" not in payload:
            raise ValueError("CorruptionSpec requires a 'kind' field")
        kwargs = dict(payload)
        return cls(**kwargs)

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CorruptionSpec":
        payload = json.loads(text)
        if not isinstance(payload, dict):
            raise ValueError("CorruptionSpec JSON must be an object")
        return cls.from_json_dict(payload)


def apply_corruption(
    cloud: PointCloud,
    spec: CorruptionSpec,
    boxes=(),
    bounds: GridSpec | None = None,
    total_beams: int = DEFAULT_BEAM_COUNT,
) -> PointCloud:
    """Run the corruption described by ``spec`` on a cloud.

    A sigma-parameterized spec without an explicit sigma draws one from
    the U[1, 50] severity sampler on a dedicated substream.
    """
    rng = Rng(spec.seed, stream=0)
    sigma = spec.sigma
    if sigma is None and spec.kind in (
        CorruptionKind.SPURIOUS_POINTS,
        CorruptionKind.POINT_SHIFTING,
        CorruptionKind.NON_POSITIONAL_DISTURBANCE,
    ):
        sigma = sample_sigma(rng.substream(1))
    if spec.kind is CorruptionKind.KEY_POINT_MISSING:
        return key_point_missing(cloud, boxes, spec.gamma, spec.drop_count, rng)
    if spec.kind is CorruptionKind.SPURIOUS_POINTS:
        if bounds is None:
            raise ValueError("spurious_points requires grid bounds")
        return spurious_points(
            cloud, spec.mode, spec.spurious_ratio, sigma, bounds, rng
        )
    if spec.kind is CorruptionKind.POINT_SHIFTING:
        return point_shift(cloud, sigma, rng)
    if spec.kind is CorruptionKind.NON_POSITIONAL_DISTURBANCE:
        return non_positional_disturbance(cloud, sigma, rng)
    if spec.kind is CorruptionKind.BEAM_DROP:
        return beam_drop(cloud, total_beams, spec.drop_count, rng)
    raise ValueError(f"unhandled corruption kind: {spec.kind}")
