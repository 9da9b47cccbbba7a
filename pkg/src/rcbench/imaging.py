"""Camera frame degradation: gamma low-light and map-based weather blending.

Images are dense [0, 1] float fields. Degradation maps are caller-supplied
(rain/snow/fog intensity fields); this module composites them, it does not
render them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Rng

# Gamma bands for the two low-light severities.
GAMMA_MILD_RANGE = (1.0, 2.0)
GAMMA_HEAVY_RANGE = (2.0, 3.0)

# Constant atmosphere value blended in per weather kind.
ATMOSPHERE_DEFAULTS = {"rain": 0.6, "fog": 0.8, "snow": 0.8}

# Map strength per weather level; light conditions attenuate the map.
WEATHER_LEVEL_STRENGTH = {"light": 0.5, "heavy": 1.0}

WEATHER_KINDS = ("rain", "fog", "snow")
# Rain and fog come in two severities; snow has a single level.
WEATHER_LEVELS = {"rain": ("light", "heavy"), "fog": ("light", "heavy"), "snow": ("heavy",)}
LOWLIGHT_LEVELS = ("mild", "heavy")

PNM_MAX_VALUE = 255


@dataclass(frozen=True)
class ImagePlane:
    """H x W x 3 image with samples in [0, 1]."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"image must be (h, w, 3), got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image must have positive dimensions")
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("image samples must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class DegradationMap:
    """Per-pixel weather intensity in [0, 1], single- or three-channel."""

    data: np.ndarray
    kind: str

    def __post_init__(self) -> None:
        if self.kind not in WEATHER_KINDS:
            raise ValueError(f"unknown weather kind: {self.kind!r}")
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim == 2:
            pass
        elif arr.ndim == 3 and arr.shape[2] in (1, 3):
            if arr.shape[2] == 1:
                arr = arr[:, :, 0]
        else:
            raise ValueError(f"map must be (h, w) or (h, w, 1|3), got {arr.shape}")
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("map samples must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def gamma_lowlight(img: ImagePlane, gamma: float) -> ImagePlane:
    """Classic gamma darkening: every sample is raised to ``gamma``."""
    if not gamma > 0 or not math.isfinite(gamma):
        raise ValueError(f"gamma must be positive, got {gamma}")
    if gamma == 1.0:
        return img
    return ImagePlane(np.power(img.data, gamma))


def composite_weather(
    img: ImagePlane, deg_map: DegradationMap, atmosphere: float
) -> ImagePlane:
    """Alpha-blend the image toward a constant atmosphere value.

    out = img * (1 - map) + atmosphere * map, clamped to [0, 1].
    Single-channel maps broadcast across the three image channels.
    """
    if not 0.0 <= atmosphere <= 1.0:
        raise ValueError(f"atmosphere must lie in [0, 1], got {atmosphere}")
    if (deg_map.height, deg_map.width) != (img.height, img.width):
        raise ValueError(
            f"map dims {(deg_map.height, deg_map.width)} != "
            f"image dims {(img.height, img.width)}"
        )
    m = deg_map.data
    if m.ndim == 2:
        m = m[:, :, None]
    out = img.data * (1.0 - m) + atmosphere * m
    return ImagePlane(np.clip(out, 0.0, 1.0))


@dataclass(frozen=True)
class DegradationSpec:
    """Candidate degradations for one timestamp.

    ``kinds`` lists the admissible degradations ("lowlight" plus any
    weather kind that has a map in ``maps``); one (kind, level) pair is
    sampled per application and shared across all frames.
    """

    kinds: tuple[str, ...]
    seed: int
    maps: dict = field(default_factory=dict)
    atmosphere: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        kinds = tuple(self.kinds)
        if not kinds:
            raise ValueError("at least one degradation kind is required")
        for kind in kinds:
            if kind != "lowlight" and kind not in WEATHER_KINDS:
                raise ValueError(f"unknown degradation kind: {kind!r}")
            if kind in WEATHER_KINDS and kind not in self.maps:
                raise ValueError(f"weather kind {kind!r} requires a map")
        object.__setattr__(self, "kinds", kinds)

    def atmosphere_for(self, kind: str) -> float:
        return self.atmosphere.get(kind, ATMOSPHERE_DEFAULTS[kind])


def sample_degradation(spec: DegradationSpec, rng: Rng) -> tuple[str, str, float]:
    """Draw one (kind, level, parameter) triple from the candidates.

    The parameter is the gamma exponent for low light and the map
    strength for weather kinds.
    """
    gen = rng.generator()
    kind = spec.kinds[int(gen.integers(0, len(spec.kinds)))]
    if kind == "lowlight":
        level = LOWLIGHT_LEVELS[int(gen.integers(0, len(LOWLIGHT_LEVELS)))]
        band = GAMMA_MILD_RANGE if level == "mild" else GAMMA_HEAVY_RANGE
        return kind, level, float(gen.uniform(*band))
    levels = WEATHER_LEVELS[kind]
    level = levels[int(gen.integers(0, len(levels)))]
    return kind, level, WEATHER_LEVEL_STRENGTH[level]


def apply_degradation(
    img: ImagePlane, spec: DegradationSpec, kind: str, parameter: float
) -> ImagePlane:
    if kind == "lowlight":
        return gamma_lowlight(img, parameter)
    deg_map = spec.maps[kind]
    if parameter != 1.0:
        deg_map = DegradationMap(deg_map.data * parameter, kind=deg_map.kind)
    return composite_weather(img, deg_map, spec.atmosphere_for(kind))


def same_timestamp_consistency(frames, spec: DegradationSpec) -> list[ImagePlane]:
    """Degrade all frames of one timestamp with a single sampled setting.

    The (kind, level) draw happens once, so every camera view receives
    identical degradation parameters.
    """
    frames = list(frames)
    if not frames:
        raise ValueError("at least one frame is required")
    kind, _, parameter = sample_degradation(spec, Rng(spec.seed, stream=0))
    return [apply_degradation(frame, spec, kind, parameter) for frame in frames]


def _read_pnm_tokens(raw: bytes, count: int) -> tuple[list[int], int]:
    """Parse ``count`` ASCII integers after the magic, skipping comments."""
    tokens: list[int] = []
    i = 0
    while len(tokens) < count:
        if i >= len(raw):
            raise ValueError("truncated PNM header")
        c = raw[i : i + 1]
        if c == b"#":
            while i < len(raw) and raw[i : i + 1] != b"\n":
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < len(raw) and not raw[j : j + 1].isspace():
                j += 1
            tokens.append(int(raw[i:j]))
            i = j
    # A single whitespace byte separates the header from the raster.
    return tokens, i + 1


def read_pnm(path) -> np.ndarray:
    """Read a binary P5/P6 file into a float array in [0, 1].

    Returns (h, w) for PGM and (h, w, 3) for PPM. Only 8-bit files with
    max value 255 are accepted.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    magic = raw[:2]
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"unsupported PNM magic {magic!r} in {path}")
    channels = 1 if magic == b"P5" else 3
    (width, height, maxval), offset = _read_pnm_tokens(raw[2:], 3)
    offset += 2
    if maxval != PNM_MAX_VALUE:
        raise ValueError(f"PNM max value must be {PNM_MAX_VALUE}, got {maxval}")
    expected = width * height * channels
    pixels = np.frombuffer(raw, dtype=np.uint8, count=expected, offset=offset)
    if pixels.size != expected:
        raise ValueError(f"truncated PNM raster in {path}")
    shape = (height, width) if channels == 1 else (height, width, 3)
    return pixels.reshape(shape).astype(np.float64) / PNM_MAX_VALUE


def write_pnm(path, data: np.ndarray) -> None:
    """Write a [0, 1] float array as binary P5 (2-D) or P6 (3-D, 3ch)."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 2:
        magic = b"P5"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        magic = b"P6"
    else:
        raise ValueError(f"cannot encode array of shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("samples must lie in [0, 1]")
    quantized = np.rint(arr * PNM_MAX_VALUE).astype(np.uint8)
    header = b"%s\n%d %d\n%d\n" % (magic, arr.shape[1], arr.shape[0], PNM_MAX_VALUE)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(quantized.tobytes())


def load_image(path) -> ImagePlane:
    """Load a PPM/PGM as a 3-channel image (gray replicates to RGB)."""
    arr = read_pnm(path)
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    return ImagePlane(arr)


def save_image(img: ImagePlane, path) -> None:
    write_pnm(path, img.data)


def load_map(path, kind: str) -> DegradationMap:
    return DegradationMap(read_pnm(path), kind=kind)
