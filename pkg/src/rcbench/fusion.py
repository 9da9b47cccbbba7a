"""Confidence-guided two-branch radar/camera BEV fusion numerics.

A desk-scale, dependency-free implementation of the fusion core: layer
normalization, a per-cell camera-confidence head, confidence weighting,
deformable cross-attention with bilinear sampling, and a convolutional
merge. Every operation also exposes an analytic Jacobian-vector product
(forward-mode tangent), verified against finite differences in the test
suite. There is no training here; parameters are loaded from files or
seeded randomly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .core import Rng

LN_EPSILON = 1e-5
DEFAULT_HEADS = 8
DEFAULT_POINTS = 2
CONFIDENCE_HIDDEN = 16
# Confidence stays strictly inside (0, 1) even for saturating logits.
CONFIDENCE_CLAMP = 1e-15

FUSION_PARAMS_MAGIC = b"CMCA"
FUSION_PARAMS_VERSION = 1


def _lock(*arrays: np.ndarray) -> None:
    for arr in arrays:
        arr.setflags(write=False)


def _as_f64(value) -> np.ndarray:
    arr = np.array(value, dtype=np.float64, copy=True)
    if not np.all(np.isfinite(arr)):
        raise ValueError("parameters must be finite")
    return arr


@dataclass(frozen=True)
class FeatureMap:
    """Dense C x H x W real field."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim != 3:
            raise ValueError(f"feature map must be (c, h, w), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("feature map contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class ConfidenceMap:
    """Per-cell camera confidence, strictly inside (0, 1)."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim != 2:
            raise ValueError(f"confidence map must be (h, w), got {arr.shape}")
        if not np.all((arr > 0.0) & (arr < 1.0)):
            raise ValueError("confidence values must lie strictly in (0, 1)")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)


@dataclass(frozen=True)
class LayerNormParams:
    scale: np.ndarray
    shift: np.ndarray

    def __post_init__(self) -> None:
        scale = _as_f64(self.scale)
        shift = _as_f64(self.shift)
        if scale.ndim != 1 or scale.shape != shift.shape:
            raise ValueError("scale and shift must be matching 1-D arrays")
        _lock(scale, shift)
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "shift", shift)

    @property
    def channels(self) -> int:
        return self.scale.shape[0]


@dataclass(frozen=True)
class ConfidenceMlpParams:
    """Per-cell MLP C -> 16 -> 2 whose softmaxed logits yield the confidence."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self) -> None:
        w1, b1, w2, b2 = map(_as_f64, (self.w1, self.b1, self.w2, self.b2))
        if w1.ndim != 2 or w1.shape[0] != CONFIDENCE_HIDDEN:
            raise ValueError(f"w1 must be ({CONFIDENCE_HIDDEN}, C)")
        if b1.shape != (CONFIDENCE_HIDDEN,):
            raise ValueError(f"b1 must be ({CONFIDENCE_HIDDEN},)")
        if w2.shape != (2, CONFIDENCE_HIDDEN) or b2.shape != (2,):
            raise ValueError("second layer must map 16 -> 2")
        _lock(w1, b1, w2, b2)
        for name, arr in (("w1", w1), ("b1", b1), ("w2", w2), ("b2", b2)):
            object.__setattr__(self, name, arr)

    @property
    def channels(self) -> int:
        return self.w1.shape[1]


@dataclass(frozen=True)
class AffineParams:
    w: np.ndarray
    b: np.ndarray

    def __post_init__(self) -> None:
        w = _as_f64(self.w)
        b = _as_f64(self.b)
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise ValueError("affine parameters must be (out, in) and (out,)")
        _lock(w, b)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", b)


@dataclass(frozen=True)
class DeformAttnParams:
    """Single-scale deformable attention parameters for one branch.

    Per head, the query is projected to ``points`` fractional (dx, dy)
    offsets (offset blocks ordered dx then dy per point) and ``points``
    weight logits, softmax-normalized across the points.
    """

    offset_w: np.ndarray
    offset_b: np.ndarray
    weight_w: np.ndarray
    weight_b: np.ndarray
    out_w: np.ndarray
    out_b: np.ndarray

    def __post_init__(self) -> None:
        offset_w, offset_b, weight_w, weight_b, out_w, out_b = map(
            _as_f64,
            (
                self.offset_w,
                self.offset_b,
                self.weight_w,
                self.weight_b,
                self.out_w,
                self.out_b,
            ),
        )
        if offset_w.ndim != 3 or weight_w.ndim != 3:
            raise ValueError("offset_w / weight_w must be 3-D (heads, k, C)")
        heads, twop, channels = offset_w.shape
        points = weight_w.shape[1]
        if twop != 2 * points:
            raise ValueError("offset projection width must be 2 * points")
        if weight_w.shape != (heads, points, channels):
            raise ValueError("weight_w shape inconsistent with offset_w")
        if offset_b.shape != (heads, twop) or weight_b.shape != (heads, points):
            raise ValueError("bias shapes inconsistent with projections")
        if out_w.ndim != 2 or out_b.shape != (out_w.shape[0],):
            raise ValueError("output projection must be (C_out, C_value)")
        if out_w.shape[1] % heads != 0:
            raise ValueError(
                f"value channels {out_w.shape[1]} not divisible by {heads} heads"
            )
        _lock(offset_w, offset_b, weight_w, weight_b, out_w, out_b)
        object.__setattr__(self, "offset_w", offset_w)
        object.__setattr__(self, "offset_b", offset_b)
        object.__setattr__(self, "weight_w", weight_w)
        object.__setattr__(self, "weight_b", weight_b)
        object.__setattr__(self, "out_w", out_w)
        object.__setattr__(self, "out_b", out_b)

    @property
    def heads(self) -> int:
        return self.offset_w.shape[0]

    @property
    def points(self) -> int:
        return self.weight_w.shape[1]

    @property
    def value_channels(self) -> int:
        return self.out_w.shape[1]


@dataclass(frozen=True)
class ConvParams:
    """3x3 convolution C -> C with zero padding."""

    kernel: np.ndarray
    bias: np.ndarray

    def __post_init__(self) -> None:
        kernel = _as_f64(self.kernel)
        bias = _as_f64(self.bias)
        if kernel.ndim != 4 or kernel.shape[2:] != (3, 3):
            raise ValueError("conv kernel must be (out, in, 3, 3)")
        if bias.shape != (kernel.shape[0],):
            raise ValueError("conv bias must match output channels")
        _lock(kernel, bias)
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "bias", bias)


@dataclass(frozen=True)
class FusionParams:
    ln_image: LayerNormParams
    ln_radar: LayerNormParams
    ln_weighted_image: LayerNormParams
    ln_weighted_radar: LayerNormParams
    conf_mlp: ConfidenceMlpParams
    agg_w: AffineParams
    attn_plain: DeformAttnParams
    attn_weighted: DeformAttnParams
    out_conv: ConvParams

    def __post_init__(self) -> None:
        c = self.ln_image.channels
        if any(
            ln.channels != c
            for ln in (self.ln_radar, self.ln_weighted_image, self.ln_weighted_radar)
        ):
            raise ValueError("layer-norm channel widths disagree")
        if self.conf_mlp.channels != c:
            raise ValueError("confidence MLP input width must equal C")
        if self.agg_w.w.shape != (c, 2 * c):
            raise ValueError("aggregation projection must map 2C -> C")
        for attn in (self.attn_plain, self.attn_weighted):
            if attn.out_w.shape != (c, 2 * c):
                raise ValueError("attention output projection must map 2C -> C")
        if self.attn_plain.heads != self.attn_weighted.heads:
            raise ValueError("branches must share a head count")
        if self.attn_plain.points != self.attn_weighted.points:
            raise ValueError("branches must share a sampling-point count")
        if self.out_conv.kernel.shape[:2] != (c, c):
            raise ValueError("output convolution must map C -> C")

    @property
    def channels(self) -> int:
        return self.ln_image.channels

    @property
    def heads(self) -> int:
        return self.attn_plain.heads

    @property
    def points(self) -> int:
        return self.attn_plain.points


# ---------------------------------------------------------------------------
# Forward-mode primitives. Every helper maps (value, tangent) -> (value,
# tangent); running them with a zero tangent gives the plain forward pass.
# ---------------------------------------------------------------------------


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _ln(x, dx, params: LayerNormParams):
    mu = x.mean(axis=0)
    dmu = dx.mean(axis=0)
    xc = x - mu
    dxc = dx - dmu
    var = np.mean(xc * xc, axis=0)
    dvar = 2.0 * np.mean(xc * dxc, axis=0)
    inv = 1.0 / np.sqrt(var + LN_EPSILON)
    dinv = -0.5 * inv**3 * dvar
    scale = params.scale[:, None, None]
    y = scale * (xc * inv) + params.shift[:, None, None]
    dy = scale * (dxc * inv + xc * dinv)
    return y, dy


def _cellwise_affine(x, dx, w, b):
    y = np.einsum("oc,chw->ohw", w, x) + b[:, None, None]
    dy = np.einsum("oc,chw->ohw", w, dx)
    return y, dy


def _conf(x, dx, params: ConfidenceMlpParams):
    h = np.einsum("kc,chw->khw", params.w1, x) + params.b1[:, None, None]
    dh = np.einsum("kc,chw->khw", params.w1, dx)
    active = h > 0.0
    h = h * active
    dh = dh * active
    logits = np.einsum("lk,khw->lhw", params.w2, h) + params.b2[:, None, None]
    dlogits = np.einsum("lk,khw->lhw", params.w2, dh)
    diff = logits[0] - logits[1]
    m_raw = _sigmoid(diff)
    dm = m_raw * (1.0 - m_raw) * (dlogits[0] - dlogits[1])
    lo, hi = CONFIDENCE_CLAMP, 1.0 - CONFIDENCE_CLAMP
    m = np.clip(m_raw, lo, hi)
    dm = np.where((m_raw > lo) & (m_raw < hi), dm, 0.0)
    return m, dm


def _attn(q, dq, v, dv, params: DeformAttnParams):
    heads, points = params.heads, params.points
    _, height, width = q.shape
    cv = v.shape[0]
    if cv != params.value_channels:
        raise ValueError(
            f"value has {cv} channels, parameters expect {params.value_channels}"
        )
    dv_head = cv // heads

    off = np.einsum("hkc,cyx->hkyx", params.offset_w, q)
    off += params.offset_b[:, :, None, None]
    doff = np.einsum("hkc,cyx->hkyx", params.offset_w, dq)
    off = off.reshape(heads, points, 2, height, width)
    doff = doff.reshape(heads, points, 2, height, width)

    logits = np.einsum("hpc,cyx->hpyx", params.weight_w, q)
    logits += params.weight_b[:, :, None, None]
    dlogits = np.einsum("hpc,cyx->hpyx", params.weight_w, dq)
    shifted = logits - logits.max(axis=1, keepdims=True)
    expl = np.exp(shifted)
    attn = expl / expl.sum(axis=1, keepdims=True)
    dattn = attn * (dlogits - (attn * dlogits).sum(axis=1, keepdims=True))

    cols = np.arange(width, dtype=np.float64)[None, None, None, :]
    rows = np.arange(height, dtype=np.float64)[None, None, :, None]
    px_raw = cols + off[:, :, 0]
    py_raw = rows + off[:, :, 1]
    px = np.clip(px_raw, 0.0, width - 1.0)
    py = np.clip(py_raw, 0.0, height - 1.0)
    # Sampling clamps to the border; the position tangent dies there.
    dpx = doff[:, :, 0] * ((px_raw > 0.0) & (px_raw < width - 1.0))
    dpy = doff[:, :, 1] * ((py_raw > 0.0) & (py_raw < height - 1.0))

    x0 = np.floor(px).astype(np.int64)
    y0 = np.floor(py).astype(np.int64)
    fx = px - x0
    fy = py - y0
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)

    v_heads = v.reshape(heads, dv_head, height, width)
    dv_heads = dv.reshape(heads, dv_head, height, width)
    out = np.empty((heads, dv_head, height, width))
    dout = np.empty_like(out)
    for h in range(heads):
        vh, dvh = v_heads[h], dv_heads[h]
        gathers = [
            (vh[:, y0[h], x0[h]], dvh[:, y0[h], x0[h]]),
            (vh[:, y0[h], x1[h]], dvh[:, y0[h], x1[h]]),
            (vh[:, y1[h], x0[h]], dvh[:, y1[h], x0[h]]),
            (vh[:, y1[h], x1[h]], dvh[:, y1[h], x1[h]]),
        ]
        (v00, dv00), (v01, dv01), (v10, dv10), (v11, dv11) = gathers
        wfx, wfy = fx[h][None], fy[h][None]
        sample = (
            (1 - wfy) * ((1 - wfx) * v00 + wfx * v01)
            + wfy * ((1 - wfx) * v10 + wfx * v11)
        )
        dsample = (
            (1 - wfy) * ((1 - wfx) * dv00 + wfx * dv01)
            + wfy * ((1 - wfx) * dv10 + wfx * dv11)
        )
        grad_x = (1 - wfy) * (v01 - v00) + wfy * (v11 - v10)
        grad_y = (1 - wfx) * (v10 - v00) + wfx * (v11 - v01)
        dsample += grad_x * dpx[h][None] + grad_y * dpy[h][None]
        ah, dah = attn[h][None], dattn[h][None]
        out[h] = (ah * sample).sum(axis=1)
        dout[h] = (dah * sample + ah * dsample).sum(axis=1)

    cat = out.reshape(cv, height, width)
    dcat = dout.reshape(cv, height, width)
    return _cellwise_affine(cat, dcat, params.out_w, params.out_b)


def _conv3_raw(x, kernel):
    _, height, width = x.shape
    padded = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    out = np.zeros((kernel.shape[0], height, width))
    for ky in range(3):
        for kx in range(3):
            out += np.einsum(
                "oi,ihw->ohw",
                kernel[:, :, ky, kx],
                padded[:, ky : ky + height, kx : kx + width],
            )
    return out


def _conv3(x, dx, params: ConvParams):
    y = _conv3_raw(x, params.kernel) + params.bias[:, None, None]
    return y, _conv3_raw(dx, params.kernel)


def _weighted(fi, dfi, fp, dfp, m, dm):
    mb, dmb = m[None], dm[None]
    fic = mb * fi
    dfic = dmb * fi + mb * dfi
    fpc = (1.0 - mb) * fp
    dfpc = -dmb * fp + (1.0 - mb) * dfp
    return fic, dfic, fpc, dfpc


def _fuse(fi, dfi, fp, dfp, params: FusionParams):
    ln_i, dln_i = _ln(fi, dfi, params.ln_image)
    ln_p, dln_p = _ln(fp, dfp, params.ln_radar)
    agg_in = np.concatenate([ln_i, ln_p], axis=0)
    dagg_in = np.concatenate([dln_i, dln_p], axis=0)
    f_a, df_a = _cellwise_affine(agg_in, dagg_in, params.agg_w.w, params.agg_w.b)

    m, dm = _conf(fi, dfi, params.conf_mlp)
    fic, dfic, fpc, dfpc = _weighted(fi, dfi, fp, dfp, m, dm)
    ln_wi, dln_wi = _ln(fic, dfic, params.ln_weighted_image)
    ln_wp, dln_wp = _ln(fpc, dfpc, params.ln_weighted_radar)
    f_mm = np.concatenate([ln_wi, ln_wp], axis=0)
    df_mm = np.concatenate([dln_wi, dln_wp], axis=0)

    v_plain = np.concatenate([fi, fp], axis=0)
    dv_plain = np.concatenate([dfi, dfp], axis=0)
    branch_plain, dbranch_plain = _attn(f_a, df_a, v_plain, dv_plain, params.attn_plain)
    branch_conf, dbranch_conf = _attn(f_a, df_a, f_mm, df_mm, params.attn_weighted)
    summed = branch_plain + branch_conf
    dsummed = dbranch_plain + dbranch_conf
    return _conv3(summed, dsummed, params.out_conv)


# ---------------------------------------------------------------------------
# Public operations and their Jacobian-vector products.
# ---------------------------------------------------------------------------


def _zeros(x: np.ndarray) -> np.ndarray:
    return np.zeros_like(x)


def layer_norm(f: FeatureMap, params: LayerNormParams) -> FeatureMap:
    """Standardize each cell across channels, then scale and shift."""
    if params.channels != f.channels:
        raise ValueError("layer-norm width must match feature channels")
    y, _ = _ln(f.data, _zeros(f.data), params)
    return FeatureMap(y)


def layer_norm_jvp(x: np.ndarray, dx: np.ndarray, params: LayerNormParams):
    return _ln(np.asarray(x, dtype=np.float64), np.asarray(dx, dtype=np.float64), params)


def confidence_map(f_image: FeatureMap, params: ConfidenceMlpParams) -> ConfidenceMap:
    """Per-cell camera confidence: first softmax channel of a 2-logit MLP.

    The complementary (radar) channel is exactly ``1 - confidence``.
    """
    if params.channels != f_image.channels:
        raise ValueError("confidence MLP width must match feature channels")
    m, _ = _conf(f_image.data, _zeros(f_image.data), params)
    return ConfidenceMap(m)


def confidence_map_jvp(x: np.ndarray, dx: np.ndarray, params: ConfidenceMlpParams):
    return _conf(np.asarray(x, dtype=np.float64), np.asarray(dx, dtype=np.float64), params)


def weight_features(
    f_image: FeatureMap, f_radar: FeatureMap, m: ConfidenceMap
) -> tuple[FeatureMap, FeatureMap]:
    """Scale the camera branch by confidence and radar by its complement."""
    if f_image.data.shape != f_radar.data.shape:
        raise ValueError("feature maps must share a shape")
    if m.data.shape != f_image.data.shape[1:]:
        raise ValueError("confidence map dims must match the features")
    fic, _, fpc, _ = _weighted(
        f_image.data,
        _zeros(f_image.data),
        f_radar.data,
        _zeros(f_radar.data),
        m.data,
        _zeros(m.data),
    )
    return FeatureMap(fic), FeatureMap(fpc)


def weight_features_jvp(fi, dfi, fp, dfp, m, dm):
    fic, dfic, fpc, dfpc = _weighted(fi, dfi, fp, dfp, m, dm)
    return (fic, fpc), (dfic, dfpc)


def aggregate(
    f_image: FeatureMap, f_radar: FeatureMap, params: FusionParams
) -> FeatureMap:
    """Project the concatenated layer-normalized maps down to C channels.

    The result is the shared query of both attention branches.
    """
    if f_image.data.shape != f_radar.data.shape:
        raise ValueError("feature maps must share a shape")
    y, _ = _aggregate(
        f_image.data, _zeros(f_image.data), f_radar.data, _zeros(f_radar.data), params
    )
    return FeatureMap(y)


def _aggregate(fi, dfi, fp, dfp, params: FusionParams):
    ln_i, dln_i = _ln(fi, dfi, params.ln_image)
    ln_p, dln_p = _ln(fp, dfp, params.ln_radar)
    cat = np.concatenate([ln_i, ln_p], axis=0)
    dcat = np.concatenate([dln_i, dln_p], axis=0)
    return _cellwise_affine(cat, dcat, params.agg_w.w, params.agg_w.b)


def aggregate_jvp(fi, dfi, fp, dfp, params: FusionParams):
    return _aggregate(fi, dfi, fp, dfp, params)


def concat_mm(
    f_image_conf: FeatureMap, f_radar_conf: FeatureMap, params: FusionParams
) -> FeatureMap:
    """Layer-normalize the two confidence-weighted maps and concatenate."""
    if f_image_conf.data.shape != f_radar_conf.data.shape:
        raise ValueError("feature maps must share a shape")
    y, _ = _concat_mm(
        f_image_conf.data,
        _zeros(f_image_conf.data),
        f_radar_conf.data,
        _zeros(f_radar_conf.data),
        params,
    )
    return FeatureMap(y)


def _concat_mm(fic, dfic, fpc, dfpc, params: FusionParams):
    ln_wi, dln_wi = _ln(fic, dfic, params.ln_weighted_image)
    ln_wp, dln_wp = _ln(fpc, dfpc, params.ln_weighted_radar)
    y = np.concatenate([ln_wi, ln_wp], axis=0)
    dy = np.concatenate([dln_wi, dln_wp], axis=0)
    return y, dy


def concat_mm_jvp(fic, dfic, fpc, dfpc, params: FusionParams):
    return _concat_mm(fic, dfic, fpc, dfpc, params)


def deform_cross_attention(
    query: FeatureMap, value: FeatureMap, params: DeformAttnParams
) -> FeatureMap:
    """Sample the value map at learned fractional offsets per query cell.

    Per head: the query projects to ``points`` (dx, dy) offsets and as
    many softmax weights; the head's value slice is sampled bilinearly at
    cell + offset (border-clamped), weighted, concatenated across heads,
    and passed through the output projection.
    """
    if value.channels % params.heads != 0:
        raise ValueError(
            f"value channels {value.channels} not divisible by {params.heads} heads"
        )
    y, _ = _attn(
        query.data, _zeros(query.data), value.data, _zeros(value.data), params
    )
    return FeatureMap(y)


def deform_cross_attention_jvp(q, dq, v, dv, params: DeformAttnParams):
    return _attn(q, dq, v, dv, params)


def fuse_bev(
    f_image: FeatureMap, f_radar: FeatureMap, params: FusionParams
) -> FeatureMap:
    """Full fusion: plain and confidence-weighted attention branches,
    summed and convolved into the fused BEV feature."""
    if f_image.data.shape != f_radar.data.shape:
        raise ValueError("feature maps must share a shape")
    if f_image.channels != params.channels:
        raise ValueError("feature channels must match the parameter set")
    y, _ = _fuse(
        f_image.data, _zeros(f_image.data), f_radar.data, _zeros(f_radar.data), params
    )
    return FeatureMap(y)


def fuse_bev_jvp(fi, dfi, fp, dfp, params: FusionParams):
    return _fuse(fi, dfi, fp, dfp, params)


def conv_merge(f: FeatureMap, params: ConvParams) -> FeatureMap:
    """Zero-padded 3x3 convolution used as the final merge."""
    y, _ = _conv3(f.data, _zeros(f.data), params)
    return FeatureMap(y)


def conv_merge_jvp(x, dx, params: ConvParams):
    return _conv3(x, dx, params)


# ---------------------------------------------------------------------------
# Parameter construction and serialization.
# ---------------------------------------------------------------------------


def random_fusion_params(
    channels: int,
    rng: Rng,
    heads: int = DEFAULT_HEADS,
    points: int = DEFAULT_POINTS,
) -> FusionParams:
    """Seeded random parameter set (no training happens in this package).

    Offset biases are drawn off-lattice so sampled coordinates do not sit
    exactly on integer cells, where bilinear interpolation is kinked.
    """
    gen = rng.generator()
    c = channels

    def ln() -> LayerNormParams:
        return LayerNormParams(
            scale=1.0 + 0.1 * gen.normal(size=c), shift=0.1 * gen.normal(size=c)
        )

    def dense(out_dim, in_dim, scale=1.0):
        return gen.normal(0.0, scale / np.sqrt(in_dim), size=(out_dim, in_dim))

    def attn() -> DeformAttnParams:
        return DeformAttnParams(
            offset_w=gen.normal(0.0, 0.1 / np.sqrt(c), size=(heads, 2 * points, c)),
            offset_b=gen.uniform(-0.45, 0.45, size=(heads, 2 * points)),
            weight_w=gen.normal(0.0, 1.0 / np.sqrt(c), size=(heads, points, c)),
            weight_b=0.1 * gen.normal(size=(heads, points)),
            out_w=dense(c, 2 * c),
            out_b=0.01 * gen.normal(size=c),
        )

    return FusionParams(
        ln_image=ln(),
        ln_radar=ln(),
        ln_weighted_image=ln(),
        ln_weighted_radar=ln(),
        conf_mlp=ConfidenceMlpParams(
            w1=dense(CONFIDENCE_HIDDEN, c),
            b1=0.1 * gen.normal(size=CONFIDENCE_HIDDEN),
            w2=dense(2, CONFIDENCE_HIDDEN),
            b2=0.1 * gen.normal(size=2),
        ),
        agg_w=AffineParams(w=dense(c, 2 * c), b=0.01 * gen.normal(size=c)),
        attn_plain=attn(),
        attn_weighted=attn(),
        out_conv=ConvParams(
            kernel=gen.normal(0.0, 1.0 / (3.0 * np.sqrt(c)), size=(c, c, 3, 3)),
            bias=0.01 * gen.normal(size=c),
        ),
    )


def _block_shapes(c: int, heads: int, points: int) -> list[tuple[str, tuple[int, ...]]]:
    ln_blocks = []
    for name in ("ln_image", "ln_radar", "ln_weighted_image", "ln_weighted_radar"):
        ln_blocks += [(f"{name}.scale", (c,)), (f"{name}.shift", (c,))]
    attn_blocks = []
    for name in ("attn_plain", "attn_weighted"):
        attn_blocks += [
            (f"{name}.offset_w", (heads, 2 * points, c)),
            (f"{name}.offset_b", (heads, 2 * points)),
            (f"{name}.weight_w", (heads, points, c)),
            (f"{name}.weight_b", (heads, points)),
            (f"{name}.out_w", (c, 2 * c)),
            (f"{name}.out_b", (c,)),
        ]
    return (
        ln_blocks
        + [
            ("conf_mlp.w1", (CONFIDENCE_HIDDEN, c)),
            ("conf_mlp.b1", (CONFIDENCE_HIDDEN,)),
            ("conf_mlp.w2", (2, CONFIDENCE_HIDDEN)),
            ("conf_mlp.b2", (2,)),
            ("agg_w.w", (c, 2 * c)),
            ("agg_w.b", (c,)),
        ]
        + attn_blocks
        + [("out_conv.kernel", (c, c, 3, 3)), ("out_conv.bias", (c,))]
    )


def _block_value(params: FusionParams, name: str) -> np.ndarray:
    obj_name, attr = name.split(".")
    return getattr(getattr(params, obj_name), attr)


def save_fusion_params(
    params: FusionParams, path, height: int = 0, width: int = 0
) -> None:
    """Write the flat binary parameter file plus its text manifest.

    ``height`` and ``width`` record the intended map size for consumers;
    the parameters themselves are spatially agnostic.
    """
    c, heads, points = params.channels, params.heads, params.points
    header = struct.pack(
        "<4sIIIIII", FUSION_PARAMS_MAGIC, FUSION_PARAMS_VERSION,
        c, height, width, heads, points,
    )
    manifest_lines = []
    offset = len(header)
    with open(path, "wb") as fh:
        fh.write(header)
        for name, shape in _block_shapes(c, heads, points):
            arr = np.ascontiguousarray(_block_value(params, name), dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"block {name} has shape {arr.shape}, want {shape}")
            fh.write(arr.tobytes())
            shape_txt = "x".join(str(s) for s in shape)
            manifest_lines.append(f"{name} {shape_txt} {offset}")
            offset += arr.nbytes
    with open(str(path) + ".manifest", "w", encoding="utf-8") as fh:
        fh.write("\n".join(manifest_lines) + "\n")


def load_fusion_params(path) -> tuple[FusionParams, dict]:
    """Read a parameter file; returns the params and the header fields."""
    header_size = struct.calcsize("<4sIIIIII")
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < header_size:
        raise ValueError(f"truncated fusion parameter file: {path}")
    magic, version, c, height, width, heads, points = struct.unpack(
        "<4sIIIIII", raw[:header_size]
    )
    if magic != FUSION_PARAMS_MAGIC:
        raise ValueError(f"bad fusion parameter magic {magic!r}")
    if version != FUSION_PARAMS_VERSION:
        raise ValueError(f"unsupported fusion parameter version {version}")
    blocks = {}
    offset = header_size
    for name, shape in _block_shapes(c, heads, points):
        n = int(np.prod(shape))
        if offset + 8 * n > len(raw):
            raise ValueError(f"fusion parameter file truncated at block {name}")
        blocks[name] = np.frombuffer(raw, dtype="<f8", count=n, offset=offset).reshape(
            shape
        )
        offset += 8 * n
    if offset != len(raw):
        raise ValueError("trailing bytes after final parameter block")

    def ln(name):
        return LayerNormParams(scale=blocks[f"{name}.scale"], shift=blocks[f"{name}.shift"])

    def attn(name):
        return DeformAttnParams(
            offset_w=blocks[f"{name}.offset_w"],
            offset_b=blocks[f"{name}.offset_b"],
            weight_w=blocks[f"{name}.weight_w"],
            weight_b=blocks[f"{name}.weight_b"],
            out_w=blocks[f"{name}.out_w"],
            out_b=blocks[f"{name}.out_b"],
        )

    params = FusionParams(
        ln_image=ln("ln_image"),
        ln_radar=ln("ln_radar"),
        ln_weighted_image=ln("ln_weighted_image"),
        ln_weighted_radar=ln("ln_weighted_radar"),
        conf_mlp=ConfidenceMlpParams(
            w1=blocks["conf_mlp.w1"],
            b1=blocks["conf_mlp.b1"],
            w2=blocks["conf_mlp.w2"],
            b2=blocks["conf_mlp.b2"],
        ),
        agg_w=AffineParams(w=blocks["agg_w.w"], b=blocks["agg_w.b"]),
        attn_plain=attn("attn_plain"),
        attn_weighted=attn("attn_weighted"),
        out_conv=ConvParams(kernel=blocks["out_conv.kernel"], bias=blocks["out_conv.bias"]),
    )
    header = {
        "channels": c,
        "height": height,
        "width": width,
        "heads": heads,
        "points": points,
    }
    return params, header
