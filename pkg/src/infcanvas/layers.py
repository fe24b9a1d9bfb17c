"""Forward semantics of the generator layers.

Public operations take and return :class:`~infcanvas.core.Tensor3`. The
network module drives the batched ``(n, rows, cols, channels)`` kernels
underneath so that many independent realizations can share one pass.

Bit-exactness across patch sizes is a hard requirement (sub-patch of a big
forward pass must equal a direct forward pass on the sub-patch), so:

* convolutions are im2col + matrix products issued in fixed 256-row blocks,
  contracting over the flattened ``(kernel_row, kernel_col, channel)`` axis;
  a row's result never depends on how many other rows were in flight;
* per-pixel channel reductions are explicit sequential loops;
* everything else is element-wise.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import Rect, Tensor3
from .errors import ParameterError, ShapeError, UnderflowError
from .latent import LatentField, field_values

GEMM_BLOCK = 256
_TARGET_ROWS = 4096
PIXEL_NORM_EPS = 1e-8
LEAKY_SLOPE = 0.2
ACTIVATIONS = ("relu", "leaky_relu", "sigmoid", "tanh")

# Dyadic weights of the cropped scale-2 bilinear upsampler, indexed by
# (row phase, col phase) and applied to z(h,w), z(h,w+1), z(h+1,w), z(h+1,w+1).
BILINEAR_WEIGHTS = {
    (0, 0): (9 / 16, 3 / 16, 3 / 16, 1 / 16),
    (0, 1): (3 / 16, 9 / 16, 1 / 16, 3 / 16),
    (1, 0): (3 / 16, 1 / 16, 9 / 16, 3 / 16),
    (1, 1): (1 / 16, 3 / 16, 3 / 16, 9 / 16),
}


class LayerKind(str, Enum):
    CONV_NO_PAD = "conv_no_pad"
    CONV_ZERO_PAD = "conv_zero_pad"
    NEAREST_UP = "nearest_up"
    BILINEAR_UP_CROP = "bilinear_up_crop"
    ACTIVATION = "activation"
    PIXEL_NORM = "pixel_norm"
    NOISY_ADA_PIX_NORM = "noisy_ada_pix_norm"
    CONV1X1 = "conv1x1"


_CONV_KINDS = (LayerKind.CONV_NO_PAD, LayerKind.CONV_ZERO_PAD, LayerKind.CONV1X1)


@dataclass(frozen=True)
class LayerSpec:
    """Declarative description of one layer.

    Channel counts are only meaningful for layers that own parameters
    (convolutions and Noisy AdaPixNorm); the rest pass channels through and
    keep ``in_channels = out_channels = 0``.
    """

    kind: LayerKind
    name: str
    in_channels: int = 0
    out_channels: int = 0
    kernel: int = 1
    scale: int = 1
    activation: str = ""
    site_id: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", LayerKind(self.kind))
        if not self.name:
            raise ParameterError("layers need a non-empty name")
        if self.kind in _CONV_KINDS:
            if self.kernel < 1 or self.kernel % 2 == 0:
                raise ParameterError(f"{self.name}: kernel size must be odd and >= 1, got {self.kernel}")
            if self.kind is LayerKind.CONV1X1 and self.kernel != 1:
                raise ParameterError(f"{self.name}: conv1x1 must have kernel 1")
            if self.in_channels < 1 or self.out_channels < 1:
                raise ParameterError(f"{self.name}: conv channel counts must be positive")
        elif self.kind is LayerKind.NEAREST_UP:
            if self.scale < 2:
                raise ParameterError(f"{self.name}: nearest upsampling needs scale >= 2, got {self.scale}")
        elif self.kind is LayerKind.BILINEAR_UP_CROP:
            if self.scale != 2:
                raise ParameterError(f"{self.name}: bilinear crop upsampling is defined for scale 2 only")
        elif self.kind is LayerKind.ACTIVATION:
            if self.activation not in ACTIVATIONS:
                raise ParameterError(f"{self.name}: unknown activation {self.activation!r}")
        elif self.kind is LayerKind.NOISY_ADA_PIX_NORM:
            if self.in_channels < 1 or self.out_channels != self.in_channels:
                raise ParameterError(f"{self.name}: NAPN needs matching positive channel counts")

    # factories -------------------------------------------------------------

    @classmethod
    def conv(cls, name: str, cin: int, cout: int, k: int = 3, zero_pad: bool = False) -> LayerSpec:
        kind = LayerKind.CONV_ZERO_PAD if zero_pad else LayerKind.CONV_NO_PAD
        return cls(kind, name, cin, cout, kernel=k)

    @classmethod
    def conv1x1(cls, name: str, cin: int, cout: int) -> LayerSpec:
        return cls(LayerKind.CONV1X1, name, cin, cout, kernel=1)

    @classmethod
    def nearest(cls, name: str, scale: int = 2) -> LayerSpec:
        return cls(LayerKind.NEAREST_UP, name, scale=scale)

    @classmethod
    def bilinear(cls, name: str) -> LayerSpec:
        return cls(LayerKind.BILINEAR_UP_CROP, name, scale=2)

    @classmethod
    def act(cls, name: str, activation: str) -> LayerSpec:
        return cls(LayerKind.ACTIVATION, name, activation=activation)

    @classmethod
    def pixel_norm(cls, name: str) -> LayerSpec:
        return cls(LayerKind.PIXEL_NORM, name)

    @classmethod
    def napn(cls, name: str, channels: int, site_id: int) -> LayerSpec:
        return cls(LayerKind.NOISY_ADA_PIX_NORM, name, channels, channels, site_id=site_id)

    # derived properties ----------------------------------------------------

    @property
    def consistent(self) -> bool:
        return self.kind is not LayerKind.CONV_ZERO_PAD

    @property
    def is_conv(self) -> bool:
        return self.kind in _CONV_KINDS

    @property
    def is_upsampling(self) -> bool:
        return self.kind in (LayerKind.NEAREST_UP, LayerKind.BILINEAR_UP_CROP)

    @property
    def radius(self) -> int:
        return (self.kernel - 1) // 2 if self.is_conv else 0

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        if self.is_conv:
            return {
                "weight": (self.out_channels, self.in_channels, self.kernel, self.kernel),
                "bias": (self.out_channels,),
            }
        if self.kind is LayerKind.NOISY_ADA_PIX_NORM:
            c = self.in_channels
            return {"beta": (c,), "gamma": (c,), "noise_weight": (c,)}
        return {}


@dataclass(frozen=True)
class AdaPixNormParams:
    beta: np.ndarray
    gamma: np.ndarray
    w: np.ndarray
    site_id: int = 0

    def __post_init__(self) -> None:
        for name in ("beta", "gamma", "w"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.ndim != 1 or not np.isfinite(arr).all():
                raise ShapeError(f"AdaPixNorm {name} must be a finite vector")
            object.__setattr__(self, name, arr)
        if not (len(self.beta) == len(self.gamma) == len(self.w)):
            raise ShapeError("AdaPixNorm vectors must have equal length")


# ---------------------------------------------------------------------------
# batched kernels on (n, rows, cols, channels) arrays


def _gemm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    rows = a.shape[0]
    out = np.empty((rows, b.shape[1]))
    full = rows - rows % GEMM_BLOCK
    for s in range(0, full, GEMM_BLOCK):
        np.matmul(a[s : s + GEMM_BLOCK], b, out=out[s : s + GEMM_BLOCK])
    if full < rows:
        tail = np.zeros((GEMM_BLOCK, a.shape[1]))
        tail[: rows - full] = a[full:]
        out[full:] = (tail @ b)[: rows - full]
    return out


def conv_arrays(x: np.ndarray, weights: np.ndarray, bias: np.ndarray, zero_pad: bool = False) -> np.ndarray:
    cout, cin, k, k2 = weights.shape
    if k != k2 or k % 2 == 0:
        raise ShapeError(f"kernel must be square with odd size, got {weights.shape}")
    if x.shape[3] != cin:
        raise ShapeError(f"input has {x.shape[3]} channels, weights expect {cin}")
    if bias.shape != (cout,):
        raise ShapeError(f"bias shape {bias.shape} does not match {cout} output channels")
    if zero_pad and k > 1:
        r = (k - 1) // 2
        x = np.pad(x, ((0, 0), (r, r), (r, r), (0, 0)))
    n, h, w, _ = x.shape
    if h < k or w < k:
        raise UnderflowError(f"input {h}x{w} is smaller than the {k}x{k} kernel", required=k)
    ho, wo = h - k + 1, w - k + 1
    wmat = np.ascontiguousarray(weights.transpose(2, 3, 1, 0).reshape(k * k * cin, cout))
    out = np.empty((n, ho, wo, cout))
    if k == 1:
        flat = np.ascontiguousarray(x).reshape(-1, cin)
        out[...] = _gemm(flat, wmat).reshape(n, ho, wo, cout)
    else:
        win = sliding_window_view(x, (k, k), axis=(1, 2)).transpose(0, 1, 2, 4, 5, 3)
        per_sample = ho * wo
        if per_sample <= _TARGET_ROWS:
            step = max(1, _TARGET_ROWS // per_sample)
            for s in range(0, n, step):
                cols = win[s : s + step].reshape(-1, k * k * cin)
                out[s : s + step] = _gemm(cols, wmat).reshape(-1, ho, wo, cout)
        else:
            step = max(1, _TARGET_ROWS // wo)
            for i in range(n):
                for r0 in range(0, ho, step):
                    cols = win[i, r0 : r0 + step].reshape(-1, k * k * cin)
                    out[i, r0 : r0 + step] = _gemm(cols, wmat).reshape(-1, wo, cout)
    out += bias
    return out


def nearest_arrays(x: np.ndarray, scale: int) -> np.ndarray:
    return np.repeat(np.repeat(x, scale, axis=1), scale, axis=2)


def bilinear_arrays(x: np.ndarray) -> np.ndarray:
    n, h, w, c = x.shape
    if h < 2 or w < 2:
        raise UnderflowError(f"bilinear crop upsampling needs at least 2x2 input, got {h}x{w}", required=2)
    z00 = x[:, :-1, :-1]
    z01 = x[:, :-1, 1:]
    z10 = x[:, 1:, :-1]
    z11 = x[:, 1:, 1:]
    out = np.empty((n, 2 * h - 2, 2 * w - 2, c))
    for (pr, pc), (a, b, d, e) in BILINEAR_WEIGHTS.items():
        out[:, pr::2, pc::2] = a * z00 + b * z01 + d * z10 + e * z11
    return out


def activation_arrays(x: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "leaky_relu":
        return np.where(x >= 0.0, x, LEAKY_SLOPE * x)
    if kind == "sigmoid":
        with np.errstate(over="ignore"):
            return 1.0 / (1.0 + np.exp(-x))
    if kind == "tanh":
        return np.tanh(x)
    raise ParameterError(f"unknown activation {kind!r}")


def _channel_sum(x: np.ndarray) -> np.ndarray:
    total = x[..., 0].copy()
    for c in range(1, x.shape[-1]):
        total += x[..., c]
    return total


def pixel_norm_arrays(x: np.ndarray) -> np.ndarray:
    channels = x.shape[-1]
    mean = _channel_sum(x) / channels
    centered = x - mean[..., None]
    var = _channel_sum(centered * centered) / channels
    return centered / np.sqrt(var + PIXEL_NORM_EPS)[..., None]


def napn_arrays(
    x: np.ndarray,
    anchor: Rect,
    beta: np.ndarray,
    gamma: np.ndarray,
    noise_weight: np.ndarray,
    seeds: np.ndarray,
    site_id: int,
) -> np.ndarray:
    channels = x.shape[-1]
    for name, vec in (("beta", beta), ("gamma", gamma), ("noise weight", noise_weight)):
        if vec.shape != (channels,):
            raise ShapeError(f"NAPN {name} has length {vec.shape}, input has {channels} channels")
    noise = field_values(seeds, site_id, 1, anchor)
    return beta * pixel_norm_arrays(x + noise * noise_weight) + gamma


# ---------------------------------------------------------------------------
# output anchors


def conv_anchor(anchor: Rect, k: int, zero_pad: bool) -> Rect:
    if zero_pad:
        return anchor
    r = (k - 1) // 2
    return Rect(anchor.row_start + r, anchor.row_end - r, anchor.col_start + r, anchor.col_end - r)


def nearest_anchor(anchor: Rect, scale: int) -> Rect:
    return Rect(scale * anchor.row_start, scale * anchor.row_end, scale * anchor.col_start, scale * anchor.col_end)


def bilinear_anchor(anchor: Rect) -> Rect:
    h, w = anchor.shape
    r0, c0 = 2 * anchor.row_start, 2 * anchor.col_start
    return Rect(r0, r0 + 2 * h - 2, c0, c0 + 2 * w - 2)


def apply_layer(
    layer: LayerSpec,
    params: dict[str, np.ndarray],
    x: np.ndarray,
    anchor: Rect,
    seeds: np.ndarray,
    site_offset: int = 0,
) -> tuple[np.ndarray, Rect]:
    """Run one layer on a batch; ``params`` maps ``weight``/``bias``/... to float64 arrays."""
    kind = layer.kind
    if layer.is_conv:
        zero_pad = kind is LayerKind.CONV_ZERO_PAD
        if not zero_pad and (anchor.height() < layer.kernel or anchor.width() < layer.kernel):
            raise UnderflowError(
                f"layer {layer.name} needs input of at least {layer.kernel}x{layer.kernel}, got {anchor.shape}",
                layer=layer.name,
                required=layer.kernel,
            )
        out = conv_arrays(x, params["weight"], params["bias"], zero_pad=zero_pad)
        return out, conv_anchor(anchor, layer.kernel, zero_pad)
    if kind is LayerKind.NEAREST_UP:
        return nearest_arrays(x, layer.scale), nearest_anchor(anchor, layer.scale)
    if kind is LayerKind.BILINEAR_UP_CROP:
        if anchor.height() < 2 or anchor.width() < 2:
            raise UnderflowError(
                f"layer {layer.name} needs input of at least 2x2, got {anchor.shape}", layer=layer.name, required=2
            )
        return bilinear_arrays(x), bilinear_anchor(anchor)
    if kind is LayerKind.ACTIVATION:
        return activation_arrays(x, layer.activation), anchor
    if kind is LayerKind.PIXEL_NORM:
        return pixel_norm_arrays(x), anchor
    if kind is LayerKind.NOISY_ADA_PIX_NORM:
        out = napn_arrays(
            x, anchor, params["beta"], params["gamma"], params["noise_weight"], seeds, site_offset + layer.site_id
        )
        return out, anchor
    raise ParameterError(f"unsupported layer kind {kind}")


# ---------------------------------------------------------------------------
# single-tensor operations


def _one(t: Tensor3) -> np.ndarray:
    return t.data[None]


def _wrap(anchor: Rect, batch: np.ndarray) -> Tensor3:
    return Tensor3(anchor, batch[0], _owned=True)


def conv_no_pad(t: Tensor3, weights: np.ndarray, bias: np.ndarray) -> Tensor3:
    weights = np.asarray(weights, dtype=np.float64)
    k = weights.shape[-1]
    if t.anchor.height() < k or t.anchor.width() < k:
        raise UnderflowError(f"input {t.anchor.shape} is smaller than the {k}x{k} kernel", required=k)
    out = conv_arrays(_one(t), weights, np.asarray(bias, dtype=np.float64))
    return _wrap(conv_anchor(t.anchor, k, False), out)


def conv_zero_pad(t: Tensor3, weights: np.ndarray, bias: np.ndarray) -> Tensor3:
    weights = np.asarray(weights, dtype=np.float64)
    out = conv_arrays(_one(t), weights, np.asarray(bias, dtype=np.float64), zero_pad=True)
    return _wrap(t.anchor, out)


def nearest_up(t: Tensor3, scale: int = 2) -> Tensor3:
    if scale < 2:
        raise ParameterError(f"nearest upsampling needs scale >= 2, got {scale}")
    return _wrap(nearest_anchor(t.anchor, scale), nearest_arrays(_one(t), scale))


def bilinear_up_crop(t: Tensor3) -> Tensor3:
    out = bilinear_arrays(_one(t))
    return _wrap(bilinear_anchor(t.anchor), out)


def activation(t: Tensor3, kind: str) -> Tensor3:
    return _wrap(t.anchor, activation_arrays(_one(t), kind))


def pixel_norm(t: Tensor3) -> Tensor3:
    return _wrap(t.anchor, pixel_norm_arrays(_one(t)))


def noisy_ada_pix_norm(t: Tensor3, params: AdaPixNormParams, field: LatentField) -> Tensor3:
    if field.channels != 1:
        raise ShapeError(f"NAPN noise field must have one channel, got {field.channels}")
    out = napn_arrays(
        _one(t), t.anchor, params.beta, params.gamma, params.w, np.array([field.seed], dtype=np.uint64), field.site_id
    )
    return _wrap(t.anchor, out)
