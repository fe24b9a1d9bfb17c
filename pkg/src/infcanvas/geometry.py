"""Index-set algebra for layer stacks.

Layers map rects in their own coordinates: a no-padding conv shrinks by
``(k - 1) / 2`` per side, nearest upsampling multiplies, and the cropped
bilinear upsampler maps input row ``h`` to output row ``2h``. Composed
through a stack this gives an "internal" frame whose image rows start at
``scale * a + offset`` for a latent rect starting at ``a``.

A :class:`NetworkSpec` reports its images in the *image frame*, which is the
internal frame shifted by ``-offset``. In that frame latent ``[a, b)`` lands
on an image rect starting at ``scale * a`` and one latent pixel's model patch
is ``[scale * i, scale * (i + 1))``. Raw layers and layer sequences stay in
the internal frame.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

from .core import Rect
from .errors import InconsistentNetworkError, ParameterError, UnderflowError
from .layers import LayerKind, LayerSpec
from .netspec import MultiScaleSpec, NetworkSpec

Stack = Union[LayerSpec, Sequence[LayerSpec], NetworkSpec, MultiScaleSpec]


def _fwd1(layer: LayerSpec, a: int, b: int) -> tuple[int, int]:
    kind = layer.kind
    if kind is LayerKind.CONV_NO_PAD or kind is LayerKind.CONV1X1:
        if b - a < layer.kernel:
            raise UnderflowError(
                f"layer {layer.name} needs at least {layer.kernel} pixels per side, got {b - a}",
                layer=layer.name,
                required=layer.kernel,
            )
        r = layer.radius
        return a + r, b - r
    if kind is LayerKind.NEAREST_UP:
        return layer.scale * a, layer.scale * b
    if kind is LayerKind.BILINEAR_UP_CROP:
        if b - a < 2:
            raise UnderflowError(
                f"layer {layer.name} needs at least 2 pixels per side, got {b - a}", layer=layer.name, required=2
            )
        return 2 * a, 2 * b - 2
    return a, b


def _bwd1(layer: LayerSpec, p: int, q: int) -> tuple[int, int]:
    kind = layer.kind
    if kind is LayerKind.CONV_NO_PAD or kind is LayerKind.CONV1X1:
        r = layer.radius
        return p - r, q + r
    if kind is LayerKind.NEAREST_UP:
        u = layer.scale
        return p // u, -(-q // u)
    if kind is LayerKind.BILINEAR_UP_CROP:
        return p // 2, (q - 1) // 2 + 2
    return p, q


def _affine(layer: LayerSpec) -> tuple[int, int]:
    """``(scale, shift)`` such that an output rect starts at ``scale * start + shift``."""
    if layer.kind is LayerKind.CONV_NO_PAD or layer.kind is LayerKind.CONV1X1:
        return 1, layer.radius
    if layer.is_upsampling:
        return layer.scale, 0
    return 1, 0


def _layers_of(obj) -> tuple[LayerSpec, ...]:
    if isinstance(obj, LayerSpec):
        return (obj,)
    if isinstance(obj, NetworkSpec):
        return obj.all_layers
    return tuple(obj)


def total_scale(obj: Stack) -> int:
    if isinstance(obj, MultiScaleSpec):
        out = 1
        for net in obj.networks:
            out *= total_scale(net)
        return out
    out = 1
    for layer in _layers_of(obj):
        out *= _affine(layer)[0]
    return out


def frame_offset(net: NetworkSpec) -> int:
    """Internal-frame row (and column) of image-frame coordinate 0."""
    start = 0
    for layer in net.all_layers:
        s, t = _affine(layer)
        start = s * start + t
    return start


def _forward_layers(layers, r: Rect) -> Rect:
    for layer in layers:
        r0, r1 = _fwd1(layer, r.row_start, r.row_end)
        c0, c1 = _fwd1(layer, r.col_start, r.col_end)
        r = Rect(r0, r1, c0, c1)
    return r


def _backward_layers(layers, r: Rect) -> Rect:
    for layer in reversed(layers):
        r0, r1 = _bwd1(layer, r.row_start, r.row_end)
        c0, c1 = _bwd1(layer, r.col_start, r.col_end)
        r = Rect(r0, r1, c0, c1)
    return r


def forward_rect(obj: Stack, input_rect: Rect) -> Rect:
    """Exact output rect produced from ``input_rect``."""
    if isinstance(obj, MultiScaleSpec):
        r = input_rect
        for net in obj.networks:
            r = forward_rect(net, r)
        return r
    out = _forward_layers(_layers_of(obj), input_rect)
    if isinstance(obj, NetworkSpec):
        off = frame_offset(obj)
        out = out.shift(-off, -off)
    return out


def backward_rect(obj: Stack, output_rect: Rect) -> Rect:
    """Minimal input rect whose forward image covers ``output_rect``."""
    if isinstance(obj, MultiScaleSpec):
        r = output_rect
        for net in reversed(obj.networks):
            r = backward_rect(net, r)
        return r
    if isinstance(obj, NetworkSpec):
        off = frame_offset(obj)
        output_rect = output_rect.shift(off, off)
    return _backward_layers(_layers_of(obj), output_rect)


def layer_rects(net: NetworkSpec, latent_rect: Rect) -> list[Rect]:
    """Internal-frame output rect of every layer (body then head)."""
    out = []
    r = latent_rect
    for layer in net.all_layers:
        r = _forward_layers((layer,), r)
        out.append(r)
    return out


def min_input_size(obj: Stack, limit: int = 4096) -> int:
    """Smallest square input side the stack can evaluate."""
    for n in range(1, limit + 1):
        try:
            forward_rect(obj, Rect.square(0, n))
        except UnderflowError:
            continue
        return n
    raise ParameterError(f"no feasible input up to side {limit}")


def min_latent_overlap(K: int) -> int:
    """Latent rows two neighbouring patches must share under {nearest-up, zero-pad conv} x K.

    Consistent interiors of neighbours touch once ``2^K * overlap >= 2 * (2^K - 1)``.
    """
    if K < 1:
        raise ParameterError(f"K must be at least 1, got {K}")
    return 1 if K == 1 else 2


@dataclass(frozen=True)
class GeometrySummary:
    """Index-geometry facts about a consistent generator.

    ``receptive_margin`` is ``(before, after)`` in latent pixels: an image
    pixel inside the model patch of latent pixel ``i`` depends on latent rows
    ``[i - before, i + after]``. ``receptive_field`` is the latent extent
    ``(h, w)`` of a single image pixel, which is also the smallest latent
    patch that can produce a full model patch.
    """

    name: str
    upsample_count: int
    model_patch: tuple[int, int]
    receptive_margin: tuple[int, int]
    receptive_field: tuple[int, int]
    stationarity_period: tuple[int, int]
    min_training_patch: tuple[int, int]
    dependence_range: tuple[int, int]
    min_input: tuple[int, int]
    frame_offset: int


@dataclass(frozen=True)
class MultiScaleSummary:
    per_network: tuple[GeometrySummary, ...]
    composed_period: tuple[int, int]
    composed_upsample_count: int


def summarize(net: NetworkSpec | MultiScaleSpec) -> GeometrySummary | MultiScaleSummary:
    if isinstance(net, MultiScaleSpec):
        parts = tuple(summarize(n) for n in net.networks)
        period = total_scale(net)
        return MultiScaleSummary(parts, (period, period), sum(p.upsample_count for p in parts))
    for layer in net.all_layers:
        if not layer.consistent:
            raise InconsistentNetworkError(
                f"no valid summary: layer {layer.name} ({layer.kind.value}) is not a consistent transform",
                layer=layer.name,
            )
    scale = total_scale(net)
    ups = sum(1 for layer in net.all_layers if layer.is_upsampling)
    before = after = extent = 0
    for phase in range(scale):
        support = backward_rect(net, Rect.square(phase, phase + 1))
        home = phase // scale
        before = max(before, home - support.row_start)
        after = max(after, support.row_end - 1 - home)
        extent = max(extent, support.height())
    n_min = min_input_size(net)
    return GeometrySummary(
        name=net.name,
        upsample_count=ups,
        model_patch=(scale, scale),
        receptive_margin=(before, after),
        receptive_field=(extent, extent),
        stationarity_period=(scale, scale),
        min_training_patch=(2 * scale, 2 * scale),
        dependence_range=(scale * extent, scale * extent),
        min_input=(n_min, n_min),
        frame_offset=frame_offset(net),
    )
