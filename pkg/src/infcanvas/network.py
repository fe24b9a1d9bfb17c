"""Reference generators and forward evaluation.

Forward passes work on batches of realizations internally; the single-seed
:func:`forward` is a thin wrapper. Passing ``target`` prunes every layer's
output to the part the target image rect actually needs, which is what makes
statistics over tens of thousands of small probes affordable. Pruning only
ever discards values, so for consistent networks the surviving values are
bitwise the same as without it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .core import Rect, Tensor3
from .errors import ContainmentError, ContractError, ShapeError, SpecError, UnderflowError
from .geometry import backward_rect, forward_rect, frame_offset, min_input_size
from .latent import field_values
from .layers import LayerSpec, apply_layer
from .netspec import MultiScaleSpec, NetworkSpec
from .weights import WeightStore

LATENT_SITE = 0
LEVEL_SITE_STRIDE = 1000

Params = Union[WeightStore, Sequence[dict]]


# ---------------------------------------------------------------------------
# reference architectures


def reference_g0(width: int = 128, feature_width: int = 64, image_channels: int = 3, name: str = "g0") -> NetworkSpec:
    """The six-block extension generator that maps a 6x6 latent to a 64x64 image."""
    layers: list[LayerSpec] = []
    site = 1
    for b in range(1, 5):
        layers += [
            LayerSpec.napn(f"block{b}.napn", width, site),
            LayerSpec.bilinear(f"block{b}.up"),
            LayerSpec.conv(f"block{b}.conv", width, width),
            LayerSpec.act(f"block{b}.relu", "relu"),
        ]
        site += 1
    layers += [
        LayerSpec.napn("block5.napn", width, site),
        LayerSpec.conv("block5.conv", width, feature_width),
        LayerSpec.act("block5.relu", "relu"),
        LayerSpec.napn("block6.napn", feature_width, site + 1),
        LayerSpec.bilinear("block6.up"),
        LayerSpec.conv("block6.conv", feature_width, feature_width),
        LayerSpec.act("block6.relu", "relu"),
    ]
    return NetworkSpec(name, tuple(layers), width, _image_head(feature_width, image_channels))


def reference_upscaler(width: int = 64, image_channels: int = 3, name: str = "g1") -> NetworkSpec:
    """Doubles resolution of a feature tensor: (34, 34) features become a (64, 64) image."""
    layers = (
        LayerSpec.bilinear("up"),
        LayerSpec.conv("conv", width, width),
        LayerSpec.act("relu", "relu"),
    )
    return NetworkSpec(name, layers, width, _image_head(width, image_channels))


def reference_multiscale(levels: int = 2, width: int = 128, feature_width: int = 64) -> MultiScaleSpec:
    ups = tuple(reference_upscaler(feature_width, name=f"g{level}") for level in range(1, levels + 1))
    return MultiScaleSpec(reference_g0(width, feature_width), ups)


def crop_stitch_net(blocks: int, width: int = 8, image_channels: int = 3) -> NetworkSpec:
    """``blocks`` x {nearest x2, zero-padded 3x3 conv, relu}: the padded architecture that needs cropping."""
    if blocks < 1:
        raise SpecError(f"need at least one block, got {blocks}")
    layers: list[LayerSpec] = []
    for b in range(1, blocks + 1):
        layers += [
            LayerSpec.nearest(f"block{b}.up"),
            LayerSpec.conv(f"block{b}.conv", width, width, zero_pad=True),
            LayerSpec.act(f"block{b}.relu", "relu"),
        ]
    return NetworkSpec(f"padded_k{blocks}", tuple(layers), width, _image_head(width, image_channels))


def _image_head(width: int, image_channels: int) -> tuple[LayerSpec, ...]:
    return (LayerSpec.conv1x1("head.conv", width, image_channels), LayerSpec.act("head.tanh", "tanh"))


def single_layer(layer: LayerSpec, channels: int = 1) -> NetworkSpec:
    """Wrap one layer as a head-less network on ``channels`` i.i.d. input channels."""
    return NetworkSpec(layer.name, (layer,), channels)


BUILTIN = {
    "g0": lambda: reference_g0(),
    "upscaler": lambda: reference_upscaler(),
    "bilinear": lambda: single_layer(LayerSpec.bilinear("bilinear")),
    "nearest": lambda: single_layer(LayerSpec.nearest("nearest")),
    "tanh": lambda: single_layer(LayerSpec.act("tanh", "tanh")),
}


def builtin(name: str) -> NetworkSpec:
    try:
        return BUILTIN[name]()
    except KeyError:
        raise SpecError(f"unknown built-in network {name!r}; choose from {sorted(BUILTIN)}") from None


# ---------------------------------------------------------------------------
# forward evaluation


@dataclass(frozen=True)
class ForwardResult:
    """Outputs of one pass, anchored in the image frame.

    ``intermediates`` (when captured) holds ``(layer name, output)`` pairs in
    the network's internal frame, in layer order.
    """

    features: Tensor3
    image: Tensor3 | None
    intermediates: tuple[tuple[str, Tensor3], ...] = ()


def bind(net: NetworkSpec, weights: Params) -> list[dict]:
    if isinstance(weights, WeightStore):
        return weights.layer_params(net)
    params = list(weights)
    if len(params) != len(net.all_layers):
        raise ContractError(f"{net.name} has {len(net.all_layers)} layers, got {len(params)} parameter sets")
    return params


def _crop(x: np.ndarray, anchor: Rect, want: Rect) -> tuple[np.ndarray, Rect]:
    if want == anchor:
        return x, anchor
    if not anchor.contains(want):
        raise ContainmentError(f"needed rect {want} is not inside available {anchor}")
    rows, cols = want.slices(anchor)
    return np.ascontiguousarray(x[:, rows, cols]), want


def run_layers(
    net: NetworkSpec,
    params: list[dict],
    x: np.ndarray,
    anchor: Rect,
    seeds: np.ndarray,
    *,
    level: int = 0,
    target: Rect | None = None,
    capture: bool = False,
):
    """Batched pass in the internal frame.

    Returns ``(features, features_anchor, image, image_anchor, captured)``;
    ``image`` is ``None`` for head-less networks. ``target`` is an
    internal-frame rect of the final output to prune towards.
    """
    layers = net.all_layers
    needs: list[Rect | None] = [None] * len(layers)
    if target is not None:
        if not net.consistent:
            raise ContractError(f"{net.name}: pruned evaluation requires a consistent network")
        r = target
        for i in range(len(layers) - 1, -1, -1):
            needs[i] = r
            r = backward_rect(layers[i], r)
        x, anchor = _crop(x, anchor, r)
    captured = []
    features = None
    offset = level * LEVEL_SITE_STRIDE
    for i, (layer, p) in enumerate(zip(layers, params)):
        x, anchor = apply_layer(layer, p, x, anchor, seeds, offset)
        if needs[i] is not None:
            x, anchor = _crop(x, anchor, needs[i])
        if capture:
            captured.append((layer.name, anchor, x))
        if i == len(net.layers) - 1:
            features = (x, anchor)
    if features is None:
        features = (x, anchor)
    if net.head:
        return features[0], features[1], x, anchor, captured
    return features[0], features[1], None, None, captured


def _to_image_frame(net: NetworkSpec, r: Rect) -> Rect:
    off = frame_offset(net)
    return r.shift(-off, -off)


def _to_internal_frame(net: NetworkSpec, r: Rect) -> Rect:
    off = frame_offset(net)
    return r.shift(off, off)


def forward(
    net: NetworkSpec,
    weights: Params,
    latent: Tensor3,
    seed: int,
    *,
    level: int = 0,
    target: Rect | None = None,
    capture: bool = False,
) -> ForwardResult:
    """Evaluate ``net`` on ``latent`` (its anchor fixes where noise is sampled).

    ``target`` restricts the output to an image-frame rect.
    """
    if latent.channels != net.input_channels:
        raise ShapeError(f"{net.name} takes {net.input_channels} input channels, latent has {latent.channels}")
    try:
        forward_rect(net, latent.anchor)
    except UnderflowError as exc:
        need = min_input_size(net)
        raise UnderflowError(
            f"{net.name}: latent {latent.anchor.height()}x{latent.anchor.width()} is below the minimal input "
            f"{need}x{need} (layer {exc.layer} has nothing to work on)",
            layer=exc.layer,
            required=need,
        ) from None
    params = bind(net, weights)
    seeds = np.array([seed], dtype=np.uint64)
    internal_target = None if target is None else _to_internal_frame(net, target)
    fx, fa, ix, ia, cap = run_layers(
        net, params, latent.data[None], latent.anchor, seeds, level=level, target=internal_target, capture=capture
    )
    features = Tensor3(_to_image_frame(net, fa), fx[0], _owned=True)
    image = None if ix is None else Tensor3(_to_image_frame(net, ia), ix[0], _owned=True)
    inter = tuple((name, Tensor3(a, v[0], _owned=True)) for name, a, v in cap)
    return ForwardResult(features, image, inter)


def latent_for(net: NetworkSpec, seed: int, latent_rect: Rect) -> Tensor3:
    data = field_values([seed], LATENT_SITE, net.input_channels, latent_rect)[0]
    return Tensor3(latent_rect, data, _owned=True)


def generate(
    net: NetworkSpec,
    weights: Params,
    seed: int,
    *,
    latent_rect: Rect | None = None,
    image_rect: Rect | None = None,
) -> ForwardResult:
    """Sample the input latent and run ``net``.

    Give ``latent_rect`` to generate everything it determines, or
    ``image_rect`` to generate exactly that part of the image.
    """
    if (latent_rect is None) == (image_rect is None):
        raise ContractError("give exactly one of latent_rect and image_rect")
    if latent_rect is None:
        latent_rect = backward_rect(net, image_rect)
    return forward(net, weights, latent_for(net, seed, latent_rect), seed, target=image_rect)


def generate_batch(net: NetworkSpec, params: list[dict], seeds: Sequence[int], image_rect: Rect) -> np.ndarray:
    """``(n, rows, cols, channels)`` images on ``image_rect``, one per seed."""
    seeds = np.asarray(seeds, dtype=np.uint64)
    latent_rect = backward_rect(net, image_rect)
    x = field_values(seeds, LATENT_SITE, net.input_channels, latent_rect)
    fx, _, ix, _, _ = run_layers(net, params, x, latent_rect, seeds, target=_to_internal_frame(net, image_rect))
    return fx if ix is None else ix


def forward_multiscale(
    spec: MultiScaleSpec, weights: WeightStore, seed: int, latent_rect: Rect
) -> list[ForwardResult]:
    """Run the extension network, then feed each up-scaler the previous pre-image features."""
    results = []
    x = latent_for(spec.extension, seed, latent_rect)
    for level, net in enumerate(spec.networks):
        res = forward(net, weights, x, seed, level=level)
        results.append(res)
        x = res.features
    return results
