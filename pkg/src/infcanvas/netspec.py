"""Generator descriptions and their JSON spec-file form."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .errors import SpecError
from .layers import LayerKind, LayerSpec


@dataclass(frozen=True)
class NetworkSpec:
    """An ordered layer stack plus an optional image head.

    ``layers`` produce the pre-image feature tensor; ``head`` (typically a
    1x1 convolution followed by tanh) turns features into an image.
    """

    name: str
    layers: tuple[LayerSpec, ...]
    input_channels: int
    head: tuple[LayerSpec, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "head", tuple(self.head))
        if self.input_channels < 1:
            raise SpecError(f"{self.name}: input_channels must be positive")
        names = [layer.name for layer in self.all_layers]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise SpecError(f"{self.name}: duplicate layer names {dupes}")
        sites = [layer.site_id for layer in self.all_layers if layer.kind is LayerKind.NOISY_ADA_PIX_NORM]
        if len(set(sites)) != len(sites):
            raise SpecError(f"{self.name}: Noisy AdaPixNorm site ids must be unique, got {sites}")
        if any(s <= 0 for s in sites):
            raise SpecError(f"{self.name}: Noisy AdaPixNorm site ids must be positive (0 is the input latent)")
        for layer in self.head:
            if layer.kind not in (LayerKind.CONV1X1, LayerKind.ACTIVATION):
                raise SpecError(f"{self.name}: head layer {layer.name} must be a 1x1 conv or an activation")
        channels = self.input_channels
        for layer in self.all_layers:
            if layer.is_conv or layer.kind is LayerKind.NOISY_ADA_PIX_NORM:
                if layer.in_channels != channels:
                    raise SpecError(
                        f"{self.name}: layer {layer.name} expects {layer.in_channels} channels, receives {channels}"
                    )
                channels = layer.out_channels

    @property
    def all_layers(self) -> tuple[LayerSpec, ...]:
        return self.layers + self.head

    @property
    def feature_channels(self) -> int:
        return _channels_after(self.input_channels, self.layers)

    @property
    def output_channels(self) -> int:
        return _channels_after(self.input_channels, self.all_layers)

    @property
    def consistent(self) -> bool:
        return all(layer.consistent for layer in self.all_layers)

    def layer(self, name: str) -> LayerSpec:
        for layer in self.all_layers:
            if layer.name == name:
                return layer
        raise KeyError(name)

    def replace_layer(self, name: str, new: LayerSpec) -> NetworkSpec:
        layers = tuple(new if layer.name == name else layer for layer in self.layers)
        head = tuple(new if layer.name == name else layer for layer in self.head)
        if layers == self.layers and head == self.head:
            raise KeyError(name)
        return NetworkSpec(self.name, layers, self.input_channels, head)


def _channels_after(channels: int, layers) -> int:
    for layer in layers:
        if layer.is_conv or layer.kind is LayerKind.NOISY_ADA_PIX_NORM:
            channels = layer.out_channels
    return channels


@dataclass(frozen=True)
class MultiScaleSpec:
    """Extension network followed by up-scaling networks fed with pre-image features."""

    extension: NetworkSpec
    upscalers: tuple[NetworkSpec, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "upscalers", tuple(self.upscalers))
        prev = self.extension
        for net in self.upscalers:
            if net.input_channels != prev.feature_channels:
                raise SpecError(
                    f"upscaler {net.name} takes {net.input_channels} channels but {prev.name} "
                    f"produces {prev.feature_channels} feature channels"
                )
            prev = net

    @property
    def networks(self) -> tuple[NetworkSpec, ...]:
        return (self.extension,) + self.upscalers


# ---------------------------------------------------------------------------
# spec files

_LAYER_FIELDS = ("in_channels", "out_channels", "kernel", "scale", "activation", "site_id")


def layer_to_dict(layer: LayerSpec) -> dict[str, Any]:
    out: dict[str, Any] = {"name": layer.name, "kind": layer.kind.value}
    defaults = LayerSpec(LayerKind.PIXEL_NORM, "_")
    for key in _LAYER_FIELDS:
        value = getattr(layer, key)
        if value != getattr(defaults, key):
            out[key] = value
    return out


def layer_from_dict(d: dict[str, Any]) -> LayerSpec:
    unknown = set(d) - {"name", "kind", *_LAYER_FIELDS}
    if unknown:
        raise SpecError(f"unknown layer fields {sorted(unknown)} in {d.get('name', '?')}")
    try:
        return LayerSpec(LayerKind(d["kind"]), d["name"], **{k: d[k] for k in _LAYER_FIELDS if k in d})
    except KeyError as exc:
        raise SpecError(f"layer entry missing field {exc}") from None
    except ValueError as exc:
        raise SpecError(str(exc)) from None


def spec_to_dict(net: NetworkSpec) -> dict[str, Any]:
    return {
        "name": net.name,
        "input_channels": net.input_channels,
        "layers": [layer_to_dict(layer) for layer in net.layers],
        "head": [layer_to_dict(layer) for layer in net.head],
    }


def spec_from_dict(d: dict[str, Any]) -> NetworkSpec:
    try:
        return NetworkSpec(
            name=d["name"],
            layers=tuple(layer_from_dict(x) for x in d["layers"]),
            input_channels=int(d["input_channels"]),
            head=tuple(layer_from_dict(x) for x in d.get("head", [])),
        )
    except KeyError as exc:
        raise SpecError(f"network spec missing field {exc}") from None


def save_spec(net: NetworkSpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(spec_to_dict(net), indent=2) + "\n")


def load_spec(path: str | Path) -> NetworkSpec:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SpecError(f"cannot read network spec {path}: {exc}") from None
    return spec_from_dict(doc)
