"""Parameter storage, reproducible random initialization and the ``.igw`` file format.

File layout (all integers little-endian)::

    b"IGW1"                      4-byte magic
    manifest_length              uint64
    manifest                     UTF-8 JSON, ``manifest_length`` bytes
    blob                         float32 little-endian, row-major

The manifest records ``blob_bytes``, the CRC-32 of the blob and, per tensor,
its name, shape and byte offset into the blob. docs/FORMATS.md has the full
description.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import ChecksumError, ManifestError, UnknownTensorError
from .latent import gaussian
from .layers import LayerSpec
from .netspec import MultiScaleSpec, NetworkSpec

MAGIC = b"IGW1"
FORMAT_VERSION = 1
# Weight draws use hash sites far away from any noise-injection site.
WEIGHT_SITE_BASE = 1 << 40


def tensor_name(net: NetworkSpec, layer: LayerSpec, param: str) -> str:
    return f"{net.name}/{layer.name}.{param}"


def expected_shapes(spec: NetworkSpec | MultiScaleSpec) -> dict[str, tuple[int, ...]]:
    nets = spec.networks if isinstance(spec, MultiScaleSpec) else (spec,)
    out: dict[str, tuple[int, ...]] = {}
    for net in nets:
        for layer in net.all_layers:
            for param, shape in layer.param_shapes().items():
                out[tensor_name(net, layer, param)] = shape
    return out


class WeightStore:
    """Immutable mapping from tensor name to a float32 array."""

    __slots__ = ("_tensors",)

    def __init__(self, tensors: Mapping[str, np.ndarray]):
        frozen = {}
        for name, arr in tensors.items():
            a = np.array(arr, dtype=np.float32, order="C")
            a.flags.writeable = False
            frozen[name] = a
        self._tensors = dict(sorted(frozen.items()))

    def names(self) -> list[str]:
        return list(self._tensors)

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self._tensors[name]
        except KeyError:
            raise UnknownTensorError(f"no tensor named {name!r} in weight store") from None

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)

    def __eq__(self, other) -> bool:
        if not isinstance(other, WeightStore) or self.names() != other.names():
            return False
        return all(
            a.shape == b.shape and a.tobytes() == b.tobytes()
            for a, b in zip(self._tensors.values(), other._tensors.values())
        )

    def items(self) -> Iterable[tuple[str, np.ndarray]]:
        return self._tensors.items()

    def layer_params(self, net: NetworkSpec) -> list[dict[str, np.ndarray]]:
        """Float64 parameter dicts in layer order, after checking the store matches ``net``."""
        check_compatible(self, net)
        return [
            {p: self._tensors[tensor_name(net, layer, p)].astype(np.float64) for p in layer.param_shapes()}
            for layer in net.all_layers
        ]


def check_compatible(ws: WeightStore, spec: NetworkSpec | MultiScaleSpec, *, exact: bool = False) -> None:
    """Raise if a tensor is missing or mis-shaped; with ``exact`` also reject extras."""
    want = expected_shapes(spec)
    for name, shape in want.items():
        if name not in ws:
            raise ManifestError(f"weight store lacks tensor {name!r}")
        if ws[name].shape != shape:
            raise ManifestError(f"tensor {name!r} has shape {ws[name].shape}, expected {shape}")
    if exact:
        extra = sorted(set(ws.names()) - set(want))
        if extra:
            raise UnknownTensorError(f"weight store has tensors the network does not use: {extra}")


def init_random(spec: NetworkSpec | MultiScaleSpec, seed: int) -> WeightStore:
    """He-normal conv weights, zero biases, NAPN scales near identity.

    Every value comes from the coordinate hash at site ``WEIGHT_SITE_BASE + t``
    (``t`` = tensor position in sorted-name order) and row = flat element index.
    """
    shapes = expected_shapes(spec)
    tensors = {}
    for index, name in enumerate(sorted(shapes)):
        shape = shapes[name]
        size = int(np.prod(shape))
        param = name.rsplit(".", 1)[1]
        if param == "bias":
            tensors[name] = np.zeros(shape)
            continue
        g = gaussian(np.uint64(seed), WEIGHT_SITE_BASE + index, np.arange(size, dtype=np.int64), 0, 0).reshape(shape)
        if param == "weight":
            fan_in = shape[1] * shape[2] * shape[3]
            tensors[name] = g * np.sqrt(2.0 / fan_in)
        elif param == "beta":
            tensors[name] = 1.0 + 0.1 * g
        elif param == "gamma":
            tensors[name] = 0.1 * g
        else:
            tensors[name] = g
    return WeightStore(tensors)


def save(ws: WeightStore, path: str | Path) -> None:
    entries = []
    chunks = []
    offset = 0
    for name, arr in ws.items():
        raw = arr.astype("<f4").tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    blob = b"".join(chunks)
    manifest = {
        "format": "igw",
        "version": FORMAT_VERSION,
        "dtype": "float32-le",
        "blob_bytes": len(blob),
        "crc32": zlib.crc32(blob),
        "tensors": entries,
    }
    head = json.dumps(manifest, indent=1, sort_keys=True).encode("utf-8")
    Path(path).write_bytes(MAGIC + struct.pack("<Q", len(head)) + head + blob)


def load(path: str | Path, spec: NetworkSpec | MultiScaleSpec | None = None) -> WeightStore:
    """Read and verify an ``.igw`` file; with ``spec`` also require an exact tensor match."""
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != MAGIC:
        raise ManifestError(f"{path}: not an .igw file")
    (mlen,) = struct.unpack("<Q", data[4:12])
    if 12 + mlen > len(data):
        raise ManifestError(f"{path}: manifest length {mlen} runs past end of file")
    try:
        manifest = json.loads(data[12 : 12 + mlen].decode("utf-8"))
        blob_bytes = int(manifest["blob_bytes"])
        crc = int(manifest["crc32"])
        entries = manifest["tensors"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"{path}: unreadable manifest ({exc})") from None
    if manifest.get("format") != "igw" or manifest.get("dtype") != "float32-le":
        raise ManifestError(f"{path}: unsupported format or dtype")
    blob = data[12 + mlen :]
    if len(blob) != blob_bytes:
        raise ManifestError(f"{path}: blob has {len(blob)} bytes, manifest says {blob_bytes}")
    if zlib.crc32(blob) != crc:
        raise ChecksumError(f"{path}: CRC-32 mismatch")
    tensors = {}
    end = 0
    for entry in entries:
        try:
            name, shape, offset = entry["name"], tuple(int(s) for s in entry["shape"]), int(entry["offset"])
        except (KeyError, TypeError, ValueError):
            raise ManifestError(f"{path}: malformed tensor entry {entry!r}") from None
        nbytes = 4 * int(np.prod(shape, dtype=np.int64))
        if offset < 0 or offset + nbytes > len(blob):
            raise ManifestError(f"{path}: tensor {name!r} extends past the blob")
        if name in tensors:
            raise ManifestError(f"{path}: duplicate tensor {name!r}")
        tensors[name] = np.frombuffer(blob, dtype="<f4", count=nbytes // 4, offset=offset).reshape(shape)
        end = max(end, offset + nbytes)
    if end != len(blob):
        raise ManifestError(f"{path}: tensor extents cover {end} bytes of a {len(blob)}-byte blob")
    ws = WeightStore(tensors)
    if spec is not None:
        check_compatible(ws, spec, exact=True)
    return ws

