"""Exact dependency tracing through a layer stack.

Each pixel carries two facts: whether any padding zero reached it and which
latent pixels it depends on. Latent dependencies are multi-word bitmasks
over the input rect; inputs above ``MAX_SUPPORT_PIXELS`` keep only the
padding map. The propagation rules follow each layer's definition directly
and share no code with :mod:`infcanvas.geometry`, which makes the tracer an
independent check on ``backward_rect``.

Every layer treats channels uniformly in space, so one map per pixel covers
all channels.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import Rect
from ..errors import ParameterError, UnderflowError
from ..geometry import backward_rect, frame_offset
from ..layers import BILINEAR_WEIGHTS, LayerKind, LayerSpec, bilinear_anchor, conv_anchor, nearest_anchor
from ..netspec import NetworkSpec
from ..network import crop_stitch_net

MAX_SUPPORT_PIXELS = 4096


@dataclass(frozen=True)
class TaintTensor:
    """Per-pixel padding flags and latent supports on ``anchor``."""

    anchor: Rect
    channels: int
    latent_rect: Rect
    padding: np.ndarray
    support_bits: np.ndarray | None

    def tainted(self, i: int, j: int) -> bool:
        return bool(self.padding[i - self.anchor.row_start, j - self.anchor.col_start])

    def _decode(self, words: np.ndarray) -> frozenset[tuple[int, int]]:
        flags = np.unpackbits(words.astype("<u8").view(np.uint8), bitorder="little")
        w = self.latent_rect.width()
        r0, c0 = self.latent_rect.row_start, self.latent_rect.col_start
        return frozenset((r0 + int(k) // w, c0 + int(k) % w) for k in np.flatnonzero(flags))

    def support(self, i: int, j: int) -> frozenset[tuple[int, int]]:
        if self.support_bits is None:
            raise ParameterError("latent supports were not tracked for this input size")
        return self._decode(self.support_bits[i - self.anchor.row_start, j - self.anchor.col_start])

    def support_of(self, r: Rect) -> frozenset[tuple[int, int]]:
        """Union of latent supports over the pixels of ``r``."""
        if self.support_bits is None:
            raise ParameterError("latent supports were not tracked for this input size")
        rows, cols = r.slices(self.anchor)
        return self._decode(np.bitwise_or.reduce(self.support_bits[rows, cols], axis=(0, 1)))

    def clean_rect(self) -> Rect | None:
        """Bounding box of the untainted pixels (``None`` if every pixel is tainted)."""
        rows = np.flatnonzero(~self.padding.all(axis=1))
        cols = np.flatnonzero(~self.padding.all(axis=0))
        if rows.size == 0:
            return None
        a = self.anchor
        return Rect(a.row_start + rows[0], a.row_start + rows[-1] + 1, a.col_start + cols[0], a.col_start + cols[-1] + 1)

    def border_width(self) -> int:
        """Width of the tainted frame, requiring it to be a uniform ring around a clean rect."""
        clean = self.clean_rect()
        a = self.anchor
        if clean is None:
            raise ParameterError("every pixel depends on padding")
        rows, cols = clean.slices(a)
        if self.padding[rows, cols].any():
            raise ParameterError("tainted pixels inside the clean bounding box")
        sides = {
            clean.row_start - a.row_start,
            a.row_end - clean.row_end,
            clean.col_start - a.col_start,
            a.col_end - clean.col_end,
        }
        if len(sides) != 1:
            raise ParameterError(f"tainted frame is not uniform: side widths {sorted(sides)}")
        return sides.pop()


def _window_or(pad: np.ndarray, bits: np.ndarray | None, k: int):
    h, w = pad.shape
    ho, wo = h - k + 1, w - k + 1
    out_pad = np.zeros((ho, wo), dtype=bool)
    out_bits = None if bits is None else np.zeros((ho, wo, bits.shape[2]), dtype=np.uint64)
    for dr in range(k):
        for dc in range(k):
            out_pad |= pad[dr : dr + ho, dc : dc + wo]
            if bits is not None:
                out_bits |= bits[dr : dr + ho, dc : dc + wo]
    return out_pad, out_bits


def _step(layer: LayerSpec, pad, bits, anchor: Rect):
    kind = layer.kind
    if kind in (LayerKind.CONV_NO_PAD, LayerKind.CONV1X1):
        k = layer.kernel
        if pad.shape[0] < k or pad.shape[1] < k:
            raise UnderflowError(f"layer {layer.name} needs {k}x{k} input, got {pad.shape}", layer=layer.name, required=k)
        pad, bits = _window_or(pad, bits, k)
        return pad, bits, conv_anchor(anchor, k, False)
    if kind is LayerKind.CONV_ZERO_PAD:
        r = layer.radius
        pad = np.pad(pad, r, constant_values=True)
        if bits is not None:
            bits = np.pad(bits, ((r, r), (r, r), (0, 0)), constant_values=0)
        pad, bits = _window_or(pad, bits, layer.kernel)
        return pad, bits, conv_anchor(anchor, layer.kernel, True)
    if kind is LayerKind.NEAREST_UP:
        u = layer.scale
        pad = np.repeat(np.repeat(pad, u, 0), u, 1)
        if bits is not None:
            bits = np.repeat(np.repeat(bits, u, 0), u, 1)
        return pad, bits, nearest_anchor(anchor, u)
    if kind is LayerKind.BILINEAR_UP_CROP:
        h, w = pad.shape
        if h < 2 or w < 2:
            raise UnderflowError(f"layer {layer.name} needs 2x2 input, got {pad.shape}", layer=layer.name, required=2)
        out_pad = np.zeros((2 * h - 2, 2 * w - 2), dtype=bool)
        out_bits = None if bits is None else np.zeros(out_pad.shape + bits.shape[2:], dtype=np.uint64)
        taps = ((0, 0), (0, 1), (1, 0), (1, 1))
        for (pr, pc), weights in BILINEAR_WEIGHTS.items():
            for (dr, dc), wgt in zip(taps, weights):
                if wgt == 0:
                    continue
                out_pad[pr::2, pc::2] |= pad[dr : dr + h - 1, dc : dc + w - 1]
                if bits is not None:
                    out_bits[pr::2, pc::2] |= bits[dr : dr + h - 1, dc : dc + w - 1]
        return out_pad, out_bits, bilinear_anchor(anchor)
    return pad, bits, anchor


def trace_taint(net: NetworkSpec | Sequence[LayerSpec], latent_rect: Rect) -> TaintTensor:
    """Trace padding influence and latent supports from ``latent_rect`` to the output.

    A :class:`NetworkSpec` reports the output in its image frame; a bare layer
    sequence stays in its own frame.
    """
    if isinstance(net, NetworkSpec):
        layers = net.all_layers
        channels = net.output_channels
        shift = frame_offset(net)
    else:
        layers = tuple(net)
        channels = 0
        shift = 0
    h, w = latent_rect.shape
    pad = np.zeros((h, w), dtype=bool)
    bits = None
    if h * w <= MAX_SUPPORT_PIXELS:
        k = np.arange(h * w)
        bits = np.zeros((h * w, (h * w + 63) // 64), dtype=np.uint64)
        bits[k, k // 64] = np.uint64(1) << (k % 64).astype(np.uint64)
        bits = bits.reshape(h, w, -1)
    anchor = latent_rect
    for layer in layers:
        pad, bits, anchor = _step(layer, pad, bits, anchor)
    return TaintTensor(anchor.shift(-shift, -shift), channels, latent_rect, pad, bits)


def verify_backward_rect(net: NetworkSpec | Sequence[LayerSpec], output_rect: Rect) -> bool:
    """True iff the traced latent support of ``output_rect`` is exactly ``backward_rect``.

    The trace starts one pixel wider than the claimed rect on every side, so
    a support that spills outside the claim would be seen.
    """
    claimed = backward_rect(net if isinstance(net, NetworkSpec) else tuple(net), output_rect)
    trace = trace_taint(net, claimed.expand(1))
    if not trace.anchor.contains(output_rect):
        return False
    support = trace.support_of(output_rect)
    expected = {(i, j) for i in range(claimed.row_start, claimed.row_end) for j in range(claimed.col_start, claimed.col_end)}
    return support == expected


@dataclass(frozen=True)
class OverlapWitness:
    """Clean interiors of two side-by-side windows sharing ``overlap`` latent columns.

    ``gap`` is the number of image columns between them; ``<= 0`` means the
    interiors touch or overlap.
    """

    blocks: int
    latent_side: int
    overlap: int
    left_clean: Rect
    right_clean: Rect
    gap: int

    @property
    def adjacent(self) -> bool:
        return self.gap <= 0


def overlap_witness(blocks: int, latent_side: int, overlap: int) -> OverlapWitness:
    """Trace two windows of the padded ``{nearest x2, conv3}`` stack side by side."""
    if not 0 <= overlap < latent_side:
        raise ParameterError(f"overlap must lie in [0, {latent_side}), got {overlap}")
    net = crop_stitch_net(blocks, width=1)
    left = trace_taint(net, Rect(0, latent_side, 0, latent_side))
    start = latent_side - overlap
    right = trace_taint(net, Rect(0, latent_side, start, start + latent_side))
    lc, rc = left.clean_rect(), right.clean_rect()
    if lc is None or rc is None:
        raise ParameterError("a window has no clean interior")
    return OverlapWitness(blocks, latent_side, overlap, lc, rc, rc.col_start - lc.col_end)
