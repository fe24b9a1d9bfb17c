"""Tiled generation of large images.

Consistent mode partitions the target into disjoint tiles and generates each
one directly from the latent rect it needs. Neighbouring latent rects overlap
by the receptive margin, nothing is cropped, and the result does not depend
on the order or the threads the tiles were generated with.

Crop mode is for the zero-padded ``{nearest x2, conv3, relu} x K`` stack.
Each tile reads an ``N x N`` latent window, the outer ``2^K - 1`` pixels of its
output are polluted by padding and thrown away, and neighbouring windows
overlap enough for the clean interiors to meet. The report counts what was
generated and what was kept.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

from .core import Rect, Tensor3
from .errors import ContractError, PlanningError
from .geometry import backward_rect, forward_rect, min_input_size, min_latent_overlap
from .layers import LayerKind
from .netspec import NetworkSpec, spec_to_dict
from .network import Params, bind, forward, generate, latent_for

CONSISTENT = "consistent"
CROP = "inconsistent_crop"
MODES = (CONSISTENT, CROP)


def default_threads() -> int:
    env = os.environ.get("INFCANVAS_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            n = 0
        if n >= 1:
            return n
    return os.cpu_count() or 1


def fingerprint(net: NetworkSpec) -> str:
    doc = json.dumps(spec_to_dict(net), sort_keys=True).encode()
    return hashlib.sha256(doc).hexdigest()[:16]


@dataclass(frozen=True)
class Tile:
    """One unit of work.

    ``image_rect`` is what the tile's forward pass produces; ``emit_rect`` is
    the part written to the output (equal to ``image_rect`` in consistent mode).
    ``grid`` is the tile's (row, col) position in the plan.
    """

    index: int
    grid: tuple[int, int]
    image_rect: Rect
    latent_rect: Rect
    emit_rect: Rect


@dataclass(frozen=True)
class TilingPlan:
    target: Rect
    tiles: tuple[Tile, ...]
    mode: str
    grid_shape: tuple[int, int]
    net_fingerprint: str
    tile_side: int
    border: int = 0

    def is_interior(self, tile: Tile) -> bool:
        r, c = tile.grid
        rows, cols = self.grid_shape
        return 0 < r < rows - 1 and 0 < c < cols - 1

    def band_rows(self) -> list[tuple[int, int]]:
        """Row span of each tile row, top to bottom."""
        spans = {}
        for t in self.tiles:
            spans[t.grid[0]] = (t.emit_rect.row_start, t.emit_rect.row_end)
        return [spans[r] for r in sorted(spans)]


@dataclass
class StitchReport:
    """Pixel accounting for one tiled run.

    ``seams_checked`` counts regenerated seam strips in consistent mode and
    doubly generated clean pixels in crop mode.
    """

    mode: str
    tiles_generated: int = 0
    pixels_emitted: int = 0
    pixels_discarded: int = 0
    discard_fraction: float = 0.0
    seam_max_abs_diff: float = 0.0
    seams_checked: int = 0
    interior_tiles: int = 0
    interior_pixels_generated: int = 0
    interior_pixels_discarded: int = 0
    interior_discard_fraction: float | None = None
    interior_discard_fraction_exact: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# planning


def _spans(start: int, end: int, side: int) -> list[tuple[int, int]]:
    return [(a, min(a + side, end)) for a in range(start, end, side)]


def plan(net: NetworkSpec, target: Rect, tile_budget: int, mode: str = CONSISTENT) -> TilingPlan:
    """Cut ``target`` into tiles at most ``tile_budget`` pixels per side."""
    if mode == CONSISTENT:
        return _plan_consistent(net, target, tile_budget)
    if mode == CROP:
        return _plan_crop(net, target, tile_budget)
    raise PlanningError(f"unknown tiling mode {mode!r}; choose from {MODES}")


def _plan_consistent(net: NetworkSpec, target: Rect, budget: int) -> TilingPlan:
    bad = [layer.name for layer in net.all_layers if not layer.consistent]
    if bad:
        raise PlanningError(f"consistent tiling needs a consistent network; {bad[0]} uses zero padding")
    smallest = forward_rect(net, Rect.square(0, min_input_size(net))).height()
    if budget < smallest:
        raise PlanningError(f"tile budget {budget} is below the network's minimal output side {smallest}")
    tiles = []
    row_spans = _spans(target.row_start, target.row_end, budget)
    col_spans = _spans(target.col_start, target.col_end, budget)
    for gr, (r0, r1) in enumerate(row_spans):
        for gc, (c0, c1) in enumerate(col_spans):
            rect = Rect(r0, r1, c0, c1)
            tiles.append(Tile(len(tiles), (gr, gc), rect, backward_rect(net, rect), rect))
    return TilingPlan(target, tuple(tiles), CONSISTENT, (len(row_spans), len(col_spans)), fingerprint(net), budget)


def crop_geometry(net: NetworkSpec) -> tuple[int, int]:
    """``(K, border)`` for a stack of K {nearest x2, zero-padded 3x3 conv, pointwise} blocks."""
    ups = 0
    for layer in net.all_layers:
        if layer.kind is LayerKind.NEAREST_UP:
            if layer.scale != 2:
                raise PlanningError(f"crop tiling expects scale-2 nearest upsampling, {layer.name} has {layer.scale}")
            ups += 1
        elif layer.kind is LayerKind.CONV_ZERO_PAD:
            if layer.kernel != 3:
                raise PlanningError(f"crop tiling expects 3x3 padded convolutions, {layer.name} has {layer.kernel}")
        elif layer.kind in (LayerKind.CONV_NO_PAD, LayerKind.BILINEAR_UP_CROP) or (
            layer.kind is LayerKind.CONV1X1 and layer not in net.head
        ):
            raise PlanningError(f"crop tiling does not support layer {layer.name} ({layer.kind.value})")
    if ups == 0:
        raise PlanningError("crop tiling needs at least one upsampling block")
    return ups, 2**ups - 1


def _crop_axis(start: int, end: int, n: int, scale: int, border: int, overlap: int):
    """Per-axis tiles: (latent start, generated span, emitted span)."""
    a = (start - border) // scale
    out = []
    prev_clean_end = None
    while True:
        gen = (scale * a, scale * (a + n))
        clean = (gen[0] + border, gen[1] - border)
        lo = max(clean[0], start) if prev_clean_end is None else max(clean[0], prev_clean_end, start)
        hi = min(clean[1], end)
        if lo >= hi:
            raise PlanningError("latent windows leave a gap between clean interiors")
        out.append((a, gen, (lo, hi)))
        if hi >= end:
            return out
        prev_clean_end = clean[1]
        a += n - overlap


def _plan_crop(net: NetworkSpec, target: Rect, budget: int) -> TilingPlan:
    K, border = crop_geometry(net)
    scale = 2**K
    n = budget // scale
    overlap = min_latent_overlap(K)
    if n <= overlap or scale * n - 2 * border <= 0:
        raise PlanningError(f"tile budget {budget} leaves no clean interior for K={K}")
    rows = _crop_axis(target.row_start, target.row_end, n, scale, border, overlap)
    cols = _crop_axis(target.col_start, target.col_end, n, scale, border, overlap)
    tiles = []
    for gr, (ar, gen_r, emit_r) in enumerate(rows):
        for gc, (ac, gen_c, emit_c) in enumerate(cols):
            tiles.append(
                Tile(
                    len(tiles),
                    (gr, gc),
                    Rect(gen_r[0], gen_r[1], gen_c[0], gen_c[1]),
                    Rect(ar, ar + n, ac, ac + n),
                    Rect(emit_r[0], emit_r[1], emit_c[0], emit_c[1]),
                )
            )
    return TilingPlan(target, tuple(tiles), CROP, (len(rows), len(cols)), fingerprint(net), scale * n, border)


# ---------------------------------------------------------------------------
# generation


@dataclass
class TiledResult:
    image: Tensor3 | None
    report: StitchReport


def _check(net: NetworkSpec, tiling: TilingPlan, order: Sequence[int] | None) -> list[int]:
    if tiling.net_fingerprint != fingerprint(net):
        raise ContractError(f"plan was made for a different network than {net.name}")
    count = len(tiling.tiles)
    if order is None:
        return list(range(count))
    order = [int(i) for i in order]
    if sorted(order) != list(range(count)):
        raise ContractError(f"order must be a permutation of 0..{count - 1}")
    return order


def _make_tile(net: NetworkSpec, params: list[dict], seed: int, tile: Tile, mode: str) -> np.ndarray:
    if mode == CONSISTENT:
        res = generate(net, params, seed, image_rect=tile.image_rect)
    else:
        res = forward(net, params, latent_for(net, seed, tile.latent_rect), seed)
    out = res.image if res.image is not None else res.features
    if out.anchor != tile.image_rect:
        raise ContractError(f"tile {tile.index} produced {out.anchor}, plan expected {tile.image_rect}")
    return out.data


def _run_tiles(net, params, seed, tiles: Sequence[Tile], mode: str, threads: int) -> Iterator[tuple[Tile, np.ndarray]]:
    if threads <= 1 or len(tiles) <= 1:
        for t in tiles:
            yield t, _make_tile(net, params, seed, t, mode)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        yield from zip(tiles, pool.map(lambda t: _make_tile(net, params, seed, t, mode), tiles))


class _Accounting:
    def __init__(self, tiling: TilingPlan):
        self.tiling = tiling
        self.report = StitchReport(tiling.mode)

    def add(self, tile: Tile, generated: np.ndarray) -> None:
        gen = generated.shape[0] * generated.shape[1]
        emitted = tile.emit_rect.area()
        rep = self.report
        rep.tiles_generated += 1
        rep.pixels_emitted += emitted
        rep.pixels_discarded += gen - emitted
        if self.tiling.is_interior(tile):
            rep.interior_tiles += 1
            rep.interior_pixels_generated += gen
            rep.interior_pixels_discarded += gen - emitted

    def finish(self) -> StitchReport:
        rep = self.report
        total = rep.pixels_emitted + rep.pixels_discarded
        rep.discard_fraction = rep.pixels_discarded / total if total else 0.0
        if rep.interior_tiles:
            exact = Fraction(rep.interior_pixels_discarded, rep.interior_pixels_generated)
            rep.interior_discard_fraction = float(exact)
            rep.interior_discard_fraction_exact = str(exact)
        return rep


def generate_tiled(
    net: NetworkSpec,
    weights: Params,
    tiling: TilingPlan,
    seed: int,
    order: Sequence[int] | None = None,
    *,
    threads: int | None = None,
    verify_seams: bool = False,
) -> TiledResult:
    """Generate every tile in ``order`` and stitch them into one in-memory image."""
    order = _check(net, tiling, order)
    params = bind(net, weights)
    threads = default_threads() if threads is None else threads
    channels = net.output_channels
    target = tiling.target
    canvas = np.zeros(target.shape + (channels,))
    acct = _Accounting(tiling)
    clean_views = []
    for tile, data in _run_tiles(net, params, seed, [tiling.tiles[i] for i in order], tiling.mode, threads):
        rows, cols = tile.emit_rect.slices(tile.image_rect)
        dst_r, dst_c = tile.emit_rect.slices(target)
        canvas[dst_r, dst_c] = data[rows, cols]
        acct.add(tile, data)
        if tiling.mode == CROP:
            clean_views.append((tile, data))
    report = acct.finish()
    image = Tensor3(target, canvas, _owned=True)
    if tiling.mode == CROP:
        _crop_seams(tiling, image, clean_views, report)
    elif verify_seams:
        checker = _SeamChecker(net, params, seed, tiling)
        checker.check_region(canvas, target.row_start, target.row_end)
        checker.finish(report)
    return TiledResult(image, report)


def _crop_seams(tiling: TilingPlan, image: Tensor3, tiles, report: StitchReport) -> None:
    """Compare each tile's clean interior with the stitched image wherever they overlap.

    Neighbouring clean interiors overlap in a thin strip generated twice; the
    stitched image kept one copy and the other must agree with it.
    """
    border = tiling.border
    worst = 0.0
    checked = 0
    for tile, data in tiles:
        g = tile.image_rect
        clean = Rect(g.row_start + border, g.row_end - border, g.col_start + border, g.col_end - border)
        region = clean.intersect(tiling.target)
        if region is None or region == tile.emit_rect:
            continue
        src_r, src_c = region.slices(g)
        dst_r, dst_c = region.slices(tiling.target)
        diff = np.abs(data[src_r, src_c] - image.data[dst_r, dst_c])
        worst = max(worst, float(diff.max()))
        checked += region.area() - tile.emit_rect.area()
    report.seam_max_abs_diff = worst
    report.seams_checked = checked


class _SeamChecker:
    """Regenerate 2-pixel strips straddling tile seams and compare with the stitched output."""

    def __init__(self, net, params, seed, tiling: TilingPlan):
        self.net, self.params, self.seed, self.tiling = net, params, seed, tiling
        self.worst = 0.0
        self.count = 0
        target = tiling.target
        self.col_seams = sorted({t.emit_rect.col_start for t in tiling.tiles} - {target.col_start})
        self.row_seams = sorted({t.emit_rect.row_start for t in tiling.tiles} - {target.row_start})

    def _compare(self, strip: Rect, stitched: np.ndarray) -> None:
        fresh = generate(self.net, self.params, self.seed, image_rect=strip)
        out = fresh.image if fresh.image is not None else fresh.features
        self.worst = max(self.worst, float(np.max(np.abs(out.data - stitched))))
        self.count += 1

    def check_region(self, band: np.ndarray, row_start: int, row_end: int) -> None:
        """Vertical seams inside rows [row_start, row_end) plus horizontal seams strictly inside them."""
        target = self.tiling.target
        origin = row_start
        for span in self._row_tiles(row_start, row_end):
            for c in self.col_seams:
                strip = Rect(span[0], span[1], c - 1, c + 1)
                cols = slice(c - 1 - target.col_start, c + 1 - target.col_start)
                self._compare(strip, band[span[0] - origin : span[1] - origin, cols])
        for r in self.row_seams:
            if row_start < r < row_end:
                self.horizontal(r, band[r - 1 - origin : r + 1 - origin])

    def _row_tiles(self, row_start: int, row_end: int) -> list[tuple[int, int]]:
        return [(a, b) for a, b in self.tiling.band_rows() if row_start <= a and b <= row_end]

    def horizontal(self, r: int, two_rows: np.ndarray) -> None:
        target = self.tiling.target
        cols = sorted({(t.emit_rect.col_start, t.emit_rect.col_end) for t in self.tiling.tiles})
        for c0, c1 in cols:
            strip = Rect(r - 1, r + 1, c0, c1)
            self._compare(strip, two_rows[:, c0 - target.col_start : c1 - target.col_start])

    def finish(self, report: StitchReport) -> None:
        report.seam_max_abs_diff = self.worst
        report.seams_checked = self.count


@dataclass
class BandStream:
    """Iterable of consecutive ``(rows, width, channels)`` bands of a consistent tiling.

    Tiles are produced one tile row at a time (in ``order`` restricted to that
    row), so only one band lives in memory. ``report`` is final once the
    iteration is exhausted.
    """

    net: NetworkSpec
    weights: Params
    tiling: TilingPlan
    seed: int
    order: Sequence[int] | None = None
    threads: int | None = None
    verify_seams: bool = False
    report: StitchReport | None = field(default=None, init=False)

    def __iter__(self) -> Iterator[np.ndarray]:
        tiling = self.tiling
        if tiling.mode != CONSISTENT:
            raise ContractError("streaming output is only available for consistent tilings")
        order = _check(self.net, tiling, self.order)
        params = bind(self.net, self.weights)
        threads = default_threads() if self.threads is None else self.threads
        target = tiling.target
        channels = self.net.output_channels
        acct = _Accounting(tiling)
        checker = _SeamChecker(self.net, params, self.seed, tiling) if self.verify_seams else None
        prev_last_row = None
        rank = {idx: pos for pos, idx in enumerate(order)}
        for r0, r1 in tiling.band_rows():
            band = np.zeros((r1 - r0, target.width(), channels))
            row_tiles = sorted((t for t in tiling.tiles if t.emit_rect.row_start == r0), key=lambda t: rank[t.index])
            for tile, data in _run_tiles(self.net, params, self.seed, row_tiles, CONSISTENT, threads):
                _, cols = tile.emit_rect.slices(target)
                band[:, cols] = data
                acct.add(tile, data)
            if checker is not None:
                checker.check_region(band, r0, r1)
                if prev_last_row is not None:
                    checker.horizontal(r0, np.concatenate([prev_last_row, band[:1]]))
                prev_last_row = band[-1:].copy()
            yield band
        report = acct.finish()
        if checker is not None:
            checker.finish(report)
        self.report = report

