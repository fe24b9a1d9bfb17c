"""8-bit PNG export, streamed row by row through pypng."""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Iterator

import numpy as np
import png

from .errors import ShapeError


def to_u8(values: np.ndarray) -> np.ndarray:
    """Map tanh-range values to bytes: ``floor((v + 1) * 127.5 + 0.5)`` clamped to [0, 255]."""
    scaled = np.floor((np.asarray(values, dtype=np.float64) + 1.0) * 127.5 + 0.5)
    return np.clip(scaled, 0, 255).astype(np.uint8)


def _mode(channels: int) -> dict:
    if channels == 3:
        return {"greyscale": False, "alpha": False}
    if channels == 1:
        return {"greyscale": True, "alpha": False}
    raise ShapeError(f"PNG export supports 1 or 3 channels, got {channels}")


def write_bands(path: str | Path, width: int, height: int, channels: int, bands: Iterable[np.ndarray]) -> None:
    """Write an image delivered as consecutive ``(rows, width, channels)`` float bands."""

    def rows() -> Iterator[np.ndarray]:
        emitted = 0
        for band in bands:
            if band.ndim != 3 or band.shape[1:] != (width, channels):
                raise ShapeError(f"band shape {band.shape} does not fit a {width}-wide {channels}-channel image")
            for row in to_u8(band):
                emitted += 1
                yield row.reshape(-1)
        if emitted != height:
            raise ShapeError(f"received {emitted} rows for a {height}-row image")

    writer = png.Writer(width, height, bitdepth=8, compression=6, **_mode(channels))
    with open(path, "wb") as fh:
        writer.write(fh, rows())


def write_image(path: str | Path, data: np.ndarray) -> None:
    """Write a full ``(rows, cols, channels)`` float array."""
    h, w, c = data.shape
    write_bands(path, w, h, c, [data])


def write_mask(path: str | Path, mask: np.ndarray) -> None:
    """Boolean map as a greyscale PNG: True is white."""
    mask = np.asarray(mask, dtype=bool)
    writer = png.Writer(mask.shape[1], mask.shape[0], greyscale=True, bitdepth=8)
    with open(path, "wb") as fh:
        writer.write(fh, (np.where(row, 255, 0).astype(np.uint8) for row in mask))


def read_png(path: str | Path) -> np.ndarray:
    """Decode to a ``(rows, cols, planes)`` uint8 array."""
    w, h, rows, info = png.Reader(filename=str(path)).read()
    planes = info["planes"]
    return np.array([np.frombuffer(bytes(r), dtype=np.uint8) for r in rows]).reshape(h, w, planes)
