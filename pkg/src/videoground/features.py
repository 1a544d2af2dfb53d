"""Dense feature grids: pyramid containers, bilinear ROI pooling, and the FMAT text format."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .geometry import Box
from .ioutil import FormatError, fmt_float, parse_float


class FeatureMap:
    """A (height, width, dim) grid of feature vectors.

    Cell (row, col) is centered at the continuous point (col + 0.5, row + 0.5);
    normalized box coordinates scale by (width, height) to land in this space.
    """

    def __init__(self, data):
        arr = np.asarray(data, dtype=float)
        if arr.ndim != 3:
            raise ValueError(f"feature map must be (height, width, dim), got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1 or arr.shape[2] < 1:
            raise ValueError(f"feature map axes must be nonempty, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("feature map contains non-finite values")
        self.data = arr

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def dim(self) -> int:
        return self.data.shape[2]


class FeaturePyramid:
    """Feature maps ordered coarse to fine with their matching downscale strides.

    Strides decrease strictly along the sequence (the coarsest level has the
    largest stride); every level shares one channel dimension.
    """

    def __init__(self, levels: Sequence[FeatureMap], strides: Sequence[float]):
        levels = list(levels)
        strides = [float(s) for s in strides]
        if not levels:
            raise ValueError("pyramid needs at least one level")
        if len(levels) != len(strides):
            raise ValueError(f"{len(levels)} levels but {len(strides)} strides")
        if any(s <= 0 for s in strides):
            raise ValueError(f"strides must be positive, got {strides}")
        for left, right in zip(strides, strides[1:]):
            if left <= right:
                raise ValueError(f"strides must decrease coarse to fine, got {strides}")
        dims = {lvl.dim for lvl in levels}
        if len(dims) != 1:
            raise ValueError(f"levels disagree on channel dim: {sorted(dims)}")
        self.levels = levels
        self.strides = strides

    @property
    def dim(self) -> int:
        return self.levels[0].dim


class PooledRoi:
    """A (size, size, dim) pooled grid with the box and pyramid level it came from."""

    def __init__(self, grid, source_box: Box, level: int):
        arr = np.asarray(grid, dtype=float)
        if arr.ndim != 3 or arr.shape[0] != arr.shape[1]:
            raise ValueError(f"pooled grid must be square (size, size, dim), got {arr.shape}")
        self.grid = arr
        self.source_box = source_box
        self.level = int(level)

    @property
    def size(self) -> int:
        return self.grid.shape[0]

    @property
    def dim(self) -> int:
        return self.grid.shape[2]


def _bilinear(data: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample (..., dim) values at continuous points, interpolating cell centers.

    Points beyond the outermost centers clamp to the border value. The lerp
    form keeps samples of a constant field exactly constant.
    """
    height, width = data.shape[0], data.shape[1]
    u = np.clip(xs - 0.5, 0.0, width - 1.0)
    v = np.clip(ys - 0.5, 0.0, height - 1.0)
    c0 = np.minimum(np.floor(u).astype(int), width - 1)
    r0 = np.minimum(np.floor(v).astype(int), height - 1)
    c1 = np.minimum(c0 + 1, width - 1)
    r1 = np.minimum(r0 + 1, height - 1)
    tx = (u - c0)[..., None]
    ty = (v - r0)[..., None]
    top = data[r0, c0] + tx * (data[r0, c1] - data[r0, c0])
    bottom = data[r1, c0] + tx * (data[r1, c1] - data[r1, c0])
    return top + ty * (bottom - top)


def roi_align(level: FeatureMap, b: Box, out_size: int = 7, level_index: int = 0) -> PooledRoi:
    """Pool a box into an out_size x out_size grid of bilinear samples.

    Each output cell averages a 2x2 grid of regularly spaced sample points in
    box space. The box must have positive area.

    Args:
        level: source feature map.
        b: normalized box; mapped into grid space by (width, height).
        out_size: side length of the pooled grid.
        level_index: pyramid level recorded on the result.
    """
    if out_size < 1:
        raise ValueError(f"out_size must be >= 1, got {out_size}")
    if b.area() <= 0.0:
        raise ValueError(f"roi_align requires a box with positive area, got {b.as_tuple()}")
    gx1, gx2 = b.x1 * level.width, b.x2 * level.width
    gy1, gy2 = b.y1 * level.height, b.y2 * level.height
    cell_w = (gx2 - gx1) / out_size
    cell_h = (gy2 - gy1) / out_size
    # Sample offsets 0.25 and 0.75 of the cell along each axis.
    frac = (np.arange(2) + 0.5) / 2.0
    xs = gx1 + cell_w * (np.arange(out_size)[:, None] + frac[None, :])  # (out, 2)
    ys = gy1 + cell_h * (np.arange(out_size)[:, None] + frac[None, :])
    sample_x = np.broadcast_to(xs[None, :, None, :], (out_size, out_size, 2, 2))
    sample_y = np.broadcast_to(ys[:, None, :, None], (out_size, out_size, 2, 2))
    values = _bilinear(level.data, sample_x, sample_y)  # (out, out, 2, 2, dim)
    grid = values.mean(axis=(2, 3))
    return PooledRoi(grid, b, level_index)


def pool_pyramid(pyramid: FeaturePyramid, b: Box, out_size: int = 7) -> list[PooledRoi]:
    """ROI-align one box on every pyramid level, coarse to fine."""
    return [
        roi_align(level, b, out_size, level_index=i)
        for i, level in enumerate(pyramid.levels)
    ]


def aggregate_pool(rois: Sequence[PooledRoi]) -> np.ndarray:
    """Spatially mean each pooled grid, then mean across levels, giving one vector."""
    rois = list(rois)
    if not rois:
        raise ValueError("aggregate_pool needs at least one pooled grid")
    dims = {r.dim for r in rois}
    if len(dims) != 1:
        raise ValueError(f"pooled grids disagree on channel dim: {sorted(dims)}")
    per_level = np.stack([r.grid.mean(axis=(0, 1)) for r in rois])
    return per_level.mean(axis=0)


def assign_level(b: Box, n_levels: int, base: float = 4.0) -> int:
    """Pick a pyramid level index (coarse-to-fine ordering) for a box by its scale.

    Larger boxes land on coarser levels. The raw scale index is
    floor(log2(sqrt(area) * base)) counted from the finest level, clipped to
    the valid range.
    """
    if n_levels < 1:
        raise ValueError(f"n_levels must be >= 1, got {n_levels}")
    area = b.area()
    if area <= 0.0:
        return n_levels - 1
    raw = math.floor(math.log2(math.sqrt(area) * base))
    from_fine = min(max(raw, 0), n_levels - 1)
    return (n_levels - 1) - from_fine


def write_feature_matrix(path, vectors: Sequence[np.ndarray]) -> None:
    """Write feature vectors as an FMAT v1 text file (one row per vector)."""
    rows = [np.asarray(v, dtype=float) for v in vectors]
    dim = rows[0].shape[0] if rows else 0
    for i, row in enumerate(rows):
        if row.ndim != 1 or row.shape[0] != dim:
            raise ValueError(f"row {i} has shape {row.shape}, expected ({dim},)")
        if not np.all(np.isfinite(row)):
            raise ValueError(f"row {i} contains non-finite values")
    lines = [f"FMAT v1 count={len(rows)} dim={dim}"]
    lines.extend(" ".join(fmt_float(x) for x in row) for row in rows)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_feature_matrix(path) -> list[np.ndarray]:
    """Read an FMAT v1 file back into a list of 1-D float vectors."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError("line 1: empty file, expected FMAT v1 header")
    header = lines[0].split()
    if len(header) != 4 or header[0] != "FMAT" or header[1] != "v1":
        raise FormatError(f"line 1: bad header {lines[0]!r}")
    try:
        if not header[2].startswith("count=") or not header[3].startswith("dim="):
            raise ValueError
        count = int(header[2][len("count="):])
        dim = int(header[3][len("dim="):])
    except ValueError:
        raise FormatError(f"line 1: bad header {lines[0]!r}") from None
    if count < 0 or dim < 0:
        raise FormatError(f"line 1: negative count or dim in {lines[0]!r}")
    if len(lines) != count + 1:
        raise FormatError(f"line {len(lines)}: expected {count} rows, found {len(lines) - 1}")
    rows = []
    for offset, line in enumerate(lines[1:], start=2):
        tokens = line.split(" ")
        if tokens == [""]:
            tokens = []
        if len(tokens) != dim:
            raise FormatError(f"line {offset}: expected {dim} values, found {len(tokens)}")
        rows.append(np.array([parse_float(tok, offset) for tok in tokens], dtype=float))
    return rows
