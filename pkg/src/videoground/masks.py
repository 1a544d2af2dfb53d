"""Binary mask containers, the MASK text format, and box rasterization."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .geometry import Box
from .ioutil import FormatError


class MaskFrame:
    """A (height, width) grid of ground-truth bits or predicted probabilities."""

    def __init__(self, values):
        arr = np.asarray(values, dtype=float)
        if arr.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
            raise ValueError("mask values must lie in [0, 1]")
        self.values = arr

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def binary(self, threshold: float = 0.5) -> np.ndarray:
        return self.values > threshold


class MaskVideo:
    """Per-frame masks for one video; every frame shares one resolution."""

    def __init__(self, video_id: str, frames: Sequence[MaskFrame]):
        frames = list(frames)
        if not video_id:
            raise ValueError("video_id must be nonempty")
        if not frames:
            raise ValueError("mask video needs at least one frame")
        shape = (frames[0].height, frames[0].width)
        for i, frame in enumerate(frames):
            if (frame.height, frame.width) != shape:
                raise ValueError(
                    f"frame {i} is {frame.height}x{frame.width}, expected {shape[0]}x{shape[1]}"
                )
        self.video_id = video_id
        self.frames = frames


def write_mask_video(path, video: MaskVideo) -> None:
    """Write binary masks in the MASK v1 block format (values are thresholded at 0.5)."""
    frames = video.frames
    height, width = frames[0].height, frames[0].width
    lines = [f"MASK v1 w={width} h={height} frames={len(frames)}"]
    for i, frame in enumerate(frames):
        if i > 0:
            lines.append("")
        bits = frame.binary()
        lines.extend("".join("1" if b else "0" for b in row) for row in bits)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mask_video(path, video_id: str = "video") -> MaskVideo:
    """Parse a MASK v1 file into a MaskVideo of binary frames."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError("line 1: empty file, expected MASK v1 header")
    header = lines[0].split()
    if len(header) != 5 or header[0] != "MASK" or header[1] != "v1":
        raise FormatError(f"line 1: bad header {lines[0]!r}")
    try:
        fields = dict(part.split("=", 1) for part in header[2:])
        width = int(fields["w"])
        height = int(fields["h"])
        count = int(fields["frames"])
    except (KeyError, ValueError):
        raise FormatError(f"line 1: bad header {lines[0]!r}") from None
    if width < 1 or height < 1 or count < 1:
        raise FormatError(f"line 1: dimensions must be positive in {lines[0]!r}")
    expected = 1 + count * height + (count - 1)
    if len(lines) != expected:
        raise FormatError(f"line {len(lines)}: expected {expected} lines, found {len(lines)}")
    frames = []
    cursor = 1
    for block in range(count):
        if block > 0:
            if lines[cursor] != "":
                raise FormatError(f"line {cursor + 1}: expected a blank separator line")
            cursor += 1
        rows = []
        for _ in range(height):
            line = lines[cursor]
            if len(line) != width or set(line) - {"0", "1"}:
                raise FormatError(f"line {cursor + 1}: expected {width} characters of 0/1")
            rows.append([1.0 if ch == "1" else 0.0 for ch in line])
            cursor += 1
        frames.append(MaskFrame(np.array(rows)))
    return MaskVideo(video_id, frames)


def rasterize_box(box: Box, width: int, height: int) -> MaskFrame:
    """Rasterize a normalized box: a pixel is on when its center falls inside."""
    if width < 1 or height < 1:
        raise ValueError(f"raster size must be positive, got {width}x{height}")
    cx = (np.arange(width) + 0.5) / width
    cy = (np.arange(height) + 0.5) / height
    inside_x = (cx >= box.x1) & (cx < box.x2)
    inside_y = (cy >= box.y1) & (cy < box.y2)
    return MaskFrame((inside_y[:, None] & inside_x[None, :]).astype(float))
