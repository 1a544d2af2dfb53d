"""Segmentation and grounding quality measures: region overlap J, boundary
agreement F, their sequence averages, and proposal-set oracle recall."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import ndimage

from .geometry import Box, ScoredBox, iou
from .ioutil import FormatError, dump_json, parse_json_line
from .masks import MaskFrame, MaskVideo

BOUNDARY_RADIUS_FRAC = 0.008


def j_measure(pred: MaskFrame, gt: MaskFrame) -> float:
    """Region similarity: mask IoU, with two empty masks counting as 1."""
    if (pred.height, pred.width) != (gt.height, gt.width):
        raise ValueError(
            f"mask sizes differ: {pred.height}x{pred.width} vs {gt.height}x{gt.width}"
        )
    a = pred.binary()
    b = gt.binary()
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)


def _boundary(mask: np.ndarray) -> np.ndarray:
    """Foreground pixels with a background 4-neighbor; the frame edge counts as background."""
    padded = np.pad(mask, 1, mode="constant", constant_values=False)
    interior = (
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    return mask & ~interior


def f_measure(pred: MaskFrame, gt: MaskFrame, radius_frac: float = BOUNDARY_RADIUS_FRAC) -> float:
    """Boundary agreement: F = 2PR / (P + R) with a distance tolerance.

    Boundary pixels match when they fall within ceil(radius_frac * diagonal)
    pixels of the other mask's boundary. Two empty boundaries give 1; if only
    one side is empty, or neither boundary matches at all, the score is 0.
    """
    if (pred.height, pred.width) != (gt.height, gt.width):
        raise ValueError(
            f"mask sizes differ: {pred.height}x{pred.width} vs {gt.height}x{gt.width}"
        )
    pb = _boundary(pred.binary())
    gb = _boundary(gt.binary())
    if not pb.any() and not gb.any():
        return 1.0
    if not pb.any() or not gb.any():
        return 0.0
    radius = math.ceil(radius_frac * math.hypot(pred.width, pred.height))
    dist_to_gt = ndimage.distance_transform_edt(~gb)
    dist_to_pred = ndimage.distance_transform_edt(~pb)
    precision = float((dist_to_gt[pb] <= radius).mean())
    recall = float((dist_to_pred[gb] <= radius).mean())
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def sequence_eval(pred: MaskVideo, gt: MaskVideo) -> tuple[float, float, float]:
    """Average J and F over a video's frames; the third value is their mean."""
    if len(pred.frames) != len(gt.frames):
        raise ValueError(f"frame counts differ: {len(pred.frames)} vs {len(gt.frames)}")
    j_vals = [j_measure(p, g) for p, g in zip(pred.frames, gt.frames)]
    f_vals = [f_measure(p, g) for p, g in zip(pred.frames, gt.frames)]
    j = float(np.mean(j_vals))
    f = float(np.mean(f_vals))
    return j, f, (j + f) / 2.0


def miou(values: Sequence[float]) -> float:
    """Mean of per-item IoU values; empty input is an error."""
    vals = list(values)
    if not vals:
        raise ValueError("miou needs at least one value")
    return float(np.mean(vals))


def oracle_recall(
    frames: Sequence[Sequence[ScoredBox]],
    gt: Sequence[Sequence[Box]],
    topk: int,
    iou_thresh: float,
) -> float:
    """Fraction of ground-truth boxes covered by any top-k proposal above the IoU threshold.

    Proposals are ranked per frame by score (ties keep input order). There must
    be at least one ground-truth box overall.
    """
    if len(frames) != len(gt):
        raise ValueError(f"{len(frames)} proposal frames vs {len(gt)} ground-truth frames")
    if topk < 1:
        raise ValueError(f"topk must be >= 1, got {topk}")
    if not 0.0 <= iou_thresh <= 1.0:
        raise ValueError(f"iou_thresh must lie in [0, 1], got {iou_thresh}")
    hits = 0
    total = 0
    for proposals, gt_boxes in zip(frames, gt):
        ranked = sorted(proposals, key=lambda s: -s.score)[:topk]
        for gt_box in gt_boxes:
            total += 1
            if any(iou(p.box, gt_box) > iou_thresh for p in ranked):
                hits += 1
    if total == 0:
        raise ValueError("oracle_recall needs at least one ground-truth box")
    return hits / total


@dataclass
class MetricReport:
    """Per-video rows of (J, F, J&F) plus their unweighted dataset means."""

    rows: list[tuple[str, float, float, float]]

    def __post_init__(self):
        if not self.rows:
            raise ValueError("report needs at least one row")

    @property
    def mean_j(self) -> float:
        return float(np.mean([r[1] for r in self.rows]))

    @property
    def mean_f(self) -> float:
        return float(np.mean([r[2] for r in self.rows]))

    @property
    def mean_jf(self) -> float:
        return float(np.mean([r[3] for r in self.rows]))


def render_report_csv(report: MetricReport) -> str:
    """Render a report as CSV with four-decimal values and a closing ALL row."""
    lines = ["video_id,J,F,JF"]
    for video_id, j, f, jf in report.rows:
        lines.append(f"{video_id},{j:.4f},{f:.4f},{jf:.4f}")
    lines.append(f"ALL,{report.mean_j:.4f},{report.mean_f:.4f},{report.mean_jf:.4f}")
    return "\n".join(lines) + "\n"


def write_proposals(path, records: Sequence[dict]) -> None:
    """Write per-frame proposal rows ({video_id, frame, boxes, objectness}) as JSON lines."""
    rows = sorted(records, key=lambda r: (r["video_id"], r["frame"]))
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            record = {
                "video_id": row["video_id"],
                "frame": row["frame"],
                "boxes": [list(b) for b in row["boxes"]],
                "objectness": list(row["objectness"]),
            }
            fh.write(dump_json(record) + "\n")


def read_proposals(path) -> dict[str, dict[int, list[ScoredBox]]]:
    """Read proposal JSON lines into {video_id: {frame: [ScoredBox, ...]}}."""
    out: dict[str, dict[int, list[ScoredBox]]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            record = parse_json_line(line, line_no)
            try:
                video_id = record["video_id"]
                frame = record["frame"]
                boxes = record["boxes"]
                objectness = record["objectness"]
            except KeyError as exc:
                raise FormatError(f"line {line_no}: missing key {exc.args[0]!r}") from None
            if not isinstance(frame, int) or isinstance(frame, bool):
                raise FormatError(f"line {line_no}: frame must be an integer")
            if not isinstance(boxes, list) or not isinstance(objectness, list):
                raise FormatError(f"line {line_no}: boxes and objectness must be lists")
            if len(boxes) != len(objectness):
                raise FormatError(
                    f"line {line_no}: {len(boxes)} boxes vs {len(objectness)} scores"
                )
            scored = []
            for box, score in zip(boxes, objectness):
                if not isinstance(box, list) or len(box) != 4:
                    raise FormatError(f"line {line_no}: box must be [x1, y1, x2, y2]")
                try:
                    scored.append(ScoredBox(Box(*[float(v) for v in box]), float(score)))
                except (TypeError, ValueError) as exc:
                    raise FormatError(f"line {line_no}: {exc}") from None
            out.setdefault(video_id, {})[frame] = scored
    return out
