"""Tracked-box trajectories: the JSONL interchange format, IoU-based cleaning,
seeded corruption operators for robustness studies, and QA prompt templating."""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .geometry import Box, clamp_box
from .ioutil import FormatError, dump_json, parse_json_line


@dataclass(frozen=True)
class TrajectoryPoint:
    frame: int
    box: Box
    confidence: float

    def __post_init__(self):
        if self.frame < 0:
            raise ValueError(f"frame index must be >= 0, got {self.frame}")
        if not math.isfinite(self.confidence) or not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must lie in [0, 1], got {self.confidence}")


@dataclass
class Trajectory:
    """One target's track through one video; frames strictly increase."""

    video_id: str
    target_id: str
    points: list[TrajectoryPoint] = field(default_factory=list)
    dropped: bool = False

    def __post_init__(self):
        if not self.video_id or not self.target_id:
            raise ValueError("video_id and target_id must be nonempty")
        for prev, cur in zip(self.points, self.points[1:]):
            if cur.frame <= prev.frame:
                raise ValueError(
                    f"frames must strictly increase, got {prev.frame} then {cur.frame} "
                    f"in {self.video_id}/{self.target_id}"
                )
        if not self.points and not self.dropped:
            raise ValueError(f"empty trajectory {self.video_id}/{self.target_id} not marked dropped")

    def frames(self) -> list[int]:
        return [p.frame for p in self.points]


def write_trajectories(path, trajectories: Sequence[Trajectory]) -> None:
    """Write tracks as JSON lines sorted by (video_id, target_id, frame)."""
    rows = []
    for traj in trajectories:
        for p in traj.points:
            rows.append((traj.video_id, traj.target_id, p.frame, p.box, p.confidence))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    with open(path, "w", encoding="utf-8") as fh:
        for video_id, target_id, frame, box, score in rows:
            record = {
                "video_id": video_id,
                "target_id": target_id,
                "frame": frame,
                "box": list(box.as_tuple()),
                "score": score,
            }
            fh.write(dump_json(record) + "\n")


def read_trajectories(path) -> list[Trajectory]:
    """Read trajectory JSON lines, grouping rows into per-target tracks.

    Tracks come back sorted by (video_id, target_id) with points in frame order.
    """
    groups: dict[tuple[str, str], list[TrajectoryPoint]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            record = parse_json_line(line, line_no)
            try:
                video_id = record["video_id"]
                target_id = record["target_id"]
                frame = record["frame"]
                box = record["box"]
                score = record["score"]
            except KeyError as exc:
                raise FormatError(f"line {line_no}: missing key {exc.args[0]!r}") from None
            if not isinstance(video_id, str) or not isinstance(target_id, str):
                raise FormatError(f"line {line_no}: ids must be strings")
            if not isinstance(frame, int) or isinstance(frame, bool):
                raise FormatError(f"line {line_no}: frame must be an integer")
            if not isinstance(box, list) or len(box) != 4:
                raise FormatError(f"line {line_no}: box must be [x1, y1, x2, y2]")
            try:
                point = TrajectoryPoint(frame, Box(*[float(v) for v in box]), float(score))
            except (TypeError, ValueError) as exc:
                raise FormatError(f"line {line_no}: {exc}") from None
            groups.setdefault((video_id, target_id), []).append(point)
    trajectories = []
    for (video_id, target_id), points in sorted(groups.items()):
        points.sort(key=lambda p: p.frame)
        frames = [p.frame for p in points]
        if len(set(frames)) != len(frames):
            raise FormatError(f"duplicate frame in track {video_id}/{target_id}")
        trajectories.append(Trajectory(video_id, target_id, points))
    return trajectories


def iou_clean(traj: Trajectory, reference: Trajectory, threshold: float) -> Trajectory:
    """Drop points whose IoU against the same-frame reference box falls below threshold.

    Frames missing from the reference are kept as-is.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    from .geometry import iou

    ref = {p.frame: p.box for p in reference.points}
    kept = [
        p for p in traj.points
        if p.frame not in ref or iou(p.box, ref[p.frame]) >= threshold
    ]
    return Trajectory(traj.video_id, traj.target_id, kept, dropped=not kept)


def _traj_rng(seed: int, traj: Trajectory, kind: int) -> np.random.Generator:
    """Per-trajectory stream keyed by stable id hashes, independent of list order."""
    return np.random.default_rng(
        [int(seed), zlib.crc32(traj.video_id.encode()), zlib.crc32(traj.target_id.encode()), kind]
    )


def corrupt_jitter(traj: Trajectory, p: float, seed: int) -> Trajectory:
    """Perturb every box: center shifted by uniform(-p, p) of its size per axis,
    width and height rescaled by uniform(1-p, 1+p). Identity at p=0."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"jitter level must lie in [0, 1], got {p}")
    if p == 0.0:
        return replace(traj, points=list(traj.points))
    rng = _traj_rng(seed, traj, kind=1)
    points = []
    for point in traj.points:
        cx, cy, w, h = point.box.center_size()
        cx += rng.uniform(-p, p) * w
        cy += rng.uniform(-p, p) * h
        w *= rng.uniform(1.0 - p, 1.0 + p)
        h *= rng.uniform(1.0 - p, 1.0 + p)
        box = clamp_box(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
        points.append(TrajectoryPoint(point.frame, box, point.confidence))
    return replace(traj, points=points)


def corrupt_id_switch(trajectories: Sequence[Trajectory], p: float, seed: int) -> list[Trajectory]:
    """Swap contiguous spans of boxes with a donor track from the same video.

    Each track has floor(p * len) frames replaced, drawn as one or two seeded
    contiguous runs; the donor is a seeded uniform pick among the video's other
    tracks. Identity at p=0; a video with a single track and p>0 is an error.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"id-switch level must lie in [0, 1], got {p}")
    if p == 0.0:
        return [replace(t, points=list(t.points)) for t in trajectories]
    by_video: dict[str, list[Trajectory]] = {}
    for traj in trajectories:
        by_video.setdefault(traj.video_id, []).append(traj)
    out = []
    for traj in trajectories:
        total = len(traj.points)
        swap = int(p * total)
        if swap == 0:
            out.append(replace(traj, points=list(traj.points)))
            continue
        peers = [t for t in by_video[traj.video_id] if t.target_id != traj.target_id]
        if not peers:
            raise ValueError(
                f"id-switch needs a donor track, but {traj.video_id} has only "
                f"{traj.target_id}"
            )
        rng = _traj_rng(seed, traj, kind=2)
        donor = peers[int(rng.integers(len(peers)))]
        donor_boxes = {pt.frame: pt.box for pt in donor.points}
        covered = _pick_runs(total, swap, rng)
        points = []
        for idx, point in enumerate(traj.points):
            if idx in covered and point.frame in donor_boxes:
                points.append(TrajectoryPoint(point.frame, donor_boxes[point.frame], point.confidence))
            else:
                points.append(point)
        out.append(replace(traj, points=points))
    return out


def _pick_runs(total: int, swap: int, rng: np.random.Generator) -> set[int]:
    """Choose one or two non-overlapping contiguous index runs summing to `swap`."""
    if swap >= total:
        return set(range(total))
    runs = 1 if swap < 2 else int(rng.integers(1, 3))
    if runs == 2:
        first = int(rng.integers(1, swap))
        lengths = [first, swap - first]
    else:
        lengths = [swap]
    for _ in range(1000):
        starts = [int(rng.integers(0, total - ln + 1)) for ln in lengths]
        spans = sorted(zip(starts, lengths))
        if all(s0 + l0 <= s1 for (s0, l0), (s1, _) in zip(spans, spans[1:])):
            covered: set[int] = set()
            for start, length in spans:
                covered.update(range(start, start + length))
            return covered
    # Two disjoint runs would not fit; fall back to a single run.
    start = int(rng.integers(0, total - swap + 1))
    return set(range(start, start + swap))


def corrupt_dropout(traj: Trajectory, p: float, seed: int) -> Trajectory:
    """Remove a seeded uniform sample of floor(p * len) points.

    At p=1 every point goes and the track comes back marked dropped.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"dropout level must lie in [0, 1], got {p}")
    if p == 0.0:
        return replace(traj, points=list(traj.points))
    total = len(traj.points)
    drop = int(p * total)
    if drop == 0:
        return replace(traj, points=list(traj.points))
    rng = _traj_rng(seed, traj, kind=3)
    removed = set(rng.choice(total, size=drop, replace=False).tolist())
    points = [pt for idx, pt in enumerate(traj.points) if idx not in removed]
    return Trajectory(traj.video_id, traj.target_id, points, dropped=not points)


QA_TEMPLATES = {
    "what-doing": "What is the <region> doing during this video?",
    "describe": "Can you describe the <region> in this video?",
    "where-move": "Where does the <region> move over the course of the video?",
    "segment": "Please segment the <region> in this video.",
}


def render_qa(template_id: str, region_phrase: str, caption: str) -> tuple[str, str]:
    """Instantiate a QA pair: the question fills <region>, the answer is the caption."""
    if template_id not in QA_TEMPLATES:
        raise ValueError(f"unknown template {template_id!r}")
    if not region_phrase:
        raise ValueError("region phrase must be nonempty")
    question = QA_TEMPLATES[template_id].replace("<region>", region_phrase)
    return question, caption


def write_qa_manifest(path, entries: Sequence[dict]) -> None:
    """Write QA rows ({video_id, target_id, question, answer}) as JSON lines."""
    with open(path, "w", encoding="utf-8") as fh:
        for entry in entries:
            record = {
                "video_id": entry["video_id"],
                "target_id": entry["target_id"],
                "question": entry["question"],
                "answer": entry["answer"],
            }
            fh.write(dump_json(record) + "\n")
