"""Seeded synthetic scenes for exercising the full pipeline at desk scale.

Each scene is a short clip: a few objects follow smooth random-walk boxes, and
every frame gets a feature pyramid in which each object's identity vector is
painted under (and one cell beyond) its box before Gaussian channel noise.
Identities are rows of a per-seed orthonormal vocabulary, sampled without
replacement within a scene, so a pooled crop of one object points at a
recoverable direction. Detector-style proposals per frame are light jitters of
the true boxes plus low-objectness background boxes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from .features import FeatureMap, FeaturePyramid, aggregate_pool, pool_pyramid
from .geometry import Box, ScoredBox, clamp_box, iou
from .masks import MaskFrame, MaskVideo, rasterize_box
from .trajectories import Trajectory, TrajectoryPoint

_PLACEMENT_TRIES = 80
_PROJECTION_ANGLE = 0.15

_REGION_ADJECTIVES = ("red", "blue", "green", "striped", "small", "tall")
_REGION_NOUNS = ("car", "dog", "person", "bird", "box", "robot")


@dataclass
class SceneConfig:
    seed: int = 7
    count: int = 10
    stream: int = 0  # distinct streams give disjoint scene sets for one seed
    frames: int = 12
    grid: int = 16
    levels: int = 2
    dim: int = 8
    n_objects: int = 3
    noise: float = 0.5
    distractors: int = 2
    mask_size: int = 64
    prop_center_jitter: float = 0.02  # proposal center offset, fraction of box size
    prop_size_jitter: float = 0.04  # proposal w/h rescale half-range
    size_lo: float = 0.25  # object box side range
    size_hi: float = 0.45

    def __post_init__(self):
        if self.count < 0:
            raise ValueError(f"count must be >= 0, got {self.count}")
        if self.frames < 1:
            raise ValueError(f"frames must be >= 1, got {self.frames}")
        if self.levels < 1 or self.grid < 2 ** self.levels:
            raise ValueError(f"grid {self.grid} too small for {self.levels} levels")
        if self.n_objects < 1:
            raise ValueError(f"n_objects must be >= 1, got {self.n_objects}")
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.noise < 0.0:
            raise ValueError(f"noise must be >= 0, got {self.noise}")
        if self.n_objects > self.dim:
            raise ValueError(
                f"n_objects ({self.n_objects}) cannot exceed dim ({self.dim}): "
                "identities are drawn from an orthonormal vocabulary without replacement"
            )
        if not 0.0 <= self.prop_center_jitter < 0.5:
            raise ValueError(f"prop_center_jitter must lie in [0, 0.5), got {self.prop_center_jitter}")
        if not 0.0 <= self.prop_size_jitter < 1.0:
            raise ValueError(f"prop_size_jitter must lie in [0, 1), got {self.prop_size_jitter}")
        if not 0.0 < self.size_lo <= self.size_hi or self.size_hi > 0.9:
            raise ValueError(f"object size range ({self.size_lo}, {self.size_hi}) is invalid")


@dataclass
class SceneObject:
    target_id: str
    identity: np.ndarray  # unit vector, (dim,)
    trajectory: Trajectory
    region_phrase: str


@dataclass
class SyntheticScene:
    video_id: str
    objects: list[SceneObject]
    pyramids: list[FeaturePyramid]  # one per frame
    proposals: list[list[ScoredBox]]  # one list per frame
    target_index: int

    @property
    def target(self) -> SceneObject:
        return self.objects[self.target_index]


def _paint(data: np.ndarray, box: Box, identity: np.ndarray) -> None:
    """Add the identity vector to cells whose center lies within one cell of the box."""
    size = data.shape[0]
    col_lo = max(int(np.ceil(box.x1 * size - 1.5)), 0)
    col_hi = min(int(np.floor(box.x2 * size + 0.5)), size - 1)
    row_lo = max(int(np.ceil(box.y1 * size - 1.5)), 0)
    row_hi = min(int(np.floor(box.y2 * size + 0.5)), size - 1)
    if col_lo <= col_hi and row_lo <= row_hi:
        data[row_lo:row_hi + 1, col_lo:col_hi + 1] += identity


def identity_vocabulary(dim: int, seed: int) -> np.ndarray:
    """Orthonormal identity directions, one per row; fixed for a given seed."""
    rng = np.random.default_rng([seed, 4099])
    raw = rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(raw)
    return q * np.sign(np.diag(r))


def _place_objects(rng: np.random.Generator, cfg: SceneConfig) -> list[tuple[float, float, float, float]]:
    """Draw per-object (cx, cy, w, h) with non-overlapping starting boxes."""
    placed: list[tuple[float, float, float, float]] = []
    for _ in range(cfg.n_objects):
        for attempt in range(_PLACEMENT_TRIES + 1):
            if attempt == _PLACEMENT_TRIES:
                raise RuntimeError("could not place scene objects without overlap")
            w = rng.uniform(cfg.size_lo, cfg.size_hi)
            h = rng.uniform(cfg.size_lo, cfg.size_hi)
            cx = rng.uniform(w / 2 + 0.02, 1.0 - w / 2 - 0.02)
            cy = rng.uniform(h / 2 + 0.02, 1.0 - h / 2 - 0.02)
            box = Box(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)
            others = [Box(x - ww / 2, y - hh / 2, x + ww / 2, y + hh / 2) for x, y, ww, hh in placed]
            if all(iou(box, other) <= 0.05 for other in others):
                placed.append((cx, cy, w, h))
                break
    return placed


def _walk(rng: np.random.Generator, cfg: SceneConfig, start: tuple[float, float, float, float]) -> list[TrajectoryPoint]:
    cx, cy, w, h = start
    vel = rng.normal(0.0, 0.006, size=2)
    points = []
    for frame in range(cfg.frames):
        box = clamp_box(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)
        points.append(TrajectoryPoint(frame, box, float(rng.uniform(0.85, 1.0))))
        vel = 0.85 * vel + rng.normal(0.0, 0.007, size=2)
        cx = float(np.clip(cx + vel[0], w / 2, 1.0 - w / 2))
        cy = float(np.clip(cy + vel[1], h / 2, 1.0 - h / 2))
    return points


def _frame_proposals(
    rng: np.random.Generator, cfg: SceneConfig, boxes: Sequence[Box]
) -> list[ScoredBox]:
    """True boxes under seeded perturbation plus low-confidence background boxes."""
    proposals = []
    cj, sj = cfg.prop_center_jitter, cfg.prop_size_jitter
    for box in boxes:
        cx, cy, w, h = box.center_size()
        cx += rng.uniform(-cj, cj) * w
        cy += rng.uniform(-cj, cj) * h
        w *= rng.uniform(1.0 - sj, 1.0 + sj)
        h *= rng.uniform(1.0 - sj, 1.0 + sj)
        jittered = clamp_box(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)
        proposals.append(ScoredBox(jittered, float(rng.uniform(0.60, 0.70))))
    for _ in range(cfg.distractors):
        w = rng.uniform(0.10, 0.30)
        h = rng.uniform(0.10, 0.30)
        cx = rng.uniform(w / 2, 1.0 - w / 2)
        cy = rng.uniform(h / 2, 1.0 - h / 2)
        proposals.append(
            ScoredBox(Box(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2), float(rng.uniform(0.30, 0.45)))
        )
    return proposals


def query_projection(cfg: SceneConfig) -> np.ndarray:
    """Fixed seeded near-identity rotation from feature space into query space.

    Stands in for the (small) systematic offset between how a referent looks in
    scene features and how its query is embedded: exp(theta * A) for a seeded
    antisymmetric A of unit Frobenius norm, so the map is orthogonal and within
    a known angle of the identity.
    """
    rng = np.random.default_rng([cfg.seed, 7919])
    raw = rng.normal(size=(cfg.dim, cfg.dim))
    skew = raw - raw.T
    skew *= _PROJECTION_ANGLE / np.linalg.norm(skew)
    return expm(skew)


def gen_scenes(cfg: SceneConfig) -> list[SyntheticScene]:
    """Generate `count` deterministic scenes for (seed, stream)."""
    scenes = []
    level_sizes = [cfg.grid >> (cfg.levels - 1 - i) for i in range(cfg.levels)]
    strides = [float(2 ** (cfg.levels - 1 - i)) for i in range(cfg.levels)]
    vocabulary = identity_vocabulary(cfg.dim, cfg.seed)
    for idx in range(cfg.count):
        rng = np.random.default_rng([cfg.seed, cfg.stream, idx])
        video_id = f"synth-{cfg.stream}-{idx:04d}"
        rows = rng.choice(cfg.dim, size=cfg.n_objects, replace=False)
        identities = [vocabulary[row] for row in rows]
        starts = _place_objects(rng, cfg)
        objects = []
        for obj_idx, (identity, start) in enumerate(zip(identities, starts)):
            points = _walk(rng, cfg, start)
            adjective = _REGION_ADJECTIVES[int(rng.integers(len(_REGION_ADJECTIVES)))]
            noun = _REGION_NOUNS[int(rng.integers(len(_REGION_NOUNS)))]
            objects.append(
                SceneObject(
                    target_id=f"obj-{obj_idx}",
                    identity=identity,
                    trajectory=Trajectory(video_id, f"obj-{obj_idx}", points),
                    region_phrase=f"{adjective} {noun}",
                )
            )
        target_index = int(rng.integers(cfg.n_objects))
        proposals = []
        for frame in range(cfg.frames):
            frame_boxes = [obj.trajectory.points[frame].box for obj in objects]
            proposals.append(_frame_proposals(rng, cfg, frame_boxes))
        pyramids = []
        for frame in range(cfg.frames):
            levels = []
            for size in level_sizes:
                data = np.zeros((size, size, cfg.dim))
                for obj in objects:
                    _paint(data, obj.trajectory.points[frame].box, obj.identity)
                if cfg.noise > 0.0:
                    data += rng.normal(0.0, cfg.noise, size=data.shape)
                levels.append(FeatureMap(data))
            pyramids.append(FeaturePyramid(levels, strides))
        scenes.append(SyntheticScene(video_id, objects, pyramids, proposals, target_index))
    return scenes


def crop_feature(scene: SyntheticScene, frame: int, box: Box, roi_size: int = 2) -> np.ndarray:
    """Pooled feature vector for a box at one frame (all levels averaged)."""
    return aggregate_pool(pool_pyramid(scene.pyramids[frame], box, roi_size))


def target_masks(scene: SyntheticScene, size: int) -> MaskVideo:
    """Rasterized ground-truth masks of the query target, one frame per clip frame."""
    frames = [
        rasterize_box(p.box, size, size) for p in scene.target.trajectory.points
    ]
    return MaskVideo(scene.video_id, frames)


def gt_mask_video(trajectory: Trajectory, size: int) -> MaskVideo:
    frames = [rasterize_box(p.box, size, size) for p in trajectory.points]
    if not frames:
        frames = [MaskFrame(np.zeros((size, size)))]
    return MaskVideo(trajectory.video_id, frames)
