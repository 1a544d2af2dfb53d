"""Representative-frame selection over a tracked target's crop features.

Per-frame visual features are combined with a weighted spatial summary of the
track box, clustered, and one nearest sample per cluster is kept. The selected
crops can then be projected into token space for a language model prompt.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .clustering import kmeans
from .trajectories import Trajectory

DEFAULT_CLUSTERS = 4
DEFAULT_SPATIAL_WEIGHT = 0.25


@dataclass
class JointFeature:
    """A unit-norm visual vector paired with a weighted (cx, cy, w, h) summary."""

    visual: np.ndarray
    spatial: np.ndarray
    weight: float

    def __post_init__(self):
        self.visual = np.asarray(self.visual, dtype=float)
        self.spatial = np.asarray(self.spatial, dtype=float)
        if self.visual.ndim != 1 or self.visual.size == 0:
            raise ValueError(f"visual part must be a nonempty vector, got shape {self.visual.shape}")
        if abs(float(np.linalg.norm(self.visual)) - 1.0) > 1e-9:
            raise ValueError("visual part must be unit-normalized")
        if self.spatial.shape != (4,):
            raise ValueError(f"spatial part must be (cx, cy, w, h), got shape {self.spatial.shape}")
        if np.any(self.spatial < 0.0) or np.any(self.spatial > 1.0):
            raise ValueError(f"spatial components must lie in [0, 1], got {self.spatial}")
        if self.weight < 0.0:
            raise ValueError(f"spatial weight must be >= 0, got {self.weight}")

    def vector(self) -> np.ndarray:
        """Concatenate the visual part with the weighted spatial part."""
        return np.concatenate([self.visual, self.weight * self.spatial])


def build_joint_features(
    traj: Trajectory,
    crop_features: Sequence[np.ndarray],
    w_s: float = DEFAULT_SPATIAL_WEIGHT,
) -> list[JointFeature]:
    """Pair each trajectory point with its crop feature.

    Visual vectors are L2-normalized; the spatial part is the point's box in
    center/size form. Feature count must match the trajectory length.
    """
    if len(crop_features) != len(traj.points):
        raise ValueError(
            f"{len(crop_features)} crop features for {len(traj.points)} trajectory points"
        )
    joint = []
    for i, (point, feat) in enumerate(zip(traj.points, crop_features)):
        vec = np.asarray(feat, dtype=float)
        norm = float(np.linalg.norm(vec))
        if norm <= 0.0 or not np.isfinite(norm):
            raise ValueError(f"crop feature {i} cannot be normalized (norm={norm})")
        joint.append(JointFeature(vec / norm, np.array(point.box.center_size()), w_s))
    return joint


def select_representatives(
    features: Sequence[JointFeature], k: int = DEFAULT_CLUSTERS, seed: int = 0, restarts: int = 10
) -> list[int]:
    """Pick k representative sample indices by clustering the joint vectors.

    For each cluster the member nearest its centroid is kept (ties go to the
    lowest index); the k distinct indices come back in ascending frame order.
    """
    if not features:
        raise ValueError("no features to select from")
    if k < 1 or k > len(features):
        raise ValueError(f"k must lie in [1, {len(features)}], got {k}")
    vectors = np.stack([f.vector() for f in features])
    result = kmeans(vectors, k, seed=seed, restarts=restarts)
    picks = []
    for c in range(k):
        members = np.flatnonzero(result.assignments == c)
        diff = vectors[members] - result.centroids[c]
        nearest = members[int(np.einsum("nd,nd->n", diff, diff).argmin())]
        picks.append(int(nearest))
    return sorted(picks)


@dataclass
class ProjectionMap:
    """A fixed linear map from feature space to token space."""

    matrix: np.ndarray  # (dim_in, dim_out)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        if self.matrix.ndim != 2:
            raise ValueError(f"projection must be a matrix, got shape {self.matrix.shape}")
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("projection matrix contains non-finite values")


@dataclass
class TokenSet:
    """Projected representative tokens plus the sample indices they came from."""

    tokens: list[np.ndarray]
    source_indices: list[int]

    def __post_init__(self):
        if len(self.tokens) != len(self.source_indices):
            raise ValueError(
                f"{len(self.tokens)} tokens but {len(self.source_indices)} source indices"
            )


def emit_tokens(
    selected: Sequence[np.ndarray], proj: ProjectionMap, source_indices: Sequence[int]
) -> TokenSet:
    """Project selected crop features into token space, one token per selection."""
    dim_in = proj.matrix.shape[0]
    tokens = []
    for i, feat in enumerate(selected):
        vec = np.asarray(feat, dtype=float)
        if vec.shape != (dim_in,):
            raise ValueError(f"selected feature {i} has shape {vec.shape}, expected ({dim_in},)")
        tokens.append(vec @ proj.matrix)
    return TokenSet(tokens, [int(i) for i in source_indices])
