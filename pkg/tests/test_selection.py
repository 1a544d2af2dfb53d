import numpy as np
import pytest

from oracles import best_partition_assignment
from videoground.geometry import Box
from videoground.selection import (
    JointFeature,
    ProjectionMap,
    TokenSet,
    build_joint_features,
    emit_tokens,
    select_representatives,
)
from videoground.trajectories import Trajectory, TrajectoryPoint


def unit(rng, dim):
    v = rng.normal(size=dim)
    return v / np.linalg.norm(v)


def make_traj(boxes, video_id="vid", target_id="tgt"):
    points = [TrajectoryPoint(i, b, 0.9) for i, b in enumerate(boxes)]
    return Trajectory(video_id, target_id, points)


def random_features(rng, count, dim=6, weight=0.25):
    return [
        JointFeature(unit(rng, dim), rng.uniform(size=4), weight) for _ in range(count)
    ]


class TestJointFeature:
    def test_vector_is_visual_then_weighted_spatial(self, rng):
        visual = unit(rng, 5)
        spatial = np.array([0.3, 0.4, 0.2, 0.1])
        feat = JointFeature(visual, spatial, 0.25)
        vec = feat.vector()
        assert vec.shape == (9,)
        np.testing.assert_array_equal(vec[:5], visual)
        np.testing.assert_array_equal(vec[5:], 0.25 * spatial)

    def test_zero_weight_zeroes_the_spatial_block(self, rng):
        feat = JointFeature(unit(rng, 4), np.array([0.5, 0.5, 0.1, 0.1]), 0.0)
        np.testing.assert_array_equal(feat.vector()[4:], np.zeros(4))

    def test_validation(self, rng):
        with pytest.raises(ValueError):
            JointFeature(2.0 * unit(rng, 4), np.zeros(4), 0.25)
        with pytest.raises(ValueError):
            JointFeature(unit(rng, 4), np.array([0.5, 0.5, 1.2, 0.1]), 0.25)
        with pytest.raises(ValueError):
            JointFeature(unit(rng, 4), np.zeros(4), -0.1)
        with pytest.raises(ValueError):
            JointFeature(np.zeros(0), np.zeros(4), 0.25)


class TestBuildJointFeatures:
    def test_normalizes_visuals_and_copies_boxes(self, rng):
        boxes = [Box(0.1, 0.1, 0.3, 0.5), Box(0.2, 0.2, 0.4, 0.6)]
        crops = [rng.normal(size=6) * 3.0, rng.normal(size=6) * 0.01]
        joint = build_joint_features(make_traj(boxes), crops, w_s=0.5)
        assert len(joint) == 2
        for feat, crop, box in zip(joint, crops, boxes):
            np.testing.assert_allclose(feat.visual, crop / np.linalg.norm(crop), atol=1e-12)
            np.testing.assert_allclose(feat.spatial, box.center_size(), atol=1e-15)
            assert feat.weight == 0.5

    def test_count_mismatch_and_zero_norm_rejected(self, rng):
        traj = make_traj([Box(0.1, 0.1, 0.3, 0.5)])
        with pytest.raises(ValueError):
            build_joint_features(traj, [], w_s=0.25)
        with pytest.raises(ValueError):
            build_joint_features(traj, [np.zeros(6)], w_s=0.25)


class TestSelectRepresentatives:
    def test_k_equals_count_keeps_everything(self, rng):
        feats = random_features(rng, 5)
        assert select_representatives(feats, k=5, seed=0) == [0, 1, 2, 3, 4]

    def test_two_copy_groups_pick_one_each(self, rng):
        a, b = unit(rng, 6), unit(rng, 6)
        spatial = np.full(4, 0.5)
        feats = [JointFeature(a, spatial, 0.25)] * 4 + [JointFeature(b, spatial, 0.25)] * 4
        picks = select_representatives(feats, k=2, seed=1)
        assert len(picks) == 2
        assert picks == sorted(picks)
        # one pick from each block of copies
        assert sum(1 for p in picks if p < 4) == 1

    def test_matches_exhaustive_partition_oracle(self, rng):
        # Blob sizes 4/3/1: a 2-member cluster would tie (both points are
        # exactly equidistant from their mean) and make the pick float-noise.
        for trial in range(15):
            labels = rng.permutation(np.array([0, 0, 0, 0, 1, 1, 1, 2]))
            feats = []
            for lab in labels:
                v = np.eye(3)[lab] + rng.normal(scale=0.05, size=3)
                feats.append(JointFeature(v / np.linalg.norm(v), rng.uniform(size=4), 0.25))
            vectors = np.stack([f.vector() for f in feats])
            picks = select_representatives(feats, k=3, seed=trial, restarts=50)

            assignment = best_partition_assignment(vectors, 3)
            expected = []
            for label in set(assignment):
                members = [i for i, a in enumerate(assignment) if a == label]
                centroid = vectors[members].mean(axis=0)
                dists = [float(((vectors[i] - centroid) ** 2).sum()) for i in members]
                expected.append(members[int(np.argmin(dists))])
            assert picks == sorted(expected)

    def test_zero_spatial_weight_ignores_motion(self, rng):
        crops = [rng.normal(size=6) for _ in range(6)]
        still = make_traj([Box(0.1, 0.1, 0.3, 0.3)] * 1 + [Box(0.1, 0.1, 0.3, 0.3)] * 5)
        moving = make_traj(
            [Box(0.1 + 0.1 * i, 0.1, 0.3 + 0.1 * i, 0.3) for i in range(6)]
        )
        kw = dict(k=3, seed=4, restarts=20)
        picks_still = select_representatives(build_joint_features(still, crops, w_s=0.0), **kw)
        picks_moving = select_representatives(build_joint_features(moving, crops, w_s=0.0), **kw)
        assert picks_still == picks_moving

    def test_picks_are_distinct_sorted_indices(self, rng):
        for trial in range(10):
            count = int(rng.integers(4, 12))
            k = int(rng.integers(1, count + 1))
            picks = select_representatives(random_features(rng, count), k=k, seed=trial)
            assert len(picks) == k == len(set(picks))
            assert picks == sorted(picks)
            assert all(0 <= p < count for p in picks)

    def test_bad_k_rejected(self, rng):
        feats = random_features(rng, 3)
        with pytest.raises(ValueError):
            select_representatives(feats, k=0, seed=0)
        with pytest.raises(ValueError):
            select_representatives(feats, k=4, seed=0)
        with pytest.raises(ValueError):
            select_representatives([], k=1, seed=0)


class TestEmitTokens:
    def test_identity_projection_echoes_inputs(self, rng):
        feats = [rng.normal(size=4) for _ in range(3)]
        out = emit_tokens(feats, ProjectionMap(np.eye(4)), [0, 1, 2])
        assert out.source_indices == [0, 1, 2]
        for token, feat in zip(out.tokens, feats):
            np.testing.assert_array_equal(token, feat)

    def test_zero_projection_gives_zero_tokens(self, rng):
        out = emit_tokens([rng.normal(size=4)], ProjectionMap(np.zeros((4, 2))), [7])
        np.testing.assert_array_equal(out.tokens[0], np.zeros(2))

    def test_matches_dot_product_oracle(self, rng):
        matrix = rng.normal(size=(8, 6))
        feats = [rng.normal(size=8) for _ in range(5)]
        out = emit_tokens(feats, ProjectionMap(matrix), list(range(5)))
        for token, feat in zip(out.tokens, feats):
            expected = np.array([float(feat @ matrix[:, j]) for j in range(6)])
            np.testing.assert_allclose(token, expected, atol=1e-12)

    def test_shape_mismatch_rejected(self, rng):
        with pytest.raises(ValueError):
            emit_tokens([np.zeros(3)], ProjectionMap(np.eye(4)), [0])
        with pytest.raises(ValueError):
            TokenSet([np.zeros(2)], [0, 1])
        with pytest.raises(ValueError):
            ProjectionMap(np.array([np.inf]).reshape(1, 1) * np.ones((1, 1)))
