from __future__ import annotations

import numpy as np
import pytest

from videoground.geometry import Box, ScoredBox


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_box(rng, lo: float = 0.0, hi: float = 1.0) -> Box:
    xs = np.sort(rng.uniform(lo, hi, size=2))
    ys = np.sort(rng.uniform(lo, hi, size=2))
    # Degenerate draws are measure-zero but nudge anyway so area is positive.
    if xs[1] - xs[0] < 1e-6:
        xs[1] = min(xs[0] + 1e-3, hi)
        xs[0] = xs[1] - 1e-3
    if ys[1] - ys[0] < 1e-6:
        ys[1] = min(ys[0] + 1e-3, hi)
        ys[0] = ys[1] - 1e-3
    return Box(float(xs[0]), float(ys[0]), float(xs[1]), float(ys[1]))


def random_scored_boxes(rng, count: int, spread: float = 0.25) -> list[ScoredBox]:
    """Boxes clustered around a few anchors so suppression actually happens."""
    anchors = rng.uniform(0.2, 0.8, size=(max(1, count // 8 + 1), 2))
    out = []
    for _ in range(count):
        cx, cy = anchors[int(rng.integers(len(anchors)))]
        cx += float(rng.uniform(-spread, spread))
        cy += float(rng.uniform(-spread, spread))
        w = float(rng.uniform(0.05, 0.4))
        h = float(rng.uniform(0.05, 0.4))
        x1, x2 = sorted((min(max(cx - w / 2, 0.0), 1.0), min(max(cx + w / 2, 0.0), 1.0)))
        y1, y2 = sorted((min(max(cy - h / 2, 0.0), 1.0), min(max(cy + h / 2, 0.0), 1.0)))
        out.append(ScoredBox(Box(x1, y1, x2, y2), float(rng.uniform(0.0, 1.0))))
    return out


# --- gradient-check scaffolding shared by the head and acceptance tests ------

def gradient_check_scenes(rng, dim=5, n_tokens=3):
    """Two small scenes, each with one clear positive and one clear negative.

    The positive box overlaps its referent above the 0.5 matching band and the
    negative is disjoint, so labels are stable under parameter wiggles.
    """
    from videoground.head import ProposalCandidate, TrainScene

    scenes = []
    for _ in range(2):
        query = rng.normal(size=dim)
        query /= np.linalg.norm(query)
        gt = Box(0.3, 0.3, 0.62, 0.62)
        proposals = [
            ProposalCandidate(
                ScoredBox(Box(0.31, 0.3, 0.6, 0.63), 0.8),
                rng.normal(size=(n_tokens, dim)),
                rng.normal(size=dim),
            ),
            ProposalCandidate(
                ScoredBox(Box(0.05, 0.05, 0.15, 0.2), 0.4),
                rng.normal(size=(n_tokens, dim)),
                rng.normal(size=dim),
            ),
        ]
        scenes.append(TrainScene(query, proposals, [gt]))
    return scenes


def fd_kink_margin_ok(params, scenes, margin=1e-4):
    """True when every piecewise boundary (ReLU, clamp, corner-L1 kink) sits
    further than `margin` from the operating point, so +-1e-5 finite-difference
    probes stay on one smooth branch."""
    from videoground.geometry import apply_delta
    from videoground.head import attend, match_labels, refine

    for scene in scenes:
        q = scene.query
        labels, matched = match_labels(
            [c.scored_box.box for c in scene.proposals], scene.gt_boxes
        )
        for cand, label, gt in zip(scene.proposals, labels, matched):
            z = attend(q, cand.roi_tokens, params)
            v = np.concatenate([z, cand.g_vec, q])
            if np.abs(params.w_1 @ v + params.b_1).min() < margin:
                return False
            if np.abs(params.w_r1 @ v + params.b_r1).min() < margin:
                return False
            refined = apply_delta(cand.scored_box.box, refine(z, cand.g_vec, q, params))
            corners = np.array(refined.as_tuple())
            if corners.min() < margin or corners.max() > 1.0 - margin:
                return False
            if label == 1 and np.abs(corners - gt).min() < margin:
                return False
    return True


def safe_fd_params(scenes, dim, hidden, seed):
    """Seeded init, scaled down until the finite-difference probes are safe."""
    from videoground.head import HeadParams

    for attempt in range(5):
        for scale in (0.3, 0.25, 0.2, 0.15, 0.1):
            params = HeadParams.init(dim, hidden=hidden, seed=seed + 10_000 * attempt)
            flat = params.to_flat() * scale
            flat[-2:] = 1.0  # alpha and beta stay at their defaults
            params = params.from_flat(flat)
            if fd_kink_margin_ok(params, scenes):
                return params
    raise AssertionError(f"no kink-safe parameter draw for seed {seed}")
