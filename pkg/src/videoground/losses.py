"""Training objectives: binary cross-entropy, Dice overlap, and their mask and
proposal combinations."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .geometry import Box, giou

BCE_CLAMP = 1e-7
DICE_EPS = 1.0


def bce(pred, target) -> float:
    """Mean binary cross-entropy; probabilities are clamped away from 0 and 1."""
    p = np.asarray(pred, dtype=float).ravel()
    t = np.asarray(target, dtype=float).ravel()
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: pred {p.shape} vs target {t.shape}")
    if p.size == 0:
        raise ValueError("bce needs at least one element")
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise ValueError("predictions must lie in [0, 1]")
    if np.any((t != 0.0) & (t != 1.0)):
        raise ValueError("targets must be binary")
    p = np.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)
    return float(-(t * np.log(p) + (1.0 - t) * np.log(1.0 - p)).mean())


def dice(pred, target, eps: float = DICE_EPS) -> float:
    """Soft Dice loss: 1 - (2 * overlap + eps) / (mass + eps)."""
    p = np.asarray(pred, dtype=float).ravel()
    t = np.asarray(target, dtype=float).ravel()
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: pred {p.shape} vs target {t.shape}")
    if p.size == 0:
        raise ValueError("dice needs at least one element")
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise ValueError("predictions must lie in [0, 1]")
    overlap = float((p * t).sum())
    mass = float(p.sum() + t.sum())
    if eps <= 0.0 and mass <= 0.0:
        return 0.0
    return 1.0 - (2.0 * overlap + eps) / (mass + eps)


def mask_loss(pred, target) -> float:
    """Segmentation objective: BCE plus Dice."""
    return bce(pred, target) + dice(pred, target)


def box_l1(a: Box, b: Box) -> float:
    """Mean absolute corner-coordinate difference between two boxes."""
    return float(
        sum(abs(x - y) for x, y in zip(a.as_tuple(), b.as_tuple())) / 4.0
    )


def prop_loss(
    pred_obj,
    gt_obj,
    pred_boxes: Sequence[Box],
    gt_boxes: Sequence[Box],
    lambda_l1: float = 1.0,
    lambda_giou: float = 1.0,
) -> float:
    """Proposal objective: objectness BCE plus weighted L1 and GIoU box terms.

    Box lists are caller-matched pairs and may be empty (box terms vanish);
    the objectness arrays must be nonempty.
    """
    if len(pred_boxes) != len(gt_boxes):
        raise ValueError(f"{len(pred_boxes)} predicted boxes vs {len(gt_boxes)} ground truth")
    total = bce(pred_obj, gt_obj)
    if pred_boxes:
        l1 = float(np.mean([box_l1(p, g) for p, g in zip(pred_boxes, gt_boxes)]))
        giou_term = float(np.mean([1.0 - giou(p, g) for p, g in zip(pred_boxes, gt_boxes)]))
        total += lambda_l1 * l1 + lambda_giou * giou_term
    return total
