"""Language-conditioned proposal filtration head.

A query embedding cross-attends over each proposal's ROI tokens; a small MLP
scores language alignment, a twin MLP regresses a center/size refinement, and
the language score is fused with detector objectness through a logit blend.
Training is plain full-batch gradient descent on hand-derived gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import Box, BoxDelta, ScoredBox, _giou_raw, apply_delta, iou
from .ioutil import FormatError, dump_json
from .losses import BCE_CLAMP

DEFAULT_TOP_M = 20
DEFAULT_TAU = 0.5
DEFAULT_LAMBDA_CLS = 1.0
DEFAULT_LAMBDA_BOX = 2.0

# (field, shape expressed in d/h symbols) in initialization draw order.
_PARAM_SHAPES = (
    ("w_q", ("d", "d")),
    ("w_k", ("d", "d")),
    ("w_v", ("d", "d")),
    ("w_1", ("h", "3d")),
    ("b_1", ("h",)),
    ("w_2", (1, "h")),
    ("b_2", (1,)),
    ("w_r1", ("h", "3d")),
    ("b_r1", ("h",)),
    ("w_r2", (4, "h")),
    ("b_r2", (4,)),
)


def _sigmoid(x):
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


class HeadParams:
    """All learnable state: attention maps, the two MLPs, and the fusion scalars."""

    def __init__(self, w_q, w_k, w_v, w_1, b_1, w_2, b_2, w_r1, b_r1, w_r2, b_r2,
                 alpha: float = 1.0, beta: float = 1.0):
        self.w_q = np.asarray(w_q, dtype=float)
        self.w_k = np.asarray(w_k, dtype=float)
        self.w_v = np.asarray(w_v, dtype=float)
        self.w_1 = np.asarray(w_1, dtype=float)
        self.b_1 = np.asarray(b_1, dtype=float)
        self.w_2 = np.asarray(w_2, dtype=float)
        self.b_2 = np.asarray(b_2, dtype=float)
        self.w_r1 = np.asarray(w_r1, dtype=float)
        self.b_r1 = np.asarray(b_r1, dtype=float)
        self.w_r2 = np.asarray(w_r2, dtype=float)
        self.b_r2 = np.asarray(b_r2, dtype=float)
        self.alpha = float(alpha)
        self.beta = float(beta)
        self._validate()

    def _validate(self):
        d = self.w_q.shape[0] if self.w_q.ndim == 2 else 0
        h = self.w_1.shape[0] if self.w_1.ndim == 2 else 0
        expected = {
            "w_q": (d, d), "w_k": (d, d), "w_v": (d, d),
            "w_1": (h, 3 * d), "b_1": (h,), "w_2": (1, h), "b_2": (1,),
            "w_r1": (h, 3 * d), "b_r1": (h,), "w_r2": (4, h), "b_r2": (4,),
        }
        if d < 1 or h < 1:
            raise ValueError("head dimensions must be positive")
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
        if not math.isfinite(self.alpha) or not math.isfinite(self.beta):
            raise ValueError("alpha and beta must be finite")

    @property
    def dim(self) -> int:
        return self.w_q.shape[0]

    @property
    def hidden(self) -> int:
        return self.w_1.shape[0]

    @classmethod
    def init(cls, dim: int, hidden: int | None = None, seed: int = 0) -> "HeadParams":
        """Maps drawn seeded uniform(-1/sqrt(dim), 1/sqrt(dim)); biases start at
        zero, which keeps the untrained refinement deltas small; alpha = beta = 1."""
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        hidden = dim if hidden is None else hidden
        if hidden < 1:
            raise ValueError(f"hidden must be >= 1, got {hidden}")
        rng = np.random.default_rng(seed)
        scale = 1.0 / math.sqrt(dim)
        sizes = {"d": dim, "3d": 3 * dim, "h": hidden}
        arrays = {}
        for name, shape in _PARAM_SHAPES:
            concrete = tuple(sizes.get(s, s) for s in shape)
            if name.startswith("b_"):
                arrays[name] = np.zeros(concrete)
            else:
                arrays[name] = rng.uniform(-scale, scale, size=concrete)
        return cls(**arrays, alpha=1.0, beta=1.0)

    def copy(self) -> "HeadParams":
        return HeadParams(
            *[getattr(self, name).copy() for name, _ in _PARAM_SHAPES],
            alpha=self.alpha, beta=self.beta,
        )

    def to_flat(self) -> np.ndarray:
        parts = [getattr(self, name).ravel() for name, _ in _PARAM_SHAPES]
        parts.append(np.array([self.alpha, self.beta]))
        return np.concatenate(parts)

    def from_flat(self, flat: np.ndarray) -> "HeadParams":
        """Rebuild params with this object's shapes from a flat vector."""
        flat = np.asarray(flat, dtype=float)
        expected = sum(getattr(self, name).size for name, _ in _PARAM_SHAPES) + 2
        if flat.ndim != 1 or flat.size != expected:
            raise ValueError(f"flat vector has {flat.size} entries, expected {expected}")
        arrays = []
        cursor = 0
        for name, _ in _PARAM_SHAPES:
            shape = getattr(self, name).shape
            size = int(np.prod(shape))
            arrays.append(flat[cursor:cursor + size].reshape(shape).copy())
            cursor += size
        return HeadParams(*arrays, alpha=float(flat[cursor]), beta=float(flat[cursor + 1]))


@dataclass
class ProposalCandidate:
    """A detector proposal with its pooled evidence: ROI tokens and a summary vector."""

    scored_box: ScoredBox
    roi_tokens: np.ndarray  # (n_tokens, dim)
    g_vec: np.ndarray  # (dim,)

    def __post_init__(self):
        self.roi_tokens = np.asarray(self.roi_tokens, dtype=float)
        self.g_vec = np.asarray(self.g_vec, dtype=float)
        if self.roi_tokens.ndim != 2 or self.roi_tokens.shape[0] < 1:
            raise ValueError(f"roi_tokens must be (n, dim) with n >= 1, got {self.roi_tokens.shape}")
        if self.g_vec.ndim != 1 or self.g_vec.shape[0] != self.roi_tokens.shape[1]:
            raise ValueError(
                f"g_vec shape {self.g_vec.shape} does not match token dim {self.roi_tokens.shape[1]}"
            )
        if not np.all(np.isfinite(self.roi_tokens)) or not np.all(np.isfinite(self.g_vec)):
            raise ValueError("candidate features contain non-finite values")


@dataclass(frozen=True)
class FilterDecision:
    proposal_index: int
    s_lang: float
    refined_box: Box
    s_final: float
    selected: bool

    def __post_init__(self):
        if not 0.0 <= self.s_lang <= 1.0:
            raise ValueError(f"s_lang must lie in [0, 1], got {self.s_lang}")
        if not 0.0 <= self.s_final <= 1.0:
            raise ValueError(f"s_final must lie in [0, 1], got {self.s_final}")


def _check_query(query: np.ndarray, dim: int) -> np.ndarray:
    q = np.asarray(query, dtype=float)
    if q.shape != (dim,):
        raise ValueError(f"query has shape {q.shape}, expected ({dim},)")
    if not np.all(np.isfinite(q)) or float(np.linalg.norm(q)) <= 0.0:
        raise ValueError("query must be finite with positive norm")
    return q


def attend(query, tokens, params: HeadParams) -> np.ndarray:
    """Single-query scaled dot-product attention over one proposal's tokens."""
    q = _check_query(query, params.dim)
    toks = np.asarray(tokens, dtype=float)
    if toks.ndim != 2 or toks.shape[0] < 1 or toks.shape[1] != params.dim:
        raise ValueError(f"tokens must be (n, {params.dim}) with n >= 1, got {toks.shape}")
    qp = params.w_q @ q
    keys = toks @ params.w_k.T
    values = toks @ params.w_v.T
    logits = keys @ qp / math.sqrt(params.dim)
    logits -= logits.max()
    weights = np.exp(logits)
    weights /= weights.sum()
    return weights @ values


def _joint_vector(z_pool, g_vec, query, params: HeadParams) -> np.ndarray:
    z = np.asarray(z_pool, dtype=float)
    g = np.asarray(g_vec, dtype=float)
    q = np.asarray(query, dtype=float)
    for name, vec in (("z_pool", z), ("g_vec", g), ("query", q)):
        if vec.shape != (params.dim,):
            raise ValueError(f"{name} has shape {vec.shape}, expected ({params.dim},)")
    return np.concatenate([z, g, q])


def score(z_pool, g_vec, query, params: HeadParams) -> float:
    """Language-alignment confidence in (0, 1) from the joint evidence vector."""
    v = _joint_vector(z_pool, g_vec, query, params)
    hidden = np.maximum(params.w_1 @ v + params.b_1, 0.0)
    return float(_sigmoid(params.w_2 @ hidden + params.b_2)[0])


def refine(z_pool, g_vec, query, params: HeadParams) -> BoxDelta:
    """Center/size refinement offsets from the joint evidence vector."""
    v = _joint_vector(z_pool, g_vec, query, params)
    hidden = np.maximum(params.w_r1 @ v + params.b_r1, 0.0)
    out = params.w_r2 @ hidden + params.b_r2
    return BoxDelta(*[float(x) for x in out])


def fuse_score(s_lang: float, p_det: float, alpha: float = 1.0, beta: float = 1.0) -> float:
    """Blend the language score with detector objectness: sigmoid(a*s + b*logit(p))."""
    if not 0.0 <= s_lang <= 1.0:
        raise ValueError(f"s_lang must lie in [0, 1], got {s_lang}")
    if not 0.0 <= p_det <= 1.0:
        raise ValueError(f"p_det must lie in [0, 1], got {p_det}")
    p = min(max(p_det, 1e-6), 1.0 - 1e-6)
    return float(_sigmoid(np.array(alpha * s_lang + beta * math.log(p / (1.0 - p)))))


@dataclass
class HeadOutput:
    """Per-proposal forward results used for the loss: score, delta, refined box."""

    s_lang: float
    delta: BoxDelta
    refined_box: Box


def head_outputs(query, proposals: Sequence[ProposalCandidate], params: HeadParams) -> list[HeadOutput]:
    """Score and refine every proposal (no top-M cut; the training-time forward)."""
    q = _check_query(query, params.dim)
    outputs = []
    for cand in proposals:
        z = attend(q, cand.roi_tokens, params)
        s = score(z, cand.g_vec, q, params)
        delta = refine(z, cand.g_vec, q, params)
        outputs.append(HeadOutput(s, delta, apply_delta(cand.scored_box.box, delta)))
    return outputs


def run_head(
    query,
    proposals: Sequence[ProposalCandidate],
    params: HeadParams,
    top_m: int = DEFAULT_TOP_M,
    tau: float = DEFAULT_TAU,
) -> list[FilterDecision]:
    """Inference pipeline: score all proposals, refine the top-M by language
    score, fuse with objectness, and flag survivors above tau.

    Decisions come back sorted by fused score, descending; ties keep input
    order. Proposals are assumed already objectness-filtered and NMS'd.
    """
    if top_m < 1:
        raise ValueError(f"top_m must be >= 1, got {top_m}")
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    if not proposals:
        return []
    q = _check_query(query, params.dim)
    scores = []
    pooled = []
    for cand in proposals:
        z = attend(q, cand.roi_tokens, params)
        pooled.append(z)
        scores.append(score(z, cand.g_vec, q, params))
    ranked = sorted(range(len(proposals)), key=lambda i: -scores[i])[:top_m]
    decisions = []
    for idx in sorted(ranked):
        cand = proposals[idx]
        delta = refine(pooled[idx], cand.g_vec, q, params)
        refined = apply_delta(cand.scored_box.box, delta)
        fused = fuse_score(scores[idx], cand.scored_box.score, params.alpha, params.beta)
        decisions.append(
            FilterDecision(idx, scores[idx], refined, fused, fused > tau)
        )
    return sorted(decisions, key=lambda dec: -dec.s_final)


@dataclass
class TrainScene:
    """One supervised frame: a query, its candidate proposals, and referent boxes."""

    query: np.ndarray
    proposals: list[ProposalCandidate]
    gt_boxes: list[Box]

    def __post_init__(self):
        self.query = np.asarray(self.query, dtype=float)
        if not self.proposals:
            raise ValueError("a training scene needs at least one proposal")


def match_labels(proposal_boxes: Sequence[Box], gt_boxes: Sequence[Box]) -> tuple[np.ndarray, np.ndarray]:
    """Label proposals by best IoU against ground truth.

    Returns (labels, matched) where labels are +1 (IoU > 0.5), 0 (IoU < 0.2),
    or -1 (ignore band), and matched holds each proposal's best gt corners.
    With no ground truth everything is negative.
    """
    count = len(proposal_boxes)
    labels = np.zeros(count, dtype=int)
    matched = np.zeros((count, 4), dtype=float)
    if not gt_boxes:
        return labels, matched
    for i, pbox in enumerate(proposal_boxes):
        overlaps = [iou(pbox, g) for g in gt_boxes]
        best = int(np.argmax(overlaps))
        best_iou = overlaps[best]
        matched[i] = gt_boxes[best].as_tuple()
        if best_iou > 0.5:
            labels[i] = 1
        elif best_iou >= 0.2:
            labels[i] = -1
    return labels, matched


def filter_loss(
    outputs: Sequence[HeadOutput],
    proposals: Sequence[ProposalCandidate],
    gt_boxes: Sequence[Box],
    lambda_cls: float = DEFAULT_LAMBDA_CLS,
    lambda_box: float = DEFAULT_LAMBDA_BOX,
) -> tuple[float, dict]:
    """Filtration objective for one scene.

    Classification: mean BCE of the language score against the IoU-band label,
    over non-ignored proposals. Box terms: mean corner L1 and mean GIoU loss of
    positives' refined boxes against their matched ground truth.

    Returns (total, breakdown) with breakdown keys cls, l1, giou, total.
    """
    if len(outputs) != len(proposals):
        raise ValueError(f"{len(outputs)} outputs for {len(proposals)} proposals")
    labels, matched = match_labels([c.scored_box.box for c in proposals], gt_boxes)
    cls_terms = []
    l1_terms = []
    giou_terms = []
    for out, label, gt in zip(outputs, labels, matched):
        if label < 0:
            continue
        p = min(max(out.s_lang, BCE_CLAMP), 1.0 - BCE_CLAMP)
        t = float(label)
        cls_terms.append(-(t * math.log(p) + (1.0 - t) * math.log(1.0 - p)))
        if label == 1:
            ref = np.array(out.refined_box.as_tuple())
            l1_terms.append(float(np.abs(ref - gt).mean()))
            giou_terms.append(1.0 - _giou_raw(out.refined_box, Box(*gt)))
    cls = float(np.mean(cls_terms)) if cls_terms else 0.0
    l1 = float(np.mean(l1_terms)) if l1_terms else 0.0
    giou_loss = float(np.mean(giou_terms)) if giou_terms else 0.0
    total = lambda_cls * cls + lambda_box * (l1 + giou_loss)
    return total, {"cls": cls, "l1": l1, "giou": giou_loss, "total": total}


# ---------------------------------------------------------------------------
# Packed batch training path. Scenes are grouped by (proposal count, token
# count) so each group runs as one vectorized forward/backward.
# ---------------------------------------------------------------------------


def _giou_value_grad(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """GIoU of corner arrays a, b (..., 4) and its gradient in a's coordinates.

    Degenerate pairs (empty union or enclosure) get value 0 with zero gradient;
    a zero-area box against a regular one still produces a useful gradient.
    """
    ax1, ay1, ax2, ay2 = (a[..., i] for i in range(4))
    bx1, by1, bx2, by2 = (b[..., i] for i in range(4))
    aw, ah = ax2 - ax1, ay2 - ay1
    area_a = aw * ah
    area_b = (bx2 - bx1) * (by2 - by1)
    iw = np.minimum(ax2, bx2) - np.maximum(ax1, bx1)
    ih = np.minimum(ay2, by2) - np.maximum(ay1, by1)
    has_inter = (iw > 0) & (ih > 0)
    inter = np.where(has_inter, iw * ih, 0.0)
    union = area_a + area_b - inter
    cw = np.maximum(ax2, bx2) - np.minimum(ax1, bx1)
    ch = np.maximum(ay2, by2) - np.minimum(ay1, by1)
    enclosure = cw * ch
    valid = (union > 0) & (enclosure > 0)
    safe_u = np.where(valid, union, 1.0)
    safe_c = np.where(valid, enclosure, 1.0)
    value = np.where(valid, inter / safe_u - (enclosure - union) / safe_c, 0.0)

    d_area = np.stack([-ah, -aw, ah, aw], axis=-1)
    gate_i = np.stack(
        [-(ih) * (ax1 > bx1), -(iw) * (ay1 > by1), ih * (ax2 < bx2), iw * (ay2 < by2)],
        axis=-1,
    )
    d_inter = np.where(has_inter[..., None], gate_i, 0.0)
    d_union = d_area - d_inter
    d_encl = np.stack(
        [-(ch) * (ax1 < bx1), -(cw) * (ay1 < by1), ch * (ax2 > bx2), cw * (ay2 > by2)],
        axis=-1,
    )
    u = safe_u[..., None]
    c = safe_c[..., None]
    grad = d_inter / u - inter[..., None] * d_union / u**2 + d_union / c - union[..., None] * d_encl / c**2
    grad = np.where(valid[..., None], grad, 0.0)
    return value, grad


def _apply_delta_batch(boxes: np.ndarray, deltas: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized apply_delta with the Jacobian of output corners in the deltas.

    Returns (refined (..., 4), jacobian (..., 4, 4), saturated (...)) where
    saturated marks boxes that hit the unit-square clamp or collapsed.
    """
    x1, y1, x2, y2 = (boxes[..., i] for i in range(4))
    dcx, dcy, dw, dh = (deltas[..., i] for i in range(4))
    cx = (x1 + x2) / 2.0 + dcx
    cy = (y1 + y2) / 2.0 + dcy
    w = (x2 - x1) + dw
    h = (y2 - y1) + dh
    raw = np.stack([cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0], axis=-1)
    clamped = np.clip(raw, 0.0, 1.0)
    active = (raw > 0.0) & (raw < 1.0)  # pass-through gradient only off the clamp

    inv_x = clamped[..., 0] > clamped[..., 2]
    inv_y = clamped[..., 1] > clamped[..., 3]
    mid_x = (clamped[..., 0] + clamped[..., 2]) / 2.0
    mid_y = (clamped[..., 1] + clamped[..., 3]) / 2.0
    refined = clamped.copy()
    refined[..., 0] = np.where(inv_x, mid_x, clamped[..., 0])
    refined[..., 2] = np.where(inv_x, mid_x, clamped[..., 2])
    refined[..., 1] = np.where(inv_y, mid_y, clamped[..., 1])
    refined[..., 3] = np.where(inv_y, mid_y, clamped[..., 3])

    jac = np.zeros(boxes.shape[:-1] + (4, 4))
    a_x1, a_y1, a_x2, a_y2 = (active[..., i].astype(float) for i in range(4))
    # Columns: (dcx, dcy, dw, dh). x rows touch dcx/dw, y rows touch dcy/dh.
    x1_cx, x1_w = a_x1, -0.5 * a_x1
    x2_cx, x2_w = a_x2, 0.5 * a_x2
    y1_cy, y1_h = a_y1, -0.5 * a_y1
    y2_cy, y2_h = a_y2, 0.5 * a_y2
    mid_cx, mid_w = (x1_cx + x2_cx) / 2.0, (x1_w + x2_w) / 2.0
    mid_cy, mid_h = (y1_cy + y2_cy) / 2.0, (y1_h + y2_h) / 2.0
    jac[..., 0, 0] = np.where(inv_x, mid_cx, x1_cx)
    jac[..., 0, 2] = np.where(inv_x, mid_w, x1_w)
    jac[..., 2, 0] = np.where(inv_x, mid_cx, x2_cx)
    jac[..., 2, 2] = np.where(inv_x, mid_w, x2_w)
    jac[..., 1, 1] = np.where(inv_y, mid_cy, y1_cy)
    jac[..., 1, 3] = np.where(inv_y, mid_h, y1_h)
    jac[..., 3, 1] = np.where(inv_y, mid_cy, y2_cy)
    jac[..., 3, 3] = np.where(inv_y, mid_h, y2_h)
    saturated = ~active.all(axis=-1) | inv_x | inv_y
    return refined, jac, saturated


class _PackedGroup:
    """Scenes sharing one (proposal count, token count) shape, stacked."""

    def __init__(self, scenes: list[TrainScene], dim: int):
        self.queries = np.stack([s.query for s in scenes])
        self.tokens = np.stack([np.stack([c.roi_tokens for c in s.proposals]) for s in scenes])
        self.g = np.stack([np.stack([c.g_vec for c in s.proposals]) for s in scenes])
        self.pboxes = np.stack(
            [np.array([c.scored_box.box.as_tuple() for c in s.proposals]) for s in scenes]
        )
        labels = []
        matched = []
        for s in scenes:
            lab, mat = match_labels([c.scored_box.box for c in s.proposals], s.gt_boxes)
            labels.append(lab)
            matched.append(mat)
        self.labels = np.stack(labels)
        self.matched = np.stack(matched)
        if self.queries.shape[1] != dim or self.tokens.shape[3] != dim:
            raise ValueError("scene feature dim does not match head dim")


def _forward_group(params: HeadParams, grp: _PackedGroup) -> dict:
    d = params.dim
    sqrt_d = math.sqrt(d)
    qp = grp.queries @ params.w_q.T  # (S, d)
    keys = grp.tokens @ params.w_k.T  # (S, P, n, d)
    values = grp.tokens @ params.w_v.T
    logits = np.einsum("spnd,sd->spn", keys, qp) / sqrt_d
    logits = logits - logits.max(axis=-1, keepdims=True)
    weights = np.exp(logits)
    weights = weights / weights.sum(axis=-1, keepdims=True)
    z = np.einsum("spn,spnd->spd", weights, values)
    s_count, p_count = z.shape[0], z.shape[1]
    qb = np.broadcast_to(grp.queries[:, None, :], (s_count, p_count, d))
    v = np.concatenate([z, grp.g, qb], axis=-1)  # (S, P, 3d)
    h1 = v @ params.w_1.T + params.b_1
    r1 = np.maximum(h1, 0.0)
    o = (r1 @ params.w_2.T + params.b_2)[..., 0]  # (S, P)
    s_lang = _sigmoid(o)
    h2 = v @ params.w_r1.T + params.b_r1
    r2 = np.maximum(h2, 0.0)
    delta = r2 @ params.w_r2.T + params.b_r2  # (S, P, 4)
    refined, jac, saturated = _apply_delta_batch(grp.pboxes, delta)
    giou_val, giou_grad = _giou_value_grad(refined, grp.matched)
    return {
        "qp": qp, "keys": keys, "values": values, "weights": weights, "z": z,
        "v": v, "h1": h1, "r1": r1, "o": o, "s_lang": s_lang,
        "h2": h2, "r2": r2, "delta": delta, "refined": refined, "jac": jac,
        "saturated": saturated, "giou_val": giou_val, "giou_grad": giou_grad,
    }


def _group_loss_terms(grp: _PackedGroup, cache: dict) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-scene (cls, l1, giou-loss) means; empty denominators give zero terms."""
    labels = grp.labels
    ni = labels >= 0
    pos = labels == 1
    n_ni = np.maximum(ni.sum(axis=1), 1)
    n_pos = np.maximum(pos.sum(axis=1), 1)
    p = np.clip(cache["s_lang"], BCE_CLAMP, 1.0 - BCE_CLAMP)
    t = (labels == 1).astype(float)
    bce_elem = -(t * np.log(p) + (1.0 - t) * np.log(1.0 - p))
    cls = (bce_elem * ni).sum(axis=1) / n_ni
    l1_elem = np.abs(cache["refined"] - grp.matched).mean(axis=-1)
    l1 = (l1_elem * pos).sum(axis=1) / n_pos
    giou_loss = ((1.0 - cache["giou_val"]) * pos).sum(axis=1) / n_pos
    return cls, l1, giou_loss


def _backward_group(
    params: HeadParams,
    grp: _PackedGroup,
    cache: dict,
    lambda_cls: float,
    lambda_box: float,
    scene_scale: float,
) -> dict:
    """Gradients of (scene_scale * sum of per-scene losses) for one group."""
    labels = grp.labels
    ni = labels >= 0
    pos = labels == 1
    n_ni = np.maximum(ni.sum(axis=1), 1)[:, None]
    n_pos = np.maximum(pos.sum(axis=1), 1)[:, None]
    s_lang = cache["s_lang"]
    unclamped = (s_lang > BCE_CLAMP) & (s_lang < 1.0 - BCE_CLAMP)
    t = (labels == 1).astype(float)
    do = lambda_cls * scene_scale * (s_lang - t) / n_ni * (ni & unclamped)  # (S, P)

    w_box = lambda_box * scene_scale / n_pos * pos  # (S, P)
    sign = np.sign(cache["refined"] - grp.matched)
    d_refined = w_box[..., None] * (sign / 4.0 - cache["giou_grad"])
    d_delta = np.einsum("spoi,spo->spi", cache["jac"], d_refined)

    r1, h1, v = cache["r1"], cache["h1"], cache["v"]
    r2, h2 = cache["r2"], cache["h2"]
    grads = {}
    grads["w_2"] = np.einsum("sp,sph->h", do, r1)[None, :]
    grads["b_2"] = np.array([do.sum()])
    dh1 = (do[..., None] * params.w_2[0]) * (h1 > 0)
    grads["w_1"] = np.einsum("sph,spv->hv", dh1, v)
    grads["b_1"] = dh1.sum(axis=(0, 1))
    dv = np.einsum("sph,hv->spv", dh1, params.w_1)

    grads["w_r2"] = np.einsum("spo,sph->oh", d_delta, r2)
    grads["b_r2"] = d_delta.sum(axis=(0, 1))
    dh2 = np.einsum("spo,oh->sph", d_delta, params.w_r2) * (h2 > 0)
    grads["w_r1"] = np.einsum("sph,spv->hv", dh2, v)
    grads["b_r1"] = dh2.sum(axis=(0, 1))
    dv += np.einsum("sph,hv->spv", dh2, params.w_r1)

    d = params.dim
    dz = dv[..., :d]
    weights, values, keys, qp = cache["weights"], cache["values"], cache["keys"], cache["qp"]
    dweights = np.einsum("spd,spnd->spn", dz, values)
    dvalues = weights[..., None] * dz[:, :, None, :]
    du = weights * (dweights - (weights * dweights).sum(axis=-1, keepdims=True))
    sqrt_d = math.sqrt(d)
    dkeys = du[..., None] * qp[:, None, None, :] / sqrt_d
    dqp = np.einsum("spn,spnd->sd", du, keys) / sqrt_d
    grads["w_k"] = np.einsum("spno,spni->oi", dkeys, grp.tokens)
    grads["w_v"] = np.einsum("spno,spni->oi", dvalues, grp.tokens)
    grads["w_q"] = np.einsum("so,si->oi", dqp, grp.queries)
    return grads


def grad(
    params: HeadParams,
    scenes: Sequence[TrainScene],
    lambda_cls: float = DEFAULT_LAMBDA_CLS,
    lambda_box: float = DEFAULT_LAMBDA_BOX,
) -> tuple[float, dict, HeadParams]:
    """Batch loss (mean of per-scene filtration losses) and its full gradient.

    Returns (loss, breakdown, gradients) with gradients carried in a
    HeadParams-shaped container; alpha and beta do not enter the loss, so their
    entries are zero.
    """
    scenes = list(scenes)
    if not scenes:
        raise ValueError("grad needs at least one scene")
    packed = _pack_scenes(scenes, params.dim)
    return _grad_packed(params, packed, len(scenes), lambda_cls, lambda_box)


def _pack_scenes(scenes: Sequence[TrainScene], dim: int) -> list[_PackedGroup]:
    """Group scenes by (proposal count, token count) and stack each group once."""
    groups: dict[tuple[int, int], list[TrainScene]] = {}
    for scene in scenes:
        key = (len(scene.proposals), scene.proposals[0].roi_tokens.shape[0])
        groups.setdefault(key, []).append(scene)
    return [_PackedGroup(group, dim) for group in groups.values()]


def _grad_packed(
    params: HeadParams,
    packed: Sequence[_PackedGroup],
    n_scenes: int,
    lambda_cls: float,
    lambda_box: float,
) -> tuple[float, dict, HeadParams]:
    scale = 1.0 / n_scenes
    totals = {"cls": 0.0, "l1": 0.0, "giou": 0.0}
    acc = {name: np.zeros_like(getattr(params, name)) for name, _ in _PARAM_SHAPES}
    for grp in packed:
        cache = _forward_group(params, grp)
        cls, l1, giou_loss = _group_loss_terms(grp, cache)
        totals["cls"] += float(cls.sum())
        totals["l1"] += float(l1.sum())
        totals["giou"] += float(giou_loss.sum())
        for name, g in _backward_group(params, grp, cache, lambda_cls, lambda_box, scale).items():
            acc[name] += g
    breakdown = {k: v * scale for k, v in totals.items()}
    breakdown["total"] = lambda_cls * breakdown["cls"] + lambda_box * (
        breakdown["l1"] + breakdown["giou"]
    )
    grads = HeadParams(*[acc[name] for name, _ in _PARAM_SHAPES], alpha=0.0, beta=0.0)
    return breakdown["total"], breakdown, grads


def batch_loss(
    params: HeadParams,
    scenes: Sequence[TrainScene],
    lambda_cls: float = DEFAULT_LAMBDA_CLS,
    lambda_box: float = DEFAULT_LAMBDA_BOX,
) -> float:
    """Mean per-scene filtration loss without gradients (finite-difference hook)."""
    scenes = list(scenes)
    if not scenes:
        raise ValueError("batch_loss needs at least one scene")
    total = 0.0
    for grp in _pack_scenes(scenes, params.dim):
        cache = _forward_group(params, grp)
        cls, l1, giou_loss = _group_loss_terms(grp, cache)
        total += lambda_cls * float(cls.sum()) + lambda_box * (float(l1.sum()) + float(giou_loss.sum()))
    return total / len(scenes)


def refinement_saturated(params: HeadParams, scenes: Sequence[TrainScene]) -> bool:
    """True when any refined box in the batch hit the clamp or collapsed."""
    for scene in scenes:
        grp = _PackedGroup([scene], params.dim)
        cache = _forward_group(params, grp)
        if bool(cache["saturated"].any()):
            return True
    return False


@dataclass
class TrainConfig:
    steps: int = 500
    lr: float = 0.05
    seed: int = 7
    hidden: int | None = None
    lambda_cls: float = DEFAULT_LAMBDA_CLS
    lambda_box: float = DEFAULT_LAMBDA_BOX

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")
        if not math.isfinite(self.lr) or self.lr < 0.0:
            raise ValueError(f"lr must be finite and >= 0, got {self.lr}")


def train(scenes: Sequence[TrainScene], config: TrainConfig | None = None) -> tuple[HeadParams, list[float]]:
    """Full-batch gradient descent from a seeded initialization.

    Records the loss at the start of every step (before its update) and aborts
    on a non-finite loss. Zero steps returns the untouched initialization.
    """
    config = config or TrainConfig()
    scenes = list(scenes)
    if not scenes:
        raise ValueError("train needs at least one scene")
    dim = int(np.asarray(scenes[0].query).shape[0])
    params = HeadParams.init(dim, hidden=config.hidden, seed=config.seed)
    packed = _pack_scenes(scenes, dim)
    losses: list[float] = []
    for step in range(config.steps):
        loss, _, grads = _grad_packed(params, packed, len(scenes), config.lambda_cls, config.lambda_box)
        if not math.isfinite(loss):
            raise RuntimeError(f"training diverged: non-finite loss at step {step}")
        losses.append(loss)
        flat = params.to_flat() - config.lr * grads.to_flat()
        params = params.from_flat(flat)
    return params, losses


def save_head(path, params: HeadParams) -> None:
    """Write a HEAD v1 JSON checkpoint: shape headers plus flat row-major data."""
    maps = {}
    for name, _ in _PARAM_SHAPES:
        arr = getattr(params, name)
        maps[name] = {"shape": list(arr.shape), "data": [float(x) for x in arr.ravel()]}
    payload = {
        "format": "HEAD v1",
        "dim": params.dim,
        "hidden": params.hidden,
        "alpha": params.alpha,
        "beta": params.beta,
        "maps": maps,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_json(payload) + "\n")


def load_head(path) -> HeadParams:
    """Read a HEAD v1 checkpoint back into params, validating shapes."""
    import json

    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"line {exc.lineno}: invalid JSON: {exc.msg}") from None
    if not isinstance(payload, dict) or payload.get("format") != "HEAD v1":
        raise FormatError("missing or unsupported checkpoint format tag")
    try:
        maps = payload["maps"]
        arrays = []
        for name, _ in _PARAM_SHAPES:
            entry = maps[name]
            shape = tuple(entry["shape"])
            data = np.array(entry["data"], dtype=float)
            if data.size != int(np.prod(shape)):
                raise FormatError(f"map {name}: {data.size} values for shape {shape}")
            arrays.append(data.reshape(shape))
        params = HeadParams(*arrays, alpha=float(payload["alpha"]), beta=float(payload["beta"]))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"malformed checkpoint: {exc}") from None
    if params.dim != payload.get("dim") or params.hidden != payload.get("hidden"):
        raise FormatError("checkpoint dim/hidden headers disagree with map shapes")
    return params
