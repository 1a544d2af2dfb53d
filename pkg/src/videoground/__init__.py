"""Numerical core for referring-video grounding experiments.

Pure numpy/scipy: box geometry and NMS, multi-scale ROI pooling, tracked-
feature representative selection, a language-conditioned proposal filtration
head with analytic gradients and a deterministic trainer, region/boundary
video metrics, trajectory corruption operators, a latency cost model, and a
synthetic-scene experiment harness.
"""

from .ablation import HarnessConfig, ResultRow, render_results_csv, run_ablation
from .clustering import KMeansResult, kmeans
from .costmodel import (
    DEFAULT_COST_TABLE,
    CostEntry,
    Scenario,
    component_breakdown,
    recommend_tracking_prompts,
    total_overhead,
)
from .features import (
    FeatureMap,
    FeaturePyramid,
    PooledRoi,
    aggregate_pool,
    assign_level,
    pool_pyramid,
    read_feature_matrix,
    roi_align,
    write_feature_matrix,
)
from .geometry import Box, BoxDelta, ScoredBox, apply_delta, clamp_box, giou, iou, nms
from .head import (
    FilterDecision,
    HeadParams,
    ProposalCandidate,
    TrainConfig,
    TrainScene,
    filter_loss,
    fuse_score,
    load_head,
    run_head,
    save_head,
    train,
)
from .ioutil import FormatError
from .losses import bce, box_l1, dice, mask_loss, prop_loss
from .masks import MaskFrame, MaskVideo, rasterize_box, read_mask_video, write_mask_video
from .metrics import (
    MetricReport,
    f_measure,
    j_measure,
    miou,
    oracle_recall,
    render_report_csv,
    sequence_eval,
)
from .selection import (
    JointFeature,
    ProjectionMap,
    TokenSet,
    build_joint_features,
    emit_tokens,
    select_representatives,
)
from .synth import SceneConfig, SyntheticScene, gen_scenes, query_projection
from .trajectories import (
    Trajectory,
    TrajectoryPoint,
    corrupt_dropout,
    corrupt_id_switch,
    corrupt_jitter,
    iou_clean,
    read_trajectories,
    write_trajectories,
)

__version__ = "0.1.0"

__all__ = [
    "Box",
    "BoxDelta",
    "CostEntry",
    "DEFAULT_COST_TABLE",
    "FeatureMap",
    "FeaturePyramid",
    "FilterDecision",
    "FormatError",
    "HarnessConfig",
    "HeadParams",
    "JointFeature",
    "KMeansResult",
    "MaskFrame",
    "MaskVideo",
    "MetricReport",
    "PooledRoi",
    "ProjectionMap",
    "ProposalCandidate",
    "ResultRow",
    "Scenario",
    "SceneConfig",
    "ScoredBox",
    "SyntheticScene",
    "TokenSet",
    "TrainConfig",
    "TrainScene",
    "Trajectory",
    "TrajectoryPoint",
    "aggregate_pool",
    "apply_delta",
    "assign_level",
    "bce",
    "box_l1",
    "build_joint_features",
    "clamp_box",
    "component_breakdown",
    "corrupt_dropout",
    "corrupt_id_switch",
    "corrupt_jitter",
    "dice",
    "emit_tokens",
    "f_measure",
    "filter_loss",
    "fuse_score",
    "gen_scenes",
    "giou",
    "iou",
    "iou_clean",
    "j_measure",
    "kmeans",
    "load_head",
    "mask_loss",
    "miou",
    "nms",
    "oracle_recall",
    "pool_pyramid",
    "prop_loss",
    "query_projection",
    "rasterize_box",
    "read_feature_matrix",
    "read_mask_video",
    "read_trajectories",
    "recommend_tracking_prompts",
    "render_report_csv",
    "render_results_csv",
    "roi_align",
    "run_ablation",
    "run_head",
    "save_head",
    "select_representatives",
    "sequence_eval",
    "total_overhead",
    "train",
    "write_feature_matrix",
    "write_mask_video",
    "write_trajectories",
]
