"""Closed-form latency model for the tracked-feature prompting pipeline.

Overhead grows affinely with targets x frames: a fixed detection pass plus
per-target-per-frame tracking and crop encoding, with small per-target token
terms. All figures are seconds.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Scenario:
    """A workload: n tracked targets over a T-frame clip, plus difficulty flags."""

    targets: int
    frames: int
    fast_motion: bool = False
    occlusion: bool = False
    small_target: bool = False
    crowded: bool = False
    short_simple: bool = False

    def __post_init__(self):
        if self.targets < 0:
            raise ValueError(f"targets must be >= 0, got {self.targets}")
        if self.frames < 0:
            raise ValueError(f"frames must be >= 0, got {self.frames}")


@dataclass(frozen=True)
class CostEntry:
    """One pipeline component: a per-unit latency and how its unit count scales."""

    name: str
    per_unit_s: float
    count_kind: str  # "one" | "targets_x_frames" | "targets" | "tokens"

    def __post_init__(self):
        if self.per_unit_s < 0.0:
            raise ValueError(f"per-unit latency must be >= 0, got {self.per_unit_s}")
        if self.count_kind not in _COUNT_KINDS:
            raise ValueError(f"unknown count kind {self.count_kind!r}")

    def count(self, s: Scenario) -> int:
        return _COUNT_KINDS[self.count_kind](s)

    def seconds(self, s: Scenario) -> float:
        return self.per_unit_s * self.count(s)


_COUNT_KINDS = {
    "one": lambda s: 1,
    "targets_x_frames": lambda s: s.targets * s.frames,
    "targets": lambda s: s.targets,
    "tokens": lambda s: 4 * s.targets,  # four appended tokens per target
}

# Per-unit figures: 90 ms detection once; 18 ms tracking and 2 ms crop encoding
# per target-frame; clustering is sub-millisecond and carried as zero; token
# projection 0.1 ms and decoding 0.75 ms per appended token.
DEFAULT_COST_TABLE = (
    CostEntry("first-frame detection", 0.090, "one"),
    CostEntry("per-frame tracking", 0.018, "targets_x_frames"),
    CostEntry("crop feature encoding", 0.002, "targets_x_frames"),
    CostEntry("representative clustering", 0.0, "targets"),
    CostEntry("token projection", 0.0001, "tokens"),
    CostEntry("extra decoder tokens", 0.00075, "tokens"),
)


def component_breakdown(s: Scenario, table=DEFAULT_COST_TABLE) -> list[tuple[str, float]]:
    """Per-component seconds for a scenario, in table order."""
    return [(entry.name, entry.seconds(s)) for entry in table]


def total_overhead(s: Scenario) -> float:
    """Headline overhead in seconds: 0.093 + 0.020 * targets * frames.

    Computed in integer milliseconds so the affine form is exact.
    """
    return (93 + 20 * s.targets * s.frames) / 1000.0


RECOMMEND_OFF = "off"
RECOMMEND_IF_CRITICAL = "enable_if_accuracy_critical"
RECOMMEND_ENABLE = "enable"

_RANKS = {RECOMMEND_OFF: 0, RECOMMEND_IF_CRITICAL: 1, RECOMMEND_ENABLE: 2}


def recommend_tracking_prompts(s: Scenario) -> str:
    """Advise whether tracked-feature prompting pays off for a scenario.

    Occlusion or crowding warrants it outright; fast motion or small fragile
    targets justify it only when accuracy is critical; short simple clips skip
    it. The strongest applicable advice wins.
    """
    rank = _RANKS[RECOMMEND_OFF]
    if s.fast_motion or s.small_target:
        rank = max(rank, _RANKS[RECOMMEND_IF_CRITICAL])
    if s.occlusion or s.crowded:
        rank = max(rank, _RANKS[RECOMMEND_ENABLE])
    for name, value in _RANKS.items():
        if value == rank:
            return name
    raise AssertionError("unreachable")
