"""Tiered perceptual ranking benchmark and annotation analytics.

Tier clips by a ranking key, sample (High, Medium, Low) triplets,
score blind judgments, and compute annotator agreement, rating
aggregation, and forced-distribution audits.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

import numpy as np

TIERS = ("High", "Medium", "Low")
DEFAULT_N_TRIPLETS = 50


class HtprError(Exception):
    pass


@dataclass(frozen=True)
class TierAssignment:
    tiers: dict[str, str]  # clip_id -> High | Medium | Low
    ranking_key: dict[str, float]

    def members(self, tier: str) -> list[str]:
        return sorted(c for c, t in self.tiers.items() if t == tier)


@dataclass(frozen=True)
class Triplet:
    id: str
    high_clip: str
    medium_clip: str
    low_clip: str
    presentation_order: tuple[str, str, str]  # permutation of the tier names

    def clip_at(self, position: int) -> str:
        tier = self.presentation_order[position]
        return {"High": self.high_clip, "Medium": self.medium_clip, "Low": self.low_clip}[tier]


@dataclass(frozen=True)
class Judgment:
    triplet_id: str
    evaluator_id: str
    consistent: bool
    perceived_order: tuple[str, str, str] | None = None
    timestamp: float = 0.0

    def __post_init__(self):
        if self.perceived_order is not None:
            if sorted(self.perceived_order) != sorted(TIERS):
                raise HtprError("perceived_order must be a permutation of the tiers")
            if self.consistent != (tuple(self.perceived_order) == TIERS):
                raise HtprError("consistent flag contradicts perceived_order")


@dataclass
class HtprSession:
    id: str
    tier_assignment: TierAssignment
    triplets: list[Triplet]
    judgments: list[Judgment]
    seed: int


@dataclass(frozen=True)
class AnnotationRecord:
    clip_id: str
    annotator_id: str
    scores: dict[str, int]
    critiques: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for dim, score in self.scores.items():
            if not 1 <= int(score) <= 5:
                raise HtprError(f"score {score} for {dim} outside 1-5")


def assign_tiers(keys: dict[str, float]) -> TierAssignment:
    """Tercile split on descending key, remainder going to the top tiers."""
    if len(keys) < 3:
        raise HtprError("need at least 3 clips to tier")
    ranked = sorted(keys, key=lambda c: (-keys[c], c))
    n = len(ranked)
    base, rem = divmod(n, 3)
    sizes = [base + (1 if i < rem else 0) for i in range(3)]
    tiers = {}
    cursor = 0
    for tier, size in zip(TIERS, sizes):
        for clip in ranked[cursor : cursor + size]:
            tiers[clip] = tier
        cursor += size
    return TierAssignment(tiers=tiers, ranking_key=dict(keys))


def sample_triplets(t: TierAssignment, n: int, seed: int) -> list[Triplet]:
    """Draw n (High, Medium, Low) triplets with a seeded generator.

    Within a pass, clips are drawn without replacement per tier; an
    exhausted tier is reshuffled and drawing restarts, so coverage is
    maximal. Presentation order is an independent seeded shuffle.
    """
    if n < 1:
        raise HtprError("n must be >= 1")
    pools = {tier: t.members(tier) for tier in TIERS}
    for tier, members in pools.items():
        if not members:
            raise HtprError(f"tier {tier} is empty")
    rng = random.Random(seed)
    queues: dict[str, list[str]] = {tier: [] for tier in TIERS}
    triplets = []
    for i in range(n):
        picks = {}
        for tier in TIERS:
            if not queues[tier]:
                queues[tier] = pools[tier][:]
                rng.shuffle(queues[tier])
            picks[tier] = queues[tier].pop()
        order = list(TIERS)
        random.Random(f"{seed}|{i}|presentation").shuffle(order)
        triplets.append(
            Triplet(
                id=f"t{i:04d}",
                high_clip=picks["High"],
                medium_clip=picks["Medium"],
                low_clip=picks["Low"],
                presentation_order=tuple(order),
            )
        )
    return triplets


def wilson_interval(successes: int, total: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if total == 0:
        raise HtprError("no observations")
    phat = successes / total
    denom = 1.0 + z**2 / total
    center = (phat + z**2 / (2 * total)) / denom
    half = z * math.sqrt(phat * (1 - phat) / total + z**2 / (4 * total**2)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


def htpr_score(session: HtprSession) -> tuple[float, tuple[float, float], int]:
    """Fraction of rank-consistent judgments with a Wilson 95% interval."""
    judged = len(session.judgments)
    if judged == 0:
        raise HtprError("session has no judgments")
    consistent = sum(1 for j in session.judgments if j.consistent)
    return consistent / judged, wilson_interval(consistent, judged), judged


def agreement_stats(a: list[int], b: list[int]) -> tuple[float, float]:
    """Exact and within-one agreement fractions of two aligned score lists."""
    if len(a) != len(b) or not a:
        raise HtprError("score lists must share a non-zero length")
    av, bv = np.asarray(a), np.asarray(b)
    exact = float(np.mean(av == bv))
    within_one = float(np.mean(np.abs(av - bv) <= 1))
    return exact, within_one


def aggregate_ratings(
    records: dict[str, list[AnnotationRecord]],
) -> tuple[dict[str, tuple[float, bool]], float]:
    """Per-clip mean rating and whether it lands in the 2-4 mid band.

    Returns the per-clip map plus the corpus-level mid-band fraction.
    Records carrying several dimensions are averaged across them.
    """
    out = {}
    mid = 0
    for clip_id, recs in records.items():
        if not recs:
            raise HtprError(f"clip {clip_id} has no records")
        values = [np.mean(list(r.scores.values())) for r in recs]
        mean = float(np.mean(values))
        in_band = 2.0 <= mean <= 4.0
        out[clip_id] = (mean, in_band)
        mid += in_band
    return out, mid / len(records) if records else 0.0


def audit_forced_distribution(records: list[AnnotationRecord]) -> tuple[list[int], bool]:
    """Check one annotator's 1-5 usage against a 1:1:1:1:1 target.

    Compliant iff every count is within +/-1 of N/5.
    """
    if len(records) < 5:
        raise HtprError("need at least 5 records to audit")
    scores = [s for r in records for s in r.scores.values()]
    counts = [scores.count(k) for k in range(1, 6)]
    target = len(scores) / 5.0
    compliant = all(abs(c - target) <= 1.0 for c in counts)
    return counts, compliant
