"""Region ranking and target-label ordering for verification planning."""

from __future__ import annotations

from dataclasses import dataclass, field

from .clustering import Region
from .network import Network, evaluate


def rank_regions(
    regions,
    min_members: int = 2,
    min_density: float = 0.0,
    top_k: int = 40,
) -> list[Region]:
    """Regions sorted by density descending, filtered and truncated.

    Ties go to the larger member count, then the lower region id, so the
    order is fully determined. Densest-first with ``top_k`` caps how many
    regions get verification time; ``min_members`` (default 2) drops
    singleton clusters, whose density is the +inf sentinel.
    """
    if top_k < 0:
        raise ValueError("top_k must be >= 0")
    kept = [
        r
        for r in regions
        if r.member_count >= min_members and r.density >= min_density
    ]
    kept.sort(key=lambda r: (-r.density, -r.member_count, r.id))
    return kept[:top_k]


def target_label_order(net: Network, region: Region) -> list[int]:
    """All labels other than the region's, sorted by centroid score.

    Higher-scoring targets go first (they are the likelier violations),
    ties toward the lower label index.
    """
    if region.label >= net.label_count:
        raise ValueError(
            "region label %d out of range for %d network labels"
            % (region.label, net.label_count)
        )
    scores = evaluate(net, region.centroid)
    others = [l for l in range(net.label_count) if l != region.label]
    others.sort(key=lambda l: (-scores[l], l))
    return others


@dataclass
class PlanEntry:
    region_id: int
    label: int
    density: float
    targets: list[int]


@dataclass
class VerificationPlan:
    """Ordered verification work list plus the filters that produced it."""

    entries: list[PlanEntry]
    filters: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)


def build_plan(
    net: Network,
    regions,
    min_members: int = 2,
    min_density: float = 0.0,
    top_k: int = 40,
) -> VerificationPlan:
    """Rank regions and attach each one's target-label order."""
    ranked = rank_regions(
        regions, min_members=min_members, min_density=min_density, top_k=top_k
    )
    entries = [
        PlanEntry(
            region_id=r.id,
            label=r.label,
            density=r.density,
            targets=target_label_order(net, r),
        )
        for r in ranked
    ]
    return VerificationPlan(
        entries=entries,
        filters={
            "min_members": min_members,
            "min_density": min_density,
            "top_k": top_k,
        },
    )
