"""End-to-end flow: cluster, rank, verify per target, aggregate, persist.

Every region from the label-guided clustering becomes a sequence of
targeted queries (one per non-cluster label, highest centroid score
first, each over the L1 ball of radius r_avg). Per-target verdicts
aggregate to a region status:

* completely_safe  - every target proven Safe: no input in the ball is
  ever scored toward another label at or above the cluster label.
* has_adversarial  - some target produced a validated witness.
* targeted_safe    - no witness, some targets Safe, others hit their
  resource limit (complete safety stays unresolved).
* unresolved       - no witness and nothing proven Safe.

Unsafe outcomes can be re-checked on constrained planes: the centroid
plane pins the configured dimensions to the centroid's values (full
radius), the maximum plane pins them to the most frequent member tuple
with the radius shrunk so the slice stays inside the original ball.

Aggregation is a pure function of the outcome set and all artifacts are
written in a fixed order, so reports are byte-identical no matter how
many worker threads ran the queries.
"""

from __future__ import annotations

import json
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import PlanEntry, VerificationPlan, build_plan
from .clustering import Region, label_guided_cluster
from .dataset import Dataset
from .errors import DeepSafeError
from .network import Network, evaluate
from .verifier import (
    DEFAULT_MAX_SPLITS,
    DEFAULT_TIMEOUT_SECS,
    RESOURCE_LIMIT,
    SAFE,
    UNSAFE,
    Query,
    SliceConstraint,
    Verdict,
    decide,
    slice_radius,
)

COMPLETELY_SAFE = "completely_safe"
TARGETED_SAFE = "targeted_safe"
HAS_ADVERSARIAL = "has_adversarial"
UNRESOLVED = "unresolved"

REGIONS_FILE = "regions.json"
PLAN_FILE = "plan.json"
REPORT_FILE = "report.json"
REPORT_MD_FILE = "report.md"
TIMINGS_FILE = "timings.json"
WITNESS_DIR = "witnesses"


@dataclass
class RunConfig:
    """Knobs for a full run; defaults reproduce the documented behavior."""

    metric: str = "l2"
    seed: int = 0
    max_iters: int = 100
    max_depth: int = 32
    kmeanspp: bool = False
    scale: bool = False
    header: bool = False
    label_column: object = "last"
    min_members: int = 2
    min_density: float = 0.0
    top_k: int = 40
    max_splits: int = DEFAULT_MAX_SPLITS
    timeout_secs: float = DEFAULT_TIMEOUT_SECS
    fail_fast: bool = False
    jobs: int = 1
    sliceable_dims: tuple | None = None
    exact_recheck: bool = False

    def validate(self):
        if self.metric not in ("l1", "l2"):
            raise ValueError("metric must be 'l1' or 'l2'")
        for name in ("max_iters", "max_depth", "jobs"):
            if getattr(self, name) < 1:
                raise ValueError("%s must be >= 1" % name)
        for name in ("min_members", "top_k", "max_splits", "seed"):
            if getattr(self, name) < 0:
                raise ValueError("%s must be >= 0" % name)
        if self.min_density < 0 or self.timeout_secs <= 0:
            raise ValueError("min_density must be >= 0 and timeout_secs > 0")
        if self.sliceable_dims is not None:
            dims = list(self.sliceable_dims)
            if len(dims) != len(set(dims)) or any(d < 0 for d in dims):
                raise ValueError("sliceable_dims must be distinct and nonnegative")
        return self


@dataclass
class SliceOutcome:
    plane: str  # "centroid" | "maximum"
    fixed_dims: list  # [(dim, value), ...]
    base_radius: float
    adjusted_radius: float | None  # None when the plane misses the ball
    verdict: Verdict | None  # None when the slice was skipped
    skipped: str | None = None


@dataclass
class RegionReport:
    region_id: int
    label: int
    density: float
    r: float
    metric: str
    target_order: list
    outcomes: dict  # target -> Verdict, execution order = target_order
    status: str
    safe_targets: list
    completeness_unresolved: bool
    slices: dict = field(default_factory=dict)  # target -> [SliceOutcome]

    @property
    def coverage(self) -> str:
        """Safe verdicts certify the L1 ball only; when the region was
        clustered under L2 that ball is a strict subset of the region."""
        return "partial-region" if self.metric == "l2" else "full-region"


def aggregate(outcomes) -> tuple[str, list[int], bool]:
    """Fold per-target outcomes into (status, safe_targets, unresolved).

    Accepts a mapping target -> Verdict or target -> outcome string.
    Pure and order-independent: any Unsafe wins, otherwise a resource
    limit blocks completeness, otherwise everything was proven Safe.
    """
    kinds = {}
    for target, v in outcomes.items():
        kind = v.outcome if isinstance(v, Verdict) else v
        if kind not in (SAFE, UNSAFE, RESOURCE_LIMIT):
            raise ValueError("unknown outcome %r for target %s" % (kind, target))
        kinds[int(target)] = kind
    safe_targets = sorted(t for t, k in kinds.items() if k == SAFE)
    limited = any(k == RESOURCE_LIMIT for k in kinds.values())
    if any(k == UNSAFE for k in kinds.values()):
        return HAS_ADVERSARIAL, safe_targets, limited
    if limited:
        if safe_targets:
            return TARGETED_SAFE, safe_targets, True
        return UNRESOLVED, [], True
    return COMPLETELY_SAFE, safe_targets, False


def _query(net, region, target, config, cen=None, r=None, slc=None):
    return Query(
        net=net,
        cen=region.centroid if cen is None else cen,
        r=region.r_avg if r is None else r,
        label=region.label,
        target=target,
        slice=slc,
        max_splits=config.max_splits,
        timeout_secs=config.timeout_secs,
        exact_recheck=config.exact_recheck,
    )


def _decide_target(net, region, target, config):
    if region.r_avg > 0.0:
        return decide(_query(net, region, target, config))
    # zero-radius region (identical duplicate members): the ball is the
    # single point, so direct evaluation decides the query exactly
    scores = evaluate(net, region.centroid)
    if scores[target] >= scores[region.label]:
        return Verdict(UNSAFE, witness=region.centroid.copy(),
                       note="zero-radius region, decided by direct evaluation")
    return Verdict(SAFE, note="zero-radius region, decided by direct evaluation")


def reprocess_with_slices(
    net: Network,
    region: Region,
    target: int,
    sliceable_dims,
    planes: str = "both",
    config: RunConfig | None = None,
) -> list[SliceOutcome]:
    """Re-run an Unsafe (region, target) query on constrained planes.

    The centroid plane fixes the sliceable dimensions to the centroid's
    own values and keeps the full radius. The maximum plane fixes them
    to the most frequent member tuple (ties to the lexicographically
    smallest) and shrinks the radius so the slice stays inside the
    original ball; a plane at distance >= r is reported as skipped.
    """
    if not sliceable_dims:
        raise ValueError("no sliceable dimensions configured")
    if planes not in ("centroid", "maximum", "both"):
        raise ValueError("planes must be 'centroid', 'maximum', or 'both'")
    dims = [int(d) for d in sliceable_dims]
    if len(dims) != len(set(dims)):
        raise ValueError("sliceable dimensions must be distinct")
    if any(not 0 <= d < net.input_dim for d in dims):
        raise ValueError("sliceable dimension out of range")
    config = config or RunConfig()
    r = region.r_avg
    results = []

    if planes in ("centroid", "both"):
        fixed = tuple((d, float(region.centroid[d])) for d in dims)
        slc = SliceConstraint(fixed, r)  # distance 0: full radius kept
        verdict = decide(_query(net, region, target, config, slc=slc))
        results.append(SliceOutcome("centroid", list(fixed), r, r, verdict))

    if planes in ("maximum", "both"):
        rows = [tuple(float(v) for v in row) for row in region.member_features[:, dims]]
        counts = Counter(rows)
        best = max(counts.values())
        modal = min(t for t, c in counts.items() if c == best)
        fixed = tuple((d, modal[k]) for k, d in enumerate(dims))
        adjusted = slice_radius(r, region.centroid, fixed)
        if adjusted is None:
            results.append(
                SliceOutcome("maximum", list(fixed), r, None, None,
                             skipped="empty slice: plane misses the ball")
            )
        else:
            cen = region.centroid.copy()
            for d, v in fixed:
                cen[d] = v
            slc = SliceConstraint(fixed, adjusted)
            verdict = decide(
                _query(net, region, target, config, cen=cen, r=adjusted, slc=slc)
            )
            results.append(SliceOutcome("maximum", list(fixed), r, adjusted, verdict))
    return results


def _verify_entry(net, region, entry, config):
    outcomes = {}
    for target in entry.targets:
        verdict = _decide_target(net, region, target, config)
        outcomes[target] = verdict
        if config.fail_fast and verdict.outcome == UNSAFE:
            break
    return outcomes


def _build_report(net, region, entry, outcomes, config):
    status, safe_targets, unresolved = aggregate(outcomes)
    report = RegionReport(
        region_id=region.id,
        label=region.label,
        density=region.density,
        r=region.r_avg,
        metric=region.metric,
        target_order=list(entry.targets),
        outcomes=outcomes,
        status=status,
        safe_targets=safe_targets,
        completeness_unresolved=unresolved,
    )
    if config.sliceable_dims and region.r_avg > 0.0:
        for target in entry.targets:
            verdict = outcomes.get(target)
            if verdict is not None and verdict.outcome == UNSAFE:
                report.slices[target] = reprocess_with_slices(
                    net, region, target, config.sliceable_dims, "both", config
                )
    return report


def verify_plan(net, regions, plan, config) -> list[RegionReport]:
    """Run every planned query and aggregate region reports.

    Regions run concurrently when ``config.jobs > 1``; targets within a
    region also run concurrently unless ``fail_fast`` forces sequential
    target order. Scheduling never changes the result.
    """
    region_map = {r.id: r for r in regions}
    entries = plan.entries

    if config.jobs <= 1:
        per_entry = [
            _verify_entry(net, region_map[e.region_id], e, config) for e in entries
        ]
    elif config.fail_fast:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            per_entry = list(
                pool.map(
                    lambda e: _verify_entry(net, region_map[e.region_id], e, config),
                    entries,
                )
            )
    else:
        pairs = [(e, t) for e in entries for t in e.targets]
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            verdicts = list(
                pool.map(
                    lambda p: _decide_target(net, region_map[p[0].region_id], p[1], config),
                    pairs,
                )
            )
        by_entry = {id(e): {} for e in entries}
        for (e, t), v in zip(pairs, verdicts):
            by_entry[id(e)][t] = v
        per_entry = [by_entry[id(e)] for e in entries]

    return [
        _build_report(net, region_map[e.region_id], e, outcomes, config)
        for e, outcomes in zip(entries, per_entry)
    ]


def run_pipeline(net: Network, ds: Dataset, config: RunConfig,
                 out_dir=None) -> list[RegionReport]:
    """Cluster, plan, verify, aggregate; persist artifacts when asked."""
    config.validate()
    if net.input_dim != ds.dimension:
        raise ValueError(
            "network expects %d inputs but dataset has dimension %d"
            % (net.input_dim, ds.dimension)
        )
    if net.label_count < ds.label_count:
        raise ValueError(
            "dataset labels reach %d but network only scores %d labels"
            % (ds.label_count - 1, net.label_count - 1)
        )
    regions = label_guided_cluster(
        ds,
        metric=config.metric,
        seed=config.seed,
        max_depth=config.max_depth,
        max_iters=config.max_iters,
        init="k-means++" if config.kmeanspp else "random",
    )
    plan = build_plan(
        net, regions,
        min_members=config.min_members,
        min_density=config.min_density,
        top_k=config.top_k,
    )
    reports = verify_plan(net, regions, plan, config)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_cluster_files(regions, out)
        write_plan(plan, out)
        write_report(reports, out)
    return reports


def exit_code(reports) -> int:
    """0 all resolved, 1 adversarial found, 2 unresolved remains."""
    if any(r.status == HAS_ADVERSARIAL for r in reports):
        return 1
    if any(r.status == UNRESOLVED or r.completeness_unresolved for r in reports):
        return 2
    return 0


# ---------------------------------------------------------------------------
# artifact persistence


def _fmt(value: float) -> str:
    return "%.17g" % float(value)


def write_cluster_files(regions, out_dir) -> None:
    """``clusterFinal<ID>.csv`` (centroid row, then member rows with the
    label appended) plus the ``regions.json`` manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = []
    for region in regions:
        path = out / ("clusterFinal%d.csv" % region.id)
        with open(path, "w") as fh:
            fh.write(",".join(_fmt(v) for v in region.centroid) + "\n")
            for row in region.member_features:
                fh.write(
                    ",".join(_fmt(v) for v in row) + ",%d\n" % region.label
                )
        manifest.append(
            {
                "id": region.id,
                "label": region.label,
                "R_max": float(region.r_max),
                "r_avg": float(region.r_avg),
                "density": float(region.density),
                "member_count": region.member_count,
                "metric": region.metric,
            }
        )
    with open(out / REGIONS_FILE, "w") as fh:
        json.dump({"regions": manifest}, fh, indent=2)
        fh.write("\n")


def load_regions(out_dir) -> list[Region]:
    """Rebuild Regions from the manifest and cluster files.

    Dataset row indices are not part of the on-disk format, so loaded
    regions carry -1 placeholders there.
    """
    out = Path(out_dir)
    manifest_path = out / REGIONS_FILE
    if not manifest_path.exists():
        raise DeepSafeError("missing %s in %s" % (REGIONS_FILE, out))
    with open(manifest_path) as fh:
        manifest = json.load(fh)["regions"]
    regions = []
    for item in manifest:
        path = out / ("clusterFinal%d.csv" % item["id"])
        if not path.exists():
            raise DeepSafeError("missing cluster file %s" % path)
        with open(path) as fh:
            lines = [line.strip() for line in fh if line.strip()]
        centroid = np.array([float(v) for v in lines[0].split(",")])
        members = []
        for line in lines[1:]:
            cells = line.split(",")
            members.append([float(v) for v in cells[:-1]])
        members = np.asarray(members, dtype=float)
        regions.append(
            Region(
                id=int(item["id"]),
                centroid=centroid,
                member_features=members,
                member_indices=np.full(members.shape[0], -1, dtype=int),
                label=int(item["label"]),
                metric=item["metric"],
                r_max=float(item["R_max"]),
                r_avg=float(item["r_avg"]),
                density=float(item["density"]),
            )
        )
    return regions


def write_plan(plan: VerificationPlan, out_dir) -> None:
    out = Path(out_dir)
    doc = {
        "filters": plan.filters,
        "entries": [
            {
                "region_id": e.region_id,
                "label": e.label,
                "density": float(e.density),
                "targets": [int(t) for t in e.targets],
            }
            for e in plan.entries
        ],
    }
    with open(out / PLAN_FILE, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_plan(out_dir) -> VerificationPlan:
    path = Path(out_dir) / PLAN_FILE
    if not path.exists():
        raise DeepSafeError("missing %s in %s" % (PLAN_FILE, out_dir))
    with open(path) as fh:
        doc = json.load(fh)
    entries = [
        PlanEntry(
            region_id=int(e["region_id"]),
            label=int(e["label"]),
            density=float(e["density"]),
            targets=[int(t) for t in e["targets"]],
        )
        for e in doc["entries"]
    ]
    return VerificationPlan(entries=entries, filters=doc.get("filters", {}))


def _verdict_doc(verdict: Verdict) -> dict:
    doc = {
        "outcome": verdict.outcome,
        "splits": int(verdict.splits),
        "leaves": int(verdict.leaves),
        "root_unstable": int(verdict.root_unstable),
    }
    if verdict.witness is not None:
        doc["witness"] = [float(v) for v in verdict.witness]
    if verdict.note:
        doc["note"] = verdict.note
    return doc


def _write_witness(path, witness) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(_fmt(v) for v in witness) + "\n")


def write_report(reports, out_dir) -> None:
    """``report.json`` + ``report.md`` + witness CSVs + ``timings.json``.

    Query wall times live only in timings.json: the report itself must
    be byte-identical across reruns and worker counts.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    witness_dir = out / WITNESS_DIR
    if witness_dir.exists():
        for stale in witness_dir.glob("*.csv"):
            stale.unlink()
    doc_regions = []
    timings = []
    for report in reports:
        outcome_docs = []
        for target in report.target_order:
            if target not in report.outcomes:
                continue  # skipped after a fail-fast Unsafe
            verdict = report.outcomes[target]
            entry = {"target": int(target)}
            entry.update(_verdict_doc(verdict))
            outcome_docs.append(entry)
            timings.append(
                {
                    "region_id": report.region_id,
                    "target": int(target),
                    "wall_ms": float(verdict.wall_ms),
                }
            )
            if verdict.witness is not None:
                witness_dir.mkdir(exist_ok=True)
                _write_witness(
                    witness_dir
                    / ("region%d_target%d.csv" % (report.region_id, target)),
                    verdict.witness,
                )
        slice_docs = {}
        for target, outcomes in sorted(report.slices.items()):
            items = []
            for so in outcomes:
                item = {
                    "plane": so.plane,
                    "fixed_dims": [[int(d), float(v)] for d, v in so.fixed_dims],
                    "base_radius": float(so.base_radius),
                    "adjusted_radius": (
                        None if so.adjusted_radius is None else float(so.adjusted_radius)
                    ),
                }
                if so.skipped:
                    item["skipped"] = so.skipped
                if so.verdict is not None:
                    item.update(_verdict_doc(so.verdict))
                    timings.append(
                        {
                            "region_id": report.region_id,
                            "target": int(target),
                            "plane": so.plane,
                            "wall_ms": float(so.verdict.wall_ms),
                        }
                    )
                    if so.verdict.witness is not None:
                        witness_dir.mkdir(exist_ok=True)
                        _write_witness(
                            witness_dir
                            / (
                                "region%d_target%d_slice_%s.csv"
                                % (report.region_id, target, so.plane)
                            ),
                            so.verdict.witness,
                        )
                items.append(item)
            slice_docs[str(int(target))] = items
        region_doc = {
            "region_id": report.region_id,
            "label": report.label,
            "density": float(report.density),
            "r": float(report.r),
            "metric": report.metric,
            "coverage": report.coverage,
            "target_order": [int(t) for t in report.target_order],
            "status": report.status,
            "safe_targets": [int(t) for t in report.safe_targets],
            "completeness_unresolved": report.completeness_unresolved,
            "outcomes": outcome_docs,
        }
        if slice_docs:
            region_doc["slices"] = slice_docs
        doc_regions.append(region_doc)

    doc = {
        "notes": {
            "safe_coverage": "safe verdicts certify the L1 ball of radius r; "
            "for l2-clustered regions that is a subset of the region "
            "(partial-region safety)",
            "witness_validation": "witnesses are machine-checked against the "
            "query only; domain validity needs expert review",
        },
        "regions": doc_regions,
    }
    with open(out / REPORT_FILE, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    with open(out / TIMINGS_FILE, "w") as fh:
        json.dump({"queries": timings}, fh, indent=2)
        fh.write("\n")
    write_report_md(doc, out)
    if witness_dir.exists() and not any(witness_dir.iterdir()):
        witness_dir.rmdir()


def render_report_md(doc: dict) -> str:
    """Markdown summary table from a report.json-shaped document."""
    lines = [
        "# Verification report",
        "",
        "| region | label | density | safe | unsafe | resource_limit | status |",
        "|-------:|------:|--------:|-----:|-------:|---------------:|:-------|",
    ]
    partial = False
    for item in doc["regions"]:
        kinds = [o["outcome"] for o in item["outcomes"]]
        density = item["density"]
        status = item["status"]
        if kinds.count(SAFE) and item.get("coverage") == "partial-region":
            status += "*"
            partial = True
        lines.append(
            "| %d | %d | %s | %d | %d | %d | %s |"
            % (
                item["region_id"],
                item["label"],
                "inf" if density == float("inf") else "%.4g" % density,
                kinds.count(SAFE),
                kinds.count(UNSAFE),
                kinds.count(RESOURCE_LIMIT),
                status,
            )
        )
    if partial:
        lines += [
            "",
            "\\* partial-region safe: the verified L1 ball is a subset of the"
            " L2-clustered region.",
        ]
    notes = doc.get("notes", {})
    if notes.get("witness_validation"):
        lines += ["", "Witnesses: %s." % notes["witness_validation"]]
    return "\n".join(lines) + "\n"


def write_report_md(doc: dict, out_dir) -> None:
    with open(Path(out_dir) / REPORT_MD_FILE, "w") as fh:
        fh.write(render_report_md(doc))


def load_report(out_dir) -> dict:
    path = Path(out_dir) / REPORT_FILE
    if not path.exists():
        raise DeepSafeError("missing %s in %s" % (REPORT_FILE, out_dir))
    with open(path) as fh:
        return json.load(fh)
