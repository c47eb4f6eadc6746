"""Command-line driver.

Subcommands mirror the pipeline stages: ``cluster`` writes label-pure
cluster files, ``analyze`` ranks them into a verification plan,
``verify`` runs the planned queries (clustering/planning first if their
artifacts are missing), ``report`` re-renders the summary, and
``oracle`` runs the brute-force grid search for fixture pinning.

Options can come from a single TOML or JSON config file; explicit flags
override file values. Exit codes: 0 all planned regions resolved, 1
adversarial example found, 2 unresolved regions remain, 3 usage or I/O
error (1 wins over 2 when both apply).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .analysis import build_plan
from .clustering import label_guided_cluster
from .dataset import load_dataset, scale_minmax
from .errors import DeepSafeError
from .network import load_network
from .oracle import GridSpec, default_step, grid_search
from .pipeline import (
    HAS_ADVERSARIAL,
    PLAN_FILE,
    REGIONS_FILE,
    UNRESOLVED,
    RunConfig,
    exit_code,
    load_plan,
    load_regions,
    load_report,
    verify_plan,
    write_cluster_files,
    write_plan,
    write_report,
    write_report_md,
)

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib


def _load_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise DeepSafeError("config file not found: %s" % path)
    if path.suffix == ".json":
        with open(path) as fh:
            return json.load(fh)
    with open(path, "rb") as fh:
        return tomllib.load(fh)


_CONFIG_KEYS = {f.name for f in fields(RunConfig)}


def _build_config(args) -> RunConfig:
    config = RunConfig()
    if getattr(args, "config", None):
        file_values = _load_config_file(args.config)
        for key, value in file_values.items():
            if key not in _CONFIG_KEYS:
                raise DeepSafeError("unknown config key %r" % key)
            if key == "sliceable_dims" and value is not None:
                value = tuple(int(v) for v in value)
            setattr(config, key, value)
    for f in fields(RunConfig):
        flag_value = getattr(args, f.name, None)
        if flag_value is not None:
            setattr(config, f.name, flag_value)
    config.validate()
    return config


def _parse_dims(text):
    if text is None:
        return None
    return tuple(int(v) for v in text.split(",") if v.strip() != "")


def _load_inputs(args, config, need_dataset=True):
    ds = None
    if need_dataset:
        if not args.dataset:
            raise DeepSafeError("a dataset file is required (--dataset)")
        ds = load_dataset(
            args.dataset, label_column=config.label_column, header=config.header
        )
        if config.scale:
            ds = scale_minmax(ds)
    return ds


def cmd_cluster(args) -> int:
    config = _build_config(args)
    ds = _load_inputs(args, config)
    regions = label_guided_cluster(
        ds,
        metric=config.metric,
        seed=config.seed,
        max_depth=config.max_depth,
        max_iters=config.max_iters,
        init="k-means++" if config.kmeanspp else "random",
    )
    out = Path(args.out)
    write_cluster_files(regions, out)
    print(
        "clustered %d points into %d pure regions (metric=%s, seed=%d)"
        % (len(ds), len(regions), config.metric, config.seed)
    )
    return 0


def cmd_analyze(args) -> int:
    config = _build_config(args)
    net = load_network(args.network)
    regions = load_regions(args.out)
    plan = build_plan(
        net,
        regions,
        min_members=config.min_members,
        min_density=config.min_density,
        top_k=config.top_k,
    )
    write_plan(plan, args.out)
    print("planned %d of %d regions" % (len(plan), len(regions)))
    return 0


def cmd_verify(args) -> int:
    config = _build_config(args)
    net = load_network(args.network)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if not (out / REGIONS_FILE).exists():
        ds = _load_inputs(args, config)
        regions = label_guided_cluster(
            ds,
            metric=config.metric,
            seed=config.seed,
            max_depth=config.max_depth,
            max_iters=config.max_iters,
            init="k-means++" if config.kmeanspp else "random",
        )
        write_cluster_files(regions, out)
    else:
        regions = load_regions(out)

    if not (out / PLAN_FILE).exists():
        plan = build_plan(
            net,
            regions,
            min_members=config.min_members,
            min_density=config.min_density,
            top_k=config.top_k,
        )
        write_plan(plan, out)
    else:
        plan = load_plan(out)

    reports = verify_plan(net, regions, plan, config)
    write_report(reports, out)
    for report in reports:
        print(
            "region %d (label %d): %s" % (report.region_id, report.label, report.status)
        )
    return exit_code(reports)


def cmd_report(args) -> int:
    doc = load_report(args.out)
    write_report_md(doc, args.out)
    regions = doc["regions"]
    print("| region | label | status | safe_targets |")
    for item in regions:
        print(
            "| %d | %d | %s | %s |"
            % (item["region_id"], item["label"], item["status"], item["safe_targets"])
        )
    if any(r["status"] == HAS_ADVERSARIAL for r in regions):
        return 1
    if any(r["status"] == UNRESOLVED or r["completeness_unresolved"] for r in regions):
        return 2
    return 0


def cmd_oracle(args) -> int:
    from .verifier import Query, SliceConstraint

    net = load_network(args.network)
    cen = np.array([float(v) for v in args.cen.split(",")])
    slc = None
    if args.slice:
        pairs = []
        for chunk in args.slice.split(","):
            dim, _, value = chunk.partition("=")
            pairs.append((int(dim), float(value)))
        slc = SliceConstraint(tuple(pairs), args.radius)
    q = Query(net, cen, args.radius, args.label, args.target, slice=slc)
    step = args.step if args.step is not None else default_step(args.radius)
    result = grid_search(net, q, GridSpec(step=step, max_points=args.max_points))
    if result.found:
        print("found: %s" % ",".join("%.17g" % v for v in result.witness))
    else:
        print("none found")
    print(result.note)
    return 0


def _add_common(parser):
    parser.add_argument("--config", help="TOML or JSON config file")
    parser.add_argument("--out", required=True, help="artifact directory")
    parser.add_argument("--metric", choices=["l1", "l2"], default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--max-iters", dest="max_iters", type=int, default=None)
    parser.add_argument("--max-depth", dest="max_depth", type=int, default=None)
    parser.add_argument(
        "--kmeanspp", dest="kmeanspp", action=argparse.BooleanOptionalAction,
        default=None, help="k-means++ seeding instead of uniform",
    )
    parser.add_argument(
        "--scale", dest="scale", action=argparse.BooleanOptionalAction,
        default=None, help="min-max scale features before clustering",
    )
    parser.add_argument(
        "--header", dest="header", action=argparse.BooleanOptionalAction,
        default=None, help="skip one CSV header line",
    )
    parser.add_argument("--label-column", dest="label_column", default=None)
    parser.add_argument("--min-members", dest="min_members", type=int, default=None)
    parser.add_argument(
        "--min-density", dest="min_density", type=float, default=None
    )
    parser.add_argument("--top-k", dest="top_k", type=int, default=None)
    parser.add_argument("--max-splits", dest="max_splits", type=int, default=None)
    parser.add_argument(
        "--timeout-secs", dest="timeout_secs", type=float, default=None
    )
    parser.add_argument(
        "--fail-fast", dest="fail_fast", action=argparse.BooleanOptionalAction,
        default=None,
    )
    parser.add_argument("--jobs", type=int, default=None)
    parser.add_argument(
        "--slice-dims", dest="sliceable_dims", type=_parse_dims, default=None,
        help="comma-separated sliceable dimension indices",
    )
    parser.add_argument(
        "--exact-recheck", dest="exact_recheck",
        action=argparse.BooleanOptionalAction, default=None,
        help="settle disputed leaves in exact rational arithmetic",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deepsafe",
        description="Cluster labeled inputs into candidate safe regions and "
        "formally decide targeted robustness of a ReLU classifier on each.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cluster", help="label-guided clustering of a dataset")
    p.add_argument("--dataset", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("analyze", help="rank regions and order target labels")
    p.add_argument("--network", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("verify", help="decide every planned query")
    p.add_argument("--network", required=True)
    p.add_argument("--dataset", help="needed when cluster artifacts are absent")
    _add_common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("report", help="summarize an existing report.json")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("oracle", help="brute-force grid search for one query")
    p.add_argument("--network", required=True)
    p.add_argument("--cen", required=True, help="comma-separated centroid")
    p.add_argument("--radius", type=float, required=True)
    p.add_argument("--label", type=int, required=True)
    p.add_argument("--target", type=int, required=True)
    p.add_argument("--step", type=float, default=None)
    p.add_argument("--max-points", dest="max_points", type=int, default=10_000_000)
    p.add_argument("--slice", help="dim=value[,dim=value...] to pin dimensions")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors
        return 0 if exc.code == 0 else 3
    try:
        return args.func(args)
    except DeepSafeError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 3
    except (ValueError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
