"""Command-line driver: ingest, build, eval, enrich, gen-bench, serve."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import approx, benchgen, enrich, lake as lake_mod, navmodel, optimizer
from .embedding import load_embeddings
from .organization import load_org, save_org
from .server import serve, serve_forever

log = logging.getLogger("lakeorg.cli")


def _cmd_ingest(args) -> int:
    store = load_embeddings(args.embeddings)
    lake = lake_mod.ingest(args.tables, args.metadata, store,
                           text_threshold=args.text_threshold)
    if not lake.tables:
        print("error: no table survived ingestion", file=sys.stderr)
        return 1
    lake_mod.save_lake(lake, args.out)
    print(f"ingested {len(lake.tables)} tables, {len(lake.attributes)} attributes, "
          f"{len(lake.tags)} tags -> {args.out}")
    return 0


def _cmd_build(args) -> int:
    lake = lake_mod.load_lake(args.lake)
    if args.config:
        cfg = optimizer.load_config(args.config)
    else:
        cfg = optimizer.SearchConfig(
            gamma=args.gamma,
            max_iterations=args.max_iters,
            rng_seed=args.seed,
            use_representatives=not args.exact,
            representative_fraction=args.reps_fraction,
            dimensions=args.dimensions,
        )
    build = optimizer.build_multidim(lake, cfg, theta=args.theta)
    out = Path(args.out)
    if len(build.organizations) == 1:
        save_org(build.organizations[0], out)
        paths = [str(out)]
    else:
        paths = []
        for i, org in enumerate(build.organizations):
            p = out.with_suffix(f".dim{i}{out.suffix or '.json'}")
            save_org(org, p)
            paths.append(str(p))
    if args.trace:
        for i, trace in enumerate(build.traces):
            p = Path(args.trace)
            trace.to_jsonl(p if len(build.traces) == 1
                           else p.with_suffix(f".dim{i}{p.suffix or '.jsonl'}"))
    print(f"built {len(build.organizations)} organization(s): "
          f"effectiveness={build.combined.effectiveness:.4f} "
          f"mean_success={build.combined.mean_success} -> {', '.join(paths)}")
    return 0


def _cmd_eval(args) -> int:
    lake = lake_mod.load_lake(args.lake)
    reports = []
    for org_path in args.org:
        org = load_org(org_path, lake)
        if args.reps_fraction < 1.0:
            reps = approx.select_representatives(lake, args.reps_fraction, args.seed)
            reports.append(approx.approx_effectiveness(org, lake, reps, theta=args.theta))
        else:
            reports.append(navmodel.evaluate(org, lake, theta=args.theta))
    report = reports[0] if len(reports) == 1 else navmodel.combine_reports(reports, lake)
    navmodel.write_report_csv(report, f"{args.out_prefix}.csv")
    navmodel.write_report_summary(report, f"{args.out_prefix}.summary.json")
    print(f"effectiveness={report.effectiveness:.6f} mean_success={report.mean_success} "
          f"n_tables={report.n_tables} -> {args.out_prefix}.csv")
    return 0


def _cmd_enrich(args) -> int:
    source = lake_mod.load_lake(args.source)
    target = lake_mod.load_lake(args.target)
    classifiers = enrich.train_classifiers(
        source, min_positives=args.min_positives, neg_ratio=args.neg_ratio,
        folds=args.folds, seed=args.seed)
    if not classifiers:
        print("error: no tag has enough positive samples to train on", file=sys.stderr)
        return 1
    augmented, report = enrich.transfer_tags(classifiers, target)
    lake_mod.save_lake(augmented, args.out)
    if args.models:
        enrich.save_classifiers(classifiers, args.models)
    if args.report:
        report.to_csv(args.report)
    print(f"trained {len(classifiers)} classifiers; "
          f"labeled {report.n_attributes_labeled} attributes -> {args.out}")
    return 0


def _cmd_gen_bench(args) -> int:
    store = load_embeddings(args.embeddings)
    spec = benchgen.BenchSpec(
        n_tags=args.tags, n_tables=args.tables,
        values_per_attribute=(args.min_values, args.max_values),
        attrs_per_table=(args.min_attrs, args.max_attrs),
        zipf_exponent=args.zipf_exponent,
        tag_min_separation=args.separation,
        extra_tag_per_attribute=args.enrich_extra_tag,
        seed=args.seed,
    )
    lake, truth = benchgen.generate(store, spec)
    benchgen.write_bench(lake, truth, args.out)
    print(f"generated {len(lake.tables)} tables, {len(lake.attributes)} attributes, "
          f"{len(lake.tags)} tags -> {args.out}")
    return 0


def resolve_port(cli_port: int) -> int:
    """LAKEORG_PORT overrides the --port flag when set."""
    return int(os.environ.get("LAKEORG_PORT", cli_port))


def _cmd_serve(args) -> int:
    lake = lake_mod.load_lake(args.lake)
    org = load_org(args.org, lake)
    report = None
    if args.report:
        doc = json.loads(Path(args.report).read_text(encoding="utf-8"))
        report = navmodel.EvalReport(
            attr_discovery={}, table_discovery={}, state_reach={},
            effectiveness=doc.get("effectiveness", 0.0),
            n_tables=doc.get("n_tables", 0),
            mean_success=doc.get("mean_success"),
        )
    port = resolve_port(args.port)
    httpd = serve(org, lake, port, report=report, static_dir=args.static)
    print(f"serving organization on http://127.0.0.1:{port} (Ctrl-C to stop)",
          flush=True)
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        httpd.server_close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lakeorg",
        description="Build, evaluate, and serve navigation structures over a data lake.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="tables + metadata -> lake file")
    p.add_argument("--tables", required=True, help="directory containing the CSV files")
    p.add_argument("--metadata", required=True, help="newline-delimited JSON metadata")
    p.add_argument("--embeddings", required=True, help="embedding text file")
    p.add_argument("--text-threshold", type=float, default=lake_mod.DEFAULT_TEXT_THRESHOLD)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("build", help="lake -> optimized organization(s)")
    p.add_argument("--lake", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--gamma", type=float, default=10.0)
    p.add_argument("--dimensions", type=int, default=1)
    p.add_argument("--reps-fraction", type=float, default=0.10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=1000)
    p.add_argument("--exact", action="store_true",
                   help="evaluate candidates on all attributes, not representatives")
    p.add_argument("--theta", type=float, default=0.9)
    p.add_argument("--trace", help="write per-iteration NDJSON trace here")
    p.add_argument("--config", help="JSON search config; overrides the flags above")
    p.set_defaults(func=_cmd_build)

    p = sub.add_parser("eval", help="organization(s) + lake -> report")
    p.add_argument("--lake", required=True)
    p.add_argument("--org", required=True, action="append",
                   help="organization file; repeat for multi-dimensional evaluation")
    p.add_argument("--theta", type=float, default=0.9)
    p.add_argument("--reps-fraction", type=float, default=1.0,
                   help="evaluate approximately with this representative fraction")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("enrich", help="transfer tags from a tagged lake to another")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-positives", type=int, default=10)
    p.add_argument("--neg-ratio", type=int, default=9)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--models", help="write trained classifiers here (JSON)")
    p.add_argument("--report", help="write tag,count transfer CSV here")
    p.set_defaults(func=_cmd_enrich)

    p = sub.add_parser("gen-bench", help="generate a synthetic tagged lake")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tags", type=int, default=365)
    p.add_argument("--tables", type=int, default=369)
    p.add_argument("--min-values", type=int, default=10)
    p.add_argument("--max-values", type=int, default=1000)
    p.add_argument("--min-attrs", type=int, default=1)
    p.add_argument("--max-attrs", type=int, default=50)
    p.add_argument("--zipf-exponent", type=float, default=benchgen.DEFAULT_ZIPF_EXPONENT)
    p.add_argument("--separation", type=float, default=0.5)
    p.add_argument("--enrich-extra-tag", action="store_true")
    p.set_defaults(func=_cmd_gen_bench)

    p = sub.add_parser("serve", help="serve an organization for navigation")
    p.add_argument("--lake", required=True)
    p.add_argument("--org", required=True)
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--static", help="directory of UI assets to serve at /")
    p.add_argument("--report", help="summary JSON to expose in /api/org/summary")
    p.set_defaults(func=_cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
