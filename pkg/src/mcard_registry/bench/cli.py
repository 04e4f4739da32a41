"""bench CLI: generate a corpus, run latency measurements, emit reports,
compare runs."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..errors import ApiError
from . import generator, runner, samples as samples_mod


def _cmd_generate(args) -> int:
    spec = generator.make_spec(
        args.preset, args.seed,
        cards=args.cards, deployments_per_card=args.deployments_per_card,
        experiments=args.experiments, devices=args.devices,
        target_card_bytes=args.target_card_bytes,
    )
    if args.endpoint:
        manifest = generator.ingest_corpus(spec, args.out_dir, args.endpoint,
                                           bearer_token=args.bearer_token)
        print(f"generated and ingested {len(manifest['mc_ids'])} cards, "
              f"{len(manifest['experiment_element_ids'])} experiments into {args.endpoint}")
        print(f"manifest: {Path(args.out_dir) / 'manifest.json'}")
    else:
        files = generator.write_corpus(spec, args.out_dir)
        print(f"generated {len(files['cards'])} cards under {args.out_dir} (no ingest)")
    return 0


def _cmd_run(args) -> int:
    manifest_path = Path(args.manifest or (Path(args.corpus_dir) / "manifest.json"))
    if not manifest_path.exists():
        print(f"manifest {manifest_path} not found; run `bench generate --endpoint ...` first",
              file=sys.stderr)
        return 2
    manifest = json.loads(manifest_path.read_text())
    target = args.target.replace("-", "_")
    operation = args.op.replace("-", "_")
    result = runner.run_bench(
        target, operation, args.n, args.endpoint, manifest,
        via_proxy=args.via_proxy, reuse_session=args.reuse_session,
        sample_offset=args.sample_offset,
    )
    Path(args.out).write_text(json.dumps(result.to_jsonable()) + "\n", encoding="utf-8")
    ok, failed = len(result.samples), len(result.errors)
    mean_total = (sum(s.total_ms for s in result.samples) / ok) if ok else float("nan")
    print(f"{target} {operation}: {ok} samples ({failed} errors), "
          f"mean total {mean_total:.2f} ms -> {args.out}")
    return 0 if ok else 1


def _cmd_report(args) -> int:
    result = samples_mod.RunResult.from_jsonable(json.loads(Path(args.infile).read_text()))
    text = samples_mod.write_report(result, args.format, args.out)
    if args.out:
        print(f"wrote {args.format} report to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_compare(args) -> int:
    named = []
    for path in args.reports:
        report = json.loads(Path(path).read_text())
        if "components" not in report:  # raw run output: summarize on the fly
            report = samples_mod.build_report(
                samples_mod.RunResult.from_jsonable(report))
        name = report.get("config", {}).get("target") or Path(path).stem
        named.append((name, report))
    rows = samples_mod.compare_reports(named)
    sys.stdout.write(samples_mod.comparison_table(rows))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bench",
                                     description="Model-card registry protocol benchmark")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="build a deterministic corpus and ingest it")
    gen.add_argument("--preset", choices=("micro", "realworld"), required=True)
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--endpoint", help="REST base URL to ingest into (omit to only write files)")
    gen.add_argument("--out-dir", default="bench_corpus")
    gen.add_argument("--bearer-token")
    gen.add_argument("--cards", type=int)
    gen.add_argument("--deployments-per-card", type=int)
    gen.add_argument("--experiments", type=int)
    gen.add_argument("--devices", type=int)
    gen.add_argument("--target-card-bytes", type=int)
    gen.set_defaults(func=_cmd_generate)

    run = sub.add_parser("run", help="measure one server variant")
    run.add_argument("--target", choices=("rest", "native-mcp", "layered-mcp"), required=True)
    run.add_argument("--op", choices=("retrieve", "create-edge", "search"), required=True)
    run.add_argument("--n", type=int, required=True)
    run.add_argument("--endpoint", required=True, help="server base URL or host:port")
    run.add_argument("--via-proxy", help="route connections through this host:port")
    run.add_argument("--reuse-session", action="store_true")
    run.add_argument("--sample-offset", type=int, default=0,
                     help="shift the work-plan index (disjoint create-edge pair ranges)")
    run.add_argument("--manifest", help="manifest.json path (default: CORPUS_DIR/manifest.json)")
    run.add_argument("--corpus-dir", default="bench_corpus")
    run.add_argument("--out", required=True, help="raw sample file (JSON)")
    run.set_defaults(func=_cmd_run)

    rep = sub.add_parser("report", help="render a run as CSV or summary JSON")
    rep.add_argument("--in", dest="infile", required=True)
    rep.add_argument("--format", choices=("csv", "summary-json"), required=True)
    rep.add_argument("--out")
    rep.set_defaults(func=_cmd_report)

    cmp_parser = sub.add_parser("compare",
                                help="pairwise mean-total ratios with confidence intervals")
    cmp_parser.add_argument("reports", nargs="+")
    cmp_parser.set_defaults(func=_cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ApiError as exc:
        print(f"error: {exc.code}: {exc.detail}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
