"""Command-line entry point orchestrating the curation pipeline modules.

Exit codes: 0 success, 1 runtime error, 2 usage/config error. Errors are
emitted as one machine-readable JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import estimator as est
from . import evalstats, metrics, report, selection, synth
from .dedup import DedupConfig, deduplicate, read_descriptor_sets
from .errors import ConfigError, PixsiftError, UsageError
from .ndjson import write_ndjson
from .providers import read_score_provider
from .records import read_records, save_manifest
from .stages import load_pipeline_config, run_pipeline


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pixsift", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    # pipeline run
    pipeline = sub.add_parser("pipeline", help="full curation pipeline")
    pipeline_sub = pipeline.add_subparsers(dest="pipeline_command", required=True)
    run = pipeline_sub.add_parser("run", help="run stages, dedup, estimator, selection")
    run.add_argument("--config", required=True, help="pipeline TOML config")
    run.add_argument("--records", required=True, help="NDJSON record stream")
    run.add_argument("--scores", nargs="*", default=[], help="score provider NDJSON files")
    run.add_argument("--descriptors", help="descriptor NDJSON (needed for [dedup])")
    run.add_argument("--hq", help="calibration activations, higher-quality group")
    run.add_argument("--lq", help="calibration activations, lower-quality group")
    run.add_argument("--table", help="prefit separation table JSON (alternative to --hq/--lq)")
    run.add_argument("--activations", help="activation norms NDJSON for scoring")
    run.add_argument("--out", required=True, help="output manifest path")
    run.add_argument("--report-dir", help="write stage_log.tsv and funnel.png here")
    run.add_argument("--workers", type=int, default=1)

    # estimator fit / score
    estimator = sub.add_parser("estimator", help="activation-based quality estimator")
    est_sub = estimator.add_subparsers(dest="estimator_command", required=True)
    fit = est_sub.add_parser("fit", help="fit separation table from calibration groups")
    fit.add_argument("--hq", required=True)
    fit.add_argument("--lq", required=True)
    fit.add_argument("-K", "--k", type=int, default=32, dest="k")
    fit.add_argument("--out", required=True)
    score = est_sub.add_parser("score", help="score activation norms with a fitted table")
    score.add_argument("--table", required=True)
    score.add_argument("--in", required=True, dest="infile")
    score.add_argument("--out", required=True)
    score.add_argument("--score-key", default="diffusion_estimator")
    score.add_argument("--workers", type=int, default=1)

    # dedup
    dedup = sub.add_parser("dedup", help="near-duplicate elimination")
    dedup.add_argument("--records", required=True)
    dedup.add_argument("--descriptors", required=True)
    dedup.add_argument("--ratio", type=float, default=0.8)
    dedup.add_argument("--min-matches", type=int, default=8)
    dedup.add_argument("--quality-key", default="quality")
    dedup.add_argument("--out", required=True)
    dedup.add_argument("--workers", type=int, default=1)

    # select
    select = sub.add_parser("select", help="top-n selection and size variants")
    select.add_argument("--records", required=True)
    select.add_argument("--score-key", default="diffusion_estimator")
    group = select.add_mutually_exclusive_group()
    group.add_argument("--n", type=int, default=None, help="top-n selection (default 3350)")
    group.add_argument("--sizes", help="comma-separated nested variant sizes")
    group.add_argument("--sample", type=int, help="seeded uniform sample size")
    select.add_argument("--seed", type=int, default=0)
    select.add_argument("--out", help="output manifest (for --n / --sample)")
    select.add_argument("--out-dir", help="output directory (for --sizes)")

    # eval aggregate
    evalp = sub.add_parser("eval", help="human evaluation statistics")
    eval_sub = evalp.add_subparsers(dest="eval_command", required=True)
    agg = eval_sub.add_parser("aggregate", help="aggregate annotations into outcomes")
    agg.add_argument("--experiment", required=True)
    agg.add_argument("--annotations", required=True)
    agg.add_argument("--out", help="write outcome JSON here")
    agg.add_argument("--report-dir", help="write outcomes.tsv/json and win_rates.png here")

    # metrics
    metricsp = sub.add_parser("metrics", help="automated metric harness")
    metrics_sub = metricsp.add_subparsers(dest="metrics_command", required=True)
    fd = metrics_sub.add_parser("fd", help="Fréchet distance between two feature sets")
    fd.add_argument("--features-a", required=True)
    fd.add_argument("--features-b", required=True)
    magg = metrics_sub.add_parser("aggregate", help="aggregate per-image scalar scores")
    magg.add_argument("--scores", required=True)
    magg.add_argument("--report-dir", help="write metrics.tsv and metrics.png here")

    # serve
    serve = sub.add_parser("serve", help="run the annotation service")
    serve.add_argument("--experiment", required=True)
    serve.add_argument("--log-dir", required=True)
    serve.add_argument("--static-dir", help="serve the UI bundle from this directory")

    # synth
    synthp = sub.add_parser("synth", help="seeded synthetic fixtures")
    synth_sub = synthp.add_subparsers(dest="synth_command", required=True)
    acts = synth_sub.add_parser("activations", help="planted-signal activation fixture")
    acts.add_argument("--seed", type=int, required=True)
    acts.add_argument("--planted", type=int, default=16, help="number of planted cells")
    acts.add_argument("--layers", type=int, default=8)
    acts.add_argument("--tokens", type=int, default=16)
    acts.add_argument("--hq", type=int, default=500)
    acts.add_argument("--lq", type=int, default=500)
    acts.add_argument("--test", type=int, default=200)
    acts.add_argument("--out-dir", required=True)
    corpus = synth_sub.add_parser("corpus", help="full synthetic pipeline corpus")
    corpus.add_argument("--seed", type=int, default=synth.CORPUS_SEED)
    corpus.add_argument("--records", type=int, default=10_000)
    corpus.add_argument("--out-dir", required=True)

    return parser


def _cmd_pipeline_run(args: argparse.Namespace) -> int:
    cfg = load_pipeline_config(args.config)
    records = read_records(args.records)
    providers = [read_score_provider(p) for p in args.scores]
    descriptor_sets = read_descriptor_sets(args.descriptors) if args.descriptors else []

    calibration = None
    table = None
    activations = None
    if cfg.estimator is not None:
        if args.table:
            table = est.load_table(args.table)
        elif args.hq and args.lq:
            calibration = est.CalibrationSet(
                hq=tuple(est.read_norms(args.hq)), lq=tuple(est.read_norms(args.lq))
            )
        else:
            raise ConfigError(
                "config has an [estimator] section: pass --table or both --hq and --lq"
            )
        if not args.activations:
            raise ConfigError("config has an [estimator] section: pass --activations")
        activations = est.norm_index(est.read_norms(args.activations))

    manifest = run_pipeline(
        records,
        cfg,
        providers,
        descriptor_sets=descriptor_sets,
        calibration=calibration,
        separation_table=table,
        activations=activations,
        workers=args.workers,
    )
    save_manifest(manifest, args.out)
    print(report.funnel_text(manifest))
    print(f"manifest written to {args.out}")
    if args.report_dir:
        report.write_pipeline_report(manifest, args.report_dir)
        print(f"report written to {args.report_dir}")
    return 0


def _cmd_estimator_fit(args: argparse.Namespace) -> int:
    calibration = est.CalibrationSet(
        hq=tuple(est.read_norms(args.hq)), lq=tuple(est.read_norms(args.lq))
    )
    table = est.fit(calibration, args.k)
    est.save_table(table, args.out)
    print(
        f"fitted separation table: {table.layer_count}x{table.token_count} cells, "
        f"{table.pair_count} pairs, top-{len(table.top_k or ())} selected -> {args.out}"
    )
    return 0


def _cmd_estimator_score(args: argparse.Namespace) -> int:
    table = est.load_table(args.table)
    xs = est.read_norms(args.infile)
    scored = est.score_corpus(xs, table, workers=args.workers)
    write_ndjson(
        args.out,
        (
            {"image_id": image_id, "scores": {args.score_key: value}}
            for image_id, value in scored
        ),
    )
    print(f"scored {len(scored)} images -> {args.out}")
    return 0


def _cmd_dedup(args: argparse.Namespace) -> int:
    records = read_records(args.records)
    sets = read_descriptor_sets(args.descriptors)
    cfg = DedupConfig(
        ratio_threshold=args.ratio,
        min_matches=args.min_matches,
        quality_key=args.quality_key,
    )
    survivors, stage_report = deduplicate(records, sets, cfg, workers=args.workers)
    from .records import DatasetManifest

    manifest = DatasetManifest(records=tuple(survivors), stage_log=(stage_report,))
    save_manifest(manifest, args.out)
    print(
        f"dedup: {stage_report.input_count} -> {stage_report.output_count} "
        f"({stage_report.parameters['clusters']} clusters) -> {args.out}"
    )
    return 0


def _cmd_select(args: argparse.Namespace) -> int:
    records = read_records(args.records)
    if args.sizes:
        if not args.out_dir:
            raise ConfigError("--sizes requires --out-dir")
        sizes = [int(s) for s in args.sizes.split(",") if s]
        manifests = selection.nested_variants(records, sizes, score_key=args.score_key)
        outdir = Path(args.out_dir)
        outdir.mkdir(parents=True, exist_ok=True)
        for size, manifest in zip(sizes, manifests):
            path = outdir / f"select_n{size}.json"
            save_manifest(manifest, path)
            print(f"variant n={size}: {len(manifest.records)} records -> {path}")
        return 0
    if args.sample is not None:
        if not args.out:
            raise ConfigError("--sample requires --out")
        sampled = selection.sample_uniform(records, args.sample, args.seed)
        from .records import DatasetManifest, StageReport

        manifest = DatasetManifest(
            records=tuple(sampled),
            stage_log=(
                StageReport(
                    stage_name="sample_uniform",
                    input_count=len(records),
                    output_count=len(sampled),
                    parameters={"n": str(args.sample), "seed": str(args.seed)},
                ),
            ),
        )
        save_manifest(manifest, args.out)
        print(f"sampled {len(sampled)} of {len(records)} records -> {args.out}")
        return 0
    if not args.out:
        raise ConfigError("--n requires --out")
    n = args.n if args.n is not None else 3350
    cfg = selection.SelectionConfig(n=n, score_key=args.score_key)
    manifest = selection.select_top_n(records, cfg)
    save_manifest(manifest, args.out)
    print(f"selected top {len(manifest.records)} of {len(records)} records -> {args.out}")
    return 0


def _cmd_eval_aggregate(args: argparse.Namespace) -> int:
    experiment, _, _ = evalstats.load_experiment(args.experiment)
    annotations = evalstats.read_annotations(args.annotations)
    outcomes = evalstats.aggregate(experiment, annotations)
    print(report.eval_table_text(experiment, outcomes))
    if args.out:
        evalstats.write_outcomes(args.out, experiment, outcomes)
        print(f"outcomes written to {args.out}")
    if args.report_dir:
        report.write_eval_report(experiment, outcomes, args.report_dir)
        print(f"report written to {args.report_dir}")
    return 0


def _cmd_metrics_fd(args: argparse.Namespace) -> int:
    features_a = metrics.read_feature_set(args.features_a)
    features_b = metrics.read_feature_set(args.features_b)
    fd = metrics.frechet_distance(
        metrics.fit_gaussian(features_a), metrics.fit_gaussian(features_b)
    )
    print(
        f"frechet_distance {features_a.label} vs {features_b.label} "
        f"(n={features_a.count}/{features_b.count}, d={features_a.dim}): {fd:.6g}"
    )
    return 0


def _cmd_metrics_aggregate(args: argparse.Namespace) -> int:
    rows = []
    for score_set in metrics.read_scalar_scores(args.scores):
        mean, count = metrics.aggregate_scores(score_set)
        rows.append((score_set.metric_name, mean, count))
    print(report.metrics_table_text(rows))
    if args.report_dir:
        report.write_metrics_report(rows, args.report_dir)
        print(f"report written to {args.report_dir}")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import bind_address, create_app

    app = create_app(args.experiment, args.log_dir, static_dir=args.static_dir)
    host, port = bind_address()
    uvicorn.run(app, host=host, port=port)
    return 0


def _cmd_synth_activations(args: argparse.Namespace) -> int:
    spec = synth.PlantedSpec(
        layer_count=args.layers,
        token_count=args.tokens,
        planted=args.planted,
        hq_count=args.hq,
        lq_count=args.lq,
        test_count=args.test,
    )
    fixture = synth.generate_planted(spec, seed=args.seed)
    paths = synth.write_planted(fixture, args.out_dir)
    print(
        f"planted fixture: {args.layers}x{args.tokens} cells, {args.planted} planted, "
        f"{args.hq}/{args.lq} calibration, {args.test} test -> {paths['hq'].parent}"
    )
    return 0


def _cmd_synth_corpus(args: argparse.Namespace) -> int:
    spec = synth.CorpusSpec(record_count=args.records)
    fixture = synth.generate_corpus(spec, seed=args.seed)
    paths = synth.write_corpus(fixture, args.out_dir)
    print(f"corpus fixture: {args.records} records -> {paths['records'].parent}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "pipeline":
            return _cmd_pipeline_run(args)
        if args.command == "estimator":
            if args.estimator_command == "fit":
                return _cmd_estimator_fit(args)
            return _cmd_estimator_score(args)
        if args.command == "dedup":
            return _cmd_dedup(args)
        if args.command == "select":
            return _cmd_select(args)
        if args.command == "eval":
            return _cmd_eval_aggregate(args)
        if args.command == "metrics":
            if args.metrics_command == "fd":
                return _cmd_metrics_fd(args)
            return _cmd_metrics_aggregate(args)
        if args.command == "serve":
            return _cmd_serve(args)
        if args.command == "synth":
            if args.synth_command == "activations":
                return _cmd_synth_activations(args)
            return _cmd_synth_corpus(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except PixsiftError as exc:
        payload = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(payload), file=sys.stderr)
        return 2 if isinstance(exc, UsageError) else 1


if __name__ == "__main__":
    raise SystemExit(main())
