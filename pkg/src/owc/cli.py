"""Command-line entry points.

Subcommands: score, report, elo, agree, tagmatch, delta, templates,
validate. Every run logs its full effective configuration to stderr; file
outputs are canonically ordered so equal configs and inputs give
byte-identical results. Error families map to exit codes: config=2, io=3,
backend=4, judge-parse=5.
"""

from __future__ import annotations

import functools
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor

import click

from . import analysis, ingest, metrics, report
from .backends import (
    AuditLog,
    AuditingEmbedder,
    AuditingJudge,
    BackendDescriptor,
    build_embedder,
    build_judge,
)
from .errors import BackendError, ConfigError, JudgeParseError, OwcError
from .records import (
    EloConfig,
    FailedScore,
    QuadrantLabel,
    SampleRecord,
    ThresholdConfig,
    validate_run_bundle,
)
from .prompts import VARIANT_TEMPLATES
from .stopwords import STOPWORDS_VERSION, stopword_listing
from .textproc import SPLITTER_MODES

logger = logging.getLogger("owc")


def _log_config(command: str, params: dict) -> None:
    logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(levelname)s %(message)s")
    printable = {k: v for k, v in sorted(params.items()) if not k.startswith("_")}
    logger.info("command=%s config=%s", command, json.dumps(printable, sort_keys=True, default=str))


def _fail(exc: OwcError) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(exc.exit_code)


def handles_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except OwcError as exc:
            _fail(exc)

    return wrapper


def backend_options(fn):
    fn = click.option("--mock", is_flag=True, help="Use the deterministic in-process backends.")(fn)
    fn = click.option("--embed-endpoint", default="", help="Remote embeddings endpoint URL.")(fn)
    fn = click.option("--judge-endpoint", default="", help="Remote judge (chat) endpoint URL.")(fn)
    fn = click.option("--embed-model", default="", help="Remote embedding model name.")(fn)
    fn = click.option("--judge-model", default="", help="Remote judge model name.")(fn)
    fn = click.option("--judge-rule", default="token_overlap",
                      type=click.Choice(["exact", "token_overlap", "cosine"]),
                      help="Mock judge rule table.")(fn)
    fn = click.option("--timeout-ms", default=30_000, show_default=True, help="Remote timeout.")(fn)
    fn = click.option("--parallelism", default=1, show_default=True,
                      help="Concurrent in-flight backend requests.")(fn)
    fn = click.option("--seed", default=42, show_default=True,
                      help="Seed for mock backends and samplers.")(fn)
    return fn


def threshold_options(fn):
    fn = click.option("--cs-threshold", default=0.6, show_default=True)(fn)
    fn = click.option("--li-threshold", default=0.5, show_default=True)(fn)
    fn = click.option("--tag-threshold", default=0.95, show_default=True)(fn)
    return fn


def _embed_descriptor(
    mock: bool, endpoint: str, model: str, timeout_ms: int, parallelism: int, seed: int
) -> BackendDescriptor:
    if mock:
        return BackendDescriptor(kind="mock_embed", seed=seed, parallelism=parallelism)
    if not endpoint:
        raise ConfigError("remote mode needs --embed-endpoint (or use --mock)")
    return BackendDescriptor(
        kind="remote_embed",
        endpoint=endpoint,
        model_name=model,
        timeout_s=timeout_ms / 1000.0,
        parallelism=parallelism,
    )


def _judge_descriptor(
    mock: bool, endpoint: str, model: str, rule: str, timeout_ms: int, parallelism: int, seed: int
) -> BackendDescriptor:
    if mock:
        return BackendDescriptor(
            kind="mock_judge", seed=seed, judge_rule=rule, parallelism=parallelism
        )
    if not endpoint:
        raise ConfigError("remote mode needs --judge-endpoint (or use --mock)")
    return BackendDescriptor(
        kind="remote_judge",
        endpoint=endpoint,
        model_name=model,
        timeout_s=timeout_ms / 1000.0,
        parallelism=parallelism,
    )


def _thresholds(cs_threshold: float, li_threshold: float, tag_threshold: float) -> ThresholdConfig:
    return ThresholdConfig(
        cs_threshold=cs_threshold, li_threshold=li_threshold, tag_match_threshold=tag_threshold
    )


@click.group()
def main() -> None:
    """Score free-form classifier outputs and run the cross-model analyses."""


# ---------------------------------------------------------------------------
# score


@main.command()
@click.option("--samples", "sample_paths", multiple=True, required=True,
              type=click.Path(), help="Dataset manifest JSONL (repeatable).")
@click.option("--predictions", "predictions_path", required=True, type=click.Path())
@click.option("--splits", "splits_path", default="", type=click.Path(),
              help="Precomputed concept spans JSONL (enables external splitter).")
@click.option("--store-dir", required=True, type=click.Path())
@click.option("--ti-mode", default="token", type=click.Choice(list(metrics.TI_MODES)),
              show_default=True)
@click.option("--splitter", default="builtin_ngram", type=click.Choice(list(SPLITTER_MODES)),
              show_default=True)
@click.option("--allow-partial", is_flag=True,
              help="Exit 0 even when some records failed (tally is reported).")
@click.option("--resume", is_flag=True, help="Continue an interrupted run in --store-dir.")
@click.option("--override-config-mismatch", is_flag=True,
              help="Resume even if the stored run config differs.")
@click.option("--max-records", default=0, show_default=True,
              help="Stop after N records this invocation (0 = no limit).")
@click.option("--audit-log", default="", type=click.Path(),
              help="Append every backend request/response to this JSONL for replay.")
@backend_options
@handles_errors
def score(
    sample_paths,
    predictions_path,
    splits_path,
    store_dir,
    ti_mode,
    splitter,
    allow_partial,
    resume,
    override_config_mismatch,
    max_records,
    audit_log,
    mock,
    embed_endpoint,
    judge_endpoint,
    embed_model,
    judge_model,
    judge_rule,
    timeout_ms,
    parallelism,
    seed,
):
    """Score every prediction and persist the records into the run store."""
    _log_config("score", locals())
    embed_desc = _embed_descriptor(mock, embed_endpoint, embed_model, timeout_ms, parallelism, seed)
    judge_desc = _judge_descriptor(
        mock, judge_endpoint, judge_model, judge_rule, timeout_ms, parallelism, seed
    )
    samples, predictions, diags = ingest.load_bundle(sample_paths, predictions_path)
    bundle_diags = validate_run_bundle(samples, predictions)
    for d in diags + bundle_diags:
        click.echo(f"diagnostic: {d}", err=True)
    if bundle_diags:
        raise ConfigError(f"bundle has {len(bundle_diags)} consistency violations")

    splits = ingest.load_splits(splits_path) if splits_path else None
    if splitter == "external_precomputed" and splits is None:
        raise ConfigError("external_precomputed splitter requires --splits")

    # Scientific configuration only: operational flags (parallelism,
    # max-records) must not block resumes.
    run_config = {
        "embedder": embed_desc.to_dict(),
        "judge": judge_desc.to_dict(),
        "ti_mode": ti_mode,
        "splitter": splitter,
        "seed": seed,
    }
    store = ingest.RunStore(store_dir)
    by_key = {p.key: p for p in predictions}
    sample_of = {(s.dataset_id, s.sample_id): s for s in samples}
    if resume and store.exists():
        pending = ingest.checkpoint_and_resume(
            store, by_key.keys(), run_config, override=override_config_mismatch
        )
    else:
        if store.exists():
            store.check_config(run_config, override=override_config_mismatch)
        store.initialize(run_config)
        pending = sorted(by_key.keys())
    if max_records > 0:
        pending = pending[:max_records]

    embedder = build_embedder(embed_desc)
    judge = build_judge(judge_desc)
    if audit_log:
        log = AuditLog(audit_log)
        embedder = AuditingEmbedder(embedder, log)
        judge = AuditingJudge(judge, log)

    failures = 0
    first_error: OwcError | None = None

    def score_one(key):
        prediction = by_key[key]
        sample = sample_of[(prediction.dataset_id, prediction.sample_id)]
        spans = splits.get(key) if splits is not None else None
        return metrics.score_prediction(
            sample, prediction, embedder, judge,
            splitter_mode=splitter, ti_mode=ti_mode, precomputed_spans=spans,
        )

    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        for key, outcome in zip(pending, pool.map(lambda k: _guard(score_one, k), pending)):
            if isinstance(outcome, OwcError):
                failures += 1
                first_error = first_error or outcome
                store.append(FailedScore(*key, error=str(outcome)))
            else:
                store.append(outcome)

    done, _ = store.load_scores()
    click.echo(
        f"scored {len(done)} records into {store_dir} "
        f"(this run: {len(pending)} attempted, {failures} failed)"
    )
    if failures and not allow_partial:
        assert first_error is not None
        raise first_error


def _guard(fn, key):
    try:
        return fn(key)
    except (BackendError, JudgeParseError) as exc:
        logger.warning("record %s failed: %s", "/".join(key), exc)
        return exc


# ---------------------------------------------------------------------------
# report


@main.command("report")
@click.option("--store-dir", default="", type=click.Path())
@click.option("--samples", "sample_paths", multiple=True, type=click.Path())
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--level", default="both", type=click.Choice(["dataset", "group", "both"]),
              show_default=True)
@click.option("--published-csv", default="", type=click.Path(),
              help="Render a grouped table from a published per-dataset CSV instead of a store.")
@click.option("--agreement-base", default="jaccard",
              type=click.Choice(list(analysis.AGREEMENT_BASES)), show_default=True)
@click.option("--allow-partial", is_flag=True, help="Report even if the store has failed keys.")
@threshold_options
@handles_errors
def report_cmd(
    store_dir,
    sample_paths,
    out_dir,
    level,
    published_csv,
    agreement_base,
    allow_partial,
    cs_threshold,
    li_threshold,
    tag_threshold,
):
    """Render aggregate, quadrant, and agreement tables from a run store."""
    _log_config("report", locals())
    thresholds = _thresholds(cs_threshold, li_threshold, tag_threshold)

    if published_csv:
        table = ingest.load_published_table(published_csv)
        grouped, diags = analysis.group_aggregate(table, ingest.CANONICAL_DATASET_GROUPS)
        for d in diags:
            click.echo(f"diagnostic: {d}", err=True)
        report.write_section(
            out_dir, "aggregate_dataset",
            report.aggregate_csv(table),
            report.aggregate_md(table, "Published per-dataset results (%)"),
            report.aggregate_json(table),
        )
        report.write_section(
            out_dir, "aggregate_group",
            report.aggregate_csv(grouped),
            report.aggregate_md(grouped, "Grouped results (macro-average, %)"),
            report.aggregate_json(grouped),
        )
        click.echo(f"wrote published-table report to {out_dir}")
        return

    if not store_dir:
        raise ConfigError("report needs --store-dir or --published-csv")
    store = ingest.RunStore(store_dir)
    scores, failed = store.load_scores()
    if not scores:
        raise ConfigError("run store holds no scores")
    if failed and not allow_partial:
        raise ConfigError(
            f"run store has {len(failed)} failed keys; pass --allow-partial to report anyway"
        )
    samples: list[SampleRecord] = []
    for path in sample_paths:
        samples.extend(ingest.load_manifest(path).samples)

    sections: list[str] = []
    if level in ("dataset", "both"):
        table, diags = analysis.aggregate(scores, samples, level="dataset")
        _echo_diags(diags)
        report.write_section(
            out_dir, "aggregate_dataset",
            report.aggregate_csv(table),
            report.aggregate_md(table, "Per-dataset results (%)"),
            report.aggregate_json(table),
        )
        stats = analysis.quadrant_stats(scores, samples, thresholds, level="dataset")
        report.write_section(
            out_dir, "quadrants_dataset",
            report.quadrant_csv(stats), report.quadrant_md(stats), report.quadrant_json(stats),
        )
        sections += ["aggregate_dataset", "quadrants_dataset"]
    if level in ("group", "both"):
        if not samples:
            raise ConfigError("group-level reporting needs --samples manifests")
        table, diags = analysis.aggregate(scores, samples, level="group")
        _echo_diags(diags)
        report.write_section(
            out_dir, "aggregate_group",
            report.aggregate_csv(table),
            report.aggregate_md(table, "Grouped results (macro-average, %)"),
            report.aggregate_json(table),
        )
        stats = analysis.quadrant_stats(scores, samples, thresholds, level="group")
        report.write_section(
            out_dir, "quadrants_group",
            report.quadrant_csv(stats), report.quadrant_md(stats), report.quadrant_json(stats),
        )
        sections += ["aggregate_group", "quadrants_group"]

    bucket_rows, diags = analysis.dataset_agreement_buckets(scores)
    _echo_diags(diags)
    report.write_section(
        out_dir, "agreement_buckets",
        report.buckets_csv(bucket_rows), report.buckets_md(bucket_rows),
        report.buckets_json(bucket_rows),
    )
    sections.append("agreement_buckets")
    models = {s.model_id for s in scores}
    if len(models) >= 2:
        pairwise, diags = analysis.pairwise_agreement(
            scores, QuadrantLabel.correct_specific, thresholds, base=agreement_base
        )
        _echo_diags(diags)
        report.write_section(
            out_dir, "agreement_pairwise",
            report.pairwise_csv(pairwise), report.pairwise_md(pairwise),
            report.pairwise_json(pairwise),
        )
        sections.append("agreement_pairwise")
    click.echo(f"wrote {', '.join(sections)} to {out_dir}")


def _echo_diags(diags) -> None:
    for d in diags:
        click.echo(f"diagnostic: {d}", err=True)


# ---------------------------------------------------------------------------
# elo


@main.command()
@click.option("--samples", "sample_paths", multiple=True, required=True, type=click.Path())
@click.option("--predictions", "predictions_path", required=True, type=click.Path())
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--variant", default="base", show_default=True)
@click.option("--pairs", default=10_000, show_default=True,
              help="Sampled matches per dataset.")
@click.option("--k-factor", default=32.0, show_default=True)
@click.option("--initial-rating", default=1000.0, show_default=True)
@backend_options
@handles_errors
def elo(
    sample_paths,
    predictions_path,
    out_dir,
    variant,
    pairs,
    k_factor,
    initial_rating,
    mock,
    embed_endpoint,
    judge_endpoint,
    embed_model,
    judge_model,
    judge_rule,
    timeout_ms,
    parallelism,
    seed,
):
    """Rank models by judged pairwise matches on their predictions."""
    _log_config("elo", locals())
    judge_desc = _judge_descriptor(
        mock, judge_endpoint, judge_model, judge_rule, timeout_ms, parallelism, seed
    )
    samples, predictions, diags = ingest.load_bundle(sample_paths, predictions_path)
    _echo_diags(diags)
    config = EloConfig(
        initial_rating=initial_rating, k_factor=k_factor, pairs_per_dataset=pairs, seed=seed
    )
    judge = build_judge(judge_desc)
    result = analysis.run_elo(samples, predictions, judge, config, variant_id=variant)
    report.write_section(
        out_dir, "elo", report.elo_csv(result), report.elo_md(result), report.elo_json(result)
    )
    click.echo(f"wrote elo to {out_dir} ({result.average.skipped_pairs} pairs skipped)")


# ---------------------------------------------------------------------------
# agree


@main.command()
@click.option("--store-dir", required=True, type=click.Path())
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--quadrant", default="correct_specific",
              type=click.Choice([q.value for q in analysis.QUADRANT_ORDER]), show_default=True)
@click.option("--agreement-base", default="jaccard",
              type=click.Choice(list(analysis.AGREEMENT_BASES)), show_default=True)
@click.option("--allow-partial", is_flag=True)
@threshold_options
@handles_errors
def agree(
    store_dir, out_dir, quadrant, agreement_base, allow_partial,
    cs_threshold, li_threshold, tag_threshold,
):
    """Agreement buckets and the pairwise shared-prediction matrix."""
    _log_config("agree", locals())
    thresholds = _thresholds(cs_threshold, li_threshold, tag_threshold)
    scores, failed = ingest.RunStore(store_dir).load_scores()
    if not scores:
        raise ConfigError("run store holds no scores")
    if failed and not allow_partial:
        raise ConfigError(f"run store has {len(failed)} failed keys")
    bucket_rows, diags = analysis.dataset_agreement_buckets(scores)
    _echo_diags(diags)
    report.write_section(
        out_dir, "agreement_buckets",
        report.buckets_csv(bucket_rows), report.buckets_md(bucket_rows),
        report.buckets_json(bucket_rows),
    )
    pairwise, diags = analysis.pairwise_agreement(
        scores, QuadrantLabel(quadrant), thresholds, base=agreement_base
    )
    _echo_diags(diags)
    report.write_section(
        out_dir, "agreement_pairwise",
        report.pairwise_csv(pairwise), report.pairwise_md(pairwise),
        report.pairwise_json(pairwise),
    )
    click.echo(f"wrote agreement report to {out_dir}")


# ---------------------------------------------------------------------------
# tagmatch


@main.command()
@click.option("--store-dir", required=True, type=click.Path())
@click.option("--predictions", "predictions_path", required=True, type=click.Path())
@click.option("--tags", "tags_path", required=True, type=click.Path())
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--wrong-by", default="li", type=click.Choice(list(analysis.WRONG_BY_CHOICES)),
              show_default=True, help="Which metric marks a prediction wrong.")
@click.option("--splitter", default="builtin_ngram", type=click.Choice(list(SPLITTER_MODES)),
              show_default=True)
@click.option("--allow-partial", is_flag=True)
@backend_options
@threshold_options
@handles_errors
def tagmatch(
    store_dir, predictions_path, tags_path, out_dir, wrong_by, splitter, allow_partial,
    mock, embed_endpoint, judge_endpoint, embed_model, judge_model, judge_rule,
    timeout_ms, parallelism, seed,
    cs_threshold, li_threshold, tag_threshold,
):
    """Check wrong predictions against ingested image tags."""
    _log_config("tagmatch", locals())
    thresholds = _thresholds(cs_threshold, li_threshold, tag_threshold)
    embed_desc = _embed_descriptor(mock, embed_endpoint, embed_model, timeout_ms, parallelism, seed)
    scores, failed = ingest.RunStore(store_dir).load_scores()
    if not scores:
        raise ConfigError("run store holds no scores")
    if failed and not allow_partial:
        raise ConfigError(f"run store has {len(failed)} failed keys")
    predictions, diags = ingest.load_predictions(predictions_path)
    _echo_diags(diags)
    tags = ingest.load_tags(tags_path)
    result, diags = analysis.tag_match(
        scores, predictions, tags, build_embedder(embed_desc), thresholds,
        wrong_by=wrong_by, splitter_mode=splitter,
    )
    _echo_diags(diags)
    report.write_section(
        out_dir, "tagmatch",
        report.tagmatch_csv(result), report.tagmatch_md(result), report.tagmatch_json(result),
    )
    click.echo(f"wrote tagmatch to {out_dir}")


# ---------------------------------------------------------------------------
# delta


@main.command()
@click.option("--store-base", required=True, type=click.Path())
@click.option("--store-variant", required=True, type=click.Path())
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--allow-partial", is_flag=True)
@threshold_options
@handles_errors
def delta(
    store_base, store_variant, out_dir, allow_partial,
    cs_threshold, li_threshold, tag_threshold,
):
    """Metric and prediction-type deltas between two runs."""
    _log_config("delta", locals())
    thresholds = _thresholds(cs_threshold, li_threshold, tag_threshold)
    base_scores, base_failed = ingest.RunStore(store_base).load_scores()
    var_scores, var_failed = ingest.RunStore(store_variant).load_scores()
    if (base_failed or var_failed) and not allow_partial:
        raise ConfigError("one of the stores has failed keys; pass --allow-partial")
    if not base_scores or not var_scores:
        raise ConfigError("both stores must hold scores")
    result, diags = analysis.delta_report(base_scores, var_scores, thresholds)
    _echo_diags(diags)
    report.write_section(
        out_dir, "delta",
        report.delta_csv(result), report.delta_md(result), report.delta_json(result),
    )
    click.echo(f"wrote delta to {out_dir}")


# ---------------------------------------------------------------------------
# templates / validate


@main.command()
@click.option("--stopwords", "show_stopwords", is_flag=True,
              help="Print the splitter stopword list instead.")
def templates(show_stopwords):
    """Print the versioned query-variant templates."""
    if show_stopwords:
        click.echo(f"stopwords v{STOPWORDS_VERSION} ({len(stopword_listing())} words)")
        for word in stopword_listing():
            click.echo(word)
        return
    for t in VARIANT_TEMPLATES:
        click.echo(f"{t.variant_id}\tv{t.version}\t{t.text}")


@main.command()
@click.option("--samples", "sample_paths", multiple=True, required=True, type=click.Path())
@click.option("--predictions", "predictions_path", required=True, type=click.Path())
@handles_errors
def validate(sample_paths, predictions_path):
    """Check a (samples, predictions) bundle; exit 1 if violations exist."""
    _log_config("validate", locals())
    samples, predictions, diags = ingest.load_bundle(sample_paths, predictions_path)
    bundle_diags = validate_run_bundle(samples, predictions)
    for d in diags + bundle_diags:
        click.echo(str(d))
    if bundle_diags:
        click.echo(f"{len(bundle_diags)} violations")
        sys.exit(1)
    click.echo(f"ok: {len(samples)} samples, {len(predictions)} predictions")


if __name__ == "__main__":
    main()
