"""Downstream analyses over score streams.

Everything here is a pure fold over records: aggregation to dataset/group
tables, quadrant grouping, cross-model agreement, judge-adjudicated Elo
ranking, tag matching for wrong predictions, and prompt-variant deltas.
Values in tables are percentages at full double precision; rounding happens
in the report layer only.
"""

from __future__ import annotations

import logging
import random
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .backends import Embedder, Judge, cosine, judge_pairwise
from .errors import ConfigError, JudgeParseError
from .records import (
    Diagnostic,
    DatasetGroup,
    EloConfig,
    PredictionRecord,
    QuadrantLabel,
    SampleRecord,
    ScoreRecord,
    ThresholdConfig,
)
from .textproc import normalize, split_concepts

logger = logging.getLogger(__name__)

AGGREGATE_LEVELS = ("dataset", "group")
AGREEMENT_BASES = ("jaccard", "min", "max")
WRONG_BY_CHOICES = ("li", "ti")

QUADRANT_ORDER = (
    QuadrantLabel.correct_specific,
    QuadrantLabel.correct_generic,
    QuadrantLabel.wrong_specific,
    QuadrantLabel.wrong_generic,
)

METRIC_NAMES = ("ti", "li", "ss", "cs")


# ---------------------------------------------------------------------------
# Aggregation


@dataclass(frozen=True)
class AggregateRow:
    model_id: str
    scope: str  # dataset_id or group name
    n: int
    ti: float
    li: float
    ss: float
    cs: float

    def metric(self, name: str) -> float:
        return {"ti": self.ti, "li": self.li, "ss": self.ss, "cs": self.cs}[name]


@dataclass(frozen=True)
class AggregateTable:
    level: str
    rows: tuple[AggregateRow, ...]

    def cell(self, model_id: str, scope: str, metric: str) -> float:
        for row in self.rows:
            if row.model_id == model_id and row.scope == scope:
                return row.metric(metric)
        raise KeyError((model_id, scope, metric))


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


def dataset_aggregate(scores: Iterable[ScoreRecord]) -> AggregateTable:
    """Per-(model, dataset) means of the four metrics, in percent."""
    sums: dict[tuple[str, str], list[float]] = defaultdict(lambda: [0.0, 0.0, 0.0, 0.0, 0.0])
    for s in scores:
        acc = sums[(s.model_id, s.dataset_id)]
        acc[0] += s.ti
        acc[1] += s.li
        acc[2] += _clamp01(s.ss)
        acc[3] += s.cs
        acc[4] += 1.0
    rows = [
        AggregateRow(
            model_id=m,
            scope=d,
            n=int(acc[4]),
            ti=acc[0] / acc[4] * 100.0,
            li=acc[1] / acc[4] * 100.0,
            ss=acc[2] / acc[4] * 100.0,
            cs=acc[3] / acc[4] * 100.0,
        )
        for (m, d), acc in sorted(sums.items())
    ]
    return AggregateTable(level="dataset", rows=tuple(rows))


def group_aggregate(
    dataset_table: AggregateTable, group_of: Mapping[str, DatasetGroup]
) -> tuple[AggregateTable, list[Diagnostic]]:
    """Macro-average dataset rows into group rows (unweighted mean)."""
    diags: list[Diagnostic] = []
    per_group: dict[tuple[str, str], list[AggregateRow]] = defaultdict(list)
    for row in dataset_table.rows:
        group = group_of.get(row.scope)
        if group is None:
            diags.append(
                Diagnostic("unknown_group", f"dataset {row.scope} has no group mapping", row.scope)
            )
            continue
        per_group[(row.model_id, group.value)].append(row)
    rows = [
        AggregateRow(
            model_id=m,
            scope=g,
            n=sum(r.n for r in members),
            ti=sum(r.ti for r in members) / len(members),
            li=sum(r.li for r in members) / len(members),
            ss=sum(r.ss for r in members) / len(members),
            cs=sum(r.cs for r in members) / len(members),
        )
        for (m, g), members in sorted(per_group.items())
    ]
    return AggregateTable(level="group", rows=tuple(rows)), diags


def aggregate(
    scores: Sequence[ScoreRecord],
    samples: Sequence[SampleRecord],
    level: str = "dataset",
) -> tuple[AggregateTable, list[Diagnostic]]:
    """Aggregate scores to dataset or group level.

    Datasets present in ``samples`` but without any scored record are
    excluded with a diagnostic rather than reported as zero.
    """
    if level not in AGGREGATE_LEVELS:
        raise ValueError(f"unknown aggregation level {level!r}")
    if not scores:
        raise ValueError("aggregate requires at least one score")
    diags: list[Diagnostic] = []
    scored_datasets = {s.dataset_id for s in scores}
    group_of = {
        sample.dataset_id: sample.group
        for sample in samples
        if sample.dataset_id in scored_datasets
    }
    for dataset_id in sorted({s.dataset_id for s in samples} - scored_datasets):
        diags.append(
            Diagnostic("unscored_dataset", f"dataset {dataset_id} has no scores", dataset_id)
        )
    table = dataset_aggregate(scores)
    if level == "dataset":
        return table, diags
    grouped, group_diags = group_aggregate(table, group_of)
    return grouped, diags + group_diags


# ---------------------------------------------------------------------------
# Quadrants


def quadrant_of(
    li_value: float, cs_value: float, thresholds: ThresholdConfig = ThresholdConfig()
) -> QuadrantLabel:
    """Classify by thresholding; boundary values count as >= (generous rule)."""
    correct = li_value >= thresholds.li_threshold
    specific = cs_value >= thresholds.cs_threshold
    if correct:
        return QuadrantLabel.correct_specific if specific else QuadrantLabel.correct_generic
    return QuadrantLabel.wrong_specific if specific else QuadrantLabel.wrong_generic


@dataclass(frozen=True)
class QuadrantRow:
    model_id: str
    scope: str
    n: int
    fractions: tuple[float, float, float, float]  # QUADRANT_ORDER


@dataclass(frozen=True)
class QuadrantStats:
    level: str
    rows: tuple[QuadrantRow, ...]


def quadrant_stats(
    scores: Sequence[ScoreRecord],
    samples: Sequence[SampleRecord],
    thresholds: ThresholdConfig = ThresholdConfig(),
    level: str = "dataset",
) -> QuadrantStats:
    """Fractions of the four prediction types per (model, scope)."""
    if level not in AGGREGATE_LEVELS:
        raise ValueError(f"unknown aggregation level {level!r}")
    counts: dict[tuple[str, str], list[int]] = defaultdict(lambda: [0, 0, 0, 0])
    for s in scores:
        label = quadrant_of(float(s.li), s.cs, thresholds)
        counts[(s.model_id, s.dataset_id)][QUADRANT_ORDER.index(label)] += 1

    dataset_rows = {
        key: (sum(c), tuple(x / sum(c) for x in c)) for key, c in counts.items()
    }
    if level == "dataset":
        rows = [
            QuadrantRow(model_id=m, scope=d, n=n, fractions=fractions)
            for (m, d), (n, fractions) in sorted(dataset_rows.items())
        ]
        return QuadrantStats(level=level, rows=tuple(rows))

    # Group rows macro-average the member datasets' fractions, matching the
    # unweighted-mean convention of the grouped metric tables.
    group_of = {s.dataset_id: s.group for s in samples}
    merged: dict[tuple[str, str], list[tuple[int, tuple[float, ...]]]] = defaultdict(list)
    for (model, dataset), entry in dataset_rows.items():
        group = group_of.get(dataset)
        if group is not None:
            merged[(model, group.value)].append(entry)
    rows = []
    for (model, scope), members in sorted(merged.items()):
        k = len(members)
        rows.append(
            QuadrantRow(
                model_id=model,
                scope=scope,
                n=sum(n for n, _ in members),
                fractions=tuple(
                    sum(fractions[i] for _, fractions in members) / k for i in range(4)
                ),
            )
        )
    return QuadrantStats(level=level, rows=tuple(rows))


# ---------------------------------------------------------------------------
# Agreement


@dataclass(frozen=True)
class BucketRow:
    dataset_id: str
    n_samples: int
    low: float
    medium: float
    high: float


def agreement_buckets(matrix: Sequence[Sequence[int]]) -> tuple[float, float, float]:
    """Bucket percentages (low, medium, high) for a samples x models matrix.

    A sample is low-agreement when under 30% of models got it right, high
    when over 70% did; exact 30%/70% land in medium. The comparisons use
    integer arithmetic so boundaries are exact for any model count.
    """
    if not matrix:
        raise ValueError("agreement_buckets requires a nonempty matrix")
    low = medium = high = 0
    for row in matrix:
        n = len(row)
        correct = sum(row)
        if 10 * correct < 3 * n:
            low += 1
        elif 10 * correct > 7 * n:
            high += 1
        else:
            medium += 1
    total = len(matrix)
    return (low * 100.0 / total, medium * 100.0 / total, high * 100.0 / total)


def dataset_agreement_buckets(
    scores: Sequence[ScoreRecord],
) -> tuple[list[BucketRow], list[Diagnostic]]:
    """Per-dataset agreement buckets over the models' correctness (li) flags.

    Samples missing a score from any model are excluded with a diagnostic so
    every matrix row covers the same model set.
    """
    diags: list[Diagnostic] = []
    by_dataset: dict[str, dict[str, dict[str, int]]] = defaultdict(lambda: defaultdict(dict))
    for s in scores:
        by_dataset[s.dataset_id][s.sample_id][s.model_id] = s.li
    rows = []
    for dataset_id in sorted(by_dataset):
        per_sample = by_dataset[dataset_id]
        models = sorted({m for flags in per_sample.values() for m in flags})
        matrix = []
        for sample_id in sorted(per_sample):
            flags = per_sample[sample_id]
            if len(flags) != len(models):
                diags.append(
                    Diagnostic(
                        "incomplete_sample",
                        f"sample {sample_id} lacks scores from some models",
                        dataset_id,
                    )
                )
                continue
            matrix.append([flags[m] for m in models])
        if not matrix:
            diags.append(
                Diagnostic("empty_agreement", "no complete samples for agreement", dataset_id)
            )
            continue
        low, medium, high = agreement_buckets(matrix)
        rows.append(BucketRow(dataset_id, len(matrix), low, medium, high))
    return rows, diags


@dataclass(frozen=True)
class PairwiseAgreement:
    quadrant: str
    base: str
    models: tuple[str, ...]
    matrix: tuple[tuple[float, ...], ...]


def pairwise_agreement(
    scores: Sequence[ScoreRecord],
    quadrant_filter: QuadrantLabel = QuadrantLabel.correct_specific,
    thresholds: ThresholdConfig = ThresholdConfig(),
    base: str = "jaccard",
) -> tuple[PairwiseAgreement, list[Diagnostic]]:
    """Percentage of quadrant membership shared between each model pair."""
    if base not in AGREEMENT_BASES:
        raise ValueError(f"unknown agreement base {base!r}")
    sets: dict[str, set[tuple[str, str]]] = defaultdict(set)
    models: set[str] = set()
    for s in scores:
        models.add(s.model_id)
        if quadrant_of(float(s.li), s.cs, thresholds) is quadrant_filter:
            sets[s.model_id].add((s.dataset_id, s.sample_id))
    ordered = tuple(sorted(models))
    if len(ordered) < 2:
        raise ConfigError("pairwise agreement requires at least two models")

    diags: list[Diagnostic] = []
    matrix = []
    for mi in ordered:
        row = []
        for mj in ordered:
            if mi == mj:
                row.append(100.0)
                continue
            si, sj = sets[mi], sets[mj]
            inter = len(si & sj)
            if base == "jaccard":
                denom = len(si | sj)
            elif base == "min":
                denom = min(len(si), len(sj))
            else:
                denom = max(len(si), len(sj))
            if denom == 0:
                diags.append(
                    Diagnostic(
                        "empty_agreement_sets",
                        f"models {mi} and {mj} have empty {quadrant_filter.value} sets",
                    )
                )
                row.append(100.0)
            else:
                row.append(inter * 100.0 / denom)
        matrix.append(tuple(row))
    return (
        PairwiseAgreement(
            quadrant=quadrant_filter.value, base=base, models=ordered, matrix=tuple(matrix)
        ),
        diags,
    )


# ---------------------------------------------------------------------------
# Elo


def elo_expected(r_a: float, r_b: float) -> float:
    """Logistic expected score of A against B."""
    return 1.0 / (1.0 + 10.0 ** ((r_b - r_a) / 400.0))


def elo_update(
    r_a: float, r_b: float, outcome_a: int, k: float
) -> tuple[float, float]:
    """One rating exchange; the pair's rating sum is conserved.

    B's expected score is taken as the exact complement of A's so the two
    deltas cancel to the last bit.
    """
    if k <= 0:
        raise ValueError("k must be > 0")
    e_a = elo_expected(r_a, r_b)
    delta = k * (outcome_a - e_a)
    return r_a + delta, r_b - delta


@dataclass
class EloTable:
    ratings: dict[str, float] = field(default_factory=dict)
    matches_played: dict[str, int] = field(default_factory=dict)
    skipped_pairs: int = 0

    def to_dict(self) -> dict:
        return {
            "ratings": {m: self.ratings[m] for m in sorted(self.ratings)},
            "matches_played": {m: self.matches_played[m] for m in sorted(self.matches_played)},
            "skipped_pairs": self.skipped_pairs,
        }


@dataclass
class EloRunResult:
    per_dataset: dict[str, EloTable]
    average: EloTable

    def to_dict(self) -> dict:
        return {
            "per_dataset": {d: t.to_dict() for d, t in sorted(self.per_dataset.items())},
            "average": self.average.to_dict(),
        }


def _dataset_rng(seed: int, dataset_id: str) -> random.Random:
    # str seeding is hash-randomization safe and stable across processes.
    return random.Random(f"{seed}:{dataset_id}")


def run_elo(
    samples: Sequence[SampleRecord],
    predictions: Sequence[PredictionRecord],
    judge: Judge,
    config: EloConfig,
    variant_id: str = "base",
) -> EloRunResult:
    """Seeded pairwise tournament per dataset plus the cross-dataset average.

    Each match draws two distinct models (the draw order is the A/B slot
    assignment) and one sample covered by every model, asks the judge which
    prediction aligns better with the ground truth, and applies the rating
    exchange in draw order. Unparseable adjudications skip the pair.
    """
    gt: dict[tuple[str, str], str] = {
        (s.dataset_id, s.sample_id): s.ground_truth for s in samples
    }
    by_dataset: dict[str, dict[str, dict[str, str]]] = defaultdict(lambda: defaultdict(dict))
    for p in predictions:
        if p.variant_id != variant_id:
            continue
        by_dataset[p.dataset_id][p.model_id][p.sample_id] = p.raw_text

    per_dataset: dict[str, EloTable] = {}
    for dataset_id in sorted(by_dataset):
        model_preds = by_dataset[dataset_id]
        models = sorted(model_preds)
        if len(models) < 2:
            raise ConfigError(
                f"elo on dataset {dataset_id} requires >= 2 models, found {len(models)}"
            )
        eligible = sorted(
            sid
            for sid in {s for preds in model_preds.values() for s in preds}
            if all(sid in model_preds[m] for m in models) and (dataset_id, sid) in gt
        )
        if not eligible:
            raise ConfigError(f"elo on dataset {dataset_id} has no fully covered samples")

        table = EloTable(
            ratings={m: config.initial_rating for m in models},
            matches_played={m: 0 for m in models},
        )
        rng = _dataset_rng(config.seed, dataset_id)
        for _ in range(config.pairs_per_dataset):
            idx_a, idx_b = rng.sample(range(len(models)), 2)
            model_a, model_b = models[idx_a], models[idx_b]
            sample_id = eligible[rng.randrange(len(eligible))]
            target = gt[(dataset_id, sample_id)]
            try:
                winner = judge_pairwise(
                    model_preds[model_a][sample_id],
                    model_preds[model_b][sample_id],
                    target,
                    judge,
                )
            except JudgeParseError as exc:
                table.skipped_pairs += 1
                logger.warning(
                    "skipping pair (%s vs %s, %s/%s): %s",
                    model_a, model_b, dataset_id, sample_id, exc,
                )
                continue
            outcome_a = 1 if winner == "A" else 0
            table.ratings[model_a], table.ratings[model_b] = elo_update(
                table.ratings[model_a], table.ratings[model_b], outcome_a, config.k_factor
            )
            table.matches_played[model_a] += 1
            table.matches_played[model_b] += 1
        per_dataset[dataset_id] = table

    if not per_dataset:
        raise ConfigError("no datasets with predictions for elo")

    all_models = sorted({m for t in per_dataset.values() for m in t.ratings})
    average = EloTable(
        ratings={
            m: sum(t.ratings[m] for t in per_dataset.values() if m in t.ratings)
            / sum(1 for t in per_dataset.values() if m in t.ratings)
            for m in all_models
        },
        matches_played={
            m: sum(t.matches_played.get(m, 0) for t in per_dataset.values())
            for m in all_models
        },
        skipped_pairs=sum(t.skipped_pairs for t in per_dataset.values()),
    )
    return EloRunResult(per_dataset=per_dataset, average=average)


# ---------------------------------------------------------------------------
# Tag matching


@dataclass(frozen=True)
class TagMatchRow:
    model_id: str
    n_wrong: int
    n_matched: int

    @property
    def fraction(self) -> float:
        return self.n_matched / self.n_wrong if self.n_wrong else 0.0


@dataclass(frozen=True)
class TagMatchReport:
    wrong_by: str
    threshold: float
    rows: tuple[TagMatchRow, ...]


def tag_match(
    scores: Sequence[ScoreRecord],
    predictions: Sequence[PredictionRecord],
    tags: Mapping[tuple[str, str], Sequence[str]],
    embedder: Embedder,
    thresholds: ThresholdConfig = ThresholdConfig(),
    wrong_by: str = "li",
    splitter_mode: str = "builtin_ngram",
) -> tuple[TagMatchReport, list[Diagnostic]]:
    """Fraction of wrong predictions whose concepts strongly match any tag.

    A wrong prediction counts as matched when the concept similarity against
    at least one of its image's tags strictly exceeds the tag threshold.
    Samples without a tag entry are excluded with a diagnostic.
    """
    if wrong_by not in WRONG_BY_CHOICES:
        raise ValueError(f"unknown wrong_by {wrong_by!r}")
    pred_text = {p.key: p.raw_text for p in predictions}
    diags: list[Diagnostic] = []
    wrong_count: dict[str, int] = defaultdict(int)
    matched_count: dict[str, int] = defaultdict(int)
    models: set[str] = set()

    for s in scores:
        models.add(s.model_id)
        is_wrong = (s.li == 0) if wrong_by == "li" else (s.ti == 0)
        if not is_wrong:
            continue
        sample_key = (s.dataset_id, s.sample_id)
        if sample_key not in tags:
            diags.append(
                Diagnostic("missing_tags", f"sample {s.sample_id} has no tags", s.dataset_id)
            )
            continue
        if s.key not in pred_text:
            diags.append(
                Diagnostic("missing_prediction", "no prediction text for score", "/".join(s.key))
            )
            continue
        wrong_count[s.model_id] += 1
        tag_list = list(tags[sample_key])
        if not tag_list:
            continue
        concepts = split_concepts(pred_text[s.key], splitter_mode)
        vectors = embedder.embed_batch([normalize(t) for t in tag_list] + list(concepts.concepts))
        tag_vecs = vectors[: len(tag_list)]
        concept_vecs = vectors[len(tag_list) :]
        best = 0.0
        for tv in tag_vecs:
            for cv in concept_vecs:
                best = max(best, cosine(cv, tv))
        if best > thresholds.tag_match_threshold:
            matched_count[s.model_id] += 1

    rows = tuple(
        TagMatchRow(model_id=m, n_wrong=wrong_count[m], n_matched=matched_count[m])
        for m in sorted(models)
    )
    return TagMatchReport(
        wrong_by=wrong_by, threshold=thresholds.tag_match_threshold, rows=rows
    ), diags


# ---------------------------------------------------------------------------
# Prompt-variant deltas


@dataclass(frozen=True)
class DeltaRow:
    model_id: str
    scope: str
    n: int
    d_ti: float
    d_li: float
    d_cs: float
    d_quadrants: tuple[float, float, float, float]  # QUADRANT_ORDER, percentage points


@dataclass(frozen=True)
class DeltaReport:
    rows: tuple[DeltaRow, ...]
    macro_rows: tuple[DeltaRow, ...]


def _index_by_sample(
    scores: Sequence[ScoreRecord], diags: list[Diagnostic], side: str
) -> dict[tuple[str, str, str], ScoreRecord]:
    out: dict[tuple[str, str, str], ScoreRecord] = {}
    ambiguous: set[tuple[str, str, str]] = set()
    for s in scores:
        k = (s.model_id, s.dataset_id, s.sample_id)
        if k in out:
            ambiguous.add(k)
            continue
        out[k] = s
    # A key with several scores (mixed variants) cannot be paired; drop it.
    for k in sorted(ambiguous):
        del out[k]
        diags.append(
            Diagnostic("ambiguous_key", f"{side} run has multiple scores for key", "/".join(k))
        )
    return out


def delta_report(
    base_scores: Sequence[ScoreRecord],
    variant_scores: Sequence[ScoreRecord],
    thresholds: ThresholdConfig = ThresholdConfig(),
) -> tuple[DeltaReport, list[Diagnostic]]:
    """Signed (variant - base) metric and quadrant-fraction differences.

    Runs are joined on (model, dataset, sample); keys present on one side
    only are excluded with a diagnostic. TI/LI/CS deltas and quadrant deltas
    are in percentage points; macro rows average a model's dataset rows.
    """
    diags: list[Diagnostic] = []
    base_idx = _index_by_sample(base_scores, diags, "base")
    var_idx = _index_by_sample(variant_scores, diags, "variant")
    for k in sorted(set(base_idx) ^ set(var_idx)):
        diags.append(
            Diagnostic("unmatched_key", "key present in only one run", "/".join(k))
        )

    joined: dict[tuple[str, str], list[tuple[ScoreRecord, ScoreRecord]]] = defaultdict(list)
    for k in sorted(set(base_idx) & set(var_idx)):
        joined[(k[0], k[1])].append((base_idx[k], var_idx[k]))

    rows: list[DeltaRow] = []
    for (model, dataset), pairs in sorted(joined.items()):
        n = len(pairs)
        d_ti = sum(v.ti - b.ti for b, v in pairs) / n * 100.0
        d_li = sum(v.li - b.li for b, v in pairs) / n * 100.0
        d_cs = sum(v.cs - b.cs for b, v in pairs) / n * 100.0
        quad_delta = [0, 0, 0, 0]
        for b, v in pairs:
            quad_delta[QUADRANT_ORDER.index(quadrant_of(float(v.li), v.cs, thresholds))] += 1
            quad_delta[QUADRANT_ORDER.index(quadrant_of(float(b.li), b.cs, thresholds))] -= 1
        rows.append(
            DeltaRow(
                model_id=model,
                scope=dataset,
                n=n,
                d_ti=d_ti,
                d_li=d_li,
                d_cs=d_cs,
                d_quadrants=tuple(c * 100.0 / n for c in quad_delta),
            )
        )

    macro_rows: list[DeltaRow] = []
    by_model: dict[str, list[DeltaRow]] = defaultdict(list)
    for row in rows:
        by_model[row.model_id].append(row)
    for model in sorted(by_model):
        members = by_model[model]
        k = len(members)
        macro_rows.append(
            DeltaRow(
                model_id=model,
                scope="macro",
                n=sum(r.n for r in members),
                d_ti=sum(r.d_ti for r in members) / k,
                d_li=sum(r.d_li for r in members) / k,
                d_cs=sum(r.d_cs for r in members) / k,
                d_quadrants=tuple(
                    sum(r.d_quadrants[i] for r in members) / k for i in range(4)
                ),
            )
        )
    return DeltaReport(rows=tuple(rows), macro_rows=tuple(macro_rows)), diags
