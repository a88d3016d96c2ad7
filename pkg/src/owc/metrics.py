"""The four per-prediction metrics and their composition into a ScoreRecord.

Inclusion and similarity metrics work on normalized text; the judge sees the
raw prediction verbatim. Because the full normalized prediction is always the
first candidate concept, cs >= max(0, ss) holds for every record.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

from .backends import Embedder, Judge, cosine
from .errors import JudgeParseError
from .prompts import render_binary_prompt
from .records import PredictionRecord, SampleRecord, ScoreRecord
from .textproc import ConceptList, normalize, split_concepts, tokenize

TI_MODES = ("token", "char")

_JUDGE_RETRIES = 3

# A verdict digit is standalone when not embedded in a longer alphanumeric run.
_VERDICT = re.compile(r"(?<![0-9A-Za-z])[01](?![0-9A-Za-z])")


@dataclass(frozen=True)
class MetricVector:
    ti: int
    li: int
    ss_signed: float
    cs: float
    best_concept: str
    judge_raw: str


def text_inclusion(ground_truth: str, prediction: str, mode: str = "token") -> int:
    """1 iff the normalized ground truth occurs inside the normalized prediction.

    token mode requires the ground-truth token sequence to appear as a
    contiguous token run; char mode is plain substring containment (which
    also accepts mid-word hits such as "cat" inside "catalog").
    """
    if mode not in TI_MODES:
        raise ValueError(f"unknown ti mode {mode!r}")
    gt = normalize(ground_truth)
    pred = normalize(prediction)
    if mode == "char":
        return 1 if gt in pred else 0
    gt_tokens = tokenize(gt)
    pred_tokens = tokenize(pred)
    m = len(gt_tokens)
    return (
        1
        if any(pred_tokens[i : i + m] == gt_tokens for i in range(len(pred_tokens) - m + 1))
        else 0
    )


def semantic_similarity(ground_truth: str, prediction: str, embedder: Embedder) -> float:
    """Signed cosine between the embeddings of the two normalized texts."""
    vec_gt, vec_pred = embedder.embed_batch([normalize(ground_truth), normalize(prediction)])
    return cosine(vec_pred, vec_gt)


def concept_similarity(
    ground_truth: str,
    prediction: str,
    embedder: Embedder,
    splitter_mode: str = "builtin_ngram",
    precomputed_spans: Sequence[str] | None = None,
) -> tuple[float, str]:
    """Max cosine between the ground truth and any candidate concept.

    Floored at zero; ties break toward the earliest concept, so an exact
    full-string match always wins over later spans with equal score.
    """
    concepts = split_concepts(prediction, splitter_mode, precomputed_spans)
    return _best_concept(normalize(ground_truth), concepts, embedder)


def _best_concept(
    normalized_gt: str, concepts: ConceptList, embedder: Embedder
) -> tuple[float, str]:
    vectors = embedder.embed_batch([normalized_gt, *concepts.concepts])
    gt_vec = vectors[0]
    best_score = cosine(vectors[1], gt_vec)
    best = concepts.concepts[0]
    for concept, vec in zip(concepts.concepts[1:], vectors[2:]):
        score = cosine(vec, gt_vec)
        if score > best_score:
            best_score, best = score, concept
    return max(0.0, best_score), best


def parse_binary_verdict(reply_text: str) -> int:
    """First standalone '1' or '0' in the reply; anything else is a parse error."""
    m = _VERDICT.search(reply_text)
    if m is None:
        raise JudgeParseError(f"no binary verdict in judge reply {reply_text!r}", reply=reply_text)
    return int(m.group(0))


def llama_inclusion(
    ground_truth: str, prediction: str, judge: Judge, retries: int = _JUDGE_RETRIES
) -> tuple[int, str]:
    """Ask the judge whether the raw prediction is a good answer for the target.

    Returns the binary verdict and the verbatim reply. Unparseable replies
    are re-asked up to ``retries`` times, then the parse error propagates.
    """
    prompt = render_binary_prompt(prediction, ground_truth)
    last: JudgeParseError | None = None
    for _ in range(retries):
        reply = judge.complete(prompt)
        try:
            return parse_binary_verdict(reply), reply
        except JudgeParseError as exc:
            last = exc
    assert last is not None
    raise last


def compute_metrics(
    ground_truth: str,
    prediction: str,
    embedder: Embedder,
    judge: Judge,
    splitter_mode: str = "builtin_ngram",
    ti_mode: str = "token",
    precomputed_spans: Sequence[str] | None = None,
) -> MetricVector:
    """All four metrics for one (ground truth, prediction) pair.

    ss and cs share one embedding batch; ss is literally the cosine of the
    first concept (the full normalized prediction), which makes the
    cs >= max(0, ss) invariant exact rather than approximate.
    """
    ti = text_inclusion(ground_truth, prediction, mode=ti_mode)
    li, judge_raw = llama_inclusion(ground_truth, prediction, judge)

    concepts = split_concepts(prediction, splitter_mode, precomputed_spans)
    gt_norm = normalize(ground_truth)
    vectors = embedder.embed_batch([gt_norm, *concepts.concepts])
    gt_vec = vectors[0]
    ss_signed = cosine(vectors[1], gt_vec)
    best_score, best = ss_signed, concepts.concepts[0]
    for concept, vec in zip(concepts.concepts[1:], vectors[2:]):
        score = cosine(vec, gt_vec)
        if score > best_score:
            best_score, best = score, concept
    return MetricVector(
        ti=ti,
        li=li,
        ss_signed=ss_signed,
        cs=max(0.0, best_score),
        best_concept=best,
        judge_raw=judge_raw,
    )


def score_prediction(
    sample: SampleRecord,
    prediction: PredictionRecord,
    embedder: Embedder,
    judge: Judge,
    splitter_mode: str = "builtin_ngram",
    ti_mode: str = "token",
    precomputed_spans: Sequence[str] | None = None,
) -> ScoreRecord:
    """Score one prediction against its sample's ground truth."""
    if sample.sample_id != prediction.sample_id or sample.dataset_id != prediction.dataset_id:
        raise ValueError(
            f"prediction {prediction.key} does not belong to sample "
            f"{sample.dataset_id}/{sample.sample_id}"
        )
    vec = compute_metrics(
        sample.ground_truth,
        prediction.raw_text,
        embedder,
        judge,
        splitter_mode=splitter_mode,
        ti_mode=ti_mode,
        precomputed_spans=precomputed_spans,
    )
    return ScoreRecord(
        model_id=prediction.model_id,
        dataset_id=prediction.dataset_id,
        sample_id=prediction.sample_id,
        variant_id=prediction.variant_id,
        ti=vec.ti,
        li=vec.li,
        ss=vec.ss_signed,
        cs=vec.cs,
        best_concept=vec.best_concept,
        judge_raw=vec.judge_raw,
    )
