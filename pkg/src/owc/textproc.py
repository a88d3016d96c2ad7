"""Deterministic text normalization and the concept-splitting procedure.

All similarity metrics operate on normalized text so that the full
normalized prediction can double as the first candidate concept. The
builtin splitter enumerates token n-grams (n <= 3) instead of running a
noun-chunk parser; precomputed spans from any external chunker can be
ingested instead (``external_precomputed`` mode).
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import MissingSplitsError
from .stopwords import STOPWORDS

SPLITTER_MODES = ("builtin_ngram", "external_precomputed")
MAX_NGRAM = 3

_WS_RUN = re.compile(r"\s+")
# Unicode lowercasing can denormalize NFKC in exotic scripts; a second pass
# restores a fixpoint. The cap exists only to bound pathological input.
_MAX_NORMALIZE_PASSES = 4


def _normalize_once(text: str) -> str:
    text = unicodedata.normalize("NFKC", text).lower()
    out = []
    for ch in text:
        out.append(" " if unicodedata.category(ch).startswith("P") else ch)
    return _WS_RUN.sub(" ", "".join(out)).strip()


def normalize(text: str) -> str:
    """Canonical text form: NFKC, lowercase, punctuation -> space, collapsed.

    Idempotent: ``normalize(normalize(t)) == normalize(t)``.
    """
    cur = _normalize_once(text)
    for _ in range(_MAX_NORMALIZE_PASSES - 1):
        nxt = _normalize_once(cur)
        if nxt == cur:
            break
        cur = nxt
    return cur


def tokenize(text: str) -> list[str]:
    """Split an already-normalized string on single spaces."""
    if not text:
        return []
    return text.split(" ")


@dataclass(frozen=True)
class ConceptList:
    """Candidate spans for one prediction, full normalized text first.

    For a prediction whose normalized form is empty the list degenerates to
    a single empty concept so that downstream scoring stays total (the
    embedder maps "" to the zero vector).
    """

    source_text: str
    concepts: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.concepts:
            raise ValueError("ConceptList.concepts must be nonempty")
        if len(set(self.concepts)) != len(self.concepts):
            raise ValueError("ConceptList.concepts must not contain duplicates")


def _ngram_spans(tokens: Sequence[str]) -> Iterable[str]:
    for n in range(1, MAX_NGRAM + 1):
        for i in range(len(tokens) - n + 1):
            window = tokens[i : i + n]
            if all(tok in STOPWORDS for tok in window):
                continue
            yield " ".join(window)


def split_concepts(
    raw_text: str,
    splitter_mode: str = "builtin_ngram",
    precomputed_spans: Sequence[str] | None = None,
) -> ConceptList:
    """Turn a raw prediction into its ordered candidate-concept list.

    builtin_ngram: full normalized text, then contiguous token n-grams for
    n in {1,2,3}, stopword-only spans dropped, deduplicated preserving first
    occurrence. external_precomputed: full normalized text followed by the
    normalized ingested spans.

    Raises:
        MissingSplitsError: external mode without spans for this prediction.
        ValueError: unknown splitter mode.
    """
    if splitter_mode not in SPLITTER_MODES:
        raise ValueError(f"unknown splitter_mode {splitter_mode!r}")
    norm = normalize(raw_text)
    if not norm:
        return ConceptList(source_text=raw_text, concepts=("",))

    concepts: list[str] = [norm]
    seen = {norm}
    if splitter_mode == "external_precomputed":
        if precomputed_spans is None:
            raise MissingSplitsError("no precomputed splits entry for prediction")
        candidates: Iterable[str] = (normalize(s) for s in precomputed_spans)
    else:
        candidates = _ngram_spans(tokenize(norm))
    for span in candidates:
        if span and span not in seen:
            concepts.append(span)
            seen.add(span)
    return ConceptList(source_text=raw_text, concepts=tuple(concepts))
