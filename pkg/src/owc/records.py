"""Shared data model: samples, predictions, scores, and run configuration.

Every type here is an immutable value, safe to share across worker threads.
Records serialize to flat JSON objects (one per JSONL line) and round-trip
exactly through ``to_dict`` / ``from_dict``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from enum import Enum
from typing import Any, Iterable

from .textproc import normalize

ScoreKey = tuple[str, str, str, str]  # (model_id, dataset_id, sample_id, variant_id)

DEFAULT_VARIANT = "base"


class DatasetGroup(str, Enum):
    prototypical = "prototypical"
    non_prototypical = "non_prototypical"
    fine_grained = "fine_grained"
    very_fine_grained = "very_fine_grained"


class QuadrantLabel(str, Enum):
    correct_specific = "correct_specific"
    correct_generic = "correct_generic"
    wrong_specific = "wrong_specific"
    wrong_generic = "wrong_generic"


@dataclass(frozen=True)
class SampleRecord:
    """One labeled image instance. ``image_ref`` is opaque provenance only."""

    sample_id: str
    dataset_id: str
    image_ref: str
    ground_truth: str
    group: DatasetGroup

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["group"] = self.group.value
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SampleRecord":
        return cls(
            sample_id=d["sample_id"],
            dataset_id=d["dataset_id"],
            image_ref=d.get("image_ref", ""),
            ground_truth=d["ground_truth"],
            group=DatasetGroup(d["group"]),
        )


@dataclass(frozen=True)
class PredictionRecord:
    """One model's raw text output for one sample under one prompt variant."""

    model_id: str
    dataset_id: str
    sample_id: str
    raw_text: str
    variant_id: str = DEFAULT_VARIANT

    @property
    def key(self) -> ScoreKey:
        return (self.model_id, self.dataset_id, self.sample_id, self.variant_id)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PredictionRecord":
        return cls(
            model_id=d["model_id"],
            dataset_id=d["dataset_id"],
            sample_id=d["sample_id"],
            raw_text=d.get("raw_text", ""),
            variant_id=d.get("variant_id", DEFAULT_VARIANT),
        )


@dataclass(frozen=True)
class ScoreRecord:
    """The four metric values plus audit fields for one scored prediction.

    ``ss`` is stored signed; reports clamp it to [0, 1]. ``cs`` is already
    floored at zero and always >= the clamped ``ss`` because the full
    normalized prediction is itself a candidate concept.
    """

    model_id: str
    dataset_id: str
    sample_id: str
    variant_id: str
    ti: int
    li: int
    ss: float
    cs: float
    best_concept: str
    judge_raw: str

    def __post_init__(self) -> None:
        if self.ti not in (0, 1) or self.li not in (0, 1):
            raise ValueError("ti and li must be binary")
        if not (0.0 <= self.cs <= 1.0):
            raise ValueError(f"cs out of range: {self.cs}")

    @property
    def key(self) -> ScoreKey:
        return (self.model_id, self.dataset_id, self.sample_id, self.variant_id)

    @property
    def ss_clamped(self) -> float:
        return min(1.0, max(0.0, self.ss))

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ScoreRecord":
        return cls(
            model_id=d["model_id"],
            dataset_id=d["dataset_id"],
            sample_id=d["sample_id"],
            variant_id=d["variant_id"],
            ti=int(d["ti"]),
            li=int(d["li"]),
            ss=float(d["ss"]),
            cs=float(d["cs"]),
            best_concept=d["best_concept"],
            judge_raw=d["judge_raw"],
        )


@dataclass(frozen=True)
class FailedScore:
    """Marker for a prediction whose scoring aborted; retriable on resume."""

    model_id: str
    dataset_id: str
    sample_id: str
    variant_id: str
    error: str

    @property
    def key(self) -> ScoreKey:
        return (self.model_id, self.dataset_id, self.sample_id, self.variant_id)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "FailedScore":
        return cls(
            model_id=d["model_id"],
            dataset_id=d["dataset_id"],
            sample_id=d["sample_id"],
            variant_id=d["variant_id"],
            error=d.get("error", ""),
        )


@dataclass(frozen=True)
class ThresholdConfig:
    cs_threshold: float = 0.6
    li_threshold: float = 0.5
    tag_match_threshold: float = 0.95

    def __post_init__(self) -> None:
        for name in ("cs_threshold", "li_threshold", "tag_match_threshold"):
            value = getattr(self, name)
            if not (0.0 < value < 1.0):
                raise ValueError(f"{name} must lie in (0, 1), got {value}")

    def to_dict(self) -> dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class EloConfig:
    initial_rating: float = 1000.0
    k_factor: float = 32.0
    pairs_per_dataset: int = 10_000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.k_factor <= 0:
            raise ValueError("k_factor must be > 0")
        if self.pairs_per_dataset < 1:
            raise ValueError("pairs_per_dataset must be >= 1")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class Diagnostic:
    """A validation finding. Diagnostics report problems, they never raise."""

    kind: str
    message: str
    context: str = ""

    def __str__(self) -> str:
        suffix = f" [{self.context}]" if self.context else ""
        return f"{self.kind}: {self.message}{suffix}"


def validate_run_bundle(
    samples: Iterable[SampleRecord], predictions: Iterable[PredictionRecord]
) -> list[Diagnostic]:
    """Check a (samples, predictions) bundle for internal consistency.

    Returns one diagnostic per violation: duplicate sample ids, ground
    truths that normalize to nothing, orphan predictions, and duplicate
    prediction keys. Empty list iff the bundle is consistent.
    """
    diags: list[Diagnostic] = []
    sample_ids: set[tuple[str, str]] = set()
    for s in samples:
        sid = (s.dataset_id, s.sample_id)
        if sid in sample_ids:
            diags.append(
                Diagnostic("duplicate_sample_id", f"sample {s.sample_id} repeated", s.dataset_id)
            )
        sample_ids.add(sid)
        if not normalize(s.ground_truth):
            diags.append(
                Diagnostic(
                    "empty_ground_truth",
                    f"sample {s.sample_id} has an empty ground truth",
                    s.dataset_id,
                )
            )

    seen_keys: set[ScoreKey] = set()
    for p in predictions:
        if (p.dataset_id, p.sample_id) not in sample_ids:
            diags.append(
                Diagnostic(
                    "orphan_prediction",
                    f"prediction references unknown sample {p.sample_id}",
                    "/".join(p.key),
                )
            )
        if p.key in seen_keys:
            diags.append(
                Diagnostic("duplicate_prediction_key", "prediction key repeated", "/".join(p.key))
            )
        seen_keys.add(p.key)
    return diags
