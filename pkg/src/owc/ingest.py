"""File formats, loading/validation, and the persistent score store.

Exchange formats are JSONL (UTF-8, one object per line) except published
aggregate tables, which are CSV. A dataset manifest is a JSONL file whose
first line is a header object ({dataset_id, group, class_list?}) followed
by one sample object per line. The RunStore is a directory holding a
manifest JSON (config snapshot) and append-only JSONL score segments, so a
run can be inspected, diffed, and resumed.
"""

from __future__ import annotations

import csv
import hashlib
import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Iterator, Sequence

from .analysis import AggregateRow, AggregateTable
from .errors import ConfigError, IngestError
from .records import (
    DatasetGroup,
    Diagnostic,
    FailedScore,
    PredictionRecord,
    SampleRecord,
    ScoreKey,
    ScoreRecord,
    DEFAULT_VARIANT,
)

ARTIFACT_VERSION = "0.1.0"

# The ten benchmark codes with their challenge groups, used when grouping
# published per-dataset tables that carry no manifests.
CANONICAL_DATASET_GROUPS: dict[str, DatasetGroup] = {
    "C101": DatasetGroup.prototypical,
    "S397": DatasetGroup.prototypical,
    "DTD": DatasetGroup.non_prototypical,
    "ESAT": DatasetGroup.non_prototypical,
    "U101": DatasetGroup.non_prototypical,
    "FLWR": DatasetGroup.fine_grained,
    "FOOD": DatasetGroup.fine_grained,
    "PETS": DatasetGroup.fine_grained,
    "CARS": DatasetGroup.very_fine_grained,
    "FGVC": DatasetGroup.very_fine_grained,
}


def _iter_jsonl(path: str | Path) -> Iterator[tuple[int, dict[str, Any]]]:
    """Yield (line_number, object); malformed lines raise with their number."""
    p = Path(path)
    if not p.exists():
        raise IngestError("file not found", path=str(p))
    with p.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise IngestError(f"malformed JSON: {exc.msg}", path=str(p), line=lineno) from exc
            if not isinstance(obj, dict):
                raise IngestError("line is not a JSON object", path=str(p), line=lineno)
            yield lineno, obj


@dataclass(frozen=True)
class DatasetManifest:
    dataset_id: str
    group: DatasetGroup
    samples: tuple[SampleRecord, ...]
    class_list: tuple[str, ...] = ()


def load_manifest(path: str | Path) -> DatasetManifest:
    """Parse and validate one dataset manifest."""
    header: dict[str, Any] | None = None
    samples: list[SampleRecord] = []
    seen_ids: set[str] = set()
    for lineno, obj in _iter_jsonl(path):
        if header is None:
            if "group" not in obj or "dataset_id" not in obj:
                raise IngestError(
                    "manifest must start with a header line carrying dataset_id and group",
                    path=str(path),
                    line=lineno,
                )
            try:
                group = DatasetGroup(obj["group"])
            except ValueError as exc:
                raise IngestError(
                    f"unknown dataset group {obj['group']!r}", path=str(path), line=lineno
                ) from exc
            header = {"dataset_id": obj["dataset_id"], "group": group,
                      "class_list": tuple(obj.get("class_list", ()))}
            continue
        try:
            sample = SampleRecord(
                sample_id=obj["sample_id"],
                dataset_id=obj.get("dataset_id", header["dataset_id"]),
                image_ref=obj.get("image_ref", ""),
                ground_truth=obj["ground_truth"],
                group=header["group"],
            )
        except KeyError as exc:
            raise IngestError(f"sample line missing field {exc}", path=str(path), line=lineno)
        if sample.dataset_id != header["dataset_id"]:
            raise IngestError(
                f"sample dataset_id {sample.dataset_id!r} does not match manifest "
                f"{header['dataset_id']!r}",
                path=str(path),
                line=lineno,
            )
        if sample.sample_id in seen_ids:
            raise IngestError(
                f"duplicate sample_id {sample.sample_id!r}", path=str(path), line=lineno
            )
        seen_ids.add(sample.sample_id)
        samples.append(sample)
    if header is None:
        raise IngestError("manifest is empty", path=str(path))
    return DatasetManifest(
        dataset_id=header["dataset_id"],
        group=header["group"],
        samples=tuple(samples),
        class_list=header["class_list"],
    )


def load_predictions(path: str | Path) -> tuple[list[PredictionRecord], list[Diagnostic]]:
    """Load prediction records; missing raw_text becomes "" with a diagnostic."""
    records: list[PredictionRecord] = []
    diags: list[Diagnostic] = []
    seen: set[ScoreKey] = set()
    for lineno, obj in _iter_jsonl(path):
        try:
            record = PredictionRecord(
                model_id=obj["model_id"],
                dataset_id=obj["dataset_id"],
                sample_id=obj["sample_id"],
                raw_text=obj["raw_text"] if "raw_text" in obj else "",
                variant_id=obj.get("variant_id", DEFAULT_VARIANT),
            )
        except KeyError as exc:
            raise IngestError(f"prediction line missing field {exc}", path=str(path), line=lineno)
        if "raw_text" not in obj:
            diags.append(
                Diagnostic(
                    "missing_raw_text",
                    "prediction without raw_text treated as empty output",
                    "/".join(record.key),
                )
            )
        if record.key in seen:
            raise IngestError(
                f"duplicate prediction key {'/'.join(record.key)}", path=str(path), line=lineno
            )
        seen.add(record.key)
        records.append(record)
    return records, diags


def load_tags(path: str | Path) -> dict[tuple[str, str], list[str]]:
    """Per-sample tag lists, deduplicated preserving order; empty lists legal."""
    tags: dict[tuple[str, str], list[str]] = {}
    for lineno, obj in _iter_jsonl(path):
        try:
            key = (obj["dataset_id"], obj["sample_id"])
            raw_tags = obj["tags"]
        except KeyError as exc:
            raise IngestError(f"tags line missing field {exc}", path=str(path), line=lineno)
        if not isinstance(raw_tags, list):
            raise IngestError("tags must be an array", path=str(path), line=lineno)
        deduped: list[str] = []
        for t in raw_tags:
            if t not in deduped:
                deduped.append(t)
        tags[key] = deduped
    return tags


def load_splits(path: str | Path) -> dict[ScoreKey, list[str]]:
    """Precomputed concept spans per prediction key."""
    splits: dict[ScoreKey, list[str]] = {}
    for lineno, obj in _iter_jsonl(path):
        try:
            key = (
                obj["model_id"],
                obj["dataset_id"],
                obj["sample_id"],
                obj.get("variant_id", DEFAULT_VARIANT),
            )
            spans = obj["spans"]
        except KeyError as exc:
            raise IngestError(f"splits line missing field {exc}", path=str(path), line=lineno)
        if not isinstance(spans, list):
            raise IngestError("spans must be an array", path=str(path), line=lineno)
        splits[key] = [str(s) for s in spans]
    return splits


# ---------------------------------------------------------------------------
# Run store


def config_hash(config: dict[str, Any]) -> str:
    canonical = json.dumps(config, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class RunStore:
    """Append-only score log plus an immutable run manifest.

    One record per line; each append is flushed so a crash can tear at most
    the final line, which readers detect (no trailing newline) and ignore.
    """

    MANIFEST_NAME = "manifest.json"
    SEGMENT_GLOB = "scores-*.jsonl"

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self._lock = threading.Lock()
        self._segment = self.directory / "scores-000.jsonl"

    @property
    def manifest_path(self) -> Path:
        return self.directory / self.MANIFEST_NAME

    def exists(self) -> bool:
        return self.manifest_path.exists()

    def initialize(self, config: dict[str, Any]) -> None:
        """Create the store directory and freeze the run configuration."""
        self.directory.mkdir(parents=True, exist_ok=True)
        manifest = {
            "artifact_version": ARTIFACT_VERSION,
            "config": config,
            "config_hash": config_hash(config),
        }
        self.manifest_path.write_text(
            json.dumps(manifest, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )

    def read_manifest(self) -> dict[str, Any]:
        if not self.exists():
            raise IngestError("run store has no manifest", path=str(self.manifest_path))
        return json.loads(self.manifest_path.read_text(encoding="utf-8"))

    def check_config(self, config: dict[str, Any], override: bool = False) -> None:
        """Refuse to resume under a different configuration unless overridden."""
        stored = self.read_manifest()
        if stored.get("config_hash") != config_hash(config):
            if override:
                return
            raise ConfigError(
                "run store was created with a different configuration; "
                "pass the override flag to resume anyway"
            )

    def append(self, record: ScoreRecord | FailedScore) -> None:
        row = record.to_dict()
        row["status"] = "failed" if isinstance(record, FailedScore) else "ok"
        line = json.dumps(row, sort_keys=True, ensure_ascii=False)
        with self._lock, self._segment.open("a", encoding="utf-8") as fh:
            fh.write(line + "\n")
            fh.flush()

    def _iter_rows(self) -> Iterator[dict[str, Any]]:
        for segment in sorted(self.directory.glob(self.SEGMENT_GLOB)):
            with segment.open(encoding="utf-8") as fh:
                raw_lines = fh.read().split("\n")
            # Every complete record ends with a newline, so the final chunk is
            # either empty or a torn write; both are dropped.
            for lineno, raw in enumerate(raw_lines[:-1], 1):
                if not raw.strip():
                    continue
                try:
                    yield json.loads(raw)
                except json.JSONDecodeError as exc:
                    raise IngestError(
                        f"malformed score row: {exc.msg}", path=str(segment), line=lineno
                    ) from exc

    def load_scores(self) -> tuple[list[ScoreRecord], dict[ScoreKey, str]]:
        """All non-failed scores plus the keys whose latest state is failed."""
        ok: dict[ScoreKey, ScoreRecord] = {}
        failed: dict[ScoreKey, str] = {}
        for row in self._iter_rows():
            if row.get("status") == "failed":
                record = FailedScore.from_dict(row)
                if record.key not in ok:
                    failed[record.key] = record.error
            else:
                score = ScoreRecord.from_dict(row)
                ok[score.key] = score
                failed.pop(score.key, None)
        return [ok[k] for k in sorted(ok)], failed

    def canonical_rows(self) -> list[str]:
        """Non-failed rows as canonical JSON lines, sorted by key."""
        scores, _ = self.load_scores()
        return [
            json.dumps({**s.to_dict(), "status": "ok"}, sort_keys=True, ensure_ascii=False)
            for s in scores
        ]


def checkpoint_and_resume(
    store: RunStore,
    pending_keys: Iterable[ScoreKey],
    config: dict[str, Any],
    override: bool = False,
) -> list[ScoreKey]:
    """Keys still to score: done keys are skipped, failed keys are retried."""
    store.check_config(config, override=override)
    done, _failed = store.load_scores()
    done_keys = {s.key for s in done}
    return sorted(k for k in pending_keys if k not in done_keys)


# ---------------------------------------------------------------------------
# Published aggregate tables


def load_published_table(path: str | Path) -> AggregateTable:
    """Dataset-level aggregate table from a (model, dataset, metric, value) CSV."""
    p = Path(path)
    if not p.exists():
        raise IngestError("file not found", path=str(p))
    cells: dict[tuple[str, str], dict[str, float]] = {}
    with p.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"model", "dataset", "metric", "value"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise IngestError(
                f"published CSV needs columns {sorted(required)}", path=str(p)
            )
        for lineno, row in enumerate(reader, start=2):
            metric = row["metric"].strip().lower()
            if metric not in ("ti", "li", "ss", "cs"):
                raise IngestError(
                    f"unknown metric name {row['metric']!r}", path=str(p), line=lineno
                )
            try:
                value = float(row["value"])
            except ValueError as exc:
                raise IngestError(
                    f"bad value {row['value']!r}", path=str(p), line=lineno
                ) from exc
            cells.setdefault((row["model"].strip(), row["dataset"].strip()), {})[metric] = value
    rows = []
    for (model, dataset), metrics in sorted(cells.items()):
        missing = {"ti", "li", "ss", "cs"} - set(metrics)
        if missing:
            raise IngestError(
                f"({model}, {dataset}) missing metrics {sorted(missing)}", path=str(p)
            )
        rows.append(
            AggregateRow(
                model_id=model,
                scope=dataset,
                n=0,  # published tables carry no per-sample counts
                ti=metrics["ti"],
                li=metrics["li"],
                ss=metrics["ss"],
                cs=metrics["cs"],
            )
        )
    return AggregateTable(level="dataset", rows=tuple(rows))


def load_bundle(
    sample_paths: Sequence[str | Path], predictions_path: str | Path
) -> tuple[list[SampleRecord], list[PredictionRecord], list[Diagnostic]]:
    """Load manifests and predictions together, collecting load diagnostics."""
    samples: list[SampleRecord] = []
    for path in sample_paths:
        manifest = load_manifest(path)
        samples.extend(manifest.samples)
    predictions, diags = load_predictions(predictions_path)
    return samples, predictions, diags
