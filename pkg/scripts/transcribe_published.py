#!/usr/bin/env python3
"""Emit the hand-transcribed published result tables as CSV test fixtures.

Writes tests/data/published/per_dataset.csv (model, dataset, metric, value)
and tests/data/published/grouped.csv (model, group, metric, value), then
cross-checks that macro-averaging the per-dataset values reproduces every
grouped cell to within one-decimal rounding distance (0.05).
"""

from pathlib import Path

DATASETS = ["C101", "DTD", "ESAT", "FGVC", "FLWR", "FOOD", "PETS", "CARS", "S397", "U101"]
GROUPS = {
    "prototypical": ["C101", "S397"],
    "non_prototypical": ["DTD", "ESAT", "U101"],
    "fine_grained": ["FLWR", "FOOD", "PETS"],
    "very_fine_grained": ["FGVC", "CARS"],
}
GROUP_ORDER = ["prototypical", "non_prototypical", "fine_grained", "very_fine_grained"]

MODELS = [
    "idefics2-8b",
    "instructblip-vicuna-7b",
    "internvl2-2b",
    "internvl2-4b",
    "internvl2-8b",
    "llava-1.5-7b",
    "llava-next-mistral-7b",
    "llava-next-vicuna-7b",
    "llava-ov-qwen2-0.5b",
    "llava-ov-qwen2-7b",
    "phi-3-vision",
    "qwen2vl-2b",
    "qwen2vl-7b",
]

# Per-dataset values, column order = DATASETS.
PER_DATASET = {
    "ti": [
        [52.0, 1.7, 1.6, 0.0, 0.8, 8.2, 0.1, 0.0, 9.6, 7.9],
        [47.8, 3.0, 5.5, 0.0, 6.0, 24.3, 0.8, 0.0, 11.6, 9.6],
        [52.8, 10.8, 7.4, 1.4, 14.1, 23.3, 7.2, 0.0, 21.1, 12.4],
        [49.6, 11.8, 6.0, 3.4, 12.8, 28.2, 7.8, 0.0, 23.0, 12.7],
        [55.0, 12.5, 6.0, 4.6, 19.1, 33.9, 13.8, 0.1, 26.3, 14.4],
        [51.6, 6.0, 11.7, 0.1, 6.7, 17.6, 1.1, 0.0, 17.6, 8.2],
        [58.0, 13.6, 7.4, 2.8, 17.6, 35.5, 27.1, 0.0, 25.4, 13.0],
        [54.9, 12.2, 7.2, 2.5, 11.9, 29.6, 9.4, 0.0, 24.0, 12.5],
        [53.4, 9.2, 4.2, 1.2, 2.9, 12.6, 2.5, 0.1, 15.5, 8.7],
        [55.5, 12.6, 4.9, 0.0, 14.2, 5.0, 0.1, 0.0, 6.2, 4.0],
        [53.4, 10.9, 0.8, 0.4, 12.0, 21.6, 6.5, 0.1, 14.7, 6.5],
        [60.8, 12.1, 0.4, 25.6, 42.9, 48.5, 15.7, 0.1, 29.0, 10.8],
        [63.2, 15.7, 2.7, 1.4, 42.3, 49.3, 12.1, 0.1, 29.5, 12.5],
    ],
    "li": [
        [72.9, 24.6, 19.0, 64.4, 54.6, 58.7, 36.3, 69.6, 32.5, 40.1],
        [76.8, 26.2, 19.1, 59.9, 57.4, 47.6, 41.3, 62.0, 35.8, 36.0],
        [74.9, 48.5, 35.0, 35.8, 49.3, 44.3, 47.4, 30.0, 64.9, 52.1],
        [74.4, 45.7, 30.1, 40.5, 37.5, 45.9, 49.7, 33.1, 62.5, 50.4],
        [77.2, 50.5, 28.6, 29.7, 36.0, 53.7, 50.4, 35.3, 71.5, 59.6],
        [74.5, 39.4, 45.0, 44.5, 46.3, 47.7, 45.5, 37.5, 51.6, 48.5],
        [77.8, 54.0, 28.0, 43.4, 33.4, 63.2, 34.6, 50.9, 69.9, 58.3],
        [77.3, 52.2, 26.4, 43.1, 29.2, 60.6, 43.6, 41.2, 68.2, 59.1],
        [76.5, 46.5, 28.7, 61.2, 55.1, 28.1, 44.9, 70.0, 52.2, 35.8],
        [81.3, 45.6, 11.8, 68.9, 48.9, 22.0, 50.2, 84.4, 25.0, 27.0],
        [75.7, 45.3, 6.0, 51.0, 53.2, 45.1, 49.1, 39.0, 44.5, 34.7],
        [82.9, 54.6, 3.1, 65.0, 67.0, 71.1, 49.3, 56.3, 72.6, 45.2],
        [84.3, 60.8, 18.1, 58.8, 71.0, 75.0, 46.0, 67.2, 73.0, 48.8],
    ],
    "ss": [
        [64.9, 34.6, 27.5, 27.6, 38.6, 44.4, 30.8, 31.6, 44.2, 44.0],
        [71.5, 32.8, 30.0, 21.4, 38.9, 41.6, 26.4, 38.5, 42.1, 48.3],
        [50.5, 25.6, 26.0, 23.4, 31.2, 39.6, 23.9, 42.9, 43.3, 43.1],
        [49.2, 26.1, 24.7, 23.6, 30.2, 41.1, 24.6, 44.1, 43.8, 41.8],
        [50.1, 26.7, 24.4, 25.5, 32.8, 44.2, 27.3, 46.6, 46.3, 44.6],
        [49.0, 24.2, 34.2, 19.0, 25.8, 37.2, 21.5, 38.2, 41.7, 40.7],
        [48.2, 27.7, 23.9, 23.6, 30.2, 45.3, 30.3, 44.8, 43.6, 42.1],
        [49.2, 27.9, 23.1, 23.4, 29.3, 43.0, 24.4, 45.7, 43.3, 42.3],
        [64.7, 28.8, 21.6, 21.0, 41.4, 42.7, 31.4, 40.0, 43.2, 47.9],
        [68.7, 32.2, 19.4, 29.4, 37.5, 41.7, 37.8, 34.4, 43.4, 43.2],
        [53.6, 28.5, 12.3, 18.8, 30.9, 40.1, 24.3, 39.0, 41.8, 37.3],
        [56.4, 27.0, 13.5, 32.8, 43.7, 50.6, 27.8, 57.4, 47.9, 42.7],
        [55.8, 28.5, 20.7, 20.6, 41.8, 50.6, 25.1, 48.5, 48.1, 43.2],
    ],
    "cs": [
        [76.3, 38.5, 30.9, 29.7, 41.5, 48.4, 35.3, 37.5, 49.9, 54.6],
        [75.3, 39.1, 31.6, 28.6, 43.6, 60.0, 37.9, 40.0, 52.6, 55.3],
        [75.7, 48.0, 52.9, 36.8, 49.5, 60.8, 41.9, 50.9, 65.1, 59.4],
        [76.1, 48.6, 51.5, 37.9, 51.0, 63.0, 41.9, 50.5, 65.4, 59.1],
        [78.7, 49.7, 49.1, 42.5, 56.9, 67.1, 46.0, 56.2, 69.2, 62.9],
        [72.1, 41.3, 51.6, 29.0, 41.6, 56.8, 35.9, 46.2, 59.4, 55.5],
        [79.8, 51.0, 49.5, 37.5, 55.1, 70.0, 55.3, 56.3, 68.7, 62.7],
        [79.0, 50.1, 50.8, 37.1, 51.3, 65.8, 42.4, 55.0, 67.4, 61.8],
        [77.8, 45.1, 39.9, 30.6, 42.4, 50.0, 37.5, 43.5, 56.7, 55.9],
        [79.1, 47.0, 41.0, 29.4, 51.7, 41.9, 37.8, 35.4, 44.9, 43.3],
        [74.1, 44.0, 25.3, 29.1, 43.0, 58.3, 40.3, 42.9, 56.1, 49.1],
        [79.4, 47.3, 24.2, 56.0, 67.9, 75.7, 46.7, 68.6, 70.0, 56.6],
        [81.3, 50.4, 39.8, 30.8, 68.8, 76.9, 43.1, 56.0, 70.6, 59.1],
    ],
}

# Grouped values, column order = GROUP_ORDER x (ti, li, ss, cs).
GROUPED = [
    [30.8, 52.7, 54.5, 63.1, 3.7, 27.9, 35.4, 41.3, 3.0, 49.9, 38.0, 41.7, 0.0, 67.0, 29.6, 33.6],
    [29.7, 56.3, 56.8, 64.0, 6.0, 27.1, 37.0, 42.0, 10.4, 48.8, 35.6, 47.2, 0.0, 61.0, 30.0, 34.3],
    [36.9, 69.9, 46.9, 70.4, 10.2, 45.2, 31.6, 53.4, 14.9, 47.0, 31.6, 50.7, 0.7, 32.9, 33.1, 43.9],
    [36.3, 68.5, 46.5, 70.8, 10.1, 42.1, 30.8, 53.1, 16.2, 44.4, 32.0, 52.0, 1.7, 36.8, 33.8, 44.2],
    [40.6, 74.4, 48.2, 74.0, 11.0, 46.2, 31.9, 53.9, 22.3, 46.7, 34.8, 56.7, 2.3, 32.5, 36.0, 49.4],
    [34.6, 63.1, 45.3, 65.8, 8.6, 44.3, 33.0, 49.5, 8.4, 46.5, 28.2, 44.8, 0.0, 41.0, 28.6, 37.6],
    [41.7, 73.9, 45.9, 74.3, 11.3, 46.8, 31.2, 54.4, 26.8, 43.7, 35.3, 60.1, 1.4, 47.2, 34.2, 46.9],
    [39.5, 72.8, 46.2, 73.2, 10.6, 45.9, 31.1, 54.2, 16.9, 44.5, 32.2, 53.2, 1.3, 42.2, 34.5, 46.1],
    [34.4, 64.4, 54.0, 67.3, 7.3, 37.0, 32.8, 47.0, 6.0, 42.7, 38.5, 43.3, 0.6, 65.6, 30.5, 37.1],
    [30.8, 53.2, 56.1, 62.0, 7.2, 28.1, 31.6, 43.8, 6.4, 40.4, 39.0, 43.8, 0.0, 76.7, 31.9, 32.4],
    [34.1, 60.1, 47.7, 65.1, 6.0, 28.7, 26.0, 39.5, 13.4, 49.1, 31.8, 47.2, 0.2, 45.0, 28.9, 36.0],
    [44.9, 77.8, 52.2, 74.7, 7.8, 34.3, 27.7, 42.7, 35.7, 62.5, 40.7, 63.4, 12.9, 60.7, 45.1, 62.3],
    [46.4, 78.7, 51.9, 76.0, 10.3, 42.6, 30.8, 49.8, 34.6, 64.0, 39.2, 62.9, 0.8, 63.0, 34.5, 43.4],
]

METRICS = ["ti", "li", "ss", "cs"]


def main() -> None:
    outdir = Path(__file__).resolve().parent.parent / "tests" / "data" / "published"
    outdir.mkdir(parents=True, exist_ok=True)

    lines = ["model,dataset,metric,value"]
    for metric in METRICS:
        for model, row in zip(MODELS, PER_DATASET[metric]):
            assert len(row) == len(DATASETS), (metric, model)
            for dataset, value in zip(DATASETS, row):
                lines.append(f"{model},{dataset},{metric},{value}")
    (outdir / "per_dataset.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    lines = ["model,group,metric,value"]
    for model, row in zip(MODELS, GROUPED):
        assert len(row) == 16, model
        for gi, group in enumerate(GROUP_ORDER):
            for mi, metric in enumerate(METRICS):
                lines.append(f"{model},{group},{metric},{row[gi * 4 + mi]}")
    (outdir / "grouped.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    # Cross-check: recomputing group cells from the rounded per-dataset values
    # can differ from the published grouped cell by up to 0.1 (both sides are
    # independently rounded to one decimal). Report every cell beyond 0.05.
    worst = 0.0
    beyond_half_step = []
    for model, row in zip(MODELS, GROUPED):
        midx = MODELS.index(model)
        for gi, group in enumerate(GROUP_ORDER):
            members = GROUPS[group]
            for mi, metric in enumerate(METRICS):
                values = [
                    PER_DATASET[metric][midx][DATASETS.index(d)] for d in members
                ]
                computed = sum(values) / len(values)
                published = row[gi * 4 + mi]
                diff = abs(computed - published)
                worst = max(worst, diff)
                if diff > 0.05 + 1e-9:
                    beyond_half_step.append((model, group, metric, computed, published, diff))
    print(f"checked {len(MODELS) * 16} grouped cells, worst |diff| = {worst:.6f}")
    for entry in beyond_half_step:
        print("beyond 0.05 (double-rounding):", entry)
    if worst > 0.1 + 1e-9:
        raise SystemExit("transcription error: diff beyond the double-rounding bound")
    print("per_dataset.csv and grouped.csv written")


if __name__ == "__main__":
    main()
