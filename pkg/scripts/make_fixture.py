#!/usr/bin/env python3
"""Write the bundled synthetic fixture: 3 mock models x 2 datasets x 10 samples.

The tables below are hand-designed to exercise every prediction type under
the token-overlap mock judge and the trigram mock embedder (seed 42): exact
matches, wordy correct answers, generic answers, related-but-wrong answers,
unrelated answers, punctuation noise, and empty outputs. Regenerating is
deterministic; the files are committed under tests/data/fixture/.
"""

import json
from pathlib import Path

HOUSEWARES = [
    ("h01", "sofa"),
    ("h02", "trash can"),
    ("h03", "cellphone"),
    ("h04", "lamp"),
    ("h05", "rocking chair"),
    ("h06", "teapot"),
    ("h07", "mirror"),
    ("h08", "bookshelf"),
    ("h09", "alarm clock"),
    ("h10", "vacuum cleaner"),
]

FLORA = [
    ("f01", "sunflower"),
    ("f02", "tiger lily"),
    ("f03", "moss rose"),
    ("f04", "fern"),
    ("f05", "bonsai tree"),
    ("f06", "cactus"),
    ("f07", "water lily"),
    ("f08", "snapdragon"),
    ("f09", "ivy"),
    ("f10", "orchid"),
]

# model -> dataset -> sample -> raw prediction text
PREDICTIONS = {
    "vesta": {
        "housewares": {
            "h01": "sofa",
            "h02": "Trash can.",
            "h03": "mobile phone",
            "h04": "a lamp",
            "h05": "rocking chair",
            "h06": "teapot",
            "h07": "wall mirror",
            "h08": "bookshelf full of books",
            "h09": "alarm clock",
            "h10": "vacuum cleaner",
        },
        "flora": {
            "f01": "sunflower",
            "f02": "tiger lily",
            "f03": "rose",
            "f04": "fern",
            "f05": "bonsai tree",
            "f06": "cactus",
            "f07": "water lily",
            "f08": "flower",
            "f09": "ivy",
            "f10": "orchid",
        },
    },
    "lumen": {
        "housewares": {
            "h01": "couch",
            "h02": "a can",
            "h03": "a device",
            "h04": "light fixture",
            "h05": "chair",
            "h06": "kettle",
            "h07": "furniture",
            "h08": "shelf",
            "h09": "clock",
            "h10": "appliance",
        },
        "flora": {
            "f01": "flower",
            "f02": "lily",
            "f03": "flower",
            "f04": "plant",
            "f05": "small tree",
            "f06": "succulent plant",
            "f07": "lily",
            "f08": "plant",
            "f09": "climbing plant",
            "f10": "flower",
        },
    },
    "quill": {
        "housewares": {
            "h01": "The object in the image is a sofa.",
            "h02": "I think this is a garbage bin",
            "h03": "handheld device",
            "h04": "",
            "h05": "a wooden rocking chair on a porch",
            "h06": "a ceramic teapot, probably antique",
            "h07": "window",
            "h08": "a stack of books",
            "h09": "digital watch",
            "h10": "",
        },
        "flora": {
            "f01": "a large yellow sunflower in a field",
            "f02": "orange flower with spots",
            "f03": "moss",
            "f04": "green leaves",
            "f05": "a miniature bonsai tree in a pot",
            "f06": "a prickly cactus in the desert",
            "f07": "pond plant",
            "f08": "",
            "f09": "wall covered in ivy",
            "f10": "purple orchid flower",
        },
    },
}

# Tags are multi-label annotations per image; several wrong predictions above
# match one of them exactly so tag-match counts are hand-checkable.
TAGS = {
    "housewares": {
        "h01": ["sofa", "cushion", "living room"],
        "h02": ["trash can", "garbage bin", "kitchen"],
        "h03": ["cellphone", "handheld device", "table"],
        "h04": ["lamp", "light fixture", "desk"],
        "h05": ["rocking chair", "porch", "wood"],
        "h06": ["teapot", "cup", "tray"],
        "h07": ["mirror", "window", "frame"],
        "h08": ["bookshelf", "books", "wall"],
        "h09": ["alarm clock", "nightstand"],
        "h10": ["vacuum cleaner", "carpet"],
    },
    "flora": {
        "f01": ["sunflower", "field", "sky"],
        "f02": ["tiger lily", "garden"],
        "f03": ["moss rose", "moss", "rock"],
        "f04": ["fern", "forest floor"],
        "f05": ["bonsai tree", "pot"],
        "f06": ["cactus", "desert", "sand"],
        "f07": ["water lily", "pond", "pond plant"],
        "f08": ["snapdragon", "stem"],
        "f09": ["ivy", "wall"],
        "f10": ["orchid", "vase"],
    },
}

GROUPS = {"housewares": "prototypical", "flora": "fine_grained"}
SAMPLES = {"housewares": HOUSEWARES, "flora": FLORA}


def main() -> None:
    outdir = Path(__file__).resolve().parent.parent / "tests" / "data" / "fixture"
    outdir.mkdir(parents=True, exist_ok=True)

    for dataset, pairs in SAMPLES.items():
        lines = [json.dumps({"dataset_id": dataset, "group": GROUPS[dataset]})]
        for sample_id, gt in pairs:
            lines.append(
                json.dumps(
                    {
                        "sample_id": sample_id,
                        "dataset_id": dataset,
                        "image_ref": f"img://{dataset}/{sample_id}",
                        "ground_truth": gt,
                    }
                )
            )
        (outdir / f"samples_{dataset}.jsonl").write_text("\n".join(lines) + "\n", "utf-8")

    lines = []
    for model in sorted(PREDICTIONS):
        for dataset in sorted(PREDICTIONS[model]):
            for sample_id, _ in SAMPLES[dataset]:
                lines.append(
                    json.dumps(
                        {
                            "model_id": model,
                            "dataset_id": dataset,
                            "sample_id": sample_id,
                            "variant_id": "base",
                            "raw_text": PREDICTIONS[model][dataset][sample_id],
                        }
                    )
                )
    (outdir / "predictions.jsonl").write_text("\n".join(lines) + "\n", "utf-8")

    lines = []
    for dataset in sorted(TAGS):
        for sample_id, _ in SAMPLES[dataset]:
            lines.append(
                json.dumps(
                    {
                        "dataset_id": dataset,
                        "sample_id": sample_id,
                        "tags": TAGS[dataset][sample_id],
                    }
                )
            )
    (outdir / "tags.jsonl").write_text("\n".join(lines) + "\n", "utf-8")
    print(f"fixture written to {outdir}")


if __name__ == "__main__":
    main()
