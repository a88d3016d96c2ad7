#!/usr/bin/env python3
"""Regenerate the golden end-to-end outputs from the bundled fixture.

Runs `owc score` (mock backends, seed 42) and `owc report` over the fixture
and freezes the resulting store and report files under tests/data/golden/.
Only rerun this when an intentional behavior change invalidates the goldens;
review the diff before committing.
"""

import shutil
from pathlib import Path

from click.testing import CliRunner

from owc.cli import main

ROOT = Path(__file__).resolve().parent.parent
FIXTURE = ROOT / "tests" / "data" / "fixture"
GOLDEN = ROOT / "tests" / "data" / "golden"


def run(args):
    result = CliRunner().invoke(main, args)
    if result.exit_code != 0:
        raise SystemExit(f"command failed ({result.exit_code}): {result.output}")
    print(result.output.strip())


def main_():
    shutil.rmtree(GOLDEN, ignore_errors=True)
    GOLDEN.mkdir(parents=True)
    run([
        "score",
        "--samples", str(FIXTURE / "samples_housewares.jsonl"),
        "--samples", str(FIXTURE / "samples_flora.jsonl"),
        "--predictions", str(FIXTURE / "predictions.jsonl"),
        "--store-dir", str(GOLDEN / "store"),
        "--mock", "--seed", "42",
    ])
    run([
        "report",
        "--store-dir", str(GOLDEN / "store"),
        "--samples", str(FIXTURE / "samples_housewares.jsonl"),
        "--samples", str(FIXTURE / "samples_flora.jsonl"),
        "--out-dir", str(GOLDEN / "report"),
    ])
    print(f"golden files written under {GOLDEN}")


if __name__ == "__main__":
    main_()
