from __future__ import annotations

import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

ADAPTER_ROOT = Path(__file__).resolve().parents[1]
PRIMARY_ROOT = ADAPTER_ROOT.parent
PRIMARY_SRC = PRIMARY_ROOT / "src"
SCHEMA_DIR = PRIMARY_ROOT / "schemas" / "backend"


def primary_env() -> dict:
    env = dict(os.environ)
    env["PYTHONPATH"] = str(PRIMARY_SRC) + os.pathsep + env.get("PYTHONPATH", "")
    return env


def run_primary_cli(*args: str) -> subprocess.CompletedProcess:
    """Invoke the detection engine through its CLI, its external interface."""
    return subprocess.run(
        [sys.executable, "-m", "arsent.cli", *args],
        capture_output=True,
        text=True,
        env=primary_env(),
        timeout=300,
    )


@pytest.fixture(scope="session")
def dataset(tmp_path_factory) -> Path:
    """Synthetic scene corpus generated via the primary CLI."""
    out = tmp_path_factory.mktemp("adapter_ds")
    proc = run_primary_cli(
        "synth", "--out", str(out), "--count", "24", "--seed", "34",
        "--mix", "none:0.4,obstruction:0.3,vim:0.3",
    )
    assert proc.returncode == 0, proc.stderr
    return out


def load_truth(dataset: Path, scene_id: str) -> dict:
    return json.loads((dataset / "scenes" / scene_id / "truth.json").read_text())


def scene_ids_by_label(dataset: Path) -> dict:
    by_label: dict[str, list[str]] = {}
    for line in (dataset / "manifest.jsonl").read_text().splitlines():
        rec = json.loads(line)
        label = load_truth(dataset, rec["id"])["label"]
        by_label.setdefault(label, []).append(rec["id"])
    return by_label


def load_schema(name: str) -> dict:
    return json.loads((SCHEMA_DIR / f"{name}.response.schema.json").read_text())
