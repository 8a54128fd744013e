from __future__ import annotations

import random

import numpy as np
import pytest

from arsent.config import PipelineConfig, endpoints_from_dict
from arsent.maskops import RasterMask
from arsent.synth import SynthSpec, synthesize

ACCEPT_MIX = {"none": 0.4, "obstruction": 0.3, "vim": 0.3}


def random_mask(rng: random.Random, max_dim: int = 256) -> RasterMask:
    w = rng.randint(1, max_dim)
    h = rng.randint(1, max_dim)
    density = rng.random()
    arr = np.frombuffer(rng.randbytes(w * h), dtype=np.uint8).reshape(h, w)
    return RasterMask.from_array(arr < int(density * 256))


def oracle_config(dataset_dir, **noise) -> PipelineConfig:
    locator = f"oracle:{dataset_dir}"
    if noise:
        locator += "?" + "&".join(f"{k}={v}" for k, v in sorted(noise.items()))
    return PipelineConfig(endpoints=endpoints_from_dict({"all": locator}))


@pytest.fixture(scope="session")
def ds_small(tmp_path_factory):
    """30 mixed scenes for module-level pipeline tests.

    Seed 34 makes the corpus cover every vim mechanic (alteration, addition,
    arrow flip) on top of the label mix.
    """
    out = tmp_path_factory.mktemp("ds_small")
    manifest = synthesize(SynthSpec(seed=34, count=30, mix=ACCEPT_MIX), out)
    return out, manifest


@pytest.fixture(scope="session")
def ds_obstruction(tmp_path_factory):
    """Obstruction-only scenes for threshold sweeps."""
    out = tmp_path_factory.mktemp("ds_obstruction")
    manifest = synthesize(SynthSpec(seed=11, count=40, mix={"obstruction": 1.0}), out)
    return out, manifest


@pytest.fixture(scope="session")
def ds_accept(tmp_path_factory):
    """The 200-scene acceptance corpus: seed 42, mix 0.4/0.3/0.3."""
    out = tmp_path_factory.mktemp("ds_accept")
    manifest = synthesize(SynthSpec(seed=42, count=200, mix=ACCEPT_MIX), out)
    return out, manifest


@pytest.fixture(scope="session")
def ds_vim500(tmp_path_factory):
    """500 VIM-only scenes (small frames) for noise accounting runs."""
    out = tmp_path_factory.mktemp("ds_vim500")
    manifest = synthesize(
        SynthSpec(seed=1401, count=500, mix={"vim": 1.0}, image_size=(320, 240)), out
    )
    return out, manifest


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per acceptance criterion at the end of the run."""
    seen: dict[str, str] = {}
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            if "test_acceptance" in rep.nodeid:
                name = rep.nodeid.split("::")[-1]
                seen[name] = "PASS" if status == "passed" else "FAIL"
    if seen:
        terminalreporter.write_line("")
        terminalreporter.write_line("acceptance criteria:")
        for name, outcome in seen.items():
            terminalreporter.write_line(f"  [{outcome}] {name}")
