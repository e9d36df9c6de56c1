"""Shared fixtures and the acceptance-criteria reporting hook."""

import os
from pathlib import Path

import pytest

from fibretest.pipeline import PipelineConfig, generate_dataset
from fibretest.virtest import TensileTestConfig

_CRITERIA = []


def record_criterion(name: str, passed: bool, detail: str) -> None:
    """Collect one acceptance-criterion verdict for the terminal summary."""
    _CRITERIA.append((name, bool(passed), detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    lines = []
    for name, passed, detail in _CRITERIA:
        verdict = "PASS" if passed else "FAIL"
        line = f"{verdict}  {name}: {detail}"
        lines.append(line)
        terminalreporter.write_line(line)
    report = Path(config.rootpath) / "acceptance_report.txt"
    report.write_text("\n".join(lines) + "\n", encoding="utf-8")


@pytest.fixture(scope="session")
def criteria():
    """Recorder used by acceptance tests to emit one verdict line each."""
    return record_criterion


@pytest.fixture(scope="session")
def small_config():
    """Reduced pipeline config for fast integration tests."""
    return PipelineConfig(
        vf_values=(0.20, 0.26, 0.32, 0.38, 0.44),
        samples_per_vf=4,
        image_resolution=64,
        master_seed=777,
        workers=1,
        test=TensileTestConfig(max_strain=0.04, n_increments=20, element_size_factor=2.5),
    )


@pytest.fixture(scope="session")
def small_dataset(small_config, tmp_path_factory):
    """One generated reduced dataset shared across integration tests."""
    out = tmp_path_factory.mktemp("small_ds")
    records, manifest, stats = generate_dataset(small_config, out)
    return {"out": out, "records": records, "manifest": manifest, "stats": stats,
            "config": small_config}
