"""Shared fixtures: a tiny synthetic dataset for unit tests, the full
generated dataset for acceptance, and the per-criterion reporter."""

import sys
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

REPO_ROOT = Path(__file__).resolve().parent.parent.parent

_CRITERIA = []


def record_criterion(name: str, passed: bool, detail: str) -> None:
    _CRITERIA.append((name, passed, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    lines = [f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
             for name, ok, detail in _CRITERIA]
    terminalreporter.section("secondary acceptance criteria")
    for line in lines:
        terminalreporter.write_line(line)
    (REPO_ROOT / "surrogate" / "acceptance_report.txt").write_text(
        "\n".join(lines) + "\n")


@pytest.fixture(scope="session")
def criteria():
    return record_criterion


def make_synthetic_dataset(root: Path, n: int = 48, native: int = 64, seed: int = 3):
    """Small dataset in the emitted format: discs on black, labels that
    depend linearly on the white area fraction plus mild noise."""
    rng = np.random.default_rng(seed)
    images_dir = root / "images"
    images_dir.mkdir(parents=True)
    rows = []
    for i in range(n):
        img = np.zeros((native, native), dtype=np.uint8)
        n_discs = rng.integers(4, 14)
        yy, xx = np.mgrid[0:native, 0:native]
        for _ in range(n_discs):
            cy, cx = rng.uniform(5, native - 5, size=2)
            r = rng.uniform(3.0, 6.0)
            img[(yy - cy) ** 2 + (xx - cx) ** 2 <= r * r] = 255
        wf = float((img > 0).mean())
        e = 3.0 + 8.0 * wf + rng.normal(0, 0.02)
        sy = 60.0 + 150.0 * wf + rng.normal(0, 0.5)
        Image.fromarray(img, mode="L").save(images_dir / f"ms_{i:05d}.png")
        rows.append(f"{i},images/ms_{i:05d}.png,0.3,{wf:.6g},{e:.6g},{sy:.6g},{100 + i},OK")
    # a couple of non-OK rows that the loader must skip
    rows.append(f"{n},,0.44,0.41,,,{100 + n},JAMMED")
    rows.append(f"{n + 1},images/ms_00000.png,0.3,0.3,4.1,,{101 + n},NOT_YIELDED")
    (root / "labels.csv").write_text(
        "id,image_path,vf_target,vf_actual,E_c_GPa,sigma_y_MPa,seed,status\n"
        + "\n".join(rows) + "\n")
    return root


@pytest.fixture(scope="session")
def synthetic_dataset(tmp_path_factory):
    return make_synthetic_dataset(tmp_path_factory.mktemp("synth") / "ds")


@pytest.fixture(scope="session")
def synth_factory():
    return make_synthetic_dataset


@pytest.fixture(scope="session")
def desk_dataset():
    """The full generated dataset; built on demand if the cache is absent."""
    path = REPO_ROOT / ".acceptance_cache" / "dataset"
    if not (path / "labels.csv").exists():
        from fibretest.pipeline import PipelineConfig, generate_dataset

        path.parent.mkdir(exist_ok=True)
        generate_dataset(PipelineConfig(), path)
    return path
