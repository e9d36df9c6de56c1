"""Dataset access: read labels.csv + PNGs, filter to usable rows, split.

Only rows with status OK carry both property labels; everything else is
dropped at load time. Images are downscaled from the dataset resolution
to the training resolution here, once, so every consumer sees the same
tensors.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import tomli
from PIL import Image

TARGETS = ("E_c", "sigma_y")


class ConfigError(ValueError):
    """Bad configuration value or file."""


class DataError(ValueError):
    """Dataset directory unusable or insufficient."""


@dataclass(frozen=True)
class SurrogateConfig:
    """Training hyperparameters and data handling knobs.

    split is (train, test, val) fractions and must sum to 1. The input
    resolution must be a multiple of 16 (four pooling halvings) and is
    deliberately below the dataset's native 256 px to keep single-core
    training inside its time budget; the downscale is part of the model
    contract and recorded with the weights.
    """

    split: tuple = (0.85, 0.10, 0.05)
    folds: int = 5
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 20260417
    input_resolution: int = 96
    min_ok_records: int = 500

    def __post_init__(self):
        s = tuple(float(x) for x in self.split)
        object.__setattr__(self, "split", s)
        if len(s) != 3 or any(x <= 0.0 for x in s) or abs(sum(s) - 1.0) > 1e-9:
            raise ConfigError("split must be three positive fractions summing to 1")
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.input_resolution < 32 or self.input_resolution % 16:
            raise ConfigError("input_resolution must be >= 32 and a multiple of 16")
        if self.min_ok_records < 1:
            raise ConfigError("min_ok_records must be >= 1")


_CONFIG_KEYS = {"split", "folds", "epochs", "batch_size", "learning_rate",
                "seed", "input_resolution", "min_ok_records"}


def config_from_dict(data: dict) -> SurrogateConfig:
    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown key(s) in config: {', '.join(sorted(unknown))}")
    base = SurrogateConfig()
    try:
        return SurrogateConfig(
            split=tuple(data.get("split", base.split)),
            folds=int(data.get("folds", base.folds)),
            epochs=int(data.get("epochs", base.epochs)),
            batch_size=int(data.get("batch_size", base.batch_size)),
            learning_rate=float(data.get("learning_rate", base.learning_rate)),
            seed=int(data.get("seed", base.seed)),
            input_resolution=int(data.get("input_resolution", base.input_resolution)),
            min_ok_records=int(data.get("min_ok_records", base.min_ok_records)),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path) -> SurrogateConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return config_from_dict(data)


def config_to_toml(cfg: SurrogateConfig) -> str:
    """Canonical serialization, mirrored back by load_config."""
    return "\n".join([
        f"split = [{', '.join(repr(v) for v in cfg.split)}]",
        f"folds = {cfg.folds}",
        f"epochs = {cfg.epochs}",
        f"batch_size = {cfg.batch_size}",
        f"learning_rate = {cfg.learning_rate!r}",
        f"seed = {cfg.seed}",
        f"input_resolution = {cfg.input_resolution}",
        f"min_ok_records = {cfg.min_ok_records}",
    ]) + "\n"


@dataclass
class Dataset:
    """OK records of one generated dataset, images already downscaled.

    images: float32 (n, 1, r, r) in [0, 1]; labels maps each target name
    to a float64 (n,) vector; ids and vf_actual align with it.
    """

    images: np.ndarray
    labels: dict
    ids: np.ndarray
    vf_actual: np.ndarray
    resolution: int

    @property
    def n(self) -> int:
        return len(self.ids)


def _load_image(path: Path, resolution: int) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode != "L":
            im = im.convert("L")
        if im.size != (resolution, resolution):
            im = im.resize((resolution, resolution), Image.BILINEAR)
        return np.asarray(im, dtype=np.float32) / 255.0


def load_dataset(data_dir, cfg: SurrogateConfig = SurrogateConfig()) -> Dataset:
    """Read labels.csv and the referenced PNGs from a dataset directory.

    Rows whose status is not OK are skipped. The OK count is cross-checked
    against manifest.json when present, so a truncated copy of the dataset
    fails loudly instead of training on a subset.
    """
    data_dir = Path(data_dir)
    labels_path = data_dir / "labels.csv"
    if not labels_path.exists():
        raise DataError(f"labels.csv not found in {data_dir}")
    ids, vfs, es, sys_, paths = [], [], [], [], []
    with open(labels_path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["status"] != "OK":
                continue
            ids.append(int(row["id"]))
            vfs.append(float(row["vf_actual"]))
            es.append(float(row["E_c_GPa"]))
            sys_.append(float(row["sigma_y_MPa"]))
            paths.append(data_dir / row["image_path"])
    if not ids:
        raise DataError(f"no OK records in {labels_path}")
    manifest_path = data_dir / "manifest.json"
    if manifest_path.exists():
        with open(manifest_path) as fh:
            counts = json.load(fh).get("status_counts", {})
        if counts.get("OK", len(ids)) != len(ids):
            raise DataError(
                f"labels.csv has {len(ids)} OK rows but manifest says {counts.get('OK')}")
    images = np.stack([_load_image(p, cfg.input_resolution) for p in paths])
    return Dataset(
        images=images[:, None, :, :],
        labels={"E_c": np.asarray(es), "sigma_y": np.asarray(sys_)},
        ids=np.asarray(ids, dtype=np.int64),
        vf_actual=np.asarray(vfs),
        resolution=cfg.input_resolution,
    )


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    test: np.ndarray
    val: np.ndarray


def split_dataset(n: int, cfg: SurrogateConfig) -> Split:
    """Disjoint train/test/val index sets from a seeded shuffle.

    Sizes are rounded from the configured fractions with train absorbing
    the remainder; every set is guaranteed nonempty.
    """
    if n < 3:
        raise DataError(f"need at least 3 records to split, found {n}")
    rng = np.random.default_rng(cfg.seed)
    perm = rng.permutation(n)
    n_test = max(1, round(cfg.split[1] * n))
    n_val = max(1, round(cfg.split[2] * n))
    if n_test + n_val >= n:
        raise DataError(f"split fractions leave no training data for n={n}")
    test = np.sort(perm[:n_test])
    val = np.sort(perm[n_test:n_test + n_val])
    train = np.sort(perm[n_test + n_val:])
    return Split(train=train, test=test, val=val)


def kfold_indices(indices: np.ndarray, folds: int, seed: int) -> list:
    """Partition indices into folds; yields (fit, held_out) pairs."""
    if folds < 2:
        raise ConfigError("folds must be >= 2")
    if len(indices) < folds:
        raise DataError(f"cannot make {folds} folds from {len(indices)} records")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(np.asarray(indices))
    parts = np.array_split(perm, folds)
    out = []
    for k in range(folds):
        held = np.sort(parts[k])
        fit = np.sort(np.concatenate([parts[j] for j in range(folds) if j != k]))
        out.append((fit, held))
    return out
