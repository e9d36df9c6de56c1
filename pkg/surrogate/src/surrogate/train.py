"""Training and evaluation: k-fold cross-validation plus a final model.

Labels are standardized with statistics of the training portion only.
All randomness (weight init, batch order) is derived from the config
seed through explicit generators, so a rerun on the same torch build
reproduces the metrics bit for bit; a hash of the headline metrics is
recorded to make silent drift visible.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .data import TARGETS, ConfigError, DataError, Dataset, SurrogateConfig, kfold_indices, split_dataset
from .model import SurrogateNet, build_model


def r_squared(y_true, y_pred) -> float:
    """Coefficient of determination; 1 for perfect, 0 for the mean predictor."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ValueError("r_squared needs two equal-length 1-d arrays")
    if len(y_true) < 2:
        raise ValueError("r_squared needs at least 2 points")
    ss_tot = float(((y_true - y_true.mean()) ** 2).sum())
    if ss_tot == 0.0:
        raise ValueError("labels have zero variance")
    ss_res = float(((y_true - y_pred) ** 2).sum())
    return 1.0 - ss_res / ss_tot


@dataclass
class TrainedSurrogate:
    """A trained network plus everything needed to use it standalone."""

    model: SurrogateNet
    target: str
    input_resolution: int
    label_mean: float
    label_std: float
    history: list = field(default_factory=list)

    @torch.no_grad()
    def predict(self, images: np.ndarray, batch_size: int = 64) -> np.ndarray:
        """De-standardized predictions for float images shaped (n, 1, r, r)."""
        self.model.eval()
        outs = []
        x = torch.from_numpy(np.ascontiguousarray(images, dtype=np.float32))
        for i in range(0, len(x), batch_size):
            outs.append(self.model(x[i:i + batch_size])[:, 0])
        z = torch.cat(outs).numpy().astype(float)
        return z * self.label_std + self.label_mean

    def save(self, path) -> None:
        torch.save({
            "state_dict": self.model.state_dict(),
            "target": self.target,
            "input_resolution": self.input_resolution,
            "label_mean": self.label_mean,
            "label_std": self.label_std,
            "history": self.history,
        }, path)

    @classmethod
    def load(cls, path) -> "TrainedSurrogate":
        blob = torch.load(path, map_location="cpu", weights_only=False)
        model = SurrogateNet(blob["input_resolution"])
        model.load_state_dict(blob["state_dict"])
        model.eval()
        return cls(model=model, target=blob["target"],
                   input_resolution=blob["input_resolution"],
                   label_mean=blob["label_mean"], label_std=blob["label_std"],
                   history=blob["history"])


def _epoch_generator(seed: int, tag: int, epoch: int) -> torch.Generator:
    g = torch.Generator()
    g.manual_seed((seed * 1_000_003 + tag * 10_007 + epoch) % 2 ** 63)
    return g


def _fit(model: nn.Module, x: torch.Tensor, z: torch.Tensor, cfg: SurrogateConfig,
         tag: int, val: tuple | None = None) -> list:
    """Adam/MSE loop over shuffled minibatches; returns per-epoch history."""
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    loss_fn = nn.MSELoss()
    history = []
    model.train()
    for epoch in range(cfg.epochs):
        perm = torch.randperm(len(x), generator=_epoch_generator(cfg.seed, tag, epoch))
        total = 0.0
        for i in range(0, len(perm), cfg.batch_size):
            idx = perm[i:i + cfg.batch_size]
            opt.zero_grad()
            loss = loss_fn(model(x[idx])[:, 0], z[idx])
            loss.backward()
            opt.step()
            total += float(loss.detach()) * len(idx)
        entry = {"epoch": epoch, "train_loss": total / len(perm)}
        if val is not None:
            # val is (x, z) on the standardized scale; R² is invariant to
            # applying the same affine map to both sides, so this equals
            # the raw-scale value.
            model.eval()
            with torch.no_grad():
                pred = model(val[0])[:, 0].numpy().astype(float)
            entry["val_r2"] = r_squared(val[1], pred)
            model.train()
        history.append(entry)
    model.eval()
    return history


def train(cfg: SurrogateConfig, ds: Dataset, target: str):
    """Cross-validate and fit the final surrogate for one target.

    Returns (TrainedSurrogate, metrics dict). Fold models are trained on
    k-1 folds of the training split and scored on the held-out fold; the
    final model is trained on the whole training split and scored on the
    test and validation splits. All R² values are computed on the
    original label scale.
    """
    if target not in TARGETS:
        raise ConfigError(f"unknown target {target!r}, expected one of {TARGETS}")
    if ds.n < cfg.min_ok_records:
        raise DataError(
            f"need at least {cfg.min_ok_records} OK records to train, found {ds.n}")
    if ds.resolution != cfg.input_resolution:
        raise ConfigError("dataset was loaded at a different input_resolution")
    split = split_dataset(ds.n, cfg)
    y = ds.labels[target].astype(float)
    mean = float(y[split.train].mean())
    std = float(y[split.train].std())
    if std == 0.0:
        raise DataError("training labels have zero variance")

    x_all = torch.from_numpy(np.ascontiguousarray(ds.images, dtype=np.float32))
    z_all = torch.from_numpy(((y - mean) / std).astype(np.float32))

    t0 = time.perf_counter()
    fold_r2 = []
    for k, (fit_idx, held_idx) in enumerate(kfold_indices(split.train, cfg.folds, cfg.seed)):
        model = build_model(cfg.input_resolution, seed=cfg.seed + 1000 * (k + 1))
        _fit(model, x_all[fit_idx], z_all[fit_idx], cfg, tag=k + 1)
        with torch.no_grad():
            pred = model(x_all[held_idx])[:, 0].numpy().astype(float) * std + mean
        fold_r2.append(r_squared(y[held_idx], pred))

    final = build_model(cfg.input_resolution, seed=cfg.seed)
    val_xz = (x_all[split.val], z_all[split.val].numpy().astype(float)) \
        if len(split.val) >= 2 else None
    surr = TrainedSurrogate(model=final, target=target,
                            input_resolution=cfg.input_resolution,
                            label_mean=mean, label_std=std)
    surr.history = _fit(final, x_all[split.train], z_all[split.train], cfg,
                        tag=0, val=val_xz)
    train_seconds = time.perf_counter() - t0

    metrics = {
        "target": target,
        "n_train": int(len(split.train)),
        "n_test": int(len(split.test)),
        "n_val": int(len(split.val)),
        "label_mean": mean,
        "label_std": std,
        "fold_r2": [round(v, 6) for v in fold_r2],
        "test_r2": round(r_squared(y[split.test], surr.predict(ds.images[split.test])), 6),
        "val_r2": round(r_squared(y[split.val], surr.predict(ds.images[split.val])), 6)
        if len(split.val) >= 2 else None,
        "train_seconds": round(train_seconds, 3),
    }
    return surr, metrics


def metrics_hash(per_target: dict) -> str:
    """Stable digest of the headline numbers, for drift detection."""
    core = {t: {"fold_r2": m["fold_r2"], "test_r2": m["test_r2"], "val_r2": m["val_r2"]}
            for t, m in sorted(per_target.items())}
    return hashlib.sha256(json.dumps(core, sort_keys=True).encode()).hexdigest()
