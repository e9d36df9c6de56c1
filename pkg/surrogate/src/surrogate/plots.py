"""Plot renderers: parity scatter for surrogate evaluation and property
trend scatter straight from a dataset's labels.csv."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_UNITS = {"E_c": "GPa", "sigma_y": "MPa"}
_NAMES = {"E_c": "Young's modulus", "sigma_y": "proof stress"}


def write_parity_csv(path, ids, labels, preds) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("id,label,prediction\n")
        for i, y, p in zip(ids, labels, preds):
            fh.write(f"{i},{y:.6g},{p:.6g}\n")


def read_parity_csv(path):
    ids, labels, preds = [], [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            ids.append(int(row["id"]))
            labels.append(float(row["label"]))
            preds.append(float(row["prediction"]))
    return np.asarray(ids), np.asarray(labels), np.asarray(preds)


def parity_plot(path, labels, preds, target: str, r2: float) -> None:
    """Prediction vs label scatter with the identity line and R²."""
    unit = _UNITS.get(target, "")
    fig, ax = plt.subplots(figsize=(5.0, 5.0))
    lo = min(labels.min(), preds.min())
    hi = max(labels.max(), preds.max())
    pad = 0.05 * (hi - lo or 1.0)
    ax.plot([lo - pad, hi + pad], [lo - pad, hi + pad],
            color="tab:orange", lw=1.2, zorder=1)
    ax.scatter(labels, preds, s=12, alpha=0.6, zorder=2)
    ax.set_xlim(lo - pad, hi + pad)
    ax.set_ylim(lo - pad, hi + pad)
    ax.set_xlabel(f"virtual test {target} [{unit}]")
    ax.set_ylabel(f"surrogate {target} [{unit}]")
    ax.set_title(f"{_NAMES.get(target, target)} parity, R² = {r2:.4f}")
    ax.set_aspect("equal")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def trend_scatter(path, vf, values, target: str) -> None:
    """Property against achieved volume fraction, one dot per OK sample."""
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    ax.scatter(vf, values, s=10, alpha=0.5)
    ax.set_xlabel("fibre volume fraction")
    ax.set_ylabel(f"{target} [{_UNITS.get(target, '')}]")
    ax.set_title(f"{_NAMES.get(target, target)} vs volume fraction")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
