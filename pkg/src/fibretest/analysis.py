"""Statistical validation of a generated dataset: structure-property
trends, linear fits, and physical bound checks against rule-of-mixtures
envelopes."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# Desk-scale validation thresholds for the trend report.
PEARSON_E_MIN = 0.95
PEARSON_SY_MIN = 0.85
ENVELOPE_LO = 0.9
ENVELOPE_HI = 1.1
MIN_OK_RECORDS = 50


def pearson_r(x, y) -> float:
    """Sample Pearson correlation of two equal-length sequences."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be equal-length 1-D sequences")
    if x.size < 3:
        raise ValueError(f"need at least 3 points, got {x.size}")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = math.sqrt(float(dx @ dx))
    sy = math.sqrt(float(dy @ dy))
    if sx == 0.0 or sy == 0.0:
        raise ValueError("zero variance input")
    # round-off can push perfectly correlated data a ULP past +/-1
    return float(np.clip((dx @ dy) / (sx * sy), -1.0, 1.0))


def voigt_reuss_bounds(vf: float, e_matrix: float, e_fibre: float):
    """Rule-of-mixtures stiffness bounds (reuss, voigt) in the input units."""
    if not 0.0 <= vf <= 1.0:
        raise ValueError(f"vf must be in [0, 1], got {vf}")
    voigt = vf * e_fibre + (1.0 - vf) * e_matrix
    reuss = 1.0 / (vf / e_fibre + (1.0 - vf) / e_matrix)
    return reuss, voigt


def read_labels(path) -> list:
    """Parse labels.csv into typed row dicts (missing floats become None)."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            rows.append(
                {
                    "id": int(rec["id"]),
                    "image_path": rec["image_path"],
                    "vf_target": float(rec["vf_target"]),
                    "vf_actual": float(rec["vf_actual"]) if rec["vf_actual"] else None,
                    "E_c_GPa": float(rec["E_c_GPa"]) if rec["E_c_GPa"] else None,
                    "sigma_y_MPa": float(rec["sigma_y_MPa"]) if rec["sigma_y_MPa"] else None,
                    "seed": int(rec["seed"]),
                    "status": rec["status"],
                }
            )
    return rows


@dataclass
class PropertyTrend:
    name: str
    pearson_r: float
    slope: float
    intercept: float
    resid_std: float
    n: int


@dataclass
class TrendReport:
    trends: dict
    bound_violations: int
    n_ok: int
    per_vf: list = field(default_factory=list)

    def failures(self) -> list:
        """Threshold violations as human-readable strings; empty if clean."""
        out = []
        r_e = self.trends["E_c_GPa"].pearson_r
        r_sy = self.trends["sigma_y_MPa"].pearson_r
        if r_e < PEARSON_E_MIN:
            out.append(f"pearson_r(vf, E_c) = {r_e:.4f} < {PEARSON_E_MIN}")
        if r_sy < PEARSON_SY_MIN:
            out.append(f"pearson_r(vf, sigma_y) = {r_sy:.4f} < {PEARSON_SY_MIN}")
        if r_sy > r_e:
            out.append(f"pearson_r(vf, sigma_y) = {r_sy:.4f} exceeds pearson_r(vf, E_c) = {r_e:.4f}")
        if self.bound_violations:
            out.append(f"{self.bound_violations} samples outside the stiffness envelope")
        return out

    @property
    def passed(self) -> bool:
        return not self.failures()


def _fit(x: np.ndarray, y: np.ndarray, name: str) -> PropertyTrend:
    r = pearson_r(x, y)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ddof = min(2, x.size - 1)
    return PropertyTrend(
        name=name,
        pearson_r=r,
        slope=float(slope),
        intercept=float(intercept),
        resid_std=float(np.std(resid, ddof=ddof)),
        n=int(x.size),
    )


def trend_report(labels_path, e_matrix: float, e_fibre: float) -> TrendReport:
    """Correlations, fits and envelope checks over the OK records.

    Parameters
    ----------
    labels_path : path to labels.csv
    e_matrix, e_fibre : float
        Phase Young's moduli in GPa, for the Voigt/Reuss envelope.
    """
    rows = read_labels(labels_path)
    ok = [r for r in rows if r["status"] == "OK"]
    if len(ok) < MIN_OK_RECORDS:
        raise ValueError(f"need at least {MIN_OK_RECORDS} OK records, got {len(ok)}")
    vf = np.array([r["vf_actual"] for r in ok])
    e_c = np.array([r["E_c_GPa"] for r in ok])
    s_y = np.array([r["sigma_y_MPa"] for r in ok])

    violations = 0
    for v, e in zip(vf, e_c):
        reuss, voigt = voigt_reuss_bounds(v, e_matrix, e_fibre)
        if not (ENVELOPE_LO * reuss <= e <= ENVELOPE_HI * voigt):
            violations += 1

    per_vf = []
    for target in sorted({r["vf_target"] for r in ok}):
        sel = [r for r in ok if r["vf_target"] == target]
        ev = np.array([r["E_c_GPa"] for r in sel])
        sv = np.array([r["sigma_y_MPa"] for r in sel])
        per_vf.append(
            {
                "vf_target": target,
                "n_ok": len(sel),
                "E_c_mean_GPa": float(ev.mean()),
                "E_c_std_GPa": float(ev.std(ddof=1)) if len(sel) > 1 else 0.0,
                "sigma_y_mean_MPa": float(sv.mean()),
                "sigma_y_std_MPa": float(sv.std(ddof=1)) if len(sel) > 1 else 0.0,
            }
        )

    return TrendReport(
        trends={
            "E_c_GPa": _fit(vf, e_c, "E_c_GPa"),
            "sigma_y_MPa": _fit(vf, s_y, "sigma_y_MPa"),
        },
        bound_violations=violations,
        n_ok=len(ok),
        per_vf=per_vf,
    )


def write_trend_csvs(report: TrendReport, out_dir) -> list:
    """Emit trend_summary.csv and per_vf_summary.csv; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = out_dir / "trend_summary.csv"
    with open(summary, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["property", "pearson_r", "slope", "intercept", "resid_std", "n"])
        for name in ("E_c_GPa", "sigma_y_MPa"):
            t = report.trends[name]
            w.writerow([name, f"{t.pearson_r:.6g}", f"{t.slope:.6g}", f"{t.intercept:.6g}",
                        f"{t.resid_std:.6g}", t.n])
    per_vf = out_dir / "per_vf_summary.csv"
    with open(per_vf, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["vf_target", "n_ok", "E_c_mean_GPa", "E_c_std_GPa",
                    "sigma_y_mean_MPa", "sigma_y_std_MPa"])
        for row in report.per_vf:
            w.writerow([f"{row['vf_target']:.6g}", row["n_ok"],
                        f"{row['E_c_mean_GPa']:.6g}", f"{row['E_c_std_GPa']:.6g}",
                        f"{row['sigma_y_mean_MPa']:.6g}", f"{row['sigma_y_std_MPa']:.6g}"])
    return [summary, per_vf]
