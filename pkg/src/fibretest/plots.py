"""Figure rendering for the validation report path."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .analysis import ENVELOPE_HI, ENVELOPE_LO, TrendReport, voigt_reuss_bounds


def render_trend_figures(report: TrendReport, ok_rows: list, e_matrix: float,
                         e_fibre: float, out_dir) -> list:
    """Scatter each property against volume fraction with its linear fit.

    The stiffness plot also shows the rule-of-mixtures envelope used by
    the bound check. Returns the written file paths.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    vf = np.array([r["vf_actual"] for r in ok_rows])
    written = []

    specs = [
        ("E_c_GPa", np.array([r["E_c_GPa"] for r in ok_rows]),
         "transverse modulus E_c (GPa)", "trend_E_c.png", True),
        ("sigma_y_MPa", np.array([r["sigma_y_MPa"] for r in ok_rows]),
         "transverse yield strength (MPa)", "trend_sigma_y.png", False),
    ]
    for name, values, ylabel, fname, envelope in specs:
        t = report.trends[name]
        fig, ax = plt.subplots(figsize=(5.6, 4.2), dpi=150)
        ax.scatter(vf, values, s=9, alpha=0.45, color="#30618c", edgecolors="none",
                   label=f"samples (n={t.n})")
        grid = np.linspace(vf.min(), vf.max(), 50)
        ax.plot(grid, t.slope * grid + t.intercept, "--", color="#2a8a4a", lw=1.6,
                label=f"linear fit, r={t.pearson_r:.3f}")
        if envelope:
            lo = np.array([ENVELOPE_LO * voigt_reuss_bounds(v, e_matrix, e_fibre)[0] for v in grid])
            hi = np.array([ENVELOPE_HI * voigt_reuss_bounds(v, e_matrix, e_fibre)[1] for v in grid])
            ax.plot(grid, lo, ":", color="#888888", lw=1.2, label="0.9 x Reuss")
            ax.plot(grid, hi, ":", color="#444444", lw=1.2, label="1.1 x Voigt")
        ax.set_xlabel("fibre volume fraction")
        ax.set_ylabel(ylabel)
        ax.grid(alpha=0.3, lw=0.5)
        ax.legend(fontsize=8, frameon=False)
        fig.tight_layout()
        path = out_dir / fname
        fig.savefig(path)
        plt.close(fig)
        written.append(path)
    return written
