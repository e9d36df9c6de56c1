"""Acceptance gate: one test per committed criterion, each recording a
PASS/FAIL line in the terminal summary.

The dataset criteria run the full desk-scale generation twice, so this
module is the slow part of the suite (tens of minutes on one core).
"""

import math
import shutil
import time
from pathlib import Path

import numpy as np
import pytest

from fibretest.analysis import trend_report, voigt_reuss_bounds
from fibretest.fesolve import (
    DofSystem,
    FieldState,
    GaussPointState,
    MaterialModel,
    assemble,
    build_mesh,
    return_map,
    solve_increment,
)
from fibretest.microgen import Microstructure, FibreSpec
from fibretest.pipeline import PipelineConfig, generate_dataset, regenerate_microstructure
from fibretest.virtest import NotYieldedError, TensileTestConfig, run_tensile_test

ACCEPT_CFG = PipelineConfig()  # the desk-scale preset is the default config
MATRIX_ELASTIC = MaterialModel(2.82, 0.387)
FIBRE_MAT = MaterialModel(15.51, 0.25)

REPO_ROOT = Path(__file__).resolve().parent.parent


@pytest.fixture(scope="module")
def acceptance_runs(tmp_path_factory):
    """Generate the full dataset twice: run A is kept for downstream use."""
    run_a = REPO_ROOT / ".acceptance_cache" / "dataset"
    if run_a.exists():
        shutil.rmtree(run_a)
    run_a.mkdir(parents=True)
    records_a, manifest_a, stats_a = generate_dataset(ACCEPT_CFG, run_a)

    run_b = tmp_path_factory.mktemp("acceptance_run_b")
    records_b, manifest_b, stats_b = generate_dataset(ACCEPT_CFG, run_b)
    return {
        "run_a": run_a, "run_b": run_b,
        "records": records_a, "manifest": manifest_a,
        "stats_a": stats_a, "stats_b": stats_b,
    }


def _run_elastic(ms, element_size_factor):
    cfg = TensileTestConfig(max_strain=0.005, n_increments=10,
                            element_size_factor=element_size_factor)
    with pytest.raises(NotYieldedError) as exc_info:
        run_tensile_test(ms, MATRIX_ELASTIC, FIBRE_MAT, cfg)
    return exc_info.value.youngs_modulus


class TestElasticityOracles:
    def test_homogeneous_matrix_specimen(self, criteria):
        expected = 2.82 / (1.0 - 0.387**2)
        t0 = time.perf_counter()
        e_c = _run_elastic(Microstructure(25.8, [], 0.0, 0.516, 0), 1.0)
        elapsed = time.perf_counter() - t0
        rel = abs(e_c - expected) / expected
        ok = rel <= 0.005 and elapsed < 10.0
        criteria("elasticity oracle, all-matrix",
                 ok, f"E_c={e_c:.6f} GPa vs {expected:.6f} (rel err {rel:.2e}), {elapsed:.2f} s")
        assert e_c == pytest.approx(expected, rel=0.005)
        assert elapsed < 10.0

    def test_homogeneous_fibre_specimen(self, criteria):
        expected = 15.51 / (1.0 - 0.25**2)
        ms = Microstructure(25.8, [FibreSpec(12.9, 12.9, 25.8)], 1.0, 0.516, 0)
        t0 = time.perf_counter()
        e_c = _run_elastic(ms, 1.0)
        elapsed = time.perf_counter() - t0
        rel = abs(e_c - expected) / expected
        ok = rel <= 0.005 and elapsed < 10.0
        criteria("elasticity oracle, all-fibre",
                 ok, f"E_c={e_c:.6f} GPa vs {expected:.6f} (rel err {rel:.2e}), {elapsed:.2f} s")
        assert e_c == pytest.approx(expected, rel=0.005)
        assert elapsed < 10.0


class TestPlasticityOracle:
    def test_flow_curve_tracking_and_tangent(self, criteria):
        from fibretest.fesolve import _MatParams

        mat = ACCEPT_CFG.matrix
        mp = _MatParams(mat)
        state = GaussPointState()
        deps = np.array([5e-4, 0.0, 0.0, 0.0])
        worst = 0.0
        for _ in range(300):
            state, _ = return_map(state, deps, mat)
            if state.equivalent_plastic_strain > 0:
                p = state.stress[:3].sum() / 3.0
                s = state.stress - p * np.array([1.0, 1.0, 1.0, 0.0])
                q = math.sqrt(1.5 * (s[0]**2 + s[1]**2 + s[2]**2 + 2 * s[3]**2))
                flow = float(mp.flow(state.equivalent_plastic_strain))
                worst = max(worst, abs(q - flow) / flow)
        crossed_knot = state.equivalent_plastic_strain > 0.05

        committed = GaussPointState()
        committed, _ = return_map(committed, np.array([0.05, 0.0, 0.0, 3e-3]), mat)
        deps0 = np.array([4e-3, -1e-3, 0.0, 2e-3])
        _, D = return_map(committed, deps0, mat)
        h = 1e-8
        fd = np.zeros((4, 4))
        for j in range(4):
            dp, dm = deps0.copy(), deps0.copy()
            dp[j] += h
            dm[j] -= h
            sp, _ = return_map(committed, dp, mat)
            sm, _ = return_map(committed, dm, mat)
            fd[:, j] = (sp.stress - sm.stress) / (2 * h)
        tangent_err = float(np.max(np.abs(D - fd)) / np.max(np.abs(D)))

        ok = worst <= 0.005 and tangent_err < 1e-4 and crossed_knot
        criteria("plasticity oracle, flow curve + consistent tangent", ok,
                 f"max |q-flow|/flow = {worst:.2e}, tangent FD err = {tangent_err:.2e}")
        assert worst <= 0.005
        assert tangent_err < 1e-4
        assert crossed_knot


class TestFieldChecks:
    def test_patch_test_and_symmetry(self, criteria):
        ms = Microstructure(10.0, [], 0.0, 1.0, 0)
        mesh = build_mesh(ms, 1.0)
        states = FieldState.zeros(mesh.n_elements)
        system = DofSystem.for_mesh(mesh)
        a, b, c, d = 1e-3, 2e-4, -3e-4, 5e-4
        coords = mesh.node_coords
        boundary = (
            (coords[:, 0] == 0) | (coords[:, 0] == mesh.domain_size)
            | (coords[:, 1] == 0) | (coords[:, 1] == mesh.domain_size)
        )
        for nid in np.where(boundary)[0]:
            y, z = coords[nid]
            system.prescribe(2 * nid, a * y + b * z)
            system.prescribe(2 * nid + 1, c * y + d * z)
        solve_increment(system, mesh, states, MATRIX_ELASTIC, FIBRE_MAT)
        expected = np.empty(mesh.n_dofs)
        expected[0::2] = a * coords[:, 0] + b * coords[:, 1]
        expected[1::2] = c * coords[:, 0] + d * coords[:, 1]
        patch_err = float(np.abs(system.u - expected).max() / np.abs(expected).max())

        comp = Microstructure(10.0, [FibreSpec(5.0, 5.0, 2.0)], 0.126, 1.0, 0)
        mesh_c = build_mesh(comp, 0.5)
        _, K = assemble(mesh_c, FieldState.zeros(mesh_c.n_elements),
                        np.zeros(mesh_c.n_dofs), ACCEPT_CFG.matrix, FIBRE_MAT)
        sym_err = float(abs(K - K.T).max() / abs(K).max())

        ok = patch_err < 1e-10 and sym_err < 1e-10
        criteria("patch test + tangent symmetry", ok,
                 f"patch err {patch_err:.2e}, symmetry err {sym_err:.2e}")
        assert patch_err < 1e-10
        assert sym_err < 1e-10


class TestDataset:
    def test_runtime_budget(self, acceptance_runs, criteria):
        stats = acceptance_runs["stats_a"]
        total_h = stats["total_wall_s"] / 3600.0
        median_s = stats["median_sample_wall_ms"] / 1000.0
        ok = total_h < 2.0 and median_s <= 10.0
        criteria("dataset runtime", ok,
                 f"total {stats['total_wall_s']:.0f} s ({total_h:.2f} h) for "
                 f"{stats['n_records']} samples, median {median_s:.2f} s")
        assert total_h < 2.0
        assert median_s <= 10.0

    def test_generation_is_reproducible(self, acceptance_runs, criteria):
        contract = ["labels.csv", "manifest.json", "resolved_config.toml"]
        diffs = []
        for name in contract:
            a = (acceptance_runs["run_a"] / name).read_bytes()
            b = (acceptance_runs["run_b"] / name).read_bytes()
            if a != b:
                diffs.append(name)
        n_files = 0
        for sub in ("images", "geometry"):
            files_a = sorted((acceptance_runs["run_a"] / sub).glob("*"))
            files_b = sorted((acceptance_runs["run_b"] / sub).glob("*"))
            if [f.name for f in files_a] != [f.name for f in files_b]:
                diffs.append(f"{sub}/ listing")
            for fa, fb in zip(files_a, files_b):
                n_files += 1
                if fa.read_bytes() != fb.read_bytes():
                    diffs.append(f"{sub}/{fa.name}")
        ok = not diffs
        criteria("byte-identical regeneration", ok,
                 f"{n_files + len(contract)} files compared"
                 + ("" if ok else f"; diffs: {diffs[:5]}"))
        assert diffs == []

    def test_trend_thresholds(self, acceptance_runs, criteria):
        report = trend_report(acceptance_runs["run_a"] / "labels.csv",
                              ACCEPT_CFG.matrix.youngs_modulus,
                              ACCEPT_CFG.fibre.youngs_modulus)
        r_e = report.trends["E_c_GPa"].pearson_r
        r_sy = report.trends["sigma_y_MPa"].pearson_r
        ok = (r_e >= 0.95 and r_sy >= 0.85 and r_e >= r_sy
              and report.bound_violations == 0)
        criteria("trend thresholds", ok,
                 f"r(vf,E_c)={r_e:.4f} (>=0.95), r(vf,sigma_y)={r_sy:.4f} (>=0.85), "
                 f"envelope violations={report.bound_violations}, n_ok={report.n_ok}")
        assert r_e >= 0.95
        assert r_sy >= 0.85
        assert r_e >= r_sy
        assert report.bound_violations == 0

    def test_representativeness(self, acceptance_runs, criteria):
        records = acceptance_runs["records"]
        geometry = acceptance_runs["run_a"] / "geometry"
        n_jammed = sum(1 for r in records if r["status"] == "JAMMED")
        counts = []
        for r in records:
            if r["status"] == "JAMMED":
                continue
            path = geometry / f"ms_{r['id']:05d}.csv"
            with open(path, encoding="utf-8") as fh:
                counts.append(sum(1 for _ in fh) - 1)
        n_small = sum(1 for c in counts if c < 100)
        ratio = ACCEPT_CFG.h_c / ACCEPT_CFG.r_f
        ok = n_small == 0 and ratio >= 50.0 and len(counts) == len(records) - n_jammed
        criteria("representativeness", ok,
                 f"{len(counts)} samples, min fibre count {min(counts)}, "
                 f"h_c/r_f = {ratio:.1f}, jammed = {n_jammed}")
        assert n_small == 0
        assert ratio >= 50.0

    def test_mesh_convergence(self, criteria):
        spv = ACCEPT_CFG.samples_per_vf
        picks = [(0 * spv, ACCEPT_CFG.vf_values[0]),
                 (3 * spv, ACCEPT_CFG.vf_values[3]),
                 (6 * spv, ACCEPT_CFG.vf_values[6]),
                 (9 * spv, ACCEPT_CFG.vf_values[9]),
                 (12 * spv, ACCEPT_CFG.vf_values[12])]
        worst = 0.0
        for sid, vf in picks:
            ms = regenerate_microstructure(ACCEPT_CFG, sid, vf)
            e_coarse = _run_elastic(ms, 1.0)   # 50 elements per side
            e_fine = _run_elastic(ms, 0.5)     # 100 elements per side
            worst = max(worst, abs(e_fine - e_coarse) / e_coarse)
        ok = worst < 0.02
        criteria("mesh convergence", ok,
                 f"max |E(nx=100)-E(nx=50)|/E(nx=50) = {worst:.4f} over 5 microstructures")
        assert worst < 0.02
