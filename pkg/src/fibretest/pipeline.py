"""Batch dataset generation: configuration, deterministic seeding, worker
pool, journal-based resume, and the frozen labels.csv / manifest.json
export contract.

Determinism contract: labels.csv, manifest.json, resolved_config.toml and
every PNG/geometry CSV are byte-identical for the same config, regardless
of worker count or resume interruptions. journal.jsonl and run_stats.json
carry wall-clock data and are excluded.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, replace
from pathlib import Path

import tomli

from . import __version__
from .fesolve import MaterialModel, NumericalFailureError, SingularSystemError
from .microgen import (
    MIN_GAP_FACTOR,
    JammingError,
    Microstructure,
    RadiiDistribution,
    image_png_bytes,
    microstructure_csv_bytes,
    place_fibres,
    rasterize,
    sample_radii,
)
from .virtest import NotYieldedError, SolverAbortError, TensileTestConfig, run_tensile_test

STATUSES = ("OK", "JAMMED", "SOLVER_FAIL", "NOT_YIELDED")
LABELS_HEADER = "id,image_path,vf_target,vf_actual,E_c_GPa,sigma_y_MPa,seed,status"

DEFAULT_VF_VALUES = tuple(round(0.20 + 0.02 * k, 2) for k in range(13))
DEFAULT_MATRIX = MaterialModel(
    youngs_modulus=2.82,
    poisson_ratio=0.387,
    hardening_table=((0.0, 60.0), (0.05, 80.0), (1.0, 80.0)),
)
DEFAULT_FIBRE = MaterialModel(youngs_modulus=15.51, poisson_ratio=0.25)

_MASK64 = (1 << 64) - 1


class ConfigError(ValueError):
    """Bad configuration file or values."""


def derive_seed(master_seed: int, sample_index: int) -> int:
    """Stateless per-sample seed from a master seed.

    An affine step with an odd multiplier (injective in the index) is
    followed by a bijective 64-bit finalizer, so distinct indices can
    never collide for a fixed master seed.
    """
    x = (master_seed + 0x9E3779B97F4A7C15 * (sample_index + 1)) & _MASK64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _MASK64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _MASK64
    x ^= x >> 31
    return x


@dataclass(frozen=True)
class PipelineConfig:
    vf_values: tuple = DEFAULT_VF_VALUES
    samples_per_vf: int = 60
    h_c: float = 25.8
    r_f: float = 0.516
    image_resolution: int = 256
    master_seed: int = 20260401
    workers: int = 1
    matrix: MaterialModel = DEFAULT_MATRIX
    fibre: MaterialModel = DEFAULT_FIBRE
    test: TensileTestConfig = TensileTestConfig()

    def __post_init__(self):
        object.__setattr__(self, "vf_values", tuple(float(v) for v in self.vf_values))
        if not self.vf_values:
            raise ConfigError("vf_values must be nonempty")
        for v in self.vf_values:
            if not 0.0 < v <= 0.44:
                raise ConfigError(f"vf value {v} outside (0, 0.44]")
        if self.samples_per_vf < 1:
            raise ConfigError("samples_per_vf must be >= 1")
        if self.h_c <= 0 or self.r_f <= 0:
            raise ConfigError("h_c and r_f must be positive")
        if self.image_resolution < 32:
            raise ConfigError("image_resolution must be >= 32")
        if not 0 <= self.master_seed <= _MASK64:
            raise ConfigError("master_seed must fit in 64 bits")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @property
    def n_samples(self) -> int:
        return len(self.vf_values) * self.samples_per_vf


_TOP_KEYS = {"vf_values", "samples_per_vf", "h_c", "r_f", "image_resolution",
             "master_seed", "workers", "materials", "test"}
_MAT_KEYS = {"youngs_modulus", "poisson_ratio", "hardening_table"}
_TEST_KEYS = {"max_strain", "n_increments", "element_size_factor"}


def _check_keys(section: dict, allowed: set, where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")


def _material_from(section: dict, where: str, default: MaterialModel) -> MaterialModel:
    _check_keys(section, _MAT_KEYS, where)
    table = section.get("hardening_table", default.hardening_table)
    try:
        table = tuple((float(e), float(s)) for e, s in table)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}.hardening_table must be a list of [strain, stress] pairs") from exc
    try:
        return MaterialModel(
            youngs_modulus=float(section.get("youngs_modulus", default.youngs_modulus)),
            poisson_ratio=float(section.get("poisson_ratio", default.poisson_ratio)),
            hardening_table=table,
        )
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(data: dict) -> PipelineConfig:
    _check_keys(data, _TOP_KEYS, "config")
    materials = data.get("materials", {})
    _check_keys(materials, {"matrix", "fibre"}, "materials")
    test_sec = data.get("test", {})
    _check_keys(test_sec, _TEST_KEYS, "test")
    base = PipelineConfig()
    try:
        test = TensileTestConfig(
            max_strain=float(test_sec.get("max_strain", base.test.max_strain)),
            n_increments=int(test_sec.get("n_increments", base.test.n_increments)),
            element_size_factor=float(test_sec.get("element_size_factor", base.test.element_size_factor)),
        )
    except ValueError as exc:
        raise ConfigError(f"test: {exc}") from exc
    return PipelineConfig(
        vf_values=tuple(data.get("vf_values", base.vf_values)),
        samples_per_vf=int(data.get("samples_per_vf", base.samples_per_vf)),
        h_c=float(data.get("h_c", base.h_c)),
        r_f=float(data.get("r_f", base.r_f)),
        image_resolution=int(data.get("image_resolution", base.image_resolution)),
        master_seed=int(data.get("master_seed", base.master_seed)),
        workers=int(data.get("workers", base.workers)),
        matrix=_material_from(materials.get("matrix", {}), "materials.matrix", base.matrix),
        fibre=_material_from(materials.get("fibre", {}), "materials.fibre", base.fibre),
        test=test,
    )


def load_config(path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return config_from_dict(data)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    raise TypeError(f"unsupported config value {v!r}")


def config_to_toml(cfg: PipelineConfig) -> str:
    """Canonical serialization; fixed key order, repr floats, LF endings.

    Only dataset-defining parameters are serialized: the worker count
    changes scheduling, never results, so it stays out of the resolved
    config and the config hash.
    """
    lines = [
        f"vf_values = [{', '.join(repr(v) for v in cfg.vf_values)}]",
        f"samples_per_vf = {cfg.samples_per_vf}",
        f"h_c = {_toml_value(cfg.h_c)}",
        f"r_f = {_toml_value(cfg.r_f)}",
        f"image_resolution = {cfg.image_resolution}",
        f"master_seed = {cfg.master_seed}",
        "",
    ]
    for name, mat in (("matrix", cfg.matrix), ("fibre", cfg.fibre)):
        lines.append(f"[materials.{name}]")
        lines.append(f"youngs_modulus = {_toml_value(mat.youngs_modulus)}")
        lines.append(f"poisson_ratio = {_toml_value(mat.poisson_ratio)}")
        table = ", ".join(f"[{_toml_value(e)}, {_toml_value(s)}]" for e, s in mat.hardening_table)
        lines.append(f"hardening_table = [{table}]")
        lines.append("")
    lines.append("[test]")
    lines.append(f"max_strain = {_toml_value(cfg.test.max_strain)}")
    lines.append(f"n_increments = {cfg.test.n_increments}")
    lines.append(f"element_size_factor = {_toml_value(cfg.test.element_size_factor)}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: PipelineConfig) -> str:
    return hashlib.sha256(config_to_toml(cfg).encode("utf-8")).hexdigest()


def hardening_table_hash(cfg: PipelineConfig) -> str:
    payload = repr((cfg.matrix.hardening_table, cfg.fibre.hardening_table))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _sample_plan(cfg: PipelineConfig) -> list:
    """(sample_id, vf_target) pairs; ids are dense and sorted."""
    plan = []
    for vi, vf in enumerate(cfg.vf_values):
        for j in range(cfg.samples_per_vf):
            plan.append((vi * cfg.samples_per_vf + j, vf))
    return plan


def _radii_budget(cfg: PipelineConfig, vf: float) -> int:
    mean_area = math.pi * cfg.r_f ** 2
    return int(math.ceil(1.25 * vf * cfg.h_c ** 2 / mean_area)) + 64


def _atomic_write(path: Path, payload: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def generate_sample(cfg: PipelineConfig, sample_id: int, vf_target: float):
    """Run one sample end to end; never raises for expected failure modes.

    Returns (record dict, png bytes or None, geometry csv bytes or None).
    """
    t0 = time.perf_counter()
    seed = derive_seed(cfg.master_seed, sample_id)
    record = {
        "id": sample_id,
        "seed": seed,
        "vf_target": vf_target,
        "vf_actual": None,
        "E_c_GPa": None,
        "sigma_y_MPa": None,
        "status": None,
        "newton_total_iters": 0,
        "wall_ms": 0.0,
        "image_path": "",
    }
    png = geom = None
    dist = RadiiDistribution.for_mean_radius(cfg.r_f)
    radii = sample_radii(_radii_budget(cfg, vf_target), dist, derive_seed(seed, 1))
    try:
        ms = place_fibres(cfg.h_c, radii, vf_target, derive_seed(seed, 2))
    except JammingError as exc:
        record["status"] = "JAMMED"
        record["vf_actual"] = exc.achieved_vf
        record["wall_ms"] = (time.perf_counter() - t0) * 1000.0
        return record, png, geom

    png = image_png_bytes(rasterize(ms, cfg.image_resolution))
    geom = microstructure_csv_bytes(ms)
    record["image_path"] = f"images/ms_{sample_id:05d}.png"
    try:
        result = run_tensile_test(ms, cfg.matrix, cfg.fibre, cfg.test)
        record["status"] = "OK"
        record["vf_actual"] = result.vf_actual
        record["E_c_GPa"] = result.youngs_modulus
        record["sigma_y_MPa"] = result.yield_strength
        record["newton_total_iters"] = result.total_newton_iterations
    except NotYieldedError as exc:
        record["status"] = "NOT_YIELDED"
        record["vf_actual"] = exc.vf_actual
        record["E_c_GPa"] = exc.youngs_modulus
        record["newton_total_iters"] = exc.total_newton_iterations
    except (SolverAbortError, SingularSystemError, NumericalFailureError):
        record["status"] = "SOLVER_FAIL"
        from .microgen import volume_fraction

        record["vf_actual"] = volume_fraction(ms)
    record["wall_ms"] = (time.perf_counter() - t0) * 1000.0
    return record, png, geom


def _worker(args):
    cfg, out_dir, sample_id, vf_target = args
    record, png, geom = generate_sample(cfg, sample_id, vf_target)
    out = Path(out_dir)
    if png is not None:
        _atomic_write(out / "images" / f"ms_{sample_id:05d}.png", png)
        _atomic_write(out / "geometry" / f"ms_{sample_id:05d}.csv", geom)
    return record


def _fmt(value) -> str:
    if value is None:
        return ""
    return f"{value:.6g}"


def labels_csv_text(records: list) -> str:
    lines = [LABELS_HEADER]
    for r in sorted(records, key=lambda r: r["id"]):
        lines.append(
            ",".join(
                [
                    str(r["id"]),
                    r["image_path"],
                    _fmt(r["vf_target"]),
                    _fmt(r["vf_actual"]),
                    _fmt(r["E_c_GPa"]),
                    _fmt(r["sigma_y_MPa"]),
                    str(r["seed"]),
                    r["status"],
                ]
            )
        )
    return "\n".join(lines) + "\n"


def build_manifest(cfg: PipelineConfig, records: list) -> dict:
    counts = {s: 0 for s in STATUSES}
    for r in records:
        counts[r["status"]] += 1
    return {
        "schema_version": 1,
        "code_version": __version__,
        "config_hash": config_hash(cfg),
        "hardening_table_hash": hardening_table_hash(cfg),
        "boundary_policy": "wholly_inside",
        "min_gap_factor": MIN_GAP_FACTOR,
        "counts": counts,
        "n_records": len(records),
    }


def _read_journal(path: Path) -> dict:
    done = {}
    if not path.exists():
        return done
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                continue  # torn tail write from an interrupted run
            if "id" in rec and rec.get("status") in STATUSES:
                done[rec["id"]] = rec
    return done


def generate_dataset(cfg: PipelineConfig, out_dir, resume: bool = False, progress=None):
    """Generate the full dataset into out_dir.

    Returns (records, manifest, stats). With resume=True, samples already
    present in journal.jsonl are not recomputed; the final artifacts are
    identical either way.
    """
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "geometry").mkdir(parents=True, exist_ok=True)
    _atomic_write(out / "resolved_config.toml", config_to_toml(cfg).encode("utf-8"))

    journal_path = out / "journal.jsonl"
    done = _read_journal(journal_path) if resume else {}
    if not resume and journal_path.exists():
        journal_path.unlink()

    plan = _sample_plan(cfg)
    pending = [(sid, vf) for sid, vf in plan if sid not in done]
    t_start = time.perf_counter()
    records = list(done.values())

    with open(journal_path, "a", encoding="utf-8") as journal:

        def take(record):
            records.append(record)
            journal.write(json.dumps(record, sort_keys=True) + "\n")
            journal.flush()
            if progress is not None:
                progress(record)

        if cfg.workers == 1:
            for sid, vf in pending:
                take(_worker((cfg, str(out), sid, vf)))
        else:
            with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                futures = [pool.submit(_worker, (cfg, str(out), sid, vf)) for sid, vf in pending]
                for fut in as_completed(futures):
                    take(fut.result())

    total_wall = time.perf_counter() - t_start
    records.sort(key=lambda r: r["id"])
    _atomic_write(out / "labels.csv", labels_csv_text(records).encode("utf-8"))
    manifest = build_manifest(cfg, records)
    _atomic_write(out / "manifest.json", (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode("utf-8"))

    walls = sorted(r["wall_ms"] for r in records)
    stats = {
        "total_wall_s": total_wall,
        "n_generated": len(pending),
        "n_records": len(records),
        "median_sample_wall_ms": walls[len(walls) // 2] if walls else 0.0,
        "workers": cfg.workers,
    }
    _atomic_write(out / "run_stats.json", (json.dumps(stats, indent=2, sort_keys=True) + "\n").encode("utf-8"))
    return records, manifest, stats


def regenerate_microstructure(cfg: PipelineConfig, sample_id: int, vf_target: float) -> Microstructure:
    """Rebuild the exact microstructure of a sample from its derived seed."""
    seed = derive_seed(cfg.master_seed, sample_id)
    dist = RadiiDistribution.for_mean_radius(cfg.r_f)
    radii = sample_radii(_radii_budget(cfg, vf_target), dist, derive_seed(seed, 1))
    return place_fibres(cfg.h_c, radii, vf_target, derive_seed(seed, 2))


def inspect_sample(out_dir, sample_id: int):
    """Recompute one sample from the stored config and dump its curve.

    Cross-checks the recomputed labels against the stored row (exact
    formatted equality); a mismatch means the dataset and the code are out
    of sync. Returns (stored row, recomputed record, curve csv path or
    None).
    """
    from .analysis import read_labels

    out = Path(out_dir)
    cfg = load_config(out / "resolved_config.toml")
    rows = {r["id"]: r for r in read_labels(out / "labels.csv")}
    if sample_id not in rows:
        raise KeyError(f"sample id {sample_id} not in {out / 'labels.csv'}")
    stored = rows[sample_id]

    seed = derive_seed(cfg.master_seed, sample_id)
    record = {"status": None}
    curve_path = None
    try:
        ms = regenerate_microstructure(cfg, sample_id, stored["vf_target"])
    except JammingError:
        record["status"] = "JAMMED"
        _verify_inspect(stored, {"status": "JAMMED", "E_c_GPa": None, "sigma_y_MPa": None})
        return stored, record, curve_path

    curve = None
    try:
        result = run_tensile_test(ms, cfg.matrix, cfg.fibre, cfg.test)
        record = {"status": "OK", "E_c_GPa": result.youngs_modulus,
                  "sigma_y_MPa": result.yield_strength}
        curve = result.curve
        log = result.solver_log
    except NotYieldedError as exc:
        record = {"status": "NOT_YIELDED", "E_c_GPa": exc.youngs_modulus, "sigma_y_MPa": None}
        curve = exc.curve
        log = exc.solver_log
    except (SolverAbortError, SingularSystemError, NumericalFailureError):
        record = {"status": "SOLVER_FAIL", "E_c_GPa": None, "sigma_y_MPa": None}
        log = []
    _verify_inspect(stored, record)

    if curve is not None:
        curve_path = out / f"sample_{sample_id:05d}_curve.csv"
        lines = ["increment,applied_strain,reaction_force_uN,newton_iters"]
        for rec in log:
            lines.append(f"{rec.increment},{rec.applied_strain:.6g},{rec.reaction_force:.6g},{rec.newton_iterations}")
        _atomic_write(curve_path, ("\n".join(lines) + "\n").encode("utf-8"))
    record["seed"] = seed
    return stored, record, curve_path


def _verify_inspect(stored: dict, recomputed: dict) -> None:
    if stored["status"] != recomputed["status"]:
        raise RuntimeError(
            f"recomputed status {recomputed['status']} != stored {stored['status']}"
        )
    for key in ("E_c_GPa", "sigma_y_MPa"):
        if key not in recomputed:
            continue
        a, b = stored.get(key), recomputed.get(key)
        if (a is None) != (b is None) or (a is not None and _fmt(a) != _fmt(b)):
            raise RuntimeError(f"recomputed {key}={b} does not match stored {a}")
