"""Command-line interface.

Exit codes: 0 success, 1 configuration/usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .analysis import read_labels, trend_report, write_trend_csvs
from .pipeline import ConfigError, PipelineConfig, generate_dataset, inspect_sample, load_config


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; the CLI contract wants 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    p = _Parser(prog="fibretest", description="Virtual transverse-tension testing of fibre composites")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a labelled microstructure dataset")
    g.add_argument("--config", type=Path, default=None, help="TOML config (defaults used when omitted)")
    g.add_argument("--out", type=Path, required=True, help="output dataset directory")
    g.add_argument("--workers", type=int, default=None, help="worker process count override")
    g.add_argument("--seed", type=int, default=None, help="master seed override")
    g.add_argument("--resume", action="store_true", help="skip samples already in the journal")

    v = sub.add_parser("validate", help="trend statistics, bound checks and figures for a dataset")
    v.add_argument("--out", type=Path, required=True, help="dataset directory (reads labels.csv, writes report files)")

    i = sub.add_parser("inspect", help="recompute one sample and dump its stress-strain curve")
    i.add_argument("id", type=int, help="sample id from labels.csv")
    i.add_argument("--out", type=Path, required=True, help="dataset directory")
    return p


def _cmd_generate(args) -> int:
    cfg = load_config(args.config) if args.config is not None else PipelineConfig()
    if args.workers is not None:
        cfg = replace(cfg, workers=args.workers)
    if args.seed is not None:
        cfg = replace(cfg, master_seed=args.seed)

    done = [0]

    def progress(record):
        done[0] += 1
        if done[0] % 25 == 0 or done[0] == cfg.n_samples:
            print(f"  [{done[0]}/{cfg.n_samples}] id={record['id']} status={record['status']}", flush=True)

    records, manifest, stats = generate_dataset(cfg, args.out, resume=args.resume, progress=progress)
    print(f"wrote {len(records)} records to {args.out}")
    print(f"status counts: {manifest['counts']}")
    print(f"total wall {stats['total_wall_s']:.1f} s, median sample {stats['median_sample_wall_ms']:.0f} ms")
    return 0


def _cmd_validate(args) -> int:
    out = Path(args.out)
    labels = out / "labels.csv"
    if not labels.exists():
        print(f"no labels.csv in {out}", file=sys.stderr)
        return 2
    cfg = load_config(out / "resolved_config.toml")
    report = trend_report(labels, cfg.matrix.youngs_modulus, cfg.fibre.youngs_modulus)
    paths = write_trend_csvs(report, out)

    from .plots import render_trend_figures

    ok_rows = [r for r in read_labels(labels) if r["status"] == "OK"]
    paths += render_trend_figures(report, ok_rows, cfg.matrix.youngs_modulus,
                                  cfg.fibre.youngs_modulus, out)
    for name in ("E_c_GPa", "sigma_y_MPa"):
        t = report.trends[name]
        print(f"{name}: pearson_r={t.pearson_r:.4f} slope={t.slope:.4g} intercept={t.intercept:.4g} n={t.n}")
    print(f"bound envelope violations: {report.bound_violations}")
    print("report files: " + ", ".join(str(p) for p in paths))
    if report.passed:
        print("validation: PASS")
        return 0
    for line in report.failures():
        print(f"validation failure: {line}", file=sys.stderr)
    return 2


def _cmd_inspect(args) -> int:
    stored, recomputed, curve_path = inspect_sample(args.out, args.id)
    print(f"sample {stored['id']}: status={stored['status']} vf_target={stored['vf_target']:.6g} seed={stored['seed']}")
    if stored["E_c_GPa"] is not None:
        print(f"  E_c = {stored['E_c_GPa']:.6g} GPa")
    if stored["sigma_y_MPa"] is not None:
        print(f"  sigma_y = {stored['sigma_y_MPa']:.6g} MPa")
    print("  recomputation matches the stored labels")
    if curve_path is not None:
        print(f"  curve written to {curve_path}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "generate":
            return _cmd_generate(args)
        if args.command == "validate":
            return _cmd_validate(args)
        return _cmd_inspect(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        raise
    except Exception as exc:  # runtime failures map to exit 2 by contract
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
