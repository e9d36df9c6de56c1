"""Command line interface: train, evaluate, explain, plots.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure
(missing dataset, missing run artifacts, unknown sample id).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    TARGETS,
    ConfigError,
    DataError,
    SurrogateConfig,
    config_to_toml,
    load_config,
    load_dataset,
    split_dataset,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    p = _Parser(prog="fibretest-surrogate",
                description="CNN surrogate for virtual tensile test properties")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command")

    t = sub.add_parser("train", help="train one CNN per property and write metrics.json")
    t.add_argument("--data", type=Path, required=True, help="dataset directory (labels.csv + images)")
    t.add_argument("--out", type=Path, required=True, help="run directory for weights and metrics")
    t.add_argument("--config", type=Path, default=None, help="TOML training config")
    t.add_argument("--seed", type=int, default=None, help="seed override")

    e = sub.add_parser("evaluate", help="parity CSVs and plots for a trained run")
    e.add_argument("--data", type=Path, required=True)
    e.add_argument("--run", type=Path, required=True, help="directory written by train")

    x = sub.add_parser("explain", help="attribution map and overlay for one sample")
    x.add_argument("--data", type=Path, required=True)
    x.add_argument("--run", type=Path, required=True)
    x.add_argument("--method", choices=("ig", "shap"), required=True)
    x.add_argument("--id", type=int, required=True, help="sample id from labels.csv")
    x.add_argument("--target", choices=TARGETS, default="E_c")
    x.add_argument("--steps", type=int, default=128, help="IG path steps")

    g = sub.add_parser("plots", help="render trend scatter and parity plots")
    g.add_argument("--data", type=Path, required=True)
    g.add_argument("--run", type=Path, required=True)
    return p


def _load_run_config(run_dir: Path) -> SurrogateConfig:
    path = run_dir / "resolved_config.toml"
    if not path.exists():
        raise DataError(f"no resolved_config.toml in {run_dir}; run train first")
    return load_config(path)


def _cmd_train(args) -> int:
    from .train import metrics_hash, train

    cfg = load_config(args.config) if args.config else SurrogateConfig()
    if args.seed is not None:
        cfg = SurrogateConfig(**{**cfg.__dict__, "seed": args.seed})
    ds = load_dataset(args.data, cfg)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "resolved_config.toml").write_text(config_to_toml(cfg))
    per_target = {}
    for target in TARGETS:
        surr, metrics = train(cfg, ds, target)
        surr.save(args.out / f"model_{target}.pt")
        per_target[target] = metrics
        folds = ", ".join(f"{v:.4f}" for v in metrics["fold_r2"])
        print(f"{target}: test R² {metrics['test_r2']:.4f} "
              f"(folds {folds}) in {metrics['train_seconds']:.0f} s")
    import torch

    payload = {
        "torch_version": torch.__version__,
        "n_ok_records": ds.n,
        "config": json.loads(json.dumps(cfg.__dict__)),
        "targets": per_target,
        "metrics_hash": metrics_hash(per_target),
    }
    with open(args.out / "metrics.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {args.out / 'metrics.json'}")
    return 0


def _load_surrogate(run_dir: Path, target: str):
    from .train import TrainedSurrogate

    path = run_dir / f"model_{target}.pt"
    if not path.exists():
        raise DataError(f"missing {path}; run train first")
    return TrainedSurrogate.load(path)


def _cmd_evaluate(args) -> int:
    from .plots import parity_plot, write_parity_csv
    from .train import r_squared

    cfg = _load_run_config(args.run)
    ds = load_dataset(args.data, cfg)
    split = split_dataset(ds.n, cfg)
    results = {}
    for target in TARGETS:
        surr = _load_surrogate(args.run, target)
        preds = surr.predict(ds.images[split.test])
        labels = ds.labels[target][split.test]
        r2 = r_squared(labels, preds)
        results[target] = round(r2, 6)
        write_parity_csv(args.run / f"parity_{target}.csv",
                         ds.ids[split.test], labels, preds)
        parity_plot(args.run / f"parity_{target}.png", labels, preds, target, r2)
        print(f"{target}: test R² {r2:.4f} over {len(labels)} samples")
    with open(args.run / "eval_metrics.json", "w") as fh:
        json.dump({"test_r2": results}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


def _cmd_explain(args) -> int:
    from .attribution import attribution_to_csv, ig_explain, save_overlay_png, shap_explain

    cfg = _load_run_config(args.run)
    ds = load_dataset(args.data, cfg)
    where = np.flatnonzero(ds.ids == args.id)
    if len(where) == 0:
        raise DataError(f"sample id {args.id} has no OK record in {args.data}")
    idx = int(where[0])
    surr = _load_surrogate(args.run, args.target)
    image = ds.images[idx]
    t0 = time.perf_counter()
    if args.method == "ig":
        amap = ig_explain(surr, image, steps=args.steps)
        note = f"completeness residual {100.0 * amap.relative_residual:.3g}% of |Δf|"
    else:
        split = split_dataset(ds.n, cfg)
        background = ds.images[split.train[:32]]
        amap = shap_explain(surr, image, background, seed=cfg.seed)
        note = f"background {amap.baseline}"
    elapsed = time.perf_counter() - t0
    stem = args.run / f"attribution_{args.method}_{args.target}_{args.id:05d}"
    stem.with_suffix(".csv").write_text(attribution_to_csv(amap))
    save_overlay_png(stem.with_suffix(".png"), image, amap)
    print(f"{args.method.upper()} for {args.target} on sample {args.id}: "
          f"{note}, {elapsed:.2f} s")
    print(f"wrote {stem}.csv and {stem}.png")
    return 0


def _cmd_plots(args) -> int:
    from .plots import parity_plot, read_parity_csv, trend_scatter
    from .train import r_squared

    cfg = _load_run_config(args.run) if (args.run / "resolved_config.toml").exists() \
        else SurrogateConfig()
    ds = load_dataset(args.data, cfg)
    for target in TARGETS:
        trend_scatter(args.run / f"trend_scatter_{target}.png",
                      ds.vf_actual, ds.labels[target], target)
        parity_csv = args.run / f"parity_{target}.csv"
        if parity_csv.exists():
            _, labels, preds = read_parity_csv(parity_csv)
            parity_plot(args.run / f"parity_{target}.png", labels, preds,
                        target, r_squared(labels, preds))
    print(f"wrote plots to {args.run}")
    return 0


_COMMANDS = {"train": _cmd_train, "evaluate": _cmd_evaluate,
             "explain": _cmd_explain, "plots": _cmd_plots}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
