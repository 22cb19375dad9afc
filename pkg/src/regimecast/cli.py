"""Command-line entry point.

Subcommands: run (full pipeline), baseline (hmm / detection), label (emit a
segmentation CSV per asset), tune (search only), report (re-render metric
summary from a written report.json). Exit codes: 0 success, 2 config error,
3 data error, 4 numerical failure.
"""

import argparse
import csv
import json
import sys

import numpy as np

from .errors import ConfigError, DataError, NumericalError
from .pipeline import PipelineConfig, run_baseline, run_pipeline
from .regime import generate_labels, segment_regimes
from .timeseries import load_ohlcv
from .validation import make_splits, tune


def _apply_overrides(config, args):
    if args.seed is not None:
        config.seed = args.seed
    if args.out is not None:
        config.out_dir = args.out
    if args.mode is not None:
        config.trading = {**config.trading, "mode": args.mode}
    return config


def _cmd_run(args):
    config = _apply_overrides(PipelineConfig.from_yaml(args.config), args)
    model = args.model or "kmrf"
    if model == "kmrf":
        report = run_pipeline(config, write=True)
    else:
        report = run_baseline(config, model={"hmm": "hmm", "detection": "detection"}[model],
                              write=True)
    _print_metrics(report)
    return 0


def _cmd_baseline(args):
    config = _apply_overrides(PipelineConfig.from_yaml(args.config), args)
    report = run_baseline(config, model=args.model or "hmm", write=True)
    _print_metrics(report)
    return 0


def _cmd_label(args):
    config = _apply_overrides(PipelineConfig.from_yaml(args.config), args)
    config.validate()
    schedule = config.cost_schedule()
    reg = config.regime
    for entry in config.assets:
        prices = load_ohlcv(entry["path"], asset_id=entry["id"],
                            forward_fill=entry.get("forward_fill", False))
        seg, _ = segment_regimes(prices, reg.get("er_window", 10), reg.get("fast", 2),
                                 reg.get("slow", 30), reg.get("band", 0.001))
        cost = schedule.for_class(entry.get("asset_class", "equities")).total_fraction
        labels = generate_labels(seg, prices, roundtrip_cost=cost)
        out = f"{config.out_dir}/{entry['id']}_labels.csv"
        import os
        os.makedirs(config.out_dir, exist_ok=True)
        with open(out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["date", "four_state", "target_label"])
            for i in range(len(prices)):
                w.writerow([str(prices.dates[i]), seg.four_state[i], labels[i]])
        print(f"wrote {out}")
    return 0


def _cmd_tune(args):
    config = _apply_overrides(PipelineConfig.from_yaml(args.config), args)
    # search only: reuse the pipeline up to the loose phase by running the
    # full objective on all features for the requested number of trials
    from .pipeline import SpanGuard, _TrainingData, _joint_dates, _load_prices, _split_span
    config.validate()
    prices = {a["id"]: _load_prices(a) for a in config.assets}
    benchmark = _load_prices({**config.benchmark, "id": "benchmark"})
    joint = _joint_dates(list(prices.values()) + [benchmark])
    train_dates, _ = _split_span(joint, config.test_fraction)
    data = _TrainingData(config, prices, train_dates, SpanGuard(train_dates[-1]))
    splits = make_splits(train_dates, config.split.get("n_folds", 4),
                         config.split.get("group_days", 21),
                         config.split.get("purge_gap", data.max_lag))
    import os
    os.makedirs(config.out_dir, exist_ok=True)
    best, _ = tune(
        data.fold_objective(splits, np.arange(data.X.shape[1]),
                            config.trading.get("mode", "contrarian"),
                            config.trading.get("threshold", 0.5), config.seed),
        space=config.search_space(),
        n_trials=config.search.get("loose_trials", 30),
        phase="loose", seed=config.seed + 1,
        log_path=f"{config.out_dir}/trials.ndjson")
    print(json.dumps({"best_mean_score": best.mean_score,
                      "params": best.hyperparams.to_dict()}, indent=1))
    return 0


def _cmd_report(args):
    path = f"{args.out or 'out'}/report.json"
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    print(json.dumps({"meta": {k: v for k, v in doc["meta"].items()
                               if k != "benchmark_wealth"},
                      "metrics": doc["metrics"],
                      "n_trades": doc["n_trades"],
                      "final_wealth": doc["wealth"][-1] if doc["wealth"] else None},
                     indent=1))
    return 0


def _print_metrics(report):
    m = report.metrics
    print(f"model={report.meta.get('model')} mode={report.meta.get('mode')} "
          f"sortino={m.sortino:.4f} adj_sharpe={m.adj_sharpe:.4f} "
          f"info_ratio={m.info_ratio:.4f} trades={len(report.trades)} "
          f"final_wealth={report.wealth[-1]:.2f}")


def build_parser():
    parser = argparse.ArgumentParser(prog="regimecast")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in [("run", _cmd_run), ("baseline", _cmd_baseline), ("label", _cmd_label),
                     ("tune", _cmd_tune), ("report", _cmd_report)]:
        p = sub.add_parser(name)
        if name != "report":
            p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--mode", choices=["contrarian", "conventional"])
        p.add_argument("--model", choices=["kmrf", "hmm", "detection"])
        p.set_defaults(fn=fn)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
