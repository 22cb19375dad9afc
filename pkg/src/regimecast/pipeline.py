"""End-to-end orchestration: ingest, label, tune, select, fit, trade, report.

Stage order: ingest -> features -> regime labeling on the training span ->
loose search -> feature selection -> rigorous search -> final fit -> test-span
prediction -> contrarian backtest -> metrics against the index benchmark.
Everything before the final-prediction stage sees only training-span data; a
span guard object is threaded through the stages and raises on any access
past the training boundary.

Execution convention for every model: a signal computed from day t data is
executed at day t+1's close, so the position first earns the day t+2 return.
"""

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .backtest import (CLASS_ORDER, DEFAULT_COSTS, AssetCost, BacktestReport,
                       CostSchedule, benchmark_curve, cumulative_performance,
                       decide_positions, decided_classes, portfolio_returns)
from .errors import ConfigError, DataError
from .features import FeatureConfig, build_feature_matrix
from .forest import ForestHyperparams, fit_forest, permutation_importance, predict_proba
from .hmm import fit_hmm, hmm_signals
from .metrics import adjusted_sharpe, information_ratio, mcc_per_class, sortino, MetricBlock
from .regime import combine_states, fit_msr, generate_labels, hamilton_filter, kama_trend
from .regime import forward_backward, HV
from .timeseries import PriceSeries, load_ohlcv
from .validation import DEFAULT_SEARCH_SPACE, make_splits, select_features, tune

__all__ = ["PipelineConfig", "SpanGuard", "run_pipeline", "run_baseline", "ARTIFACTS"]

EXECUTION_LAG = 2  # signal day t -> first earned return day t+2
DETECTION_LAG = 1  # extra recognition lag of the detection-only baseline

ARTIFACTS = ["report.json", "trades.csv", "equity.csv", "trials.ndjson",
             "features_selected.txt", "importances.csv"]


class SpanGuard:
    """Date-capability token: raises on any access past the training span."""

    def __init__(self, max_date):
        self.max_date = np.datetime64(max_date, "D")

    def check(self, dates, stage: str):
        dates = np.asarray(dates)
        if dates.size and dates.max() > self.max_date:
            raise RuntimeError(
                f"stage '{stage}' accessed data dated {dates.max()} beyond the "
                f"training boundary {self.max_date}")


@dataclass
class PipelineConfig:
    assets: list  # [{'id', 'path', 'asset_class'}]; 'prices' may carry a PriceSeries directly
    benchmark: dict = None  # {'path': ...} or {'prices': PriceSeries}
    costs: dict = field(default_factory=dict)  # class -> {brokerage, bid_ask, market_impact}
    features: dict = field(default_factory=dict)
    regime: dict = field(default_factory=dict)  # er_window, fast, slow, band, max_iter, tol
    split: dict = field(default_factory=dict)  # n_folds, group_days, purge_gap
    search: dict = field(default_factory=dict)  # loose_trials, rigorous_trials, boruta_trials, space
    trading: dict = field(default_factory=dict)  # mode, threshold, dead_band
    hmm: dict = field(default_factory=dict)  # n_states, max_iter
    test_fraction: float = 0.15
    seed: int = 0
    out_dir: str = "out"

    @classmethod
    def from_yaml(cls, path):
        try:
            with open(path) as fh:
                doc = yaml.safe_load(fh)
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: config must be a mapping")
        known = set(cls.__dataclass_fields__)
        bad = set(doc) - known
        if bad:
            raise ConfigError(f"{path}: unknown config keys {sorted(bad)}")
        return cls(**doc)

    def validate(self):
        if not self.assets:
            raise ConfigError("config lists no assets")
        schedule = self.cost_schedule()
        for a in self.assets:
            if "id" not in a or ("path" not in a and "prices" not in a):
                raise ConfigError(f"asset entry {a} needs 'id' and a 'path'")
            schedule.for_class(a.get("asset_class", "equities"))
        if self.benchmark is None:
            raise ConfigError("config needs exactly one benchmark")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError(f"test_fraction {self.test_fraction} outside (0, 1)")

    def cost_schedule(self) -> CostSchedule:
        costs = dict(DEFAULT_COSTS)
        for cls_name, entry in (self.costs or {}).items():
            costs[cls_name] = AssetCost(entry.get("brokerage", 0.0),
                                        entry.get("bid_ask", 0.0),
                                        entry.get("market_impact", 0.0))
        return CostSchedule(costs)

    def feature_config(self) -> FeatureConfig:
        return FeatureConfig.from_dict(self.features or {})

    def search_space(self) -> dict:
        space = dict(DEFAULT_SEARCH_SPACE)
        for name, bounds in (self.search.get("space") or {}).items():
            if name not in space:
                raise ConfigError(f"unknown search-space parameter {name!r}")
            kind = space[name][0]
            space[name] = (kind, bounds[0], bounds[1])
        return space

    def config_hash(self) -> str:
        def clean(obj):
            if isinstance(obj, dict):
                return {k: clean(v) for k, v in sorted(obj.items()) if k != "prices"}
            if isinstance(obj, list):
                return [clean(v) for v in obj]
            if isinstance(obj, PriceSeries):
                return obj.asset_id
            return obj
        doc = {k: clean(getattr(self, k)) for k in self.__dataclass_fields__}
        return hashlib.sha256(
            json.dumps(doc, sort_keys=True, default=str).encode()).hexdigest()[:16]


def _load_prices(entry) -> PriceSeries:
    if "prices" in entry:
        return entry["prices"]
    return load_ohlcv(entry["path"], asset_id=entry["id"],
                      forward_fill=entry.get("forward_fill", False))


def _joint_dates(series_list):
    dates = series_list[0].dates
    for s in series_list[1:]:
        dates = np.intersect1d(dates, s.dates)
    if len(dates) < 100:
        raise DataError(f"only {len(dates)} shared trading dates across assets")
    return dates


def _day_returns(prices: PriceSeries, dates) -> np.ndarray:
    """Return per joint day: close(day)/close(previous joint day) - 1; day 0 = 0."""
    lookup = {d: i for i, d in enumerate(prices.dates)}
    idx = np.array([lookup[d] for d in dates], dtype=int)
    closes = prices.close[idx]
    out = np.zeros(len(dates))
    out[1:] = closes[1:] / closes[:-1] - 1.0
    return out


def _lagged_positions(decision_by_day, n_days: int, lag: int) -> np.ndarray:
    """positions[t] = decision[t - lag]; flat where no decision exists."""
    pos = np.zeros(n_days, dtype=int)
    for day, d in decision_by_day.items():
        t = day + lag
        if 0 <= t < n_days:
            pos[t] = d
    # decisions persist until replaced: forward-fill over gaps
    have = np.zeros(n_days, dtype=bool)
    for day in decision_by_day:
        t = day + lag
        if 0 <= t < n_days:
            have[t] = True
    current = 0
    for t in range(n_days):
        if have[t]:
            current = pos[t]
        else:
            pos[t] = current
    return pos


def _safe_sortino(r) -> float:
    st = sortino(r)
    if np.isnan(st):
        return 0.0  # no trades or no downside information
    if np.isinf(st):
        return float(np.copysign(1e6, st))
    return float(st)


def _zscore_stats(X):
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    return mean, np.where(std > 0, std, 1.0)


class _TrainingData:
    """Pooled training-span feature matrix, labels and per-day returns."""

    def __init__(self, config: PipelineConfig, prices: dict, train_dates, guard: SpanGuard):
        fc = config.feature_config()
        reg = config.regime
        schedule = config.cost_schedule()
        class_of = {a["id"]: a.get("asset_class", "equities") for a in config.assets}

        self.asset_ids = sorted(prices)
        self.train_dates = train_dates
        self.cost_by_asset = {aid: schedule.for_class(class_of[aid]).total_fraction
                              for aid in self.asset_ids}
        self.max_lag = 0
        self.msr_models = {}
        self.day_returns = {}
        X_blocks, y_blocks, day_blocks, asset_blocks = [], [], [], []

        for a_idx, aid in enumerate(self.asset_ids):
            p = prices[aid].truncated(train_dates[-1])
            guard.check(p.dates, "features")
            fm = build_feature_matrix(p, fc)
            self.max_lag = max(self.max_lag, fm.max_lag)

            returns = p.close[1:] / p.close[:-1] - 1.0
            msr = fit_msr(returns, max_iter=reg.get("max_iter", 100), tol=reg.get("tol", 1e-6))
            gamma, _, _ = forward_backward(returns, msr)
            var_state = (gamma[:, HV] > 0.5).astype(int)
            var_state = np.concatenate([[var_state[0]], var_state])
            trend = kama_trend(p.close, reg.get("er_window", 10), reg.get("fast", 2),
                               reg.get("slow", 30), reg.get("band", 0.001))
            seg = combine_states(p.dates, var_state, trend)
            labels = generate_labels(seg, p, roundtrip_cost=self.cost_by_asset[aid])
            self.msr_models[aid] = msr
            self.day_returns[aid] = _day_returns(prices[aid], train_dates)

            usable = np.arange(fm.warmup, len(p.dates))
            day_lookup = {d: i for i, d in enumerate(train_dates)}
            keep = [i for i in usable if p.dates[i] in day_lookup]
            if a_idx == 0:
                self.feature_names = fm.feature_names
            elif fm.feature_names != self.feature_names:
                raise DataError(f"{aid}: feature columns differ across assets")
            X_blocks.append(fm.values[keep])
            y_blocks.append(labels[keep])
            day_blocks.append(np.array([day_lookup[p.dates[i]] for i in keep], dtype=int))
            asset_blocks.append(np.full(len(keep), a_idx, dtype=int))

        self.X = np.concatenate(X_blocks)
        self.y = np.concatenate(y_blocks)
        self.day = np.concatenate(day_blocks)
        self.row_asset = np.concatenate(asset_blocks)
        if np.any(np.isnan(self.X)):
            raise DataError("NaN left in pooled training features")

    def fold_objective(self, splits, feature_idx, mode, threshold, seed):
        """Objective for both search phases: mean validation-Sortino across folds.

        Per fold: z-score with fold-train statistics, fit, predict validation
        days per asset, trade with the execution lag, score the annualized
        Sortino of the fold's cost-adjusted daily returns.
        """
        feature_idx = np.asarray(feature_idx, dtype=int)

        def objective(hp: ForestHyperparams):
            scores = []
            for tr, va in splits.folds:
                tr_rows = np.flatnonzero(np.isin(self.day, tr))
                Xtr = self.X[np.ix_(tr_rows, feature_idx)]
                mean, std = _zscore_stats(Xtr)
                # class order pinned so probability columns line up with the
                # (Bullish, Bearish, Other) convention of decide_positions
                model = fit_forest((Xtr - mean) / std, self.y[tr_rows], hp, seed=seed,
                                   classes=CLASS_ORDER)

                va_sorted = np.sort(va)
                day_pos = {d: i for i, d in enumerate(va_sorted)}
                positions, fold_rets = {}, {}
                for a_idx, aid in enumerate(self.asset_ids):
                    mine = np.flatnonzero((self.row_asset == a_idx) & np.isin(self.day, va))
                    if len(mine) == 0:
                        continue
                    Xva = (self.X[np.ix_(mine, feature_idx)] - mean) / std
                    decisions = decide_positions(predict_proba(model, Xva), mode, threshold)
                    by_day = {day_pos[d]: decisions[i]
                              for i, d in enumerate(self.day[mine]) if d in day_pos}
                    positions[aid] = _lagged_positions(by_day, len(va_sorted), EXECUTION_LAG)
                    fold_rets[aid] = self.day_returns[aid][va_sorted]
                if not positions:
                    scores.append(0.0)
                    continue
                r_m, _, _, _ = portfolio_returns(
                    positions, fold_rets, self.train_dates[va_sorted],
                    {aid: self.cost_by_asset[aid] for aid in positions})
                scores.append(_safe_sortino(r_m))
            return scores

        return objective


def _true_test_labels(config, prices, test_dates, cost_by_asset):
    """Ground-truth labels on the test span, from full-series segmentation.

    Lookahead is fine here: these labels are used only to score the final
    predictions, never to make them.
    """
    reg = config.regime
    out = {}
    for aid in sorted(prices):
        p = prices[aid]
        returns = p.close[1:] / p.close[:-1] - 1.0
        msr = fit_msr(returns, max_iter=reg.get("max_iter", 100), tol=reg.get("tol", 1e-6))
        gamma, _, _ = forward_backward(returns, msr)
        var_state = (gamma[:, HV] > 0.5).astype(int)
        var_state = np.concatenate([[var_state[0]], var_state])
        trend = kama_trend(p.close, reg.get("er_window", 10), reg.get("fast", 2),
                           reg.get("slow", 30), reg.get("band", 0.001))
        seg = combine_states(p.dates, var_state, trend)
        labels = generate_labels(seg, p, roundtrip_cost=cost_by_asset[aid])
        lookup = {d: i for i, d in enumerate(p.dates)}
        out[aid] = np.array([labels[lookup[d]] for d in test_dates], dtype=object)
    return out


def _split_span(dates, test_fraction):
    n_test = int(round(test_fraction * len(dates)))
    if n_test < 10 or n_test >= len(dates) - 50:
        raise DataError(f"test span of {n_test} days is infeasible for {len(dates)} dates")
    return dates[: len(dates) - n_test], dates[len(dates) - n_test:]


def _write_artifacts(out_dir, report, kept_names, importances, trial_records):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report.write_json(out / "report.json")
    report.write_trades_csv(out / "trades.csv")
    with open(out / "equity.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "model_wealth", "benchmark_wealth"])
        bench = report.meta.get("benchmark_wealth")
        for i, d in enumerate(report.dates):
            w.writerow([str(d), f"{report.wealth[i]:.6f}",
                        f"{bench[i]:.6f}" if bench is not None else ""])
    with open(out / "trials.ndjson", "w") as fh:
        for rec in trial_records:
            fh.write(rec.to_json() + "\n")
    with open(out / "features_selected.txt", "w") as fh:
        for name in kept_names:
            fh.write(name + "\n")
    with open(out / "importances.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["feature", "importance"])
        for name, imp in importances:
            w.writerow([name, f"{imp:.10f}"])


def _assemble_report(dates, positions, asset_returns, costs, benchmark_returns,
                     y_true=None, y_pred=None, meta=None):
    r_m, gross, cost, trades = portfolio_returns(positions, asset_returns, dates, costs)
    wealth = cumulative_performance(r_m)
    mcc = mcc_per_class(y_true, y_pred) if y_true is not None else None
    block = MetricBlock(
        sortino=sortino(r_m),
        adj_sharpe=adjusted_sharpe(r_m),
        info_ratio=information_ratio(r_m, benchmark_returns),
        mcc=mcc,
    )
    report = BacktestReport(dates, r_m, gross, cost, wealth, trades, block, meta or {})
    report.meta["benchmark_wealth"] = benchmark_curve(benchmark_returns).tolist()
    return report


def run_pipeline(config: PipelineConfig, write: bool = True) -> BacktestReport:
    """Full prediction pipeline; returns the test-span report.

    With ``write`` set, all six artifact files land under ``config.out_dir``.
    """
    config.validate()
    mode = config.trading.get("mode", "contrarian")
    threshold = config.trading.get("threshold", 0.5)
    seed = int(config.seed)

    prices = {a["id"]: _load_prices(a) for a in config.assets}
    benchmark = _load_prices({**config.benchmark, "id": "benchmark"})
    joint = _joint_dates(list(prices.values()) + [benchmark])
    train_dates, test_dates = _split_span(joint, config.test_fraction)
    guard = SpanGuard(train_dates[-1])

    data = _TrainingData(config, prices, train_dates, guard)
    splits = make_splits(
        train_dates,
        n_folds=config.split.get("n_folds", 4),
        group_days=config.split.get("group_days", 21),
        purge_gap=config.split.get("purge_gap", data.max_lag),
    )

    space = config.search_space()
    all_features = np.arange(data.X.shape[1])
    loose_best, loose_records = tune(
        data.fold_objective(splits, all_features, mode, threshold, seed),
        space=space, n_trials=config.search.get("loose_trials", 30),
        phase="loose", seed=seed + 1)

    selection = select_features(
        data.X, data.y, splits, loose_best.hyperparams,
        n_trials=config.search.get("boruta_trials", 30), seed=seed + 2,
        feature_names=data.feature_names)
    kept_idx = np.array([data.feature_names.index(n) for n in selection.kept], dtype=int)

    rigorous_best, rigorous_records = tune(
        data.fold_objective(splits, kept_idx, mode, threshold, seed),
        space=space, n_trials=config.search.get("rigorous_trials", 200),
        phase="rigorous", seed=seed + 3)

    Xfit = data.X[:, kept_idx]
    mean, std = _zscore_stats(Xfit)
    final_model = fit_forest((Xfit - mean) / std, data.y, rigorous_best.hyperparams,
                             seed=seed, feature_names=list(selection.kept),
                             classes=CLASS_ORDER)

    # final-prediction stage: full-series features are allowed from here on
    fc = config.feature_config()
    date_index = {d: i for i, d in enumerate(joint)}
    test_idx = np.array([date_index[d] for d in test_dates], dtype=int)
    positions, test_rets = {}, {}
    y_true_parts, y_pred_parts, test_X_parts = [], [], []
    truth = _true_test_labels(config, prices, test_dates, data.cost_by_asset)
    for aid in data.asset_ids:
        fm = build_feature_matrix(prices[aid], fc)
        if fm.feature_names != data.feature_names:
            raise DataError(f"{aid}: full-series feature columns differ from training")
        lookup = {d: i for i, d in enumerate(fm.dates)}
        # decide from EXECUTION_LAG days before the test span onward
        first = max(test_idx[0] - EXECUTION_LAG, 0)
        decide_days = joint[first: test_idx[-1] + 1]
        rows = np.array([lookup[d] for d in decide_days], dtype=int)
        Xd = (fm.values[np.ix_(rows, kept_idx)] - mean) / std
        probs = predict_proba(final_model, Xd)
        decisions = decide_positions(probs, mode, threshold)
        by_day = {date_index[d] - test_idx[0]: decisions[i]
                  for i, d in enumerate(decide_days)}
        positions[aid] = _lagged_positions(by_day, len(test_dates), EXECUTION_LAG)
        test_rets[aid] = _day_returns(prices[aid], test_dates)
        classes = decided_classes(probs, threshold)
        test_offset = test_idx[0] - first
        y_pred_parts.append(classes[test_offset:])
        y_true_parts.append(truth[aid])
        test_X_parts.append(Xd[test_offset:])

    bench_rets = _day_returns(benchmark, test_dates)
    report = _assemble_report(
        test_dates, positions, test_rets,
        {aid: data.cost_by_asset[aid] for aid in positions}, bench_rets,
        np.concatenate(y_true_parts), np.concatenate(y_pred_parts),
        meta={"model": "kmrf", "mode": mode, "seed": seed,
              "config_hash": config.config_hash(),
              "hyperparams": rigorous_best.hyperparams.to_dict(),
              "selected_features": list(selection.kept)})

    if write:
        imp = permutation_importance(final_model, np.concatenate(test_X_parts),
                                     np.concatenate(y_true_parts), repeats=3, seed=seed)
        ranked = sorted(zip(selection.kept, imp), key=lambda kv: (-kv[1], kv[0]))
        _write_artifacts(config.out_dir, report, selection.kept, ranked,
                         loose_records + rigorous_records)
    return report


def run_baseline(config: PipelineConfig, model: str = "hmm", write: bool = False) -> BacktestReport:
    """Benchmark runs: 'hmm' continuation trading or 'detection' (trade the
    detected four-state regime with a one-day recognition lag).

    Both use the conventional signal interpretation unless the config's
    trading mode says contrarian.
    """
    if model not in ("hmm", "detection"):
        raise ConfigError(f"unknown baseline model {model!r}")
    config.validate()
    mode = config.trading.get("mode", "conventional")
    dead_band = config.trading.get("dead_band", 0.0)
    seed = int(config.seed)
    reg = config.regime

    prices = {a["id"]: _load_prices(a) for a in config.assets}
    benchmark = _load_prices({**config.benchmark, "id": "benchmark"})
    joint = _joint_dates(list(prices.values()) + [benchmark])
    train_dates, test_dates = _split_span(joint, config.test_fraction)
    schedule = config.cost_schedule()
    class_of = {a["id"]: a.get("asset_class", "equities") for a in config.assets}
    cost_by_asset = {aid: schedule.for_class(class_of[aid]).total_fraction
                     for aid in sorted(prices)}

    date_index = {d: i for i, d in enumerate(joint)}
    test_start = date_index[test_dates[0]]
    positions, test_rets = {}, {}
    for aid in sorted(prices):
        p = prices[aid]
        train_p = p.truncated(train_dates[-1])
        train_returns = train_p.close[1:] / train_p.close[:-1] - 1.0
        full_returns = p.close[1:] / p.close[:-1] - 1.0

        if model == "hmm":
            hm = fit_hmm(train_returns, n_states=config.hmm.get("n_states", 3),
                         max_iter=config.hmm.get("max_iter", 100), seed=seed)
            sig_by_return_day = hmm_signals(hm, full_returns, dead_band)
            signal = np.concatenate([[0], sig_by_return_day])  # align to price dates
            lag = EXECUTION_LAG
        else:
            msr = fit_msr(train_returns, max_iter=reg.get("max_iter", 100),
                          tol=reg.get("tol", 1e-6))
            filtered, _ = hamilton_filter(full_returns, msr)  # causal given trained params
            var_state = (filtered[:, HV] > 0.5).astype(int)
            var_state = np.concatenate([[var_state[0]], var_state])
            trend = kama_trend(p.close, reg.get("er_window", 10), reg.get("fast", 2),
                               reg.get("slow", 30), reg.get("band", 0.001))
            # the antecedent detection model trades only LV-bull (long) and HV-bear (short)
            signal = np.zeros(len(p.dates), dtype=int)
            signal[(var_state == 0) & (trend == 1)] = 1
            signal[(var_state == 1) & (trend == -1)] = -1
            lag = EXECUTION_LAG + DETECTION_LAG
        if mode == "contrarian":
            signal = -signal

        lookup = {d: i for i, d in enumerate(p.dates)}
        first = max(test_start - lag, 0)
        decide_days = joint[first: date_index[test_dates[-1]] + 1]
        by_day = {date_index[d] - test_start: int(signal[lookup[d]]) for d in decide_days}
        positions[aid] = _lagged_positions(by_day, len(test_dates), lag)
        test_rets[aid] = _day_returns(p, test_dates)

    bench_rets = _day_returns(benchmark, test_dates)
    report = _assemble_report(
        test_dates, positions, test_rets, cost_by_asset, bench_rets,
        meta={"model": model, "mode": mode, "seed": seed,
              "config_hash": config.config_hash()})
    if write:
        _write_artifacts(config.out_dir, report, [], [], [])
    return report
