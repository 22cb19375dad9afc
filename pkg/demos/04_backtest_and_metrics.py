"""Cost-adjusted portfolio accounting and the evaluation metrics.

Equal weights per side (1/n over longs, 1/n over shorts, shorts negated),
with half the two-way cost debited at each leg of every trade, scaled by the
stake's weight. The demo builds a tiny three-asset book by hand, reconciles
the trade log against the daily cost series, then scores the result.

Run with: python demos/04_backtest_and_metrics.py
"""

import numpy as np

from regimecast.backtest import (DEFAULT_COSTS, FLAT, LONG, SHORT,
                                 benchmark_curve, cumulative_performance,
                                 decide_positions, portfolio_returns)
from regimecast.metrics import (adjusted_sharpe, information_ratio,
                                mcc_per_class, significance_test, sortino)

print("two-way costs (percent):",
      {k: round(v.total_pct, 2) for k, v in DEFAULT_COSTS.items()})

# the worked single-trade example: long one equity into a +1% day
r_m, gross, cost, _ = portfolio_returns(
    {"spx": np.array([LONG])}, {"spx": np.array([0.01])},
    np.array(["2021-01-04"], dtype="datetime64[D]"),
    {"spx": DEFAULT_COSTS["equities"].total_fraction})
print(f"single long equity, +1% day: gross {gross[0]:.2%}, "
      f"open-leg cost {cost[0]:.2%}, net {r_m[0]:.2%}")

# a week of three assets with hand-written position flips
rng = np.random.default_rng(5)
T = 250
rets = {a: rng.normal(0.0004, 0.01, T) for a in ("eq", "cm", "fx")}
dates = np.datetime64("2021-01-04", "D") + np.arange(T)
positions = {
    "eq": np.where(np.sin(np.arange(T) / 9) > 0, LONG, FLAT),
    "cm": np.where(np.cos(np.arange(T) / 13) < -0.3, SHORT, FLAT),
    "fx": np.where(np.sin(np.arange(T) / 7) < -0.5, LONG, SHORT),
}
costs = {"eq": DEFAULT_COSTS["equities"].total_fraction,
         "cm": DEFAULT_COSTS["commodities"].total_fraction,
         "fx": DEFAULT_COSTS["fx"].total_fraction}
r_m, gross, cost, trades = portfolio_returns(positions, rets, dates, costs)

print(f"\n{T} days, {len(trades)} trades, total cost {cost.sum():.2%} "
      f"of wealth-days")
print(f"trade-log debits reconcile: "
      f"{abs(cost.sum() - sum(t.cost for t in trades)):.2e} residual")

wealth = cumulative_performance(r_m)
bench = benchmark_curve(np.full(T, 0.0003))
print(f"wealth 100 -> {wealth[-1]:.2f} (compounded); "
      f"index 100 -> {bench[-1]:.2f} (uncompounded)")

print("\nmetrics on the net series")
print(f"  sortino          {sortino(r_m):+7.3f}")
print(f"  adjusted sharpe  {adjusted_sharpe(r_m):+7.3f}")
print(f"  information      {information_ratio(r_m, np.full(T, 0.0003)):+7.3f}")
print(f"  bootstrap p      {significance_test(r_m, seed=0):7.3f}")

# probability rows -> positions, both interpretations
probs = np.array([[0.7, 0.2, 0.1], [0.1, 0.8, 0.1], [0.4, 0.35, 0.25]])
print("\nprobability rows:", probs.tolist())
print("contrarian   ->", decide_positions(probs, "contrarian", 0.5).tolist(),
      " (short the predicted top, buy the predicted bottom)")
print("conventional ->", decide_positions(probs, "conventional", 0.5).tolist())

# classification quality, one-vs-rest per class
y_true = np.array(["Bullish", "Bearish", "Other", "Bullish", "Other", "Bearish"])
y_pred = np.array(["Bullish", "Bearish", "Bullish", "Bullish", "Other", "Other"])
print("\nper-class MCC:", {k: round(float(v), 3)
                           for k, v in mcc_per_class(y_true, y_pred).items()})
