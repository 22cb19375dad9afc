"""Position decisions, cost-adjusted portfolio accounting and reporting.

Daily portfolio return: equal weights 1/n_L over longed assets plus 1/n_S
over shorted assets, shorts contributing the negated asset return. Costs are
two-way totals per asset class; half is debited at each leg (open and close),
scaled by the weight of the stake being opened or closed. The position array
convention: positions[t] is the book held over return day t, i.e. the
position that earns asset_returns[t].
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, NumericalError
from .metrics import MetricBlock

__all__ = [
    "AssetCost",
    "CostSchedule",
    "DEFAULT_COSTS",
    "SignalFrame",
    "Trade",
    "BacktestReport",
    "decide_positions",
    "portfolio_returns",
    "cumulative_performance",
]

LONG, SHORT, FLAT = 1, -1, 0

CLASS_ORDER = ("Bullish", "Bearish", "Other")


@dataclass(frozen=True)
class AssetCost:
    """Two-way trading cost components, in percent."""

    brokerage: float
    bid_ask: float
    market_impact: float

    @property
    def total_pct(self) -> float:
        return self.brokerage + self.bid_ask + self.market_impact

    @property
    def total_fraction(self) -> float:
        return self.total_pct / 100.0


# realistic two-way cost estimates per asset class, in percent
DEFAULT_COSTS = {
    "equities": AssetCost(0.07, 0.065, 0.265),  # 0.40 total
    "commodities": AssetCost(0.14, 0.13, 0.0),  # 0.27 total
    "fx": AssetCost(0.0, 0.13, 0.0),  # 0.13 total
}


@dataclass
class CostSchedule:
    """Asset-class -> cost lookup with override support."""

    costs: dict = field(default_factory=lambda: dict(DEFAULT_COSTS))

    def for_class(self, asset_class: str) -> AssetCost:
        try:
            return self.costs[asset_class]
        except KeyError:
            raise ConfigError(f"no cost entry for asset class {asset_class!r}") from None


@dataclass
class SignalFrame:
    """Per-asset per-day probabilities, decided classes and positions."""

    asset_ids: list
    dates: np.ndarray
    probs: dict  # asset_id -> (T, 3) array in CLASS_ORDER
    decided: dict  # asset_id -> array of class names
    positions: dict  # asset_id -> array in {LONG, SHORT, FLAT}


@dataclass
class Trade:
    asset: str
    open_date: object
    close_date: object
    side: str  # 'long' or 'short'
    gross_return: float
    cost: float


@dataclass
class BacktestReport:
    dates: np.ndarray
    r_m: np.ndarray  # cost-adjusted daily returns
    gross: np.ndarray
    cost: np.ndarray
    wealth: np.ndarray  # compounded from 100
    trades: list
    metrics: MetricBlock = None
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "meta": self.meta,
            "metrics": self.metrics.to_dict() if self.metrics else None,
            "dates": [str(d) for d in self.dates],
            "r_m": self.r_m.tolist(),
            "gross": self.gross.tolist(),
            "cost": self.cost.tolist(),
            "wealth": self.wealth.tolist(),
            "n_trades": len(self.trades),
            "total_cost": float(self.cost.sum()),
        }

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)

    def write_trades_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["asset", "open_date", "close_date", "side", "gross_return", "cost"])
            for t in self.trades:
                w.writerow([t.asset, t.open_date, t.close_date, t.side,
                            f"{t.gross_return:.10f}", f"{t.cost:.10f}"])


def decide_positions(probs, mode: str = "contrarian", threshold: float = 0.5) -> np.ndarray:
    """Map class probabilities to positions.

    The decided class is the argmax if its probability reaches ``threshold``,
    else Other. Contrarian mode shorts on predicted Bullish and buys on
    predicted Bearish; conventional mode does the opposite. Other is always
    flat (close any open position).
    """
    if mode not in ("contrarian", "conventional"):
        raise ConfigError(f"unknown mode {mode!r}")
    p = np.atleast_2d(np.asarray(probs, float))
    if p.shape[1] != 3:
        raise DataError("probability rows must have 3 entries (Bullish, Bearish, Other)")
    if np.any(p < -1e-12) or np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-9):
        raise DataError("probability rows must be valid distributions")
    idx = np.argmax(p, axis=1)
    conf = p[np.arange(len(p)), idx]
    decided = np.where(conf >= threshold, idx, 2)  # below threshold -> Other
    pos = np.zeros(len(p), dtype=int)
    bull, bear = decided == 0, decided == 1
    if mode == "contrarian":
        pos[bull] = SHORT
        pos[bear] = LONG
    else:
        pos[bull] = LONG
        pos[bear] = SHORT
    return pos


def decided_classes(probs, threshold: float = 0.5) -> np.ndarray:
    p = np.atleast_2d(np.asarray(probs, float))
    idx = np.argmax(p, axis=1)
    conf = p[np.arange(len(p)), idx]
    return np.array([CLASS_ORDER[i] if c >= threshold else "Other"
                     for i, c in zip(idx, conf)])


def portfolio_returns(positions: dict, asset_returns: dict, dates, costs: dict):
    """Cost-adjusted daily portfolio returns plus the trade log.

    ``positions``/``asset_returns`` map asset id to arrays aligned on
    ``dates``; ``costs`` maps asset id to the two-way cost as a fraction.
    Returns (r_m, gross, cost, trades). Position changes relative to the
    previous day (flat before day 0) trigger the per-leg debit; an opened
    stake is charged at its weight on the opening day, a closed stake at its
    weight on its last held day.
    """
    assets = sorted(positions)
    if sorted(asset_returns) != assets:
        raise DataError("positions and returns cover different assets")
    T = len(dates)
    for a in assets:
        if len(positions[a]) != T or len(asset_returns[a]) != T:
            raise DataError(f"asset {a}: arrays not aligned with the date index")

    pos = np.stack([np.asarray(positions[a], int) for a in assets])  # (n, T)
    rets = np.stack([np.asarray(asset_returns[a], float) for a in assets])
    two_way = np.array([costs[a] for a in assets])

    n_long = np.sum(pos == LONG, axis=0)
    n_short = np.sum(pos == SHORT, axis=0)
    w = np.zeros_like(rets)
    long_mask = pos == LONG
    short_mask = pos == SHORT
    with np.errstate(divide="ignore", invalid="ignore"):
        w[long_mask] = (1.0 / np.broadcast_to(n_long, pos.shape))[long_mask]
        w[short_mask] = (1.0 / np.broadcast_to(n_short, pos.shape))[short_mask]
    signed = np.where(short_mask, -rets, rets)
    gross = np.sum(w * np.where(pos != FLAT, signed, 0.0), axis=0)

    cost = np.zeros(T)
    trades = []
    open_info = {}  # asset -> [open_t, side, cost_paid, wealth_factor]
    prev = np.zeros(len(assets), dtype=int)
    for t in range(T):
        for i, a in enumerate(assets):
            p_now, p_prev = pos[i, t], prev[i]
            if p_now != p_prev:
                half = two_way[i] / 2.0
                if p_prev != FLAT:  # close the old stake at its last held weight
                    debit = half * _weight_at(pos, i, t - 1, n_long, n_short)
                    cost[t] += debit
                    info = open_info.pop(a)
                    info[2] += debit
                    trades.append(Trade(a, info[0], dates[t - 1], info[1],
                                        info[3] - 1.0, info[2]))
                if p_now != FLAT:  # open the new stake at today's weight
                    debit = half * _weight_at(pos, i, t, n_long, n_short)
                    cost[t] += debit
                    open_info[a] = [dates[t], "long" if p_now == LONG else "short", debit, 1.0]
            if p_now != FLAT:
                open_info[a][3] *= 1.0 + (rets[i, t] if p_now == LONG else -rets[i, t])
        prev = pos[:, t]
    for i, a in enumerate(assets):
        if a in open_info:  # force-close at the end for the log; no cost debit
            info = open_info.pop(a)
            trades.append(Trade(a, info[0], dates[T - 1], info[1], info[3] - 1.0, info[2]))

    r_m = gross - cost
    return r_m, gross, cost, trades


def _weight_at(pos, i, t, n_long, n_short):
    if pos[i, t] == LONG:
        return 1.0 / n_long[t]
    if pos[i, t] == SHORT:
        return 1.0 / n_short[t]
    return 0.0


def cumulative_performance(r_m, initial: float = 100.0) -> np.ndarray:
    """Compounded wealth path Q(t) = initial * prod(1 + r)."""
    r = np.asarray(r_m, float)
    if np.any(r <= -1.0):
        t = int(np.argmax(r <= -1.0))
        raise NumericalError(f"ruin: daily return {r[t]:.4f} <= -100% at index {t}")
    return initial * np.cumprod(1.0 + r)


def benchmark_curve(r_b, initial: float = 100.0) -> np.ndarray:
    """Uncompounded index path: bought once, sold at the end."""
    r = np.asarray(r_b, float)
    return initial * (1.0 + np.cumsum(r))
