"""Synthetic data generators for tests and demos.

The planted-regime universe produces short alternating trend legs under a
slow-moving volatility regime. Legs reverse quickly, so a correctly
identified up-trend is close to its peak by the time rolling features can see
it; trading against the identified trend is profitable there while trend
continuation bets pay the reversal. That is the property the end-to-end
comparison relies on.
"""

import numpy as np

from .timeseries import PriceSeries

__all__ = [
    "make_msr_returns",
    "make_hmm_returns",
    "make_trend_prices",
    "make_universe",
    "write_universe_csv",
]


def make_msr_returns(n: int, sigmas=(0.01, 0.03), mus=(0.0, 0.0),
                     persistence: float = 0.97, seed: int = 0):
    """Two-state switching Gaussian returns; returns (values, states)."""
    rng = np.random.default_rng(seed)
    trans = np.array([[persistence, 1 - persistence], [1 - persistence, persistence]])
    states = np.empty(n, dtype=int)
    states[0] = rng.integers(2)
    for t in range(1, n):
        states[t] = rng.choice(2, p=trans[states[t - 1]])
    values = rng.normal(np.asarray(mus)[states], np.asarray(sigmas)[states])
    return values, states


def make_hmm_returns(n: int, means=(-0.002, 0.0, 0.002), sigmas=(0.02, 0.008, 0.012),
                     persistence: float = 0.95, seed: int = 0):
    """k-state Gaussian Markov returns; returns (values, states)."""
    rng = np.random.default_rng(seed)
    k = len(means)
    trans = np.full((k, k), (1 - persistence) / (k - 1))
    np.fill_diagonal(trans, persistence)
    states = np.empty(n, dtype=int)
    states[0] = rng.integers(k)
    for t in range(1, n):
        states[t] = rng.choice(k, p=trans[states[t - 1]])
    values = rng.normal(np.asarray(means)[states], np.asarray(sigmas)[states])
    return values, states


def make_trend_prices(n_days: int, seed: int = 0, leg_low: int = 4, leg_high: int = 7,
                      drift: float = 0.006, noise: float = 0.004,
                      hv_persistence: float = 0.985, hv_vol_mult: float = 3.0,
                      start: float = 100.0, start_date="2015-01-01") -> PriceSeries:
    """One asset with short alternating trend legs and a slow variance regime."""
    rng = np.random.default_rng(seed)
    direction = 1 if rng.integers(2) else -1
    trend = np.empty(n_days)
    t = 0
    while t < n_days:
        leg = int(rng.integers(leg_low, leg_high + 1))
        trend[t: t + leg] = direction * drift
        direction = -direction
        t += leg

    hv = np.empty(n_days, dtype=bool)
    hv[0] = False
    flips = rng.random(n_days) > hv_persistence
    for t in range(1, n_days):
        hv[t] = hv[t - 1] ^ flips[t]
    vol = np.where(hv, noise * hv_vol_mult, noise)

    rets = trend + rng.normal(0.0, 1.0, n_days) * vol
    close = start * np.cumprod(1.0 + rets)
    dates = np.datetime64(start_date, "D") + np.arange(n_days)
    spread = np.abs(rng.normal(0, 0.001, n_days))
    return PriceSeries(
        asset_id=f"synthetic_{seed}",
        dates=dates,
        open=close * (1 - spread),
        high=close * (1 + 2 * spread),
        low=close * (1 - 2 * spread),
        close=close,
        volume=np.abs(rng.normal(1e6, 1e5, n_days)),
    )


def make_universe(n_assets: int = 3, n_days: int = 2000, seed: int = 0, **kwargs):
    """Planted-regime universe; returns (assets dict, benchmark PriceSeries).

    The benchmark is the equal-weighted index of the asset returns.
    """
    assets = {}
    closes = []
    for i in range(n_assets):
        p = make_trend_prices(n_days, seed=seed * 1000 + i, **kwargs)
        aid = f"asset_{i}"
        p = PriceSeries(aid, p.dates, p.open, p.high, p.low, p.close, p.volume)
        assets[aid] = p
        closes.append(p.close)
    rets = np.stack([c[1:] / c[:-1] - 1.0 for c in closes]).mean(axis=0)
    bench_close = 100.0 * np.concatenate([[1.0], np.cumprod(1.0 + rets)])
    dates = next(iter(assets.values())).dates
    ones = np.ones(n_days)
    benchmark = PriceSeries("benchmark", dates, bench_close, bench_close,
                            bench_close, bench_close, ones)
    return assets, benchmark


def write_universe_csv(assets: dict, benchmark: PriceSeries, out_dir):
    """Dump a universe as per-asset CSV files; returns {asset_id: path}."""
    import csv
    from pathlib import Path

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for aid, p in {**assets, benchmark.asset_id: benchmark}.items():
        path = out_dir / f"{aid}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["date", "open", "high", "low", "close", "volume"])
            for i in range(len(p)):
                w.writerow([str(p.dates[i]), f"{p.open[i]:.6f}", f"{p.high[i]:.6f}",
                            f"{p.low[i]:.6f}", f"{p.close[i]:.6f}", f"{p.volume[i]:.1f}"])
        paths[aid] = str(path)
    return paths
