"""Technical feature engineering for the classifier input.

Every column is causal: the value on day t uses only bars dated <= t. The
first ``max_lag`` rows are warm-up and must never reach a training set. All
default features are invariant to a multiplicative rescaling of prices, which
the test suite relies on.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .timeseries import PriceSeries, frac_diff

__all__ = [
    "FeatureMatrix",
    "FeatureConfig",
    "kama",
    "momentum_features",
    "rsi",
    "energy_ratio_by_chunks",
    "rolling_energy_ratio",
    "build_feature_matrix",
]


@dataclass(frozen=True)
class FeatureMatrix:
    """Per-asset feature table. Rows before ``warmup`` are unusable."""

    asset_id: str
    dates: np.ndarray
    feature_names: list
    values: np.ndarray  # (n_days, n_features)
    max_lag: int

    @property
    def warmup(self) -> int:
        return self.max_lag

    def usable(self):
        """(dates, values) past the warm-up region."""
        return self.dates[self.warmup:], self.values[self.warmup:]


@dataclass
class FeatureConfig:
    """Which feature families to compute and with which windows."""

    momentum_windows: list = field(default_factory=lambda: [5, 10, 20])
    volatility_windows: list = field(default_factory=lambda: [10, 20])
    kama_params: list = field(default_factory=lambda: [(10, 2, 30), (20, 2, 30)])
    energy_window: int = 20
    energy_chunks: int = 4
    autocorr_lags: list = field(default_factory=lambda: [1, 5])
    autocorr_window: int = 20
    trend_windows: list = field(default_factory=lambda: [10, 20])
    frac_diff_d: float = 0.0  # 0 disables the fractionally differenced return column
    frac_diff_cutoff: float = 1e-2

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        bad = set(d) - known
        if bad:
            raise ConfigError(f"unknown feature config keys: {sorted(bad)}")
        kama_params = d.get("kama_params")
        if kama_params is not None:
            d = {**d, "kama_params": [tuple(p) for p in kama_params]}
        return cls(**d)


def kama(closes, er_window: int = 10, fast: int = 2, slow: int = 30) -> np.ndarray:
    """Adaptive moving average driven by the efficiency ratio.

    ER_t = |close_t - close_{t-n}| / sum |close_s - close_{s-1}| over the
    window, SC_t = (ER_t * (2/(fast+1) - 2/(slow+1)) + 2/(slow+1))^2 and
    KAMA_t = KAMA_{t-1} + SC_t * (close_t - KAMA_{t-1}), seeded at the close
    of the first valid index. Entries before that index are NaN.
    """
    closes = np.asarray(closes, float)
    if er_window < 1 or not 1 <= fast < slow:
        raise ConfigError(f"bad KAMA parameters er_window={er_window} fast={fast} slow={slow}")
    if len(closes) <= er_window:
        raise DataError(f"series length {len(closes)} too short for er_window={er_window}")

    fast_sc = 2.0 / (fast + 1)
    slow_sc = 2.0 / (slow + 1)
    abs_diff = np.abs(np.diff(closes))
    vol = np.convolve(abs_diff, np.ones(er_window), mode="valid")  # vol[i] covers diffs i..i+n-1
    change = np.abs(closes[er_window:] - closes[:-er_window])
    with np.errstate(invalid="ignore", divide="ignore"):
        er = np.where(vol > 0, change / np.where(vol > 0, vol, 1.0), 0.0)
    sc = (er * (fast_sc - slow_sc) + slow_sc) ** 2

    out = np.full(len(closes), np.nan)
    out[er_window] = closes[er_window]
    for t in range(er_window + 1, len(closes)):
        out[t] = out[t - 1] + sc[t - er_window] * (closes[t] - out[t - 1])
    return out


def rsi(closes, window: int = 14) -> np.ndarray:
    """Wilder's relative strength index; NaN during the warm-up."""
    closes = np.asarray(closes, float)
    if len(closes) <= window:
        raise DataError(f"series length {len(closes)} too short for RSI({window})")
    diff = np.diff(closes)
    gain = np.maximum(diff, 0.0)
    loss = np.maximum(-diff, 0.0)
    out = np.full(len(closes), np.nan)
    avg_gain = gain[:window].mean()
    avg_loss = loss[:window].mean()
    out[window] = _rsi_value(avg_gain, avg_loss)
    for t in range(window + 1, len(closes)):
        avg_gain = (avg_gain * (window - 1) + gain[t - 1]) / window
        avg_loss = (avg_loss * (window - 1) + loss[t - 1]) / window
        out[t] = _rsi_value(avg_gain, avg_loss)
    return out


def _rsi_value(avg_gain, avg_loss):
    if avg_loss == 0.0:
        return 100.0 if avg_gain > 0 else 50.0
    return 100.0 - 100.0 / (1.0 + avg_gain / avg_loss)


def _rolling_mean(x, w):
    out = np.full(len(x), np.nan)
    if len(x) >= w:
        out[w - 1:] = np.convolve(x, np.ones(w) / w, mode="valid")
    return out


def _rolling_std(x, w):
    # population std over trailing windows
    m1 = _rolling_mean(x, w)
    m2 = _rolling_mean(x * x, w)
    var = np.maximum(m2 - m1 * m1, 0.0)
    return np.sqrt(var)


def momentum_features(prices: PriceSeries, windows) -> FeatureMatrix:
    """Rate-of-change, RSI and close-vs-mean z-score for each window."""
    if not windows or any(w < 1 for w in windows):
        raise ConfigError(f"bad momentum windows {windows}")
    closes = prices.close
    names, cols = [], []
    for w in windows:
        roc = np.full(len(closes), np.nan)
        roc[w:] = closes[w:] / closes[:-w] - 1.0
        names.append(f"roc_{w}")
        cols.append(roc)
        names.append(f"rsi_{w}")
        cols.append(rsi(closes, w))
        mean = _rolling_mean(closes, w)
        std = _rolling_std(closes, w)
        with np.errstate(invalid="ignore", divide="ignore"):
            z = np.where(std > 0, (closes - mean) / std, 0.0)
        z[np.isnan(mean)] = np.nan
        names.append(f"close_z_{w}")
        cols.append(z)
    return FeatureMatrix(prices.asset_id, prices.dates, names,
                         np.column_stack(cols), max_lag=max(windows))


def energy_ratio_by_chunks(series, num_chunks: int, focus_chunk: int) -> float:
    """Share of the series' total energy held by one contiguous chunk."""
    x = np.asarray(series, float)
    if num_chunks < 1 or not 0 <= focus_chunk < num_chunks:
        raise ConfigError(f"bad chunk spec num_chunks={num_chunks} focus={focus_chunk}")
    if len(x) < num_chunks:
        raise DataError(f"series length {len(x)} shorter than num_chunks={num_chunks}")
    total = float(np.sum(x * x))
    if total == 0.0:
        return 0.0  # degenerate all-zero input
    bounds = np.linspace(0, len(x), num_chunks + 1).round().astype(int)
    chunk = x[bounds[focus_chunk]:bounds[focus_chunk + 1]]
    return float(np.sum(chunk * chunk) / total)


def rolling_energy_ratio(series, window: int, num_chunks: int, focus_chunk: int) -> np.ndarray:
    """energy_ratio_by_chunks applied over a trailing window, NaN warm-up."""
    x = np.asarray(series, float)
    out = np.full(len(x), np.nan)
    for t in range(window - 1, len(x)):
        out[t] = energy_ratio_by_chunks(x[t - window + 1: t + 1], num_chunks, focus_chunk)
    return out


def _rolling_autocorr(returns, lag, window):
    out = np.full(len(returns), np.nan)
    for t in range(window - 1, len(returns)):
        w = returns[t - window + 1: t + 1]
        a, b = w[:-lag], w[lag:]
        sa, sb = a.std(), b.std()
        out[t] = float(np.mean((a - a.mean()) * (b - b.mean())) / (sa * sb)) if sa > 0 and sb > 0 else 0.0
    return out


def _rolling_logslope(closes, window):
    # OLS slope of log-price on 0..w-1 over a trailing window; scale-invariant
    logs = np.log(closes)
    t = np.arange(window) - (window - 1) / 2.0
    denom = float(np.sum(t * t))
    out = np.full(len(closes), np.nan)
    for i in range(window - 1, len(closes)):
        w = logs[i - window + 1: i + 1]
        out[i] = float(np.sum(t * (w - w.mean())) / denom)
    return out


def build_feature_matrix(prices: PriceSeries, spec: FeatureConfig = None) -> FeatureMatrix:
    """Concatenate all enabled feature families into one causal matrix.

    Column names are deterministic; columns constant over the non-warm-up
    region are dropped.
    """
    spec = spec or FeatureConfig()
    closes = prices.close
    returns = np.concatenate([[np.nan], closes[1:] / closes[:-1] - 1.0])

    names, cols, lags = [], [], [1]

    if spec.momentum_windows:
        mom = momentum_features(prices, spec.momentum_windows)
        names += mom.feature_names
        cols += list(mom.values.T)
        lags.append(mom.max_lag)

    for w in spec.volatility_windows:
        r = np.where(np.isnan(returns), 0.0, returns)
        vol = _rolling_std(r, w)
        vol[:w] = np.nan  # needs w returns, i.e. w+1 closes
        names.append(f"vol_{w}")
        cols.append(vol)
        lags.append(w + 1)

    for er_window, fast, slow in spec.kama_params:
        k = kama(closes, er_window, fast, slow)
        with np.errstate(invalid="ignore"):
            ratio = closes / k - 1.0
        names.append(f"kama_gap_{er_window}_{fast}_{slow}")
        cols.append(ratio)
        lags.append(er_window + 1)

    if spec.energy_window:
        r = np.where(np.isnan(returns), 0.0, returns)
        for chunk in range(spec.energy_chunks):
            e = rolling_energy_ratio(r, spec.energy_window, spec.energy_chunks, chunk)
            e[: spec.energy_window] = np.nan
            names.append(f"energy_{spec.energy_window}_{spec.energy_chunks}_{chunk}")
            cols.append(e)
        lags.append(spec.energy_window + 1)

    for lag in spec.autocorr_lags:
        r = np.where(np.isnan(returns), 0.0, returns)
        ac = _rolling_autocorr(r, lag, spec.autocorr_window)
        ac[: spec.autocorr_window] = np.nan
        names.append(f"autocorr_{lag}_{spec.autocorr_window}")
        cols.append(ac)
        lags.append(spec.autocorr_window + 1)

    for w in spec.trend_windows:
        names.append(f"logslope_{w}")
        cols.append(_rolling_logslope(closes, w))
        lags.append(w)

    if spec.frac_diff_d > 0:
        r = np.where(np.isnan(returns), 0.0, returns)
        fd = frac_diff(r, spec.frac_diff_d, spec.frac_diff_cutoff, prices.asset_id)
        names.append(f"fracdiff_ret_{spec.frac_diff_d:g}")
        cols.append(fd.values)
        lags.append(fd.warmup + 2)

    if not names:
        raise ConfigError("feature spec enables no feature family")

    values = np.column_stack(cols)
    max_lag = max(lags)

    keep = []
    for j in range(values.shape[1]):
        col = values[max_lag:, j]
        if np.nanstd(col) > 0:
            keep.append(j)
    if not keep:
        raise DataError(f"{prices.asset_id}: all feature columns constant")
    values = values[:, keep]
    names = [names[j] for j in keep]
    return FeatureMatrix(prices.asset_id, prices.dates, names, values, max_lag)
