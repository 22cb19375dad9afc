"""OHLCV ingestion, simple returns and fractional differencing.

All series are daily bars. Dates are numpy datetime64[D]; value arrays are
float64 and share the length of the date index.
"""

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import DataError

__all__ = [
    "PriceSeries",
    "ReturnSeries",
    "FracDiffSeries",
    "load_ohlcv",
    "simple_returns",
    "frac_diff",
    "frac_diff_weights",
]

DEFAULT_SCHEMA = {
    "date": "date",
    "open": "open",
    "high": "high",
    "low": "low",
    "close": "close",
    "volume": "volume",
}

# gaps longer than a week of trading days usually mean a dead feed or delisting
MAX_FFILL_GAP = 5


@dataclass(frozen=True)
class PriceSeries:
    """Validated per-asset daily OHLCV bars."""

    asset_id: str
    dates: np.ndarray  # datetime64[D], strictly increasing
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    volume: np.ndarray

    def __post_init__(self):
        n = len(self.dates)
        for name in ("open", "high", "low", "close", "volume"):
            arr = getattr(self, name)
            if len(arr) != n:
                raise DataError(
                    f"{self.asset_id}: column '{name}' has length {len(arr)}, expected {n}"
                )
        if n and np.any(np.diff(self.dates.astype("datetime64[D]")) <= np.timedelta64(0, "D")):
            raise DataError(f"{self.asset_id}: dates must be strictly increasing")
        for name in ("open", "high", "low", "close"):
            if np.any(~(getattr(self, name) > 0)):
                raise DataError(f"{self.asset_id}: non-positive value in '{name}'")
        if np.any(self.volume < 0):
            raise DataError(f"{self.asset_id}: negative volume")

    def __len__(self):
        return len(self.dates)

    def truncated(self, last_date) -> "PriceSeries":
        """Bars with date <= last_date."""
        keep = self.dates <= np.datetime64(last_date, "D")
        return PriceSeries(
            self.asset_id,
            self.dates[keep],
            self.open[keep],
            self.high[keep],
            self.low[keep],
            self.close[keep],
            self.volume[keep],
        )


@dataclass(frozen=True)
class ReturnSeries:
    """Simple daily returns; one entry shorter than the source prices."""

    asset_id: str
    dates: np.ndarray  # date of the *later* close of each return
    values: np.ndarray

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class FracDiffSeries:
    """Fractionally differenced series with a warm-up prefix.

    ``values`` has the input length; the first ``warmup`` entries are NaN and
    flagged unavailable (the truncated kernel needs that much history).
    """

    asset_id: str
    order_d: float
    weight_cutoff: float
    values: np.ndarray
    warmup: int
    weights: np.ndarray = field(repr=False, default=None)

    @property
    def available(self) -> np.ndarray:
        return self.values[self.warmup:]


def load_ohlcv(path, schema=None, asset_id=None, forward_fill=False) -> PriceSeries:
    """Read one asset's OHLCV CSV and validate it into a :class:`PriceSeries`.

    ``schema`` maps canonical names (date/open/high/low/close/volume) to the
    file's column headers. Rows are sorted by date. Rows with missing prices
    are rejected unless ``forward_fill`` is set, in which case gaps of up to
    ``MAX_FFILL_GAP`` rows are filled from the previous bar.
    """
    schema = {**DEFAULT_SCHEMA, **(schema or {})}
    try:
        df = pd.read_csv(path)
    except (OSError, pd.errors.ParserError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    missing = [c for c in schema.values() if c not in df.columns]
    if missing:
        raise DataError(f"{path}: missing columns {missing}")
    df = df.rename(columns={v: k for k, v in schema.items()})

    try:
        dates = pd.to_datetime(df["date"], format="ISO8601").to_numpy().astype("datetime64[D]")
    except (ValueError, TypeError) as exc:
        raise DataError(f"{path}: malformed date ({exc})") from exc
    df = df.assign(date=dates)

    dup = df["date"].duplicated()
    if dup.any():
        row = int(np.flatnonzero(dup.to_numpy())[0])
        raise DataError(f"{path}: duplicate date {df['date'].iloc[row].date()} on row {row + 1}")

    df = df.sort_values("date", kind="stable").reset_index(drop=True)

    price_cols = ["open", "high", "low", "close"]
    bad = df[price_cols].isna().any(axis=1)
    if bad.any():
        if not forward_fill:
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise DataError(f"{path}: missing price on row {row + 1}")
        runs = _run_lengths(bad.to_numpy())
        if runs and max(runs) > MAX_FFILL_GAP:
            raise DataError(
                f"{path}: price gap of {max(runs)} rows exceeds forward-fill limit {MAX_FFILL_GAP}"
            )
        df[price_cols] = df[price_cols].ffill()
        if df[price_cols].isna().any(axis=None):
            raise DataError(f"{path}: cannot forward-fill leading missing prices")
    df["volume"] = df["volume"].fillna(0)

    nonpos = (df[price_cols] <= 0).any(axis=1)
    if nonpos.any():
        row = int(np.flatnonzero(nonpos.to_numpy())[0])
        raise DataError(f"{path}: non-positive price on row {row + 1}")

    return PriceSeries(
        asset_id=asset_id or str(path),
        dates=df["date"].to_numpy().astype("datetime64[D]"),
        open=df["open"].to_numpy(float),
        high=df["high"].to_numpy(float),
        low=df["low"].to_numpy(float),
        close=df["close"].to_numpy(float),
        volume=df["volume"].to_numpy(float),
    )


def _run_lengths(mask):
    runs, count = [], 0
    for m in mask:
        if m:
            count += 1
        elif count:
            runs.append(count)
            count = 0
    if count:
        runs.append(count)
    return runs


def simple_returns(prices: PriceSeries) -> ReturnSeries:
    """close[t]/close[t-1] - 1, dated at the later close."""
    if len(prices) < 2:
        raise DataError(f"{prices.asset_id}: need at least 2 bars for returns, have {len(prices)}")
    values = prices.close[1:] / prices.close[:-1] - 1.0
    return ReturnSeries(prices.asset_id, prices.dates[1:], values)


def frac_diff_weights(d: float, cutoff: float) -> np.ndarray:
    """Truncated binomial kernel: w_0 = 1, w_k = -w_{k-1} (d - k + 1) / k.

    Truncation drops the tail once |w_k| < cutoff.
    """
    if not 0.0 <= d <= 1.0:
        raise DataError(f"fractional order d={d} outside [0, 1]")
    if cutoff <= 0:
        raise DataError("weight cutoff must be positive")
    weights = [1.0]
    k = 1
    while True:
        w = -weights[-1] * (d - k + 1) / k
        if abs(w) < cutoff:
            break
        weights.append(w)
        k += 1
    return np.asarray(weights)


def frac_diff(series, d: float, cutoff: float = 1e-4, asset_id: str = "") -> FracDiffSeries:
    """Fixed-width fractional differencing with a truncated binomial kernel.

    The first ``len(weights) - 1`` outputs need unavailable history and are
    NaN; d=0 is the identity and d=1 the first difference on the available
    region.
    """
    x = np.asarray(series, float)
    if len(x) == 0:
        raise DataError("empty series")
    w = frac_diff_weights(d, cutoff)
    # the kernel cannot be longer than the data it convolves
    w = w[: len(x)]
    k = len(w)
    out = np.full(len(x), np.nan)
    # out[t] = sum_j w[j] * x[t - j]
    out[k - 1:] = np.convolve(x, w, mode="valid")
    return FracDiffSeries(asset_id, d, cutoff, out, warmup=k - 1, weights=w)
