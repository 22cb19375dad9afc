"""Financial and classification metrics.

All annualizations use sqrt(252). Mean and deviation statistics are taken
over every trading day of the evaluated period; sigma is the population
standard deviation (divide by T) by default, with a sample-variance switch.
Undefined ratios (zero deviation with zero mean) come back as NaN; a zero
deviation with a nonzero mean yields signed infinity for the Sortino ratio
and NaN for the information ratio, as documented per function.
"""

from dataclasses import dataclass, asdict

import numpy as np

from .errors import DataError

__all__ = [
    "MetricBlock",
    "sortino",
    "adjusted_sharpe",
    "information_ratio",
    "mcc_per_class",
    "significance_test",
    "ANNUALIZER",
]

ANNUALIZER = np.sqrt(252.0)


@dataclass
class MetricBlock:
    """Metric bundle attached to a backtest report. r_f is fixed at zero."""

    sortino: float
    adj_sharpe: float
    info_ratio: float
    mcc: dict = None  # per-class plus 'avg_bull_bear'
    r_f: float = 0.0

    def to_dict(self):
        d = asdict(self)
        for k in ("sortino", "adj_sharpe", "info_ratio"):
            v = d[k]
            d[k] = None if v is not None and not np.isfinite(v) and np.isnan(v) else v
        return d


def _std(x, sample=False):
    x = np.asarray(x, float)
    if sample and len(x) > 1:
        return float(np.std(x, ddof=1))
    return float(np.std(x))


def sortino(r_m, r_f: float = 0.0, sample: bool = False) -> float:
    """Annualized Sortino ratio.

    Downside deviation averages the squared negative excess returns over all
    T days (full-sample convention). Zero downside deviation with a nonzero
    mean returns signed infinity; with a zero mean, NaN.
    """
    ex = np.asarray(r_m, float) - r_f
    if ex.size == 0:
        raise DataError("empty return series")
    mu = float(ex.mean())
    neg = np.minimum(ex, 0.0)
    if sample and len(ex) > 1:
        dd = float(np.sqrt(np.sum(neg ** 2) / (len(ex) - 1)))
    else:
        dd = float(np.sqrt(np.mean(neg ** 2)))
    if dd == 0.0:
        return np.nan if mu == 0.0 else np.copysign(np.inf, mu)
    return mu / dd * ANNUALIZER


def adjusted_sharpe(r_m, r_f: float = 0.0, sample: bool = False) -> float:
    """Annualized adjusted Sharpe ratio.

    The volatility denominator is raised to mean(ex) / mean|ex|, which
    penalizes negative-skew profiles more than the plain Sharpe ratio. Not
    scale-invariant (the exponent makes the units of the denominator vary);
    NaN when the deviation or mean absolute excess return vanishes.
    """
    ex = np.asarray(r_m, float) - r_f
    if ex.size == 0:
        raise DataError("empty return series")
    mu = float(ex.mean())
    sd = _std(ex, sample)
    mean_abs = float(np.mean(np.abs(ex)))
    if sd == 0.0 or mean_abs == 0.0:
        return np.nan
    return mu / sd ** (mu / mean_abs) * ANNUALIZER


def information_ratio(r_m, r_b, sample: bool = False) -> float:
    """Annualized information ratio versus benchmark returns.

    Values above 1.0 indicate the active portfolio beat the index after
    costs. NaN when the tracking error is zero, including the constant-offset
    edge case.
    """
    r_m = np.asarray(r_m, float)
    r_b = np.asarray(r_b, float)
    if r_m.shape != r_b.shape:
        raise DataError(f"length mismatch: {r_m.shape} vs {r_b.shape}")
    if r_m.size == 0:
        raise DataError("empty return series")
    diff = r_m - r_b
    sd = _std(diff, sample)
    if sd == 0.0:
        return np.nan
    return float(diff.mean()) / sd * ANNUALIZER


def mcc_per_class(y_true, y_pred, classes=("Bullish", "Bearish", "Other")) -> dict:
    """One-vs-rest Matthews correlation per class.

    A zero denominator yields 0.0 by convention. Also reports the mean of
    the bullish and bearish coefficients under 'avg_bull_bear'.
    """
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.size == 0:
        raise DataError("empty label sequence")
    if y_true.shape != y_pred.shape:
        raise DataError("label sequences differ in length")
    out = {}
    for c in classes:
        t = y_true == c
        p = y_pred == c
        tp = float(np.sum(t & p))
        tn = float(np.sum(~t & ~p))
        fp = float(np.sum(~t & p))
        fn = float(np.sum(t & ~p))
        denom = np.sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn))
        out[c] = 0.0 if denom == 0.0 else (tp * tn - fp * fn) / denom
    if "Bullish" in out and "Bearish" in out:
        out["avg_bull_bear"] = 0.5 * (out["Bullish"] + out["Bearish"])
    return out


def significance_test(r_model, r_other=None, block_len: int = 10,
                      n_boot: int = 1000, seed: int = 0) -> float:
    """Two-sided circular block bootstrap p-value.

    Null hypothesis: zero mean daily return (or zero mean difference when
    ``r_other`` is given). Blocks wrap around to preserve short-range serial
    correlation.
    """
    if n_boot < 1000:
        raise DataError("n_boot must be >= 1000")
    d = np.asarray(r_model, float)
    if r_other is not None:
        other = np.asarray(r_other, float)
        if other.shape != d.shape:
            raise DataError("series lengths differ")
        d = d - other
    T = len(d)
    if T < block_len:
        raise DataError(f"series length {T} shorter than block length {block_len}")
    observed = float(d.mean())
    centered = d - observed
    rng = np.random.default_rng(seed)
    n_blocks = int(np.ceil(T / block_len))
    starts = rng.integers(0, T, size=(n_boot, n_blocks))
    offsets = np.arange(block_len)
    idx = (starts[:, :, None] + offsets[None, None, :]) % T
    samples = centered[idx].reshape(n_boot, -1)[:, :T]
    boot_means = samples.mean(axis=1)
    extreme = np.sum(np.abs(boot_means) >= abs(observed))
    return float((extreme + 1) / (n_boot + 1))
