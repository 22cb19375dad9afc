"""Four-state regime detection and three-class target label generation.

A two-state Gaussian Markov-switching model on daily returns supplies the
low/high-variance axis; an adaptive-moving-average crossing rule with a
hysteresis band supplies the bullish/bearish axis. The product gives four
states, which are collapsed into {Bullish, Bearish, Other} targets:
Bullish = each LV-bull segment extended through the immediately following
HV-bull segment up to that segment's highest close; Bearish = each HV-bear
segment extended through the immediately following LV-bear segment up to its
lowest close; everything else is Other. Episodes whose gross absolute move
cannot cover the round-trip trading cost are converted to Other.
"""

from dataclasses import dataclass

import numpy as np

from ._filtering import scaled_filter, scaled_forward_backward
from .errors import DataError, NumericalError
from .features import kama
from .timeseries import PriceSeries

__all__ = [
    "MsrModel",
    "RegimeSegmentation",
    "hamilton_filter",
    "forward_backward",
    "fit_msr",
    "kama_trend",
    "combine_states",
    "generate_labels",
    "segment_regimes",
]

LV, HV = 0, 1
BULL, BEAR = 1, -1

VARIANCE_FLOOR = 1e-12

FOUR_STATES = ("LV-bull", "LV-bear", "HV-bull", "HV-bear")
LABELS = ("Bullish", "Bearish", "Other")


@dataclass
class MsrModel:
    """Two-state Gaussian Markov-switching model; state 0 = low variance."""

    transition: np.ndarray  # (2, 2) row-stochastic
    mu: np.ndarray  # (2,)
    sigma2: np.ndarray  # (2,)
    log_likelihood: float = np.nan
    converged: bool = False
    n_iter: int = 0

    def validate(self):
        if self.transition.shape != (2, 2):
            raise DataError("transition matrix must be 2x2")
        if np.any(self.transition < 0) or np.any(self.transition > 1):
            raise DataError("transition entries must lie in [0, 1]")
        if np.max(np.abs(self.transition.sum(axis=1) - 1.0)) > 1e-10:
            raise DataError("transition rows must sum to 1")
        if np.any(self.sigma2 <= 0):
            raise DataError("state variances must be positive")


@dataclass
class RegimeSegmentation:
    """Per-day states and the derived three-class targets."""

    dates: np.ndarray
    variance_state: np.ndarray  # 0 = LV, 1 = HV
    trend_state: np.ndarray  # +1 bull, -1 bear
    four_state: np.ndarray  # strings from FOUR_STATES
    target_label: np.ndarray = None  # strings from LABELS, set by generate_labels


def _log_gauss(x, mu, sigma2):
    return -0.5 * (np.log(2 * np.pi * sigma2) + (x - mu) ** 2 / sigma2)


def hamilton_filter(returns, model: MsrModel, initial=None):
    """Forward recursion in log space.

    Returns (filtered_probs (T, 2), log_likelihood). The likelihood is the
    sum of per-step predictive log densities. ``initial`` defaults to the
    uniform distribution used throughout fitting.
    """
    r = np.asarray(returns, float)
    if r.size == 0:
        raise DataError("empty return series")
    if np.any(np.isnan(r)):
        raise NumericalError("NaN in return series")
    model.validate()

    init = np.full(2, 0.5) if initial is None else np.asarray(initial, float)
    log_obs = np.stack([_log_gauss(r, model.mu[s], model.sigma2[s]) for s in (0, 1)], axis=1)
    return scaled_filter(log_obs, model.transition, init)


def forward_backward(returns, model: MsrModel, initial=None):
    """Smoothed state probabilities plus pairwise transition expectations.

    Returns (gamma (T, 2), xi (T-1, 2, 2), log_likelihood).
    """
    r = np.asarray(returns, float)
    model.validate()
    init = np.full(2, 0.5) if initial is None else np.asarray(initial, float)
    log_obs = np.stack([_log_gauss(r, model.mu[s], model.sigma2[s]) for s in (0, 1)], axis=1)
    return scaled_forward_backward(log_obs, model.transition, init)


def fit_msr(returns, max_iter: int = 200, tol: float = 1e-6) -> MsrModel:
    """EM fit of the two-state switching model.

    Deterministic initialization: returns are split by absolute size around
    the median to seed the two variances; persistence starts at 0.95. The
    initial state distribution is held fixed at uniform, so the likelihood is
    non-decreasing across iterations. States are relabeled afterwards so that
    index 0 carries the smaller variance.
    """
    r = np.asarray(returns, float)
    if len(r) < 50:
        raise DataError(f"need >= 50 returns to fit the switching model, have {len(r)}")
    if max_iter < 1:
        raise DataError("max_iter must be >= 1")

    absr = np.abs(r)
    calm = absr <= np.median(absr)
    sigma2 = np.array([
        max(np.var(r[calm]), VARIANCE_FLOOR) if calm.any() else np.var(r),
        max(np.var(r[~calm]), VARIANCE_FLOOR) if (~calm).any() else np.var(r) * 2,
    ])
    if sigma2[1] <= sigma2[0]:
        sigma2[1] = sigma2[0] * 2 + VARIANCE_FLOOR
    model = MsrModel(
        transition=np.array([[0.95, 0.05], [0.05, 0.95]]),
        mu=np.array([r.mean(), r.mean()]),
        sigma2=sigma2,
    )

    prev_ll = -np.inf
    history = []
    for it in range(1, max_iter + 1):
        gamma, xi, ll = forward_backward(r, model)
        history.append(ll)
        model.log_likelihood = ll
        model.n_iter = it
        if ll - prev_ll < tol and it > 1:
            model.converged = True
            break
        prev_ll = ll

        denom = gamma.sum(axis=0)
        mu = (gamma * r[:, None]).sum(axis=0) / denom
        sigma2 = (gamma * (r[:, None] - mu[None, :]) ** 2).sum(axis=0) / denom
        sigma2 = np.maximum(sigma2, VARIANCE_FLOOR)
        trans = xi.sum(axis=0)
        trans /= np.maximum(trans.sum(axis=1, keepdims=True), 1e-300)
        model = MsrModel(trans, mu, sigma2, ll, False, it)

    if model.sigma2[0] > model.sigma2[1]:
        perm = [1, 0]
        model = MsrModel(
            model.transition[np.ix_(perm, perm)],
            model.mu[perm],
            model.sigma2[perm],
            model.log_likelihood,
            model.converged,
            model.n_iter,
        )
    model.em_history = history
    return model


def kama_trend(closes, er_window: int = 10, fast: int = 2, slow: int = 30,
               band: float = 0.001) -> np.ndarray:
    """Bull/bear state from price crossing the adaptive average.

    Flips to bull when close > kama*(1+band) and to bear when
    close < kama*(1-band); inside the band the previous state persists. Days
    before the first crossing take the first crossing's state.
    """
    if band < 0:
        raise DataError("hysteresis band must be >= 0")
    closes = np.asarray(closes, float)
    k = kama(closes, er_window, fast, slow)
    state = np.zeros(len(closes), dtype=int)
    current = 0
    for t in range(len(closes)):
        if np.isnan(k[t]):
            continue
        if closes[t] > k[t] * (1 + band):
            current = BULL
        elif closes[t] < k[t] * (1 - band):
            current = BEAR
        state[t] = current
    # backfill the pre-crossing prefix with the first decided state
    decided = np.flatnonzero(state != 0)
    if decided.size == 0:
        return np.full(len(closes), BULL)
    state[: decided[0]] = state[decided[0]]
    return state


def combine_states(dates, variance_state, trend_state) -> RegimeSegmentation:
    """Pointwise product of the two binary axes into the four named states."""
    variance_state = np.asarray(variance_state, int)
    trend_state = np.asarray(trend_state, int)
    if not (len(dates) == len(variance_state) == len(trend_state)):
        raise DataError("state arrays must share the date index length")
    four = np.empty(len(dates), dtype=object)
    for i in range(len(dates)):
        vs = "LV" if variance_state[i] == LV else "HV"
        ts = "bull" if trend_state[i] == BULL else "bear"
        four[i] = f"{vs}-{ts}"
    return RegimeSegmentation(np.asarray(dates), variance_state, trend_state, four)


def _segments(four_state):
    """Maximal runs of equal four-state values as (state, start, end_excl)."""
    segs = []
    start = 0
    for i in range(1, len(four_state) + 1):
        if i == len(four_state) or four_state[i] != four_state[start]:
            segs.append((four_state[start], start, i))
            start = i
    return segs


def generate_labels(seg: RegimeSegmentation, prices: PriceSeries,
                    roundtrip_cost: float = 0.0) -> np.ndarray:
    """Collapse the four states into the three trading targets.

    See the module docstring for the extension rules. ``roundtrip_cost`` is a
    fraction (0.004 = 0.40%); any Bullish/Bearish episode whose gross
    absolute return from episode start to episode end is <= that cost is
    converted to Other. The result is also stored on ``seg.target_label``.
    """
    if len(seg.dates) != len(prices):
        raise DataError("segmentation and prices are not aligned")
    n = len(seg.dates)
    labels = np.full(n, "Other", dtype=object)
    close = prices.close
    segs = _segments(seg.four_state)

    for idx, (state, a, b) in enumerate(segs):
        if state == "LV-bull":
            labels[a:b] = "Bullish"
            if idx + 1 < len(segs) and segs[idx + 1][0] == "HV-bull":
                na, nb = segs[idx + 1][1], segs[idx + 1][2]
                peak = na + int(np.argmax(close[na:nb]))
                labels[na: peak + 1] = "Bullish"
        elif state == "HV-bear":
            labels[a:b] = "Bearish"
            if idx + 1 < len(segs) and segs[idx + 1][0] == "LV-bear":
                na, nb = segs[idx + 1][1], segs[idx + 1][2]
                trough = na + int(np.argmin(close[na:nb]))
                labels[na: trough + 1] = "Bearish"

    # drop episodes that could not cover their round-trip cost
    for label, a, b in _segments(labels):
        if label == "Other":
            continue
        gross = abs(close[b - 1] / close[a] - 1.0)
        if gross <= roundtrip_cost:
            labels[a:b] = "Other"

    seg.target_label = labels
    return labels


def segment_regimes(prices: PriceSeries, er_window: int = 10, fast: int = 2,
                    slow: int = 30, band: float = 0.001, max_iter: int = 200,
                    tol: float = 1e-6) -> tuple:
    """Fit the switching model and the trend rule on one asset.

    Returns (RegimeSegmentation, MsrModel). Variance states come from
    smoothed probabilities thresholded at 0.5 (label generation is an
    in-sample procedure, so smoothing is allowed); day 0, which has no
    return, inherits day 1's variance state.
    """
    returns = prices.close[1:] / prices.close[:-1] - 1.0
    model = fit_msr(returns, max_iter=max_iter, tol=tol)
    gamma, _, _ = forward_backward(returns, model)
    var_state = (gamma[:, HV] > 0.5).astype(int)
    var_state = np.concatenate([[var_state[0]], var_state])
    trend = kama_trend(prices.close, er_window, fast, slow, band)
    seg = combine_states(prices.dates, var_state, trend)
    return seg, model
