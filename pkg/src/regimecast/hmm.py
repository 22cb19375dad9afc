"""Gaussian hidden Markov model benchmark.

Baum-Welch in log space on raw daily returns. The trading signal is a
continuation bet: filter to today, push the state belief one step through the
transition matrix, and trade the sign of the most likely next state's mean.
"""

from dataclasses import dataclass

import numpy as np

from ._filtering import scaled_filter, scaled_forward_backward
from .errors import ConfigError, DataError, NumericalError

__all__ = ["HmmModel", "fit_hmm", "hmm_filter", "hmm_signal", "hmm_signals",
           "hmm_to_dict", "hmm_from_dict"]

VARIANCE_FLOOR = 1e-12

LONG, SHORT, FLAT = 1, -1, 0


@dataclass
class HmmModel:
    transition: np.ndarray  # (k, k) row-stochastic
    means: np.ndarray  # (k,)
    variances: np.ndarray  # (k,)
    initial: np.ndarray  # (k,)
    log_likelihood: float = np.nan
    converged: bool = False
    n_iter: int = 0

    @property
    def n_states(self):
        return len(self.means)

    def validate(self):
        k = self.n_states
        if self.transition.shape != (k, k):
            raise DataError("transition shape mismatch")
        if np.max(np.abs(self.transition.sum(axis=1) - 1.0)) > 1e-10:
            raise DataError("transition rows must sum to 1")
        if abs(self.initial.sum() - 1.0) > 1e-10:
            raise DataError("initial distribution must sum to 1")
        if np.any(self.variances <= 0):
            raise DataError("variances must be positive")


def _log_obs(r, model):
    return -0.5 * (np.log(2 * np.pi * model.variances[None, :])
                   + (r[:, None] - model.means[None, :]) ** 2 / model.variances[None, :])


def hmm_filter(returns, model: HmmModel):
    """Forward filter; returns (filtered (T, k), log_likelihood)."""
    r = np.asarray(returns, float)
    if r.size == 0:
        raise DataError("empty return series")
    if np.any(np.isnan(r)):
        raise NumericalError("NaN in return series")
    model.validate()
    return scaled_filter(_log_obs(r, model), model.transition, model.initial)


def _forward_backward(r, model):
    return scaled_forward_backward(_log_obs(r, model), model.transition, model.initial)


def fit_hmm(returns, n_states: int = 3, max_iter: int = 200, tol: float = 1e-6,
            seed: int = 0) -> HmmModel:
    """Baum-Welch fit; states are sorted by mean ascending afterwards.

    Means are initialized at spread quantiles of the data with a small seeded
    jitter, variances at the sample variance, transitions at 0.9 persistence.
    """
    r = np.asarray(returns, float)
    if len(r) < 100:
        raise DataError(f"need >= 100 returns to fit the HMM, have {len(r)}")
    if n_states < 1:
        raise ConfigError("n_states must be >= 1")

    if n_states == 1:
        m = HmmModel(np.ones((1, 1)), np.array([r.mean()]),
                     np.array([max(r.var(), VARIANCE_FLOOR)]), np.ones(1))
        _, ll = hmm_filter(r, m)
        m.log_likelihood = ll
        m.converged = True
        return m

    rng = np.random.default_rng(seed)
    qs = np.quantile(r, np.linspace(0.15, 0.85, n_states))
    means = qs + rng.normal(0, max(r.std(), 1e-8) * 0.05, n_states)
    variances = np.full(n_states, max(r.var(), VARIANCE_FLOOR))
    trans = np.full((n_states, n_states), 0.1 / (n_states - 1))
    np.fill_diagonal(trans, 0.9)
    model = HmmModel(trans, means, variances, np.full(n_states, 1.0 / n_states))

    prev_ll = -np.inf
    history = []
    for it in range(1, max_iter + 1):
        gamma, xi, ll = _forward_backward(r, model)
        history.append(ll)
        model.log_likelihood = ll
        model.n_iter = it
        if ll - prev_ll < tol and it > 1:
            model.converged = True
            break
        prev_ll = ll
        denom = gamma.sum(axis=0)
        means = (gamma * r[:, None]).sum(axis=0) / denom
        variances = np.maximum(
            (gamma * (r[:, None] - means[None, :]) ** 2).sum(axis=0) / denom, VARIANCE_FLOOR)
        trans = xi.sum(axis=0)
        trans /= np.maximum(trans.sum(axis=1, keepdims=True), 1e-300)
        initial = gamma[0] / gamma[0].sum()
        model = HmmModel(trans, means, variances, initial, ll, False, it)

    order = np.argsort(model.means)
    model = HmmModel(model.transition[np.ix_(order, order)], model.means[order],
                     model.variances[order], model.initial[order],
                     model.log_likelihood, model.converged, model.n_iter)
    model.em_history = history
    return model


def hmm_signal(model: HmmModel, returns_to_date, dead_band: float = 0.0) -> int:
    """One continuation signal from all returns observed so far.

    Predicted next state = argmax of filtered_t @ transition; long if its
    mean exceeds the dead band, short if below the negative dead band, else
    flat.
    """
    filtered, _ = hmm_filter(returns_to_date, model)
    pred = filtered[-1] @ model.transition
    state = int(np.argmax(pred))
    mean = model.means[state]
    if abs(mean) <= dead_band:
        return FLAT
    return LONG if mean > 0 else SHORT


def hmm_signals(model: HmmModel, returns, dead_band: float = 0.0) -> np.ndarray:
    """Causal signal per day: entry t uses returns[0..t] only."""
    r = np.asarray(returns, float)
    filtered, _ = hmm_filter(r, model)
    pred = filtered @ model.transition
    states = np.argmax(pred, axis=1)
    means = model.means[states]
    out = np.where(means > dead_band, LONG, np.where(means < -dead_band, SHORT, FLAT))
    out[np.abs(means) <= dead_band] = FLAT
    return out.astype(int)


def hmm_to_dict(model: HmmModel) -> dict:
    return {
        "format": "regimecast-hmm-v1",
        "transition": model.transition.tolist(),
        "means": model.means.tolist(),
        "variances": model.variances.tolist(),
        "initial": model.initial.tolist(),
        "log_likelihood": model.log_likelihood,
        "converged": model.converged,
        "n_iter": model.n_iter,
    }


def hmm_from_dict(doc: dict) -> HmmModel:
    if doc.get("format") != "regimecast-hmm-v1":
        raise DataError(f"unknown model format {doc.get('format')!r}")
    return HmmModel(
        np.asarray(doc["transition"], float),
        np.asarray(doc["means"], float),
        np.asarray(doc["variances"], float),
        np.asarray(doc["initial"], float),
        doc.get("log_likelihood", np.nan),
        doc.get("converged", False),
        doc.get("n_iter", 0),
    )
