"""Scaled forward / forward-backward recursions shared by the switching model
and the HMM benchmark.

Works on per-step log observation densities. Each forward step normalizes the
state distribution and keeps the log normalizer, which is stable without
paying for log-sum-exp inside the time loop; a per-step max subtraction on
the densities guards against underflow from extreme outliers.
"""

import numpy as np

__all__ = ["scaled_filter", "scaled_forward_backward"]


def scaled_filter(log_obs, transition, initial):
    """Filtered state probabilities and total log likelihood.

    ``log_obs`` is (T, k) per-state log densities. Returns
    (filtered (T, k), log_likelihood).
    """
    T, k = log_obs.shape
    shift = log_obs.max(axis=1)
    obs = np.exp(log_obs - shift[:, None])
    filtered = np.empty((T, k))
    pred = np.asarray(initial, float)
    loglik = 0.0
    for t in range(T):
        joint = pred * obs[t]
        c = joint.sum()
        loglik += np.log(c) + shift[t]
        filtered[t] = joint / c
        pred = filtered[t] @ transition
    return filtered, float(loglik)


def scaled_forward_backward(log_obs, transition, initial):
    """Smoothed probabilities and pairwise expectations.

    Returns (gamma (T, k), xi (T-1, k, k), log_likelihood). gamma rows sum to
    1; xi[t] sums to 1 over both axes.
    """
    T, k = log_obs.shape
    shift = log_obs.max(axis=1)
    obs = np.exp(log_obs - shift[:, None])

    alpha = np.empty((T, k))
    c = np.empty(T)
    joint = np.asarray(initial, float) * obs[0]
    c[0] = joint.sum()
    alpha[0] = joint / c[0]
    for t in range(1, T):
        joint = (alpha[t - 1] @ transition) * obs[t]
        c[t] = joint.sum()
        alpha[t] = joint / c[t]
    loglik = float(np.sum(np.log(c)) + np.sum(shift))

    beta = np.empty((T, k))
    beta[-1] = 1.0
    for t in range(T - 2, -1, -1):
        beta[t] = transition @ (obs[t + 1] * beta[t + 1]) / c[t + 1]

    gamma = alpha * beta
    gamma /= gamma.sum(axis=1, keepdims=True)
    xi = alpha[:-1, :, None] * transition[None, :, :] \
        * (obs[1:] * beta[1:])[:, None, :] / c[1:, None, None]
    return gamma, xi, loglik
