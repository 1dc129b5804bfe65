"""Two-state Hamilton filter and forward-filtering backward-sampling."""
from __future__ import annotations

import numpy as np
from numba import njit


def ergodic_probabilities(p11: float, p22: float) -> np.ndarray:
    """Stationary distribution of the two-state chain."""
    denom = 2.0 - p11 - p22
    if denom <= 0:
        raise ValueError("chain with p11 = p22 = 1 has no unique ergodic distribution")
    return np.array([(1.0 - p22) / denom, (1.0 - p11) / denom])


@njit(cache=True)
def _forward(log_em, p11, p22, init):
    T = log_em.shape[0]
    filt = np.empty((T + 1, 2))
    filt[0, 0] = init[0]
    filt[0, 1] = init[1]
    loglik = 0.0
    for t in range(T):
        pr1 = filt[t, 0] * p11 + filt[t, 1] * (1.0 - p22)
        pr2 = filt[t, 0] * (1.0 - p11) + filt[t, 1] * p22
        m = max(log_em[t, 0], log_em[t, 1])
        a1 = pr1 * np.exp(log_em[t, 0] - m)
        a2 = pr2 * np.exp(log_em[t, 1] - m)
        s = a1 + a2
        filt[t + 1, 0] = a1 / s
        filt[t + 1, 1] = a2 / s
        loglik += m + np.log(s)
    return filt, loglik


@njit(cache=True)
def _backward_sample(filt, p11, p22, u):
    T = filt.shape[0] - 1
    path = np.empty(T + 1, dtype=np.int64)
    path[T] = 1 if u[T] < filt[T, 0] else 2
    for t in range(T - 1, -1, -1):
        if path[t + 1] == 1:
            w1 = filt[t, 0] * p11
            w2 = filt[t, 1] * (1.0 - p22)
        else:
            w1 = filt[t, 0] * (1.0 - p11)
            w2 = filt[t, 1] * p22
        path[t] = 1 if u[t] * (w1 + w2) < w1 else 2
    return path


@njit(cache=True)
def _backward_smooth(filt, p11, p22):
    T = filt.shape[0] - 1
    sm = np.empty_like(filt)
    sm[T] = filt[T]
    for t in range(T - 1, -1, -1):
        pr1 = filt[t, 0] * p11 + filt[t, 1] * (1.0 - p22)
        pr2 = filt[t, 0] * (1.0 - p11) + filt[t, 1] * p22
        r1 = sm[t + 1, 0] / pr1 if pr1 > 0 else 0.0
        r2 = sm[t + 1, 1] / pr2 if pr2 > 0 else 0.0
        sm[t, 0] = filt[t, 0] * (p11 * r1 + (1.0 - p11) * r2)
        sm[t, 1] = filt[t, 1] * ((1.0 - p22) * r1 + p22 * r2)
    return sm


def _initial(p11, p22, initial):
    if initial is None:
        return ergodic_probabilities(p11, p22)
    init = np.asarray(initial, dtype=float)
    return init / init.sum()


def forward_filter(log_emission, p11, p22, initial=None):
    """Filtered probabilities Pr(S_t | y_1..t) for t = 0..T and log p(y).

    ``log_emission`` is ``T x 2``.  Each step is rescaled by the larger
    log-density so long samples do not underflow.
    """
    log_em = np.ascontiguousarray(log_emission, dtype=float)
    return _forward(log_em, float(p11), float(p22), _initial(p11, p22, initial))


def smoothed_probabilities(log_emission, p11, p22, initial=None) -> np.ndarray:
    """Pr(S_t = m | y_1..T) for t = 0..T, shape ``(T + 1) x 2``."""
    filt, _ = forward_filter(log_emission, p11, p22, initial)
    return _backward_smooth(filt, float(p11), float(p22))


def sample_states(log_emission, p11, p22, rng, initial=None) -> np.ndarray:
    """One exact draw of S_0..S_T (labels 1/2) given emissions and transitions."""
    filt, _ = forward_filter(log_emission, p11, p22, initial)
    u = rng.random(filt.shape[0])
    return _backward_sample(filt, float(p11), float(p22), u)
