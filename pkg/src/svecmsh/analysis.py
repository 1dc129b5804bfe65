"""Impulse responses, variance decompositions, shocks and posterior summaries."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .model import Dataset, ModelParameters, levels_var_coefficients, long_run_matrix, residuals


def ma_coefficients(params: ModelParameters, horizon: int) -> np.ndarray:
    """Theta_0..Theta_H of the levels MA representation, shape (H+1, n, n)."""
    A = levels_var_coefficients(params)
    n, p = params.n, len(A)
    theta = np.zeros((horizon + 1, n, n))
    theta[0] = np.eye(n)
    for h in range(1, horizon + 1):
        acc = np.zeros((n, n))
        for j in range(1, min(h, p) + 1):
            acc += A[j - 1] @ theta[h - j]
        theta[h] = acc
    return theta


def _state_lambda(params, state):
    if state not in (1, 2):
        raise ValueError("state must be 1 or 2")
    return params.lambda1 if state == 1 else params.lambda2


def irf(params: ModelParameters, horizon: int, state: int = 1, unit_shock: bool = False) -> np.ndarray:
    """Responses Theta_h B Lambda_m^{1/2}; entry [h, i, j] is variable i to shock j.

    With ``unit_shock`` the Lambda scaling is dropped (Theta_h B).
    """
    theta = ma_coefficients(params, horizon)
    impact = params.B if unit_shock else params.B * np.sqrt(_state_lambda(params, state))
    return theta @ impact


def long_run_response(params: ModelParameters, state: int = 1) -> np.ndarray:
    """Xi B Lambda_m^{1/2}, the limit of the state-m responses."""
    return long_run_matrix(params) @ (params.B * np.sqrt(_state_lambda(params, state)))


def fevd(params: ModelParameters, horizon: int, state: int = 1) -> np.ndarray:
    """Forecast-error variance shares; entry [h-1, i, j] for h = 1..H.

    Share of shock j in variable i's h-step forecast-error variance, using the
    responses at lags 0..h-1.
    """
    resp = irf(params, horizon - 1, state)
    cum = np.cumsum(resp**2, axis=0)
    total = cum.sum(axis=2, keepdims=True)
    if np.any(total <= 0):
        raise ValueError("zero forecast-error variance; shares are undefined")
    return cum / total


def shock_estimates(dataset: Dataset, params: ModelParameters) -> np.ndarray:
    """Structural shocks eps_t = B^{-1} u_t at a point estimate, T x n."""
    U = residuals(dataset.Z0, dataset.Z1, dataset.Z2, params)
    return np.linalg.solve(params.B, U.T).T


@dataclass(frozen=True)
class PosteriorSummary:
    median: float
    mean: float
    hpd_low: float
    hpd_high: float
    level: float


def hpd_interval(draws, level: float = 0.95):
    """Shortest interval over the sorted draws containing ceil(level * N) of them."""
    x = np.sort(np.asarray(draws, dtype=float).ravel())
    N = x.shape[0]
    if N == 0:
        raise ValueError("no draws")
    if not 0 < level <= 1:
        raise ValueError("level must lie in (0, 1]")
    k = min(int(np.ceil(level * N - 1e-9)), N)
    k = max(k, 1)
    widths = x[k - 1:] - x[: N - k + 1]
    i = int(np.argmin(widths))
    return float(x[i]), float(x[i + k - 1])


def posterior_summary(draws, level: float = 0.95) -> PosteriorSummary:
    x = np.asarray(draws, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("posterior summary of an empty sample")
    lo, hi = hpd_interval(x, level)
    return PosteriorSummary(float(np.median(x)), float(np.mean(x)), lo, hi, level)


def lindley_test(contrast_draws):
    """(mean / sd)^2 of the draws and its chi-square(1) upper-tail probability."""
    x = np.asarray(contrast_draws, dtype=float).ravel()
    if x.size < 2:
        raise ValueError("need at least two draws")
    sd = np.std(x, ddof=1)
    if sd == 0:
        raise ValueError("contrast draws have zero standard deviation")
    stat = float((np.mean(x) / sd) ** 2)
    return stat, float(stats.chi2.sf(stat, 1))


def lindley_p_value(statistic: float) -> float:
    return float(stats.chi2.sf(statistic, 1))


def contrasts(omega2_draws) -> dict:
    """Draws of omega_{2,j} - omega_{2,i} for every pair i < j (0-based keys)."""
    W = np.atleast_2d(np.asarray(omega2_draws, dtype=float))
    return {(i, j): W[:, j] - W[:, i] for i, j in itertools.combinations(range(W.shape[1]), 2)}


# --------------------------------------------------------------------------
# Posterior bands over a draw store
# --------------------------------------------------------------------------


def irf_draws(store, horizon: int, state: int = 1) -> np.ndarray:
    """Per-draw responses, shape (N, H+1, n, n)."""
    return np.stack([irf(p, horizon, state) for p in _normalised_params(store)])


def irf_bands(store, horizon: int, quantiles=(0.16, 0.5, 0.84)) -> dict:
    """Pointwise quantiles of per-draw responses for both states."""
    out = {}
    for m in (1, 2):
        draws = irf_draws(store, horizon, m)
        out[m] = np.quantile(draws, quantiles, axis=0)
    return out


def fevd_bands(store, horizon: int, quantiles=(0.16, 0.5, 0.84)) -> dict:
    out = {}
    for m in (1, 2):
        draws = np.stack([fevd(p, horizon, m) for p in _normalised_params(store)])
        out[m] = np.quantile(draws, quantiles, axis=0)
    return out


def _normalised_params(store):
    # IRFs depend only on alpha beta' which is invariant to the normalisation.
    for i in range(store.n_draws):
        yield store.params_at(i)


def parameter_summaries(store, level: float = 0.95) -> list:
    """Rows (name, median, mean, hpd_low, hpd_high) for every scalar of interest."""
    rows = []
    n = store.meta["n"]

    def add(name, x):
        s = posterior_summary(x, level)
        rows.append((name, s.median, s.mean, s.hpd_low, s.hpd_high))

    B = store["B"]
    for i in range(n):
        for j in range(n):
            if i != j:
                add(f"B[{i + 1},{j + 1}]", B[:, i, j])
    for m in (1, 2):
        lam = store[f"lambda{m}"]
        for i in range(n):
            add(f"lambda{m}[{i + 1}]", lam[:, i])
    om = store.omega2
    for i in range(n):
        add(f"omega2[{i + 1}]", om[:, i])
    for (i, j), c in contrasts(om).items():
        add(f"omega2[{j + 1}]-omega2[{i + 1}]", c)
    add("p11", store["p11"])
    add("p22", store["p22"])
    alpha, beta = store["alpha"], store["beta"]
    for i in range(alpha.shape[1]):
        for k in range(alpha.shape[2]):
            add(f"alpha[{i + 1},{k + 1}]", alpha[:, i, k])
    for i in range(beta.shape[1]):
        for k in range(beta.shape[2]):
            add(f"beta[{i + 1},{k + 1}]", beta[:, i, k])
    return rows
