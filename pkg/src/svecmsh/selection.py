"""Cointegration-rank comparison through the Savage-Dickey density ratio.

Each rank-r model is compared with the common restricted model alpha_* = 0,
Gamma = 0 (a random walk with switching volatility).  The log10 Bayes factor
in favour of the unrestricted model is

    log10 B_uc = [log p(0 | M_u) - log p(0 | y, M_u)] / ln 10.

The prior density at the restriction is the product of the normal priors of
alpha_* and Gamma at zero, corrected for the spectral-radius truncation of
the joint prior (the restriction point itself always satisfies it).  The
posterior density is estimated from the retained draws.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from .model import (
    Dataset,
    ModelParameters,
    UNIT_ROOT_TOL,
    build_free_entry_map,
    companion_spectral_radius,
    partition_by_state,
)
from .priors import HyperParameters
from .sampler import ChainConfig, DrawStore, procrustes_rotation, run_chain, state_precisions

logger = logging.getLogger(__name__)

LN10 = np.log(10.0)


def gaussian_log_density_at(draws, point, jitter: float = 1e-10) -> float:
    """Log density at ``point`` of a normal fitted to the rows of ``draws``."""
    X = np.atleast_2d(np.asarray(draws, dtype=float))
    if X.shape[0] == 1 and X.shape[1] > 1 and np.ndim(draws) == 1:
        X = X.T
    point = np.broadcast_to(np.asarray(point, dtype=float), (X.shape[1],))
    mean = X.mean(axis=0)
    cov = np.atleast_2d(np.cov(X, rowvar=False))
    for attempt in range(2):
        try:
            L = np.linalg.cholesky(cov)
            break
        except np.linalg.LinAlgError:
            if attempt:
                raise ValueError("posterior covariance of the restricted block is degenerate") from None
            cov = cov + jitter * max(np.trace(cov) / cov.shape[0], 1e-300) * np.eye(cov.shape[0])
    z = np.linalg.solve(L, point - mean)
    d = X.shape[1]
    return float(-0.5 * z @ z - np.sum(np.log(np.diag(L))) - 0.5 * d * np.log(2 * np.pi))


def kde_log_density_at(draws, point) -> float:
    """Gaussian-kernel density estimate (Scott bandwidth) at ``point``."""
    X = np.atleast_2d(np.asarray(draws, dtype=float))
    if np.ndim(draws) == 1:
        X = X.T
    kde = stats.gaussian_kde(X.T)
    point = np.broadcast_to(np.asarray(point, dtype=float), (X.shape[1],))
    return float(kde.logpdf(point[:, None])[0])


DENSITY_ESTIMATORS = {"gaussian": gaussian_log_density_at, "kde": kde_log_density_at}


def savage_dickey(posterior_draws, log_prior_at_point: float, point=0.0, method: str = "gaussian") -> float:
    """log10 of the Bayes factor of the unrestricted against the restricted model."""
    if method not in DENSITY_ESTIMATORS:
        raise ValueError(f"unknown density estimator {method!r}")
    log_post = DENSITY_ESTIMATORS[method](posterior_draws, point)
    return float((log_prior_at_point - log_post) / LN10)


def _normal_logpdf_at_zero(mean, cov) -> float:
    mean = np.asarray(mean, dtype=float).ravel()
    if mean.size == 0:
        return 0.0
    return float(stats.multivariate_normal(mean, cov).logpdf(np.zeros_like(mean)))


def restriction_prior_log_density(hyper: HyperParameters, rank: int) -> float:
    """Untruncated normal prior of (vec(alpha_*'), vec(Gamma)) evaluated at zero."""
    n = hyper.n
    lp = _normal_logpdf_at_zero(np.zeros(n * rank), np.kron(hyper.omega_a, np.eye(rank)))
    lp += _normal_logpdf_at_zero(hyper.mu_gamma.reshape(-1, order="F"),
                                 np.kron(np.eye(n), hyper.omega_gamma))
    return lp


def prior_nonexplosive_probability(hyper: HyperParameters, rank: int, lag_order: int,
                                   n_draws: int = 20_000, rng=None) -> float:
    """Monte Carlo Pr(rho(A) <= 1) under the untruncated normal priors."""
    rng = np.random.default_rng(0) if rng is None else rng
    n = hyper.n
    n_tilde = hyper.P.shape[0]
    k2 = hyper.omega_gamma.shape[0]
    La = np.linalg.cholesky(hyper.omega_a)
    Lp = np.linalg.cholesky(hyper.P)
    Lg = np.linalg.cholesky(hyper.omega_gamma) if k2 else np.zeros((0, 0))
    fmap = build_free_entry_map(n)
    ones = np.ones(n)
    hits = 0
    for _ in range(n_draws):
        a = La @ rng.standard_normal((n, rank))
        b = Lp @ rng.standard_normal((n_tilde, rank))
        g = hyper.mu_gamma + Lg @ rng.standard_normal((k2, n))
        params = ModelParameters(a, b, g, np.zeros(fmap.d_b), ones, ones, 0.5, 0.5, lag_order, fmap)
        hits += companion_spectral_radius(params) <= 1.0 + UNIT_ROOT_TOL
    return max(hits, 1) / n_draws


def restricted_block_draws(store: DrawStore) -> np.ndarray:
    """Rows (vec(alpha_*'), vec(Gamma)) per draw, with alpha_* rotation-aligned.

    alpha_* is only defined up to alpha_* R, beta_* R (R orthogonal), a symmetry
    shared by its prior; each draw is rotated so its beta_* is closest to a
    common reference, which keeps the Gaussian fit unimodal.
    """
    a = store["alpha_star"].copy()
    b = store["beta_star"]
    N, n, r = a.shape
    if r and N:
        ref = b[0]
        for _ in range(2):
            rots = [procrustes_rotation(b[i], ref) for i in range(N)]
            ref = np.mean([b[i] @ rots[i] for i in range(N)], axis=0)
        for i in range(N):
            a[i] = a[i] @ rots[i]
    vec_a = a.reshape(N, -1)  # row-major alpha_* is vec(alpha_*')
    g = store["gamma"]
    vec_g = g.transpose(0, 2, 1).reshape(N, -1)  # vec(Gamma), column-major
    return np.hstack([vec_a, vec_g])


def _block_order(n: int, rank: int, k2: int) -> np.ndarray:
    """Positions of (vec(alpha_*'), vec(Gamma)) inside vec([alpha_*'; Gamma])."""
    rows = rank + k2
    a_idx = [j * rows + k for j in range(n) for k in range(rank)]
    g_idx = [j * rows + rank + i for j in range(n) for i in range(k2)]
    return np.array(a_idx + g_idx, dtype=int)


def conditional_log_density_at_zero(dataset: Dataset, params: ModelParameters, path_1T,
                                    hyper: HyperParameters) -> float:
    """Log of the Gaussian conditional density of (vec(alpha_*'), vec(Gamma)) at zero.

    Conditions on beta_*, B, the variances and the state path; the coefficients
    ``[alpha_*'; Gamma]`` then enter a multivariate regression on
    ``[Z1 beta_*, Z2]`` with state-dependent error covariance.
    """
    n, r = params.n, params.rank
    k2 = params.gamma.shape[0]
    order = _block_order(n, r, k2)
    d = order.size
    prior_prec = np.zeros((d, d))
    prior_prec[: n * r, : n * r] = np.kron(np.linalg.inv(hyper.omega_a), np.eye(r))
    prior_prec[n * r:, n * r:] = np.kron(np.eye(n), np.linalg.inv(hyper.omega_gamma)) if k2 else 0.0
    prior_mean = np.concatenate([np.zeros(n * r), hyper.mu_gamma.reshape(-1, order="F")])
    K = prior_prec.copy()
    c = prior_prec @ prior_mean
    partition = partition_by_state(dataset, path_1T)
    for Sinv, m in zip(state_precisions(params.B, params.lambdas), (1, 2)):
        blk = partition[m]
        if blk.count == 0:
            continue
        X = np.hstack([blk.Z1 @ params.beta_star, blk.Z2])
        K += np.kron(Sinv, X.T @ X)[np.ix_(order, order)]
        c += (X.T @ blk.Z0 @ Sinv).reshape(-1, order="F")[order]
    L = np.linalg.cholesky(0.5 * (K + K.T))
    z = np.linalg.solve(L, c)
    return float(np.sum(np.log(np.diag(L))) - 0.5 * d * np.log(2 * np.pi) - 0.5 * z @ z)


def conditional_log_density(store: DrawStore, dataset: Dataset, hyper: HyperParameters) -> float:
    """Rao-Blackwellised log p(alpha_* = 0, Gamma = 0 | y) averaged over the draws."""
    if "paths" not in store:
        raise ValueError("the conditional estimator needs stored state paths")
    vals = [conditional_log_density_at_zero(dataset, store.params_at(i), store["paths"][i, 1:], hyper)
            for i in range(store.n_draws)]
    return float(logsumexp(vals) - np.log(len(vals)))


@dataclass
class SddrResult:
    rank: int
    log10_bayes_factor: float
    log_prior_at_zero: float
    log_posterior_at_zero: float
    log_truncation_probability: float
    method: str
    n_draws: int
    extra: dict = field(default_factory=dict)


POSTERIOR_METHODS = ("gaussian", "kde", "conditional")


def sddr_from_store(store: DrawStore, hyper: HyperParameters, method: str = "conditional",
                    truncation_draws: int = 20_000, rng=None,
                    dataset: Optional[Dataset] = None) -> SddrResult:
    """Savage-Dickey ratio from one rank's draws.

    ``method`` picks the posterior density estimate at zero: a normal fit
    (``gaussian``), a kernel estimate (``kde``), or the average of the exact
    conditional normal densities given the remaining blocks (``conditional``,
    needs ``dataset`` and stored paths).
    """
    if method not in POSTERIOR_METHODS:
        raise ValueError(f"unknown density estimator {method!r}")
    rank = store.meta["rank"]
    X = restricted_block_draws(store)
    if X.shape[0] < X.shape[1] + 2:
        raise ValueError("too few draws for the posterior density estimate")
    log_prior = restriction_prior_log_density(hyper, rank)
    log_trunc = np.log(prior_nonexplosive_probability(hyper, rank, store.meta["lag_order"],
                                                      truncation_draws, rng))
    log_prior -= log_trunc
    if method == "conditional":
        if dataset is None:
            raise ValueError("the conditional estimator needs the dataset")
        log_post = conditional_log_density(store, dataset, hyper)
    else:
        log_post = DENSITY_ESTIMATORS[method](X, 0.0)
    return SddrResult(rank, float((log_prior - log_post) / LN10), log_prior, log_post,
                      float(log_trunc), method, X.shape[0])


def sddr_rank(dataset: Dataset, ranks: Iterable[int], hyper: HyperParameters, config: ChainConfig,
              rng=None, method: str = "conditional", stores: Optional[dict] = None) -> dict:
    """Map each rank to its ``SddrResult``; chains are seeded per rank."""
    ranks = sorted(set(int(r) for r in ranks))
    seeds = np.random.SeedSequence(config.seed).spawn(len(ranks)) if rng is None else None
    if method == "conditional" and not config.store_paths:
        config = ChainConfig.from_dict({**config.to_dict(), "store_paths": True})
    out = {}
    for k, r in enumerate(ranks):
        if stores is not None and r in stores:
            store = stores[r]
        else:
            chain_rng = rng if rng is not None else np.random.default_rng(seeds[k])
            store = run_chain(dataset, hyper, config, rank=r, rng=chain_rng)
            if stores is not None:
                stores[r] = store
        out[r] = sddr_from_store(store, hyper, method, rng=np.random.default_rng(1000 + r),
                                 dataset=dataset)
        logger.info("rank %d: log10 B_uc = %.3f", r, out[r].log10_bayes_factor)
    return out
