"""Gibbs / Metropolis-Hastings sampler for the two-state SVEC-MSH model.

One sweep runs, in order: transition probabilities, the state path (FFBS),
the variance hyperparameters, the structural variances with state labelling
and the ordering restriction on relative variances, nu_b, the free entries of
B (random-walk MH), Gamma, alpha_*, beta_*, and the non-explosiveness guard.
Normalised (alpha, beta) are derived for storage only.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .filtering import sample_states, smoothed_probabilities
from .model import (
    Dataset,
    FreeEntryMap,
    ModelParameters,
    StatePartition,
    UNIT_ROOT_TOL,
    build_free_entry_map,
    companion_spectral_radius,
    log_likelihood,
    partition_by_state,
    residuals,
    state_log_densities,
)
from .priors import HyperDraws, HyperParameters, log_prior, ordering_holds

logger = logging.getLogger(__name__)


class SweepError(RuntimeError):
    """A sweep could not complete (rejection or rerun cap exhausted)."""


class NumericalError(RuntimeError):
    """A conditional posterior covariance was not numerically positive definite."""


@dataclass
class ChainConfig:
    burn_in: int = 1000
    keep: int = 1000
    thin: int = 1
    seed: Optional[int] = None
    proposal_scale: float = 0.01
    adapt_interval: int = 2000
    target_band: tuple = (0.2, 0.5)
    max_order_rejections: int = 10_000
    max_reruns: int = 1000
    store_paths: bool = False
    align_beta: bool = False

    def __post_init__(self):
        self.target_band = tuple(float(v) for v in self.target_band)
        if self.burn_in < 0 or self.keep < 0:
            raise ValueError("burn_in and keep must be non-negative")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        lo, hi = self.target_band
        if not 0 < lo < hi < 1:
            raise ValueError("target_band must satisfy 0 < low < high < 1")
        if self.adapt_interval < 2:
            raise ValueError("adapt_interval must be >= 2")
        if self.proposal_scale <= 0:
            raise ValueError("proposal_scale must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["target_band"] = list(self.target_band)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ChainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown chain config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class ChainState:
    params: ModelParameters
    s_lambda: np.ndarray
    nu_b: float
    path: np.ndarray  # S_0..S_T

    @property
    def aux(self) -> HyperDraws:
        return HyperDraws(self.nu_b, self.s_lambda)


@dataclass
class ResidualMoments:
    """Per-state residual cross products U_m'U_m and counts T_m."""

    cross: tuple
    counts: tuple

    def swapped(self) -> "ResidualMoments":
        return ResidualMoments(self.cross[::-1], self.counts[::-1])


def residual_moments(partition: StatePartition, params: ModelParameters) -> ResidualMoments:
    cross, counts = [], []
    for m in (1, 2):
        blk = partition[m]
        U = residuals(blk.Z0, blk.Z1, blk.Z2, params)
        cross.append(U.T @ U)
        counts.append(blk.count)
    return ResidualMoments(tuple(cross), tuple(counts))


def _moments_from_residuals(U, path_1T) -> ResidualMoments:
    cross, counts = [], []
    for m in (1, 2):
        Um = U[path_1T == m]
        cross.append(Um.T @ Um)
        counts.append(Um.shape[0])
    return ResidualMoments(tuple(cross), tuple(counts))


def state_precisions(B, lambdas) -> list:
    """Sigma_m^{-1} = B^{-T} Lambda_m^{-1} B^{-1} for both states."""
    B_inv = np.linalg.inv(B)
    return [B_inv.T @ (B_inv / lam[:, None]) for lam in lambdas]


def gaussian_from_precision(K, c, rng, jitter=1e-10):
    """Draw from N(K^{-1} c, K^{-1}); one jittered retry on Cholesky failure."""
    K = 0.5 * (K + K.T)
    try:
        L = np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        K = K + jitter * max(np.trace(K) / K.shape[0], 1.0) * np.eye(K.shape[0])
        try:
            L = np.linalg.cholesky(K)
        except np.linalg.LinAlgError:
            raise NumericalError("posterior precision is not positive definite") from None
    mean = cho_solve((L, True), c)
    z = rng.standard_normal(K.shape[0])
    return mean + solve_triangular(L.T, z, lower=False)


# --------------------------------------------------------------------------
# Steps 1-6: conjugate draws
# --------------------------------------------------------------------------


def transition_counts(path) -> np.ndarray:
    """2 x 2 matrix of one-step transition counts N[m-1, l-1]."""
    path = np.asarray(path)
    prev, nxt = path[:-1], path[1:]
    return np.array([[np.sum((prev == i) & (nxt == j)) for j in (1, 2)] for i in (1, 2)])


def draw_transition_probs(path, hyper: HyperParameters, rng):
    """p_mm ~ Beta(c_m + N_mm, d_m + N_m,3-m) from the counts in S_0..S_T."""
    N = transition_counts(path)
    p11 = rng.beta(hyper.trans_c[0] + N[0, 0], hyper.trans_d[0] + N[0, 1])
    p22 = rng.beta(hyper.trans_c[1] + N[1, 1], hyper.trans_d[1] + N[1, 0])
    return float(p11), float(p22)


def ffbs_states(dataset: Dataset, params: ModelParameters, rng, initial=None) -> np.ndarray:
    """Joint draw of S_0..S_T given data and parameters.

    S_0 follows the ergodic distribution unless ``initial`` gives its
    probabilities explicitly.
    """
    log_em = state_log_densities(dataset, params)
    return sample_states(log_em, params.p11, params.p22, rng, initial)


def draw_scale_hyper(lambdas, hyper: HyperParameters, rng) -> np.ndarray:
    """s_{m,i} ~ G(n_{m,i} + n^lambda_{m,i}, s_{m,i} lambda / (s_{m,i} + lambda))."""
    lam = np.asarray(lambdas, dtype=float)
    shape = hyper.s_shape + hyper.lambda_shape
    scale = hyper.s_scale * lam / (hyper.s_scale + lam)
    return rng.gamma(shape, scale)


def draw_lambdas(moments: ResidualMoments, B, s_lambda, hyper: HyperParameters, rng) -> np.ndarray:
    """lambda_{m,i} ~ iG(n^lambda + T_m/2, s^lambda + d_{m,ii}/2); returns 2 x n."""
    B_inv = np.linalg.inv(B)
    out = np.empty((2, B.shape[0]))
    for k in range(2):
        d = np.einsum("ij,jk,ik->i", B_inv, moments.cross[k], B_inv)
        shape = hyper.lambda_shape[k] + 0.5 * moments.counts[k]
        scale = s_lambda[k] + 0.5 * d
        out[k] = scale / rng.gamma(shape)
    return out


def enforce_uniqueness(lambda1, lambda2, ordering) -> bool:
    """Accept iff omega_2 = lambda2 / lambda1 satisfies the strict ordering."""
    return ordering_holds(np.asarray(lambda2) / np.asarray(lambda1), ordering)


def swap_labels(state: ChainState) -> None:
    """Permutation-sampler relabelling of every regime-linked quantity."""
    p = state.params
    p.lambda1, p.lambda2 = p.lambda2.copy(), p.lambda1.copy()
    p.p11, p.p22 = p.p22, p.p11
    state.s_lambda = state.s_lambda[::-1].copy()
    state.path = 3 - state.path


def draw_nu_b(b, hyper: HyperParameters, rng) -> float:
    """nu_b ~ iG(n_nu + d_b/2, s_nu + (b - mu)' Omega_b^{-1} (b - mu) / 2)."""
    dev = np.asarray(b, dtype=float) - hyper.mu_b
    quad = float(dev @ np.linalg.solve(hyper.omega_b, dev)) if hyper.d_b else 0.0
    shape = hyper.nu_b_shape + 0.5 * hyper.d_b
    scale = hyper.nu_b_scale + 0.5 * quad
    return float(scale / rng.gamma(shape))


# --------------------------------------------------------------------------
# Step 7: random-walk MH for b
# --------------------------------------------------------------------------


def log_kernel_b(b, moments: ResidualMoments, lambdas, nu_b, hyper: HyperParameters,
                 free_map: FreeEntryMap) -> float:
    """Log of the conditional kernel of b; -inf for a singular B."""
    B = free_map.assemble(b)
    sign, logdet = np.linalg.slogdet(B)
    if sign == 0 or not np.isfinite(logdet):
        return -np.inf
    B_inv = np.linalg.inv(B)
    dev = b - hyper.mu_b
    quad = dev @ np.linalg.solve(nu_b * hyper.omega_b, dev)
    tr = 0.0
    for k in range(2):
        d = np.einsum("ij,jk,ik->i", B_inv, moments.cross[k], B_inv)
        tr += np.sum(d / lambdas[k])
    T = sum(moments.counts)
    return float(-T * logdet - 0.5 * (quad + tr))


def mh_step_b(b_current, moments: ResidualMoments, lambdas, nu_b, hyper: HyperParameters,
              proposal_cov, rng, free_map: Optional[FreeEntryMap] = None,
              current_log_kernel: Optional[float] = None):
    """One random-walk MH update. Returns ``(b_next, accepted, log_kernel)``."""
    b_current = np.asarray(b_current, dtype=float)
    fmap = free_map or build_free_entry_map(len(lambdas[0]))
    lk_cur = current_log_kernel
    if lk_cur is None:
        lk_cur = log_kernel_b(b_current, moments, lambdas, nu_b, hyper, fmap)
    chol = np.linalg.cholesky(np.atleast_2d(proposal_cov))
    prop = b_current + chol @ rng.standard_normal(b_current.shape[0])
    lk_prop = log_kernel_b(prop, moments, lambdas, nu_b, hyper, fmap)
    if np.log(rng.random()) < lk_prop - lk_cur:
        return prop, True, lk_prop
    return b_current, False, lk_cur


# --------------------------------------------------------------------------
# Steps 8-10: Gaussian GLS conditionals
# --------------------------------------------------------------------------


def _vec(M):
    return M.reshape(-1, order="F")


def gamma_conditional(partition: StatePartition, params: ModelParameters, hyper: HyperParameters):
    """Precision and linear term of the Gaussian conditional of vec(Gamma)."""
    n = params.n
    prec_prior = np.linalg.inv(hyper.omega_gamma)
    K = np.kron(np.eye(n), prec_prior)
    c = K @ _vec(hyper.mu_gamma)
    for Sinv, m in zip(state_precisions(params.B, params.lambdas), (1, 2)):
        blk = partition[m]
        if blk.count == 0:
            continue
        R = blk.Z0
        if params.rank:
            R = R - (blk.Z1 @ params.beta_star) @ params.alpha_star.T
        K += np.kron(Sinv, blk.Z2.T @ blk.Z2)
        c += _vec(blk.Z2.T @ R @ Sinv)
    return K, c


def alpha_conditional(partition: StatePartition, params: ModelParameters, hyper: HyperParameters):
    """Precision and linear term of the conditional of a_* = vec(alpha_*')."""
    r = params.rank
    K = np.kron(np.linalg.inv(hyper.omega_a), np.eye(r))
    c = np.zeros(K.shape[0])
    for Sinv, m in zip(state_precisions(params.B, params.lambdas), (1, 2)):
        blk = partition[m]
        if blk.count == 0:
            continue
        X = blk.Z1 @ params.beta_star
        R = blk.Z0 - blk.Z2 @ params.gamma
        K += np.kron(Sinv, X.T @ X)
        c += _vec(X.T @ R @ Sinv)
    return K, c


def beta_conditional(partition: StatePartition, params: ModelParameters, hyper: HyperParameters):
    """Precision and linear term of the conditional of b_* = vec(beta_*)."""
    r = params.rank
    K = np.kron(np.eye(r), np.linalg.inv(hyper.P))
    c = np.zeros(K.shape[0])
    a = params.alpha_star
    for Sinv, m in zip(state_precisions(params.B, params.lambdas), (1, 2)):
        blk = partition[m]
        if blk.count == 0:
            continue
        R = blk.Z0 - blk.Z2 @ params.gamma
        K += np.kron(a.T @ Sinv @ a, blk.Z1.T @ blk.Z1)
        c += _vec(blk.Z1.T @ R @ Sinv @ a)
    return K, c


def draw_gamma(partition, params, hyper, rng) -> np.ndarray:
    k2 = params.gamma.shape[0]
    if k2 == 0:
        return params.gamma.copy()
    K, c = gamma_conditional(partition, params, hyper)
    return gaussian_from_precision(K, c, rng).reshape(k2, params.n, order="F")


def draw_alpha_star(partition, params, hyper, rng) -> np.ndarray:
    r = params.rank
    if r == 0:
        return params.alpha_star.copy()
    K, c = alpha_conditional(partition, params, hyper)
    return gaussian_from_precision(K, c, rng).reshape(r, params.n, order="F").T


def draw_beta_star(partition, params, hyper, rng) -> np.ndarray:
    r = params.rank
    if r == 0:
        return params.beta_star.copy()
    K, c = beta_conditional(partition, params, hyper)
    return gaussian_from_precision(K, c, rng).reshape(params.beta_star.shape[0], r, order="F")


def draw_mean_blocks(partition, params, hyper, rng) -> None:
    """Steps 8-10 in place."""
    params.gamma = draw_gamma(partition, params, hyper, rng)
    params.alpha_star = draw_alpha_star(partition, params, hyper, rng)
    params.beta_star = draw_beta_star(partition, params, hyper, rng)


def nonexplosive_guard(partition, params, hyper, rng, max_reruns: int = 1000) -> int:
    """Rerun Steps 8-10 until rho(A) <= 1; returns the number of reruns."""
    reruns = 0
    while companion_spectral_radius(params) > 1.0 + UNIT_ROOT_TOL:
        if reruns >= max_reruns:
            raise SweepError(f"non-explosiveness not reached after {max_reruns} reruns")
        draw_mean_blocks(partition, params, hyper, rng)
        reruns += 1
    return reruns


# --------------------------------------------------------------------------
# Step 12 and beta alignment
# --------------------------------------------------------------------------


def normalize_cointegration(alpha_star, beta_star):
    """beta = beta_* (beta_*'beta_*)^{-1/2}, alpha = alpha_* (beta_*'beta_*)^{1/2}."""
    alpha_star = np.asarray(alpha_star, dtype=float)
    beta_star = np.asarray(beta_star, dtype=float)
    if beta_star.shape[1] == 0:
        return alpha_star.copy(), beta_star.copy()
    w, V = np.linalg.eigh(beta_star.T @ beta_star)
    if w.min() <= 1e-14 * max(w.max(), 1.0):
        raise ValueError("beta_* is rank deficient")
    root = (V * np.sqrt(w)) @ V.T
    inv_root = (V / np.sqrt(w)) @ V.T
    return alpha_star @ root, beta_star @ inv_root


def procrustes_rotation(beta, reference) -> np.ndarray:
    """Orthogonal R minimising ||beta R - reference||_F."""
    U, _, Vt = np.linalg.svd(beta.T @ reference)
    return U @ Vt


def align_beta_draws(alpha, beta):
    """Rotate each (alpha, beta) draw towards the element-wise mean beta.

    Two passes: align to the first draw, then to the mean of the aligned draws.
    ``alpha beta'`` is unchanged by construction.
    """
    alpha = alpha.copy()
    beta = beta.copy()
    if beta.shape[0] == 0 or beta.shape[2] == 0:
        return alpha, beta
    ref = beta[0]
    for _ in range(2):
        for i in range(beta.shape[0]):
            R = procrustes_rotation(beta[i], ref)
            beta[i] = beta[i] @ R
            alpha[i] = alpha[i] @ R
        ref = beta.mean(axis=0)
    return alpha, beta


# --------------------------------------------------------------------------
# Draw storage
# --------------------------------------------------------------------------


STORE_GROUPS = ("alpha_star", "beta_star", "alpha", "beta", "gamma", "b", "B",
                "lambda1", "lambda2", "p11", "p22", "nu_b", "s_lambda",
                "loglik", "logprior")


@dataclass
class DrawStore:
    """Posterior draws plus chain metadata.

    ``arrays`` maps group names (see ``STORE_GROUPS``) to arrays whose first
    axis indexes retained draws; ``state1_prob`` is Pr(S_t = 1 | y) averaged
    over retained sweeps and ``paths`` is filled only when requested.
    """

    arrays: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.arrays[key]

    def __contains__(self, key):
        return key in self.arrays

    @property
    def n_draws(self) -> int:
        return int(self.arrays["p11"].shape[0]) if "p11" in self.arrays else 0

    @property
    def omega2(self) -> np.ndarray:
        return self.arrays["lambda2"] / self.arrays["lambda1"]

    def params_at(self, i: int) -> ModelParameters:
        fmap = build_free_entry_map(self.meta["n"], self.meta.get("zero_restrictions", ()))
        a = self.arrays
        return ModelParameters(a["alpha_star"][i], a["beta_star"][i], a["gamma"][i], a["b"][i],
                               a["lambda1"][i], a["lambda2"][i], float(a["p11"][i]),
                               float(a["p22"][i]), self.meta["lag_order"], fmap)

    def iter_params(self):
        for i in range(self.n_draws):
            yield self.params_at(i)

    def median_params(self) -> ModelParameters:
        """Element-wise posterior medians (alpha_*, beta_* taken from the normalised draws)."""
        fmap = build_free_entry_map(self.meta["n"], self.meta.get("zero_restrictions", ()))
        med = {k: np.median(self.arrays[k], axis=0) for k in
               ("alpha", "beta", "gamma", "b", "lambda1", "lambda2", "p11", "p22")}
        return ModelParameters(med["alpha"], med["beta"], med["gamma"], med["b"], med["lambda1"],
                               med["lambda2"], float(med["p11"]), float(med["p22"]),
                               self.meta["lag_order"], fmap)

    @classmethod
    def concatenate(cls, stores) -> "DrawStore":
        stores = list(stores)
        if not stores:
            return cls()
        arrays = {k: np.concatenate([s.arrays[k] for s in stores]) for k in stores[0].arrays
                  if k != "state1_prob"}
        weights = np.array([max(s.n_draws, 1) for s in stores], dtype=float)
        arrays["state1_prob"] = np.average([s.arrays["state1_prob"] for s in stores], axis=0,
                                           weights=weights)
        meta = dict(stores[0].meta)
        meta["chains"] = [s.meta for s in stores]
        meta["chain_id"] = np.concatenate([np.full(s.n_draws, i) for i, s in enumerate(stores)]).tolist()
        return cls(arrays, meta)


class _Recorder:
    def __init__(self, store_paths):
        self.rows = {k: [] for k in STORE_GROUPS}
        self.paths = [] if store_paths else None
        self.state1 = None
        self.count = 0

    def add(self, state: ChainState, partition: StatePartition, hyper: HyperParameters):
        p = state.params
        alpha, beta = normalize_cointegration(p.alpha_star, p.beta_star)
        vals = dict(alpha_star=p.alpha_star.copy(), beta_star=p.beta_star.copy(), alpha=alpha,
                    beta=beta, gamma=p.gamma.copy(), b=p.b_free.copy(), B=p.B,
                    lambda1=p.lambda1.copy(), lambda2=p.lambda2.copy(), p11=p.p11, p22=p.p22,
                    nu_b=state.nu_b, s_lambda=state.s_lambda.copy(),
                    loglik=log_likelihood(partition, p), logprior=log_prior(p, state.aux, hyper))
        for k, v in vals.items():
            self.rows[k].append(v)
        ind = (state.path == 1).astype(float)
        self.state1 = ind if self.state1 is None else self.state1 + ind
        if self.paths is not None:
            self.paths.append(state.path.astype(np.int8))
        self.count += 1

    def arrays(self, params: ModelParameters, T: int) -> dict:
        shapes = dict(alpha_star=params.alpha_star.shape, beta_star=params.beta_star.shape,
                      alpha=params.alpha_star.shape, beta=params.beta_star.shape,
                      gamma=params.gamma.shape, b=params.b_free.shape, B=(params.n, params.n),
                      lambda1=(params.n,), lambda2=(params.n,), s_lambda=(2, params.n))
        out = {}
        for k, v in self.rows.items():
            if v:
                out[k] = np.asarray(v, dtype=float)
            else:
                out[k] = np.zeros((0,) + tuple(shapes.get(k, ())))
        out["state1_prob"] = (self.state1 / self.count) if self.count else np.full(T + 1, np.nan)
        if self.paths is not None:
            out["paths"] = np.asarray(self.paths, dtype=np.int8).reshape(-1, T + 1)
        return out


# --------------------------------------------------------------------------
# Initialisation and chain driver
# --------------------------------------------------------------------------


def initial_state(dataset: Dataset, hyper: HyperParameters, rank: int, rng,
                  free_map: Optional[FreeEntryMap] = None) -> ChainState:
    """Least-squares warm start with B = I and variances split by the ordering."""
    n, n_tilde, k2 = dataset.n, dataset.n_tilde, dataset.k2
    fmap = free_map or build_free_entry_map(n)
    X = np.hstack([dataset.Z1, dataset.Z2])
    coef = np.linalg.lstsq(X, dataset.Z0, rcond=None)[0]
    pi_t, gamma = coef[:n_tilde], coef[n_tilde:]
    if rank:
        U, s, Vt = np.linalg.svd(pi_t, full_matrices=False)
        beta_star = U[:, :rank] * np.sqrt(s[:rank])
        alpha_star = Vt[:rank].T * np.sqrt(s[:rank])
    else:
        beta_star = np.zeros((n_tilde, 0))
        alpha_star = np.zeros((n, 0))
    params = ModelParameters(alpha_star, beta_star, gamma.reshape(k2, n), np.zeros(fmap.d_b),
                             np.ones(n), np.ones(n), 0.9, 0.9, dataset.lag_order, fmap)
    for _ in range(500):
        if companion_spectral_radius(params) <= 1.0 + UNIT_ROOT_TOL:
            break
        params.alpha_star *= 0.9
        params.gamma *= 0.9
    else:
        params.alpha_star[:] = 0.0
        params.gamma[:] = 0.0

    U = residuals(dataset.Z0, dataset.Z1, dataset.Z2, params)
    v = np.maximum(np.mean(U**2, axis=0), 1e-8)
    grid = np.linspace(0.3, 0.7, n)
    omega = grid.copy()
    if hyper.ordering is not None:
        omega[list(hyper.ordering)] = grid
    params.lambda1 = 2.0 * v / (1.0 + omega)
    params.lambda2 = omega * params.lambda1
    nu_b = hyper.nu_b_scale / (hyper.nu_b_shape - 1.0) if hyper.nu_b_shape > 1 else hyper.nu_b_scale
    state = ChainState(params, np.ones((2, n)), float(nu_b), np.ones(dataset.T + 1, dtype=np.int64))
    state.path = ffbs_states(dataset, params, rng)
    return state


class _ProposalAdapter:
    """Random-walk covariance recalibrated from the trailing burn-in window."""

    def __init__(self, d, config: ChainConfig):
        self.d = d
        self.cov = config.proposal_scale * np.eye(d)
        self.factor = 1.0
        self.interval = config.adapt_interval
        self.band = config.target_band
        self.window = []
        self.accepts = 0
        self.history = []

    def record(self, b, accepted):
        self.window.append(b.copy())
        self.accepts += int(accepted)

    def maybe_adapt(self):
        if len(self.window) < self.interval:
            return
        rate = self.accepts / len(self.window)
        lo, hi = self.band
        if rate < lo:
            self.factor *= 0.6
        elif rate > hi:
            self.factor *= 1.6
        W = np.asarray(self.window)
        emp = np.atleast_2d(np.cov(W.T)) if self.d > 1 else np.array([[np.var(W, ddof=1)]])
        if np.all(np.isfinite(emp)) and np.trace(emp) > 0:
            scale = self.factor * 2.38**2 / self.d
            self.cov = scale * (emp + 1e-10 * np.trace(emp) / self.d * np.eye(self.d))
        else:
            self.cov = self.cov * (0.5 if rate < lo else 1.0)
        self.history.append(rate)
        self.window = []
        self.accepts = 0


def sweep(state: ChainState, dataset: Dataset, hyper: HyperParameters, config: ChainConfig,
          rng, proposal_cov, stats: dict):
    """One full pass of Steps 1-11. Returns ``(partition, mh_accepted)``."""
    p = state.params
    fmap = p.free_map
    # Mean blocks are fixed until Step 8, so residuals are computed once here.
    U = residuals(dataset.Z0, dataset.Z1, dataset.Z2, p)

    p.p11, p.p22 = draw_transition_probs(state.path, hyper, rng)  # Step 1
    state.path = ffbs_states(dataset, p, rng)  # Step 2
    state.s_lambda = draw_scale_hyper(p.lambdas, hyper, rng)  # Step 3

    moments = _moments_from_residuals(U, state.path[1:])
    l = hyper.state_id_index
    rejections = 0
    while True:  # Steps 4-5
        lam = draw_lambdas(moments, p.B, state.s_lambda, hyper, rng)
        p.lambda1, p.lambda2 = lam[0], lam[1]
        if p.lambda1[l] <= p.lambda2[l]:
            swap_labels(state)
            moments = moments.swapped()
            stats["label_swaps"] += 1
        if enforce_uniqueness(p.lambda1, p.lambda2, hyper.ordering):
            break
        rejections += 1
        if rejections >= config.max_order_rejections:
            raise SweepError(f"ordering restriction rejected {rejections} consecutive variance draws")
    stats["order_rejections"] += rejections

    state.nu_b = draw_nu_b(p.b_free, hyper, rng)  # Step 6

    accepted = False
    if fmap.d_b:  # Step 7
        p.b_free, accepted, _ = mh_step_b(p.b_free, moments, p.lambdas, state.nu_b, hyper,
                                          proposal_cov, rng, fmap)

    partition = partition_by_state(dataset, state.path[1:])
    draw_mean_blocks(partition, p, hyper, rng)  # Steps 8-10
    stats["guard_reruns"] += nonexplosive_guard(partition, p, hyper, rng, config.max_reruns)  # Step 11
    return partition, accepted


def run_chain(dataset: Dataset, hyper: HyperParameters, config: ChainConfig, rank: int = 1,
              rng=None, free_map: Optional[FreeEntryMap] = None,
              initial: Optional[ChainState] = None) -> DrawStore:
    """Run ``burn_in + keep * thin`` sweeps and return the retained draws."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    if not 0 <= rank <= dataset.n:
        raise ValueError(f"rank must lie in 0..{dataset.n}")
    fmap = free_map or build_free_entry_map(dataset.n)
    if hyper.d_b != fmap.d_b:
        raise ValueError("hyperparameters and free-entry map disagree on d_b")
    if hyper.omega_gamma.shape[0] != dataset.k2 or hyper.P.shape[0] != dataset.n_tilde:
        raise ValueError("hyperparameter dimensions do not match the dataset design")
    state = initial or initial_state(dataset, hyper, rank, rng, fmap)

    adapter = _ProposalAdapter(fmap.d_b, config) if fmap.d_b else None
    stats = dict(label_swaps=0, order_rejections=0, guard_reruns=0)
    rec = _Recorder(config.store_paths)
    kept_accepts = kept_total = 0
    total = config.burn_in + config.keep * config.thin
    for it in range(total):
        proposal_cov = adapter.cov if adapter else None
        partition, accepted = sweep(state, dataset, hyper, config, rng, proposal_cov, stats)
        if it < config.burn_in:
            if adapter:
                adapter.record(state.params.b_free, accepted)
                adapter.maybe_adapt()
            continue
        kept_total += 1
        kept_accepts += int(accepted)
        if (it - config.burn_in + 1) % config.thin == 0:
            rec.add(state, partition, hyper)
        if (it + 1) % 10_000 == 0:
            logger.info("sweep %d / %d", it + 1, total)

    arrays = rec.arrays(state.params, dataset.T)
    if config.align_beta and rank and rec.count:
        arrays["alpha"], arrays["beta"] = align_beta_draws(arrays["alpha"], arrays["beta"])
    stats["mh_acceptance"] = kept_accepts / kept_total if kept_total and fmap.d_b else None
    stats["mh_burn_in_acceptance"] = adapter.history if adapter else []
    stats["proposal_cov"] = adapter.cov.tolist() if adapter else []
    meta = dict(n=dataset.n, rank=rank, lag_order=dataset.lag_order, T=dataset.T,
                n_tilde=dataset.n_tilde, k2=dataset.k2,
                zero_restrictions=[list(ij) for ij in _zero_positions(fmap)],
                config=config.to_dict(), hyper=hyper.to_dict(), stats=stats,
                names=list(dataset.names))
    return DrawStore(arrays, meta)


def _zero_positions(fmap: FreeEntryMap):
    n = fmap.n
    free = set(fmap.positions)
    return [(i, j) for j in range(n) for i in range(n) if i != j and (i, j) not in free]


def posterior_state_probabilities(dataset: Dataset, params: ModelParameters) -> np.ndarray:
    """Exact smoothed Pr(S_t = 1 | y, theta) for t = 0..T at a fixed parameter point."""
    return smoothed_probabilities(state_log_densities(dataset, params), params.p11, params.p22)[:, 0]
