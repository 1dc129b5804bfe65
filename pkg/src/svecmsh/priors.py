"""Prior specification and log-prior evaluation."""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np
from scipy.special import betaln, gammaln

from .model import ModelParameters, UNIT_ROOT_TOL, companion_spectral_radius

# Prior scale for the unrestricted deterministic rows of Gamma (Phi).
DETERMINISTIC_GAMMA_SCALE = 0.5


def resolve_ordering(ordering, n: int) -> Optional[tuple]:
    """Normalise an ordering spec into a permutation tuple or ``None``.

    Accepts ``"ascending"``, ``"descending"``, ``"none"``/``None`` or an
    explicit permutation ``pi`` meaning ``omega[pi[0]] < omega[pi[1]] < ...``.
    """
    if ordering is None or ordering == "none":
        return None
    if isinstance(ordering, str):
        if ordering == "ascending":
            return tuple(range(n))
        if ordering == "descending":
            return tuple(range(n - 1, -1, -1))
        raise ValueError(f"unknown ordering {ordering!r}")
    perm = tuple(int(i) for i in ordering)
    if sorted(perm) != list(range(n)):
        raise ValueError(f"ordering {perm} is not a permutation of 0..{n - 1}")
    return perm


def ordering_holds(omega, ordering) -> bool:
    """Strict ordering check; ties count as violations."""
    if ordering is None:
        return True
    w = np.asarray(omega, dtype=float)[list(ordering)]
    return bool(np.all(np.diff(w) > 0))


@dataclass
class HyperParameters:
    """All prior constants.

    Shapes: ``omega_a`` n x n, ``P`` n_tilde x n_tilde, ``mu_gamma`` k2 x n,
    ``omega_gamma`` k2 x k2, ``mu_b`` (d_b,), ``omega_b`` d_b x d_b, and the
    variance hyperparameters ``lambda_shape``, ``s_shape``, ``s_scale`` are
    2 x n (row m-1 is state m).  ``trans_c``/``trans_d`` hold the Beta
    parameters of p11 and p22.  ``state_id_index`` is 0-based.
    """

    omega_a: np.ndarray
    P: np.ndarray
    mu_gamma: np.ndarray
    omega_gamma: np.ndarray
    mu_b: np.ndarray
    omega_b: np.ndarray
    nu_b_shape: float = 3.0
    nu_b_scale: float = 2.0
    lambda_shape: np.ndarray = None
    s_shape: np.ndarray = None
    s_scale: np.ndarray = None
    trans_c: np.ndarray = field(default_factory=lambda: np.ones(2))
    trans_d: np.ndarray = field(default_factory=lambda: np.ones(2))
    state_id_index: int = 0
    ordering: Optional[tuple] = None

    def __post_init__(self):
        for f in ("omega_a", "P", "mu_gamma", "omega_gamma", "mu_b", "omega_b",
                  "trans_c", "trans_d"):
            setattr(self, f, np.asarray(getattr(self, f), dtype=float))
        n = self.omega_a.shape[0]
        self.mu_gamma = self.mu_gamma.reshape(-1, n)
        for f in ("lambda_shape", "s_shape", "s_scale"):
            val = getattr(self, f)
            val = np.ones((2, n)) if val is None else np.broadcast_to(np.asarray(val, dtype=float), (2, n)).copy()
            setattr(self, f, val)
        self.ordering = resolve_ordering(self.ordering, n)
        self.validate()

    @property
    def n(self) -> int:
        return self.omega_a.shape[0]

    @property
    def d_b(self) -> int:
        return self.mu_b.shape[0]

    def validate(self):
        for name in ("omega_a", "P", "omega_gamma", "omega_b"):
            M = getattr(self, name)
            if M.size == 0:
                continue
            if not np.allclose(M, M.T):
                raise ValueError(f"{name} must be symmetric")
            try:
                np.linalg.cholesky(M)
            except np.linalg.LinAlgError:
                raise ValueError(f"{name} must be positive definite") from None
        if self.mu_gamma.shape[0] != self.omega_gamma.shape[0]:
            raise ValueError("mu_gamma and omega_gamma disagree on the number of regressors")
        if self.omega_b.shape != (self.d_b, self.d_b):
            raise ValueError("omega_b must be d_b x d_b")
        positives = [self.nu_b_shape, self.nu_b_scale, self.lambda_shape, self.s_shape,
                     self.s_scale, self.trans_c, self.trans_d]
        if any(np.any(np.asarray(v) <= 0) for v in positives):
            raise ValueError("shape/scale hyperparameters must be positive")
        if not 0 <= self.state_id_index < self.n:
            raise ValueError(f"state_id_index must lie in 0..{self.n - 1}")

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, np.ndarray):
                v = v.tolist()
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "HyperParameters":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown hyperparameter keys: {sorted(unknown)}")
        return cls(**d)


def default_omega_gamma(n: int, p: int, k_unrestricted: int = 0) -> np.ndarray:
    """0.5 * diag(I_n, I_n/4, ..., I_n/(p-1)^2), then 0.5 * I for Phi rows."""
    diag = [0.5 / i**2 for i in range(1, p) for _ in range(n)]
    diag += [DETERMINISTIC_GAMMA_SCALE] * k_unrestricted
    return np.diag(diag) if diag else np.zeros((0, 0))


def default_hyperparameters(n: int, p: int, r: int, k_restricted: int = 0,
                            k_unrestricted: int = 0, d_b: Optional[int] = None,
                            ordering="ascending", state_id_index: int = 0) -> HyperParameters:
    """Default prior used in the simulation study and the empirical example."""
    if n < 1 or p < 1 or not 0 <= r <= n:
        raise ValueError("invalid dimensions")
    n_tilde = n + k_restricted
    k2 = n * (p - 1) + k_unrestricted
    d_b = n * (n - 1) if d_b is None else d_b
    return HyperParameters(
        omega_a=0.1 * np.eye(n),
        P=np.eye(n_tilde) / n_tilde,
        mu_gamma=np.zeros((k2, n)),
        omega_gamma=default_omega_gamma(n, p, k_unrestricted),
        mu_b=np.zeros(d_b),
        omega_b=np.eye(d_b),
        nu_b_shape=3.0,
        nu_b_scale=2.0,
        lambda_shape=np.ones((2, n)),
        s_shape=np.ones((2, n)),
        s_scale=np.ones((2, n)),
        trans_c=np.ones(2),
        trans_d=np.ones(2),
        state_id_index=state_id_index,
        ordering=ordering,
    )


@dataclass
class HyperDraws:
    """Auxiliary hierarchical draws: nu_b and the 2 x n matrix s^lambda."""

    nu_b: float
    s_lambda: np.ndarray


def _mvn_logpdf_columns(X, mean, cov):
    """Sum of log N(col; mean_col, cov) over the columns of X."""
    if X.size == 0:
        return 0.0
    L = np.linalg.cholesky(cov)
    Z = np.linalg.solve(L, X - mean)
    k, m = X.shape
    return float(-0.5 * np.sum(Z**2) - m * np.sum(np.log(np.diag(L))) - 0.5 * k * m * np.log(2 * np.pi))


def invgamma_logpdf(x, shape, scale):
    """iG(shape, scale) with mean scale / (shape - 1)."""
    x = np.asarray(x, dtype=float)
    return shape * np.log(scale) - gammaln(shape) - (shape + 1.0) * np.log(x) - scale / x


def gamma_logpdf(x, shape, scale):
    """G(shape, scale) with mean shape * scale."""
    x = np.asarray(x, dtype=float)
    return (shape - 1.0) * np.log(x) - x / scale - gammaln(shape) - shape * np.log(scale)


def beta_logpdf(x, a, b):
    return (a - 1.0) * np.log(x) + (b - 1.0) * np.log1p(-x) - betaln(a, b)


def state_identified(lambda1, lambda2, index: int) -> bool:
    return bool(lambda1[index] > lambda2[index])


def log_prior(params: ModelParameters, aux: HyperDraws, hyper: HyperParameters) -> float:
    """Joint log prior (unnormalised w.r.t. the indicator truncations).

    Returns ``-inf`` whenever the spectral-radius, state-identification or
    ordering indicator is violated.
    """
    if companion_spectral_radius(params) > 1.0 + UNIT_ROOT_TOL:
        return -np.inf
    if not state_identified(params.lambda1, params.lambda2, hyper.state_id_index):
        return -np.inf
    if not ordering_holds(params.omega2, hyper.ordering):
        return -np.inf

    lp = _mvn_logpdf_columns(params.alpha_star, 0.0, hyper.omega_a)
    lp += _mvn_logpdf_columns(params.beta_star, 0.0, hyper.P)
    lp += _mvn_logpdf_columns(params.gamma, hyper.mu_gamma, hyper.omega_gamma)
    if hyper.d_b:
        lp += _mvn_logpdf_columns(params.b_free[:, None], hyper.mu_b[:, None], aux.nu_b * hyper.omega_b)
        lp += float(invgamma_logpdf(aux.nu_b, hyper.nu_b_shape, hyper.nu_b_scale))
    lam = params.lambdas
    lp += float(np.sum(invgamma_logpdf(lam, hyper.lambda_shape, aux.s_lambda)))
    lp += float(np.sum(gamma_logpdf(aux.s_lambda, hyper.s_shape, hyper.s_scale)))
    lp += float(beta_logpdf(params.p11, hyper.trans_c[0], hyper.trans_d[0]))
    lp += float(beta_logpdf(params.p22, hyper.trans_c[1], hyper.trans_d[1]))
    return lp
