"""Deterministic core of the two-state SVEC-MSH model.

Sampling model (row form, one row per effective observation t)::

    dy_t' = y~_{t-1}' beta_* alpha_*' + x_t' Gamma + u_t',   u_t = B eps_t
    eps_t | S_t ~ N(0, diag(lambda_{S_t}))

where ``y~_{t-1} = (y_{t-1}', d_{t-1}')'`` carries the restricted deterministic
terms and ``x_t`` stacks the lagged differences followed by the unrestricted
deterministic terms ``D_t``.  ``Gamma`` is therefore the ``k2 x n`` matrix
``[Gamma_1'; ...; Gamma_{p-1}'; Phi']``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.linalg import null_space

LOG_2PI = np.log(2.0 * np.pi)
UNIT_ROOT_TOL = 1e-10


class SingularMatrixError(ValueError):
    """Raised when the structural matrix B cannot be inverted."""


class LongRunDegeneracyError(ValueError):
    """Raised when alpha_perp' Gamma beta_perp is singular (I(2)-type failure)."""


class InvalidStateError(ValueError):
    """Raised when a state path contains labels outside {1, 2}."""


# --------------------------------------------------------------------------
# Data
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    """Observed levels plus the deterministic design.

    ``observations`` holds the raw levels (``T + p`` rows); the first
    ``lag_order`` rows are presample.  Both deterministic matrices are aligned
    with the raw rows: the cointegration term at time t uses
    ``restricted[t - 1]`` and the unrestricted block uses ``unrestricted[t]``.
    """

    observations: np.ndarray
    lag_order: int
    restricted: np.ndarray = None
    unrestricted: np.ndarray = None
    names: tuple = ()
    restricted_names: tuple = ()
    unrestricted_names: tuple = ()

    def __post_init__(self):
        y = np.asarray(self.observations, dtype=float)
        if y.ndim != 2:
            raise ValueError("observations must be a 2-D array")
        n_raw, n = y.shape
        p = int(self.lag_order)
        if p < 1:
            raise ValueError("lag_order must be >= 1")
        d = np.zeros((n_raw, 0)) if self.restricted is None else np.asarray(self.restricted, dtype=float)
        D = np.zeros((n_raw, 0)) if self.unrestricted is None else np.asarray(self.unrestricted, dtype=float)
        if d.ndim == 1:
            d = d[:, None]
        if D.ndim == 1:
            D = D[:, None]
        if d.shape[0] != n_raw or D.shape[0] != n_raw:
            raise ValueError("deterministic terms must have one row per observation")
        for arr, what in ((y, "observations"), (d, "restricted terms"), (D, "unrestricted terms")):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{what} contain missing or non-finite values")
        T = n_raw - p
        k2 = n * (p - 1) + D.shape[1]
        if T <= k2 + n:
            raise ValueError(
                f"effective sample T={T} too short; need T > n(p-1) + k_D + n = {k2 + n}"
            )
        object.__setattr__(self, "observations", y)
        object.__setattr__(self, "lag_order", p)
        object.__setattr__(self, "restricted", d)
        object.__setattr__(self, "unrestricted", D)
        if not self.names:
            object.__setattr__(self, "names", tuple(f"y{i + 1}" for i in range(n)))

        dy = np.diff(y, axis=0)  # dy[s] = y[s+1] - y[s]
        rows = np.arange(p, n_raw)
        Z0 = dy[rows - 1]
        Z1 = np.hstack([y[rows - 1], d[rows - 1]])
        lagged = [dy[rows - 1 - i] for i in range(1, p)]
        Z2 = np.hstack(lagged + [D[rows]]) if (lagged or D.shape[1]) else np.zeros((T, 0))
        object.__setattr__(self, "_Z0", Z0)
        object.__setattr__(self, "_Z1", Z1)
        object.__setattr__(self, "_Z2", Z2)

    @property
    def n(self) -> int:
        return self.observations.shape[1]

    @property
    def T(self) -> int:
        return self.observations.shape[0] - self.lag_order

    @property
    def n_tilde(self) -> int:
        return self.n + self.restricted.shape[1]

    @property
    def k_unrestricted(self) -> int:
        return self.unrestricted.shape[1]

    @property
    def k2(self) -> int:
        return self.n * (self.lag_order - 1) + self.k_unrestricted

    @property
    def Z0(self) -> np.ndarray:
        """Differences dy_t, ``T x n``."""
        return self._Z0

    @property
    def Z1(self) -> np.ndarray:
        """Cointegration regressors (y_{t-1}', d_{t-1}'), ``T x n_tilde``."""
        return self._Z1

    @property
    def Z2(self) -> np.ndarray:
        """Lagged differences and unrestricted deterministics, ``T x k2``."""
        return self._Z2


def deterministic_terms(
    n_rows: int,
    constant: str = "unrestricted",
    trend: str = "none",
    seasonal: int = 0,
    season_start: int = 0,
):
    """Build (restricted, unrestricted, restricted_names, unrestricted_names).

    ``constant`` and ``trend`` take ``"none"``, ``"restricted"`` or
    ``"unrestricted"``.  ``seasonal`` is the period (e.g. 4 for quarterly);
    ``seasonal - 1`` centred dummies go into the unrestricted block.
    """
    valid = {"none", "restricted", "unrestricted"}
    if constant not in valid or trend not in valid:
        raise ValueError(f"constant/trend must be one of {sorted(valid)}")
    restricted, unrestricted, rn, un = [], [], [], []
    if constant == "restricted":
        restricted.append(np.ones(n_rows))
        rn.append("const")
    elif constant == "unrestricted":
        unrestricted.append(np.ones(n_rows))
        un.append("const")
    t = np.arange(n_rows, dtype=float)
    if trend == "restricted":
        restricted.append(t)
        rn.append("trend")
    elif trend == "unrestricted":
        unrestricted.append(t)
        un.append("trend")
    if seasonal and seasonal > 1:
        phase = (np.arange(n_rows) + season_start) % seasonal
        for k in range(seasonal - 1):
            unrestricted.append((phase == k).astype(float) - 1.0 / seasonal)
            un.append(f"season{k + 1}")

    def stack(cols):
        return np.column_stack(cols) if cols else np.zeros((n_rows, 0))

    return stack(restricted), stack(unrestricted), tuple(rn), tuple(un)


# --------------------------------------------------------------------------
# Structural matrix
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FreeEntryMap:
    """Linear map ``vec(B) = Q b + q`` with a unit diagonal pinned in ``q``."""

    selection_matrix: np.ndarray
    offset_vector: np.ndarray
    n: int
    positions: tuple  # (row, col) of each free entry, column-major order

    @property
    def d_b(self) -> int:
        return self.selection_matrix.shape[1]

    def assemble(self, b_free) -> np.ndarray:
        b_free = np.asarray(b_free, dtype=float)
        if b_free.shape != (self.d_b,):
            raise ValueError(f"expected {self.d_b} free entries, got shape {b_free.shape}")
        vec_b = self.selection_matrix @ b_free + self.offset_vector
        return vec_b.reshape(self.n, self.n, order="F")

    def extract(self, B) -> np.ndarray:
        vec_b = np.asarray(B, dtype=float).reshape(-1, order="F")
        return self.selection_matrix.T @ vec_b


def build_free_entry_map(n: int, extra_zero_restrictions: Iterable[Sequence[int]] = ()) -> FreeEntryMap:
    """Free off-diagonal entries of B (column-major), minus any zero restrictions.

    Restriction indices are 0-based ``(row, col)`` pairs.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    zeros = set()
    for idx in extra_zero_restrictions:
        i, j = (int(v) for v in idx)
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"restriction {(i, j)} outside a {n}x{n} matrix")
        if i == j:
            raise ValueError(f"restriction {(i, j)} is on the diagonal, which is pinned to 1")
        if (i, j) in zeros:
            raise ValueError(f"duplicate restriction {(i, j)}")
        zeros.add((i, j))
    positions = tuple(
        (i, j) for j in range(n) for i in range(n) if i != j and (i, j) not in zeros
    )
    Q = np.zeros((n * n, len(positions)))
    for k, (i, j) in enumerate(positions):
        Q[j * n + i, k] = 1.0
    q = np.zeros(n * n)
    q[[i * n + i for i in range(n)]] = 1.0
    return FreeEntryMap(Q, q, n, positions)


def reduced_form_covariance(B, lam) -> np.ndarray:
    """Sigma = B diag(lam) B'."""
    B = np.asarray(B, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        raise ValueError("structural variances must be strictly positive")
    S = (B * lam) @ B.T
    return 0.5 * (S + S.T)


# --------------------------------------------------------------------------
# Parameters
# --------------------------------------------------------------------------


@dataclass
class ModelParameters:
    """One parameter point theta = (alpha_*, beta_*, Gamma, b, lambda_1, lambda_2, p11, p22)."""

    alpha_star: np.ndarray  # n x r
    beta_star: np.ndarray  # n_tilde x r
    gamma: np.ndarray  # k2 x n, rows [Gamma_1'; ...; Gamma_{p-1}'; Phi']
    b_free: np.ndarray
    lambda1: np.ndarray
    lambda2: np.ndarray
    p11: float
    p22: float
    lag_order: int
    free_map: Optional[FreeEntryMap] = field(default=None, repr=False)

    def __post_init__(self):
        self.alpha_star = np.atleast_2d(np.asarray(self.alpha_star, dtype=float))
        self.beta_star = np.atleast_2d(np.asarray(self.beta_star, dtype=float))
        n = self.alpha_star.shape[0]
        if self.alpha_star.size == 0:
            self.alpha_star = self.alpha_star.reshape(n, 0)
            self.beta_star = np.zeros((self.beta_star.shape[0] if self.beta_star.shape[1] == 0 else n, 0))
        self.gamma = np.asarray(self.gamma, dtype=float).reshape(-1, n)
        self.b_free = np.asarray(self.b_free, dtype=float).ravel()
        self.lambda1 = np.asarray(self.lambda1, dtype=float).ravel()
        self.lambda2 = np.asarray(self.lambda2, dtype=float).ravel()
        if self.free_map is None:
            self.free_map = build_free_entry_map(n)

    @property
    def n(self) -> int:
        return self.alpha_star.shape[0]

    @property
    def rank(self) -> int:
        return self.alpha_star.shape[1]

    @property
    def B(self) -> np.ndarray:
        return self.free_map.assemble(self.b_free)

    @property
    def lambdas(self) -> np.ndarray:
        """2 x n array, row m-1 holding the state-m variances."""
        return np.vstack([self.lambda1, self.lambda2])

    @property
    def omega2(self) -> np.ndarray:
        return self.lambda2 / self.lambda1

    @property
    def pi(self) -> np.ndarray:
        """Levels-form loading matrix alpha_* beta~_*' (n x n)."""
        return self.alpha_star @ self.beta_star[: self.n].T

    def lag_matrices(self) -> list:
        """Gamma_1 ... Gamma_{p-1} in equation form (each n x n)."""
        n = self.n
        return [self.gamma[i * n:(i + 1) * n].T for i in range(self.lag_order - 1)]

    @property
    def phi(self) -> np.ndarray:
        """Unrestricted deterministic loadings Phi (n x k_D)."""
        return self.gamma[self.n * (self.lag_order - 1):].T

    def copy(self) -> "ModelParameters":
        return ModelParameters(
            self.alpha_star.copy(), self.beta_star.copy(), self.gamma.copy(),
            self.b_free.copy(), self.lambda1.copy(), self.lambda2.copy(),
            float(self.p11), float(self.p22), self.lag_order, self.free_map,
        )

    @classmethod
    def from_blocks(cls, alpha_star, beta_star, lags, phi, B, lambda1, lambda2,
                    p11, p22, free_map=None):
        """Build from equation-form blocks and a full B matrix."""
        B = np.asarray(B, dtype=float)
        n = B.shape[0]
        phi = np.zeros((n, 0)) if phi is None else np.asarray(phi, dtype=float).reshape(n, -1)
        gamma = np.vstack([np.asarray(G, dtype=float).T for G in lags] + [phi.T])
        fmap = free_map or build_free_entry_map(n)
        if not np.allclose(np.diag(B), 1.0):
            raise ValueError("B must have a unit diagonal")
        return cls(alpha_star, beta_star, gamma, fmap.extract(B), lambda1, lambda2,
                   p11, p22, len(lags) + 1, fmap)


# --------------------------------------------------------------------------
# State partition and likelihood
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class StateBlock:
    Z0: np.ndarray
    Z1: np.ndarray
    Z2: np.ndarray
    rows: np.ndarray

    @property
    def count(self) -> int:
        return self.Z0.shape[0]


@dataclass(frozen=True)
class StatePartition:
    blocks: tuple  # (state 1, state 2)

    def __getitem__(self, m: int) -> StateBlock:
        """Block for state ``m`` in {1, 2}."""
        return self.blocks[m - 1]

    @property
    def counts(self) -> tuple:
        return tuple(b.count for b in self.blocks)

    @property
    def T(self) -> int:
        return sum(self.counts)


def validate_path(path) -> np.ndarray:
    path = np.asarray(path)
    if path.ndim != 1:
        raise InvalidStateError("state path must be one-dimensional")
    if not np.all((path == 1) | (path == 2)):
        bad = np.flatnonzero((path != 1) & (path != 2))
        raise InvalidStateError(f"state path has labels outside {{1, 2}} at positions {bad[:5].tolist()}")
    return path.astype(np.int64)


def partition_by_state(dataset: Dataset, path) -> StatePartition:
    """Split the design rows by regime; ``path`` covers S_1..S_T."""
    path = validate_path(path)
    if path.shape[0] != dataset.T:
        raise ValueError(f"path length {path.shape[0]} does not match T={dataset.T}")
    blocks = []
    for m in (1, 2):
        rows = np.flatnonzero(path == m)
        blocks.append(StateBlock(dataset.Z0[rows], dataset.Z1[rows], dataset.Z2[rows], rows))
    return StatePartition(tuple(blocks))


def residuals(Z0, Z1, Z2, params: ModelParameters) -> np.ndarray:
    """Reduced-form residuals U = Z0 - Z1 beta_* alpha_*' - Z2 Gamma."""
    fitted = Z2 @ params.gamma
    if params.rank:
        fitted = fitted + (Z1 @ params.beta_star) @ params.alpha_star.T
    return Z0 - fitted


def _inverse_and_logdet(B):
    sign, logdet = np.linalg.slogdet(B)
    if sign == 0 or not np.isfinite(logdet):
        raise SingularMatrixError("structural matrix B is singular")
    return np.linalg.inv(B), logdet


def log_likelihood(partition: StatePartition, params: ModelParameters) -> float:
    """Gaussian log-likelihood conditional on the state path."""
    B_inv, logdet = _inverse_and_logdet(params.B)
    n = params.n
    total = -0.5 * n * partition.T * LOG_2PI - partition.T * logdet
    for m, lam in ((1, params.lambda1), (2, params.lambda2)):
        blk = partition[m]
        if blk.count == 0:
            continue
        U = residuals(blk.Z0, blk.Z1, blk.Z2, params)
        eps = U @ B_inv.T
        total -= 0.5 * blk.count * np.sum(np.log(lam))
        total -= 0.5 * np.sum(eps**2 / lam)
    return float(total)


def state_log_densities(dataset: Dataset, params: ModelParameters) -> np.ndarray:
    """``T x 2`` matrix of log N(u_t; 0, Sigma_m) for both regimes."""
    B_inv, logdet = _inverse_and_logdet(params.B)
    U = residuals(dataset.Z0, dataset.Z1, dataset.Z2, params)
    eps2 = (U @ B_inv.T) ** 2
    out = np.empty((dataset.T, 2))
    for k, lam in enumerate((params.lambda1, params.lambda2)):
        out[:, k] = (-0.5 * params.n * LOG_2PI - logdet - 0.5 * np.sum(np.log(lam))
                     - 0.5 * eps2 @ (1.0 / lam))
    return out


# --------------------------------------------------------------------------
# Companion matrix and long-run multipliers
# --------------------------------------------------------------------------


def levels_var_coefficients(params: ModelParameters) -> list:
    """A_1..A_p of the levels VAR implied by the VEC blocks."""
    n, p = params.n, params.lag_order
    G = params.lag_matrices()
    I = np.eye(n)
    if p == 1:
        return [I + params.pi]
    A = [I + params.pi + G[0]]
    for i in range(1, p - 1):
        A.append(G[i] - G[i - 1])
    A.append(-G[p - 2])
    return A


def companion_matrix(params: ModelParameters) -> np.ndarray:
    A = levels_var_coefficients(params)
    n, p = params.n, len(A)
    C = np.zeros((n * p, n * p))
    C[:n] = np.hstack(A)
    if p > 1:
        C[n:, :-n] = np.eye(n * (p - 1))
    return C


def companion_spectral_radius(params: ModelParameters) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(companion_matrix(params)))))


def is_nonexplosive(params: ModelParameters, tol: float = UNIT_ROOT_TOL) -> bool:
    return companion_spectral_radius(params) <= 1.0 + tol


def orthogonal_complement(M: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of span(M)."""
    M = np.atleast_2d(M)
    if M.shape[1] == 0:
        return np.eye(M.shape[0])
    return null_space(M.T)


def long_run_matrix(params: ModelParameters, cond_limit: float = 1e12) -> np.ndarray:
    """Xi = beta_perp (alpha_perp' Gamma beta_perp)^{-1} alpha_perp'."""
    n = params.n
    a_perp = orthogonal_complement(params.alpha_star)
    b_perp = orthogonal_complement(params.beta_star[:n])
    if a_perp.shape[1] != b_perp.shape[1]:
        raise LongRunDegeneracyError("alpha and beta~ have different column ranks")
    if a_perp.shape[1] == 0:
        return np.zeros((n, n))
    G = np.eye(n) - sum(params.lag_matrices(), np.zeros((n, n)))
    core = a_perp.T @ G @ b_perp
    if np.linalg.cond(core) > cond_limit:
        raise LongRunDegeneracyError("alpha_perp' Gamma beta_perp is singular")
    return b_perp @ np.linalg.solve(core, a_perp.T)
