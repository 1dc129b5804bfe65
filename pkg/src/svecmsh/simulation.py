"""Data generation from a known two-state SVEC-MSH process."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .filtering import ergodic_probabilities
from .identification import StructuralSolution, alternate_solutions
from .model import (
    Dataset,
    ModelParameters,
    UNIT_ROOT_TOL,
    companion_spectral_radius,
    deterministic_terms,
)


@dataclass
class DgpSpec:
    """True parameters plus the sampling design.

    ``constant``/``trend``/``seasonal`` describe the deterministic terms and
    must match the rows of beta_* (restricted) and Gamma (unrestricted).
    """

    params: ModelParameters
    T: int = 200
    burn_in: int = 100
    seed: Optional[int] = None
    constant: str = "unrestricted"
    trend: str = "none"
    seasonal: int = 0
    name: str = "custom"
    second_solution: Optional[StructuralSolution] = None
    names: tuple = ()
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.T < 1 or self.burn_in < 0:
            raise ValueError("T must be positive and burn_in non-negative")

    def to_dict(self) -> dict:
        p = self.params
        out = dict(name=self.name, T=self.T, burn_in=self.burn_in, seed=self.seed,
                   constant=self.constant, trend=self.trend, seasonal=self.seasonal,
                   lag_order=p.lag_order, alpha_star=p.alpha_star.tolist(),
                   beta_star=p.beta_star.tolist(), gamma=p.gamma.tolist(), B=p.B.tolist(),
                   lambda1=p.lambda1.tolist(), lambda2=p.lambda2.tolist(), p11=p.p11, p22=p.p22)
        if self.second_solution is not None:
            out["second_solution"] = self.second_solution.to_dict()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "DgpSpec":
        known = {"name", "T", "burn_in", "seed", "constant", "trend", "seasonal", "lag_order",
                 "alpha_star", "beta_star", "gamma", "B", "lambda1", "lambda2", "p11", "p22",
                 "second_solution"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown DGP keys: {sorted(unknown)}")
        B = np.asarray(d["B"], dtype=float)
        n = B.shape[0]
        from .model import build_free_entry_map

        fmap = build_free_entry_map(n)
        params = ModelParameters(d["alpha_star"], d["beta_star"], d.get("gamma", np.zeros((0, n))),
                                 fmap.extract(B), d["lambda1"], d["lambda2"], d["p11"], d["p22"],
                                 int(d["lag_order"]), fmap)
        second = d.get("second_solution")
        return cls(params, int(d.get("T", 200)), int(d.get("burn_in", 100)), d.get("seed"),
                   d.get("constant", "unrestricted"), d.get("trend", "none"),
                   int(d.get("seasonal", 0)), d.get("name", "custom"),
                   StructuralSolution.from_dict(second) if second else None)


def _shared_params(B, lambda1, lambda2) -> ModelParameters:
    return ModelParameters.from_blocks(
        alpha_star=np.array([[-0.1], [0.3]]),
        beta_star=np.array([[1.0], [-1.0]]),
        lags=[np.array([[0.24, -0.08], [0.1, -0.31]])],
        phi=np.array([[0.1], [0.2]]),
        B=B, lambda1=lambda1, lambda2=lambda2, p11=0.97, p22=0.97,
    )


def builtin_dgps() -> dict:
    """The small-contrast (SC) and large-contrast (LC) bivariate VAR(2) designs."""
    B = np.array([[1.0, -0.2], [0.5, 1.0]])
    designs = {"SC": ((1.0, 0.7), (0.2, 0.1)), "LC": ((2.5, 1.5), (2.0, 0.24))}
    out = {}
    for name, (l1, l2) in designs.items():
        params = _shared_params(B, l1, l2)
        sol = StructuralSolution(B, l1, l2)
        others = [s for s in alternate_solutions(sol) if not np.allclose(s.B, B)]
        out[name] = DgpSpec(params, T=200, burn_in=100, name=name,
                            second_solution=others[0] if others else None)
    return out


def simulate(spec: DgpSpec, rng=None):
    """Simulate ``spec``; returns ``(dataset, path, shocks)``.

    ``path`` holds S_0..S_T aligned with the dataset (S_0 belongs to the last
    presample row) and ``shocks`` the T x n structural innovations.  Levels
    and lagged differences start at zero; the burn-in absorbs that choice.
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    p = spec.params
    if companion_spectral_radius(p) > 1.0 + UNIT_ROOT_TOL:
        raise ValueError("DGP is explosive (spectral radius > 1)")
    n, lags = p.n, p.lag_order
    total = spec.burn_in + lags + spec.T
    d, D, rnames, unames = deterministic_terms(total, spec.constant, spec.trend, spec.seasonal)
    if d.shape[1] + n != p.beta_star.shape[0]:
        raise ValueError("restricted deterministic terms do not match beta_* rows")
    if n * (lags - 1) + D.shape[1] != p.gamma.shape[0]:
        raise ValueError("unrestricted deterministic terms do not match Gamma rows")

    states = np.empty(total, dtype=np.int64)
    pi = ergodic_probabilities(p.p11, p.p22)
    states[0] = 1 if rng.random() < pi[0] else 2
    u = rng.random(total)
    for t in range(1, total):
        stay = p.p11 if states[t - 1] == 1 else p.p22
        states[t] = states[t - 1] if u[t] < stay else 3 - states[t - 1]

    sd = np.sqrt(np.where(states[:, None] == 1, p.lambda1, p.lambda2))
    eps = rng.standard_normal((total, n)) * sd
    B = p.B
    G = p.lag_matrices()
    phi = p.phi
    y = np.zeros((total, n))
    dy = np.zeros((total, n))
    for t in range(1, total):
        ytil = np.concatenate([y[t - 1], d[t - 1]])
        step = p.alpha_star @ (p.beta_star.T @ ytil) if p.rank else np.zeros(n)
        for i, Gi in enumerate(G, start=1):
            if t - i >= 1:
                step = step + Gi @ dy[t - i]
        step = step + phi @ D[t] + B @ eps[t]
        dy[t] = step
        y[t] = y[t - 1] + step

    start = spec.burn_in
    names = spec.names or tuple(f"y{i + 1}" for i in range(n))
    dataset = Dataset(y[start:], lags, d[start:], D[start:], names, rnames, unames)
    path = states[start + lags - 1:]
    shocks = eps[start + lags:]
    return dataset, path, shocks
