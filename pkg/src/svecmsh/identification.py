"""Observationally equivalent structural decompositions and their uniqueness.

Given ``Sigma_1 = B Lambda_1 B'`` and ``Sigma_2 = B Lambda_2 B'`` with a unit
diagonal on B, every other decomposition is obtained from a signed column
permutation of ``C = B Lambda_1^{1/2}``.  Pairwise distinct variance ratios
make each row of B unique up to the column order; a strict ordering of the
ratios pins down one member of the class.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .model import reduced_form_covariance
from .priors import ordering_holds, resolve_ordering

MAX_ENUMERATION_DIM = 8


@dataclass(frozen=True)
class StructuralSolution:
    B: np.ndarray
    lambda1: np.ndarray
    lambda2: np.ndarray

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        l1 = np.asarray(self.lambda1, dtype=float).ravel()
        l2 = np.asarray(self.lambda2, dtype=float).ravel()
        n = B.shape[0]
        if B.shape != (n, n) or l1.shape != (n,) or l2.shape != (n,):
            raise ValueError("B must be n x n and both variance vectors of length n")
        if not np.allclose(np.diag(B), 1.0, atol=1e-12):
            raise ValueError("B must have a unit diagonal")
        if np.any(l1 <= 0) or np.any(l2 <= 0):
            raise ValueError("structural variances must be positive")
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "lambda1", l1)
        object.__setattr__(self, "lambda2", l2)

    @property
    def n(self) -> int:
        return self.B.shape[0]

    @property
    def omega2(self) -> np.ndarray:
        return self.lambda2 / self.lambda1

    def covariances(self):
        return (reduced_form_covariance(self.B, self.lambda1),
                reduced_form_covariance(self.B, self.lambda2))

    def to_dict(self) -> dict:
        return {"B": self.B.tolist(), "lambda1": self.lambda1.tolist(),
                "lambda2": self.lambda2.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "StructuralSolution":
        unknown = set(d) - {"B", "lambda1", "lambda2"}
        if unknown:
            raise ValueError(f"unknown solution keys: {sorted(unknown)}")
        return cls(d["B"], d["lambda1"], d["lambda2"])


def _relative_gap(A, B) -> float:
    return float(np.linalg.norm(A - B) / max(np.linalg.norm(B), 1e-300))


def alternate_solutions(sol: StructuralSolution, tol: float = 1e-8) -> list:
    """All unit-diagonal decompositions reproducing both covariance matrices.

    The input itself is the identity-permutation member of the list, which is
    ordered by permutation in lexicographic order.
    """
    n = sol.n
    if n > MAX_ENUMERATION_DIM:
        raise ValueError(f"enumeration over n! permutations is limited to n <= {MAX_ENUMERATION_DIM}")
    if abs(np.linalg.det(sol.B)) < 1e-300:
        raise ValueError("B must be non-singular")
    S1, S2 = sol.covariances()
    C = sol.B * np.sqrt(sol.lambda1)
    omega = sol.omega2
    out = []
    for perm in itertools.permutations(range(n)):
        Ct = C[:, perm].copy()
        diag = np.diag(Ct).copy()
        if np.any(np.abs(diag) < 1e-14 * np.abs(C).max()):
            continue
        # Column signs of Q chosen so that diag(C~) > 0.
        Ct *= np.sign(diag)
        d = np.diag(Ct)
        lam1 = d**2
        lam2 = omega[list(perm)] * lam1
        cand = StructuralSolution(Ct / d, lam1, lam2)
        C1, C2 = cand.covariances()
        if _relative_gap(C1, S1) <= tol and _relative_gap(C2, S2) <= tol:
            out.append(cand)
    return out


@dataclass(frozen=True)
class IdentificationReport:
    omega2: tuple
    distinct: bool
    row_unique: tuple
    ordering: tuple
    ordering_holds: bool
    globally_identified: bool

    def lines(self) -> list:
        ordering = "none" if self.ordering is None else ",".join(str(i) for i in self.ordering)
        return [
            "omega2: " + ", ".join(f"{w:.6g}" for w in self.omega2),
            f"pairwise distinct ratios: {'yes' if self.distinct else 'no'}",
            "rows with a unique ratio: " + ", ".join(str(i + 1) for i, u in enumerate(self.row_unique) if u),
            f"ordering ({ordering}) satisfied: {'yes' if self.ordering_holds else 'no'}",
            f"globally identified: {'yes' if self.globally_identified else 'no'}",
        ]


def check_theorem_conditions(sol, ordering="ascending", rtol: float = 1e-12) -> IdentificationReport:
    """Distinctness of the ratios, the ordering restriction, and the combined verdict.

    ``sol`` may be a ``StructuralSolution`` or just the vector of ratios.
    """
    omega = sol.omega2 if isinstance(sol, StructuralSolution) else np.asarray(sol, dtype=float).ravel()
    n = omega.shape[0]
    scale = np.maximum(np.abs(omega)[:, None], np.abs(omega)[None, :])
    close = np.abs(omega[:, None] - omega[None, :]) <= rtol * scale
    np.fill_diagonal(close, False)
    row_unique = tuple(bool(not close[k].any()) for k in range(n))
    distinct = all(row_unique)
    perm = resolve_ordering(ordering, n)
    holds = ordering_holds(omega, perm)
    return IdentificationReport(tuple(float(w) for w in omega), distinct, row_unique, perm,
                                holds, distinct and holds)


def ordered_solution(sol: StructuralSolution, ordering, tol: float = 1e-8):
    """The member of the equivalence class satisfying ``ordering`` (or ``None``)."""
    perm = resolve_ordering(ordering, sol.n)
    for cand in alternate_solutions(sol, tol):
        if ordering_holds(cand.omega2, perm):
            return cand
    return None
