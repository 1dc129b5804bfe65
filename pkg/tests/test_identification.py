import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from svecmsh.identification import (
    StructuralSolution,
    alternate_solutions,
    check_theorem_conditions,
    ordered_solution,
)
from svecmsh.model import ModelParameters, build_free_entry_map, log_likelihood, partition_by_state
from svecmsh.priors import ordering_holds, resolve_ordering
from svecmsh.simulation import builtin_dgps, simulate

SC = StructuralSolution([[1, -0.2], [0.5, 1]], [1, 0.7], [0.2, 0.1])


def _find(sols, B):
    hits = [s for s in sols if np.allclose(s.B, B, atol=1e-12)]
    assert len(hits) == 1
    return hits[0]


def test_counterexample_alternate():
    sols = alternate_solutions(SC)
    assert len(sols) == 2
    alt = _find(sols, [[1, 2], [-5, 1]])
    np.testing.assert_allclose(alt.lambda1, [0.028, 0.25], atol=1e-12)
    np.testing.assert_allclose(alt.lambda2, [0.004, 0.05], atol=1e-12)
    for s in sols:
        S1, S2 = s.covariances()
        np.testing.assert_allclose(S1, [[1.028, 0.36], [0.36, 0.95]], atol=1e-10)
        np.testing.assert_allclose(S2, [[0.204, 0.08], [0.08, 0.15]], atol=1e-10)


def test_large_contrast_alternate():
    sol = StructuralSolution([[1, -0.2], [0.5, 1]], [2.5, 1.5], [2, 0.24])
    alt = _find(alternate_solutions(sol), [[1, 2], [-5, 1]])
    np.testing.assert_allclose(alt.lambda1, [0.06, 0.625], atol=1e-12)
    np.testing.assert_allclose(alt.lambda2, [0.0096, 0.5], atol=1e-12)


def test_scalar_case_has_only_itself():
    sols = alternate_solutions(StructuralSolution([[1.0]], [2.0], [0.5]))
    assert len(sols) == 1 and sols[0].lambda1[0] == pytest.approx(2.0)


def _random_solution(rng, n):
    B = rng.normal(scale=0.5, size=(n, n))
    np.fill_diagonal(B, 1.0)
    lam1 = rng.uniform(0.5, 2.0, n)
    omega = rng.permutation(np.linspace(0.2, 0.9, n))
    return StructuralSolution(B, lam1, omega * lam1)


def test_random_three_variable_class(rng):
    sol = _random_solution(rng, 3)
    sols = alternate_solutions(sol)
    assert len(sols) == 6
    S1, S2 = sol.covariances()
    for s in sols:
        np.testing.assert_allclose(s.B @ np.diag(s.lambda1) @ s.B.T, S1, atol=1e-10)
        np.testing.assert_allclose(s.B @ np.diag(s.lambda2) @ s.B.T, S2, atol=1e-10)
        assert sorted(s.omega2) == pytest.approx(sorted(sol.omega2))


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 4), seed=st.integers(0, 10_000), order=st.sampled_from(["ascending", "descending"]))
def test_exactly_one_member_satisfies_an_ordering(n, seed, order):
    sol = _random_solution(np.random.default_rng(seed), n)
    perm = resolve_ordering(order, n)
    sols = alternate_solutions(sol)
    matching = [s for s in sols if ordering_holds(s.omega2, perm)]
    assert len(matching) == 1
    if ordering_holds(sol.omega2, perm):
        np.testing.assert_allclose(matching[0].B, sol.B, atol=1e-12)


def test_theorem_report_examples():
    rep = check_theorem_conditions([1 / 5, 1 / 7], "ascending")
    assert rep.distinct and not rep.ordering_holds and not rep.globally_identified
    rep = check_theorem_conditions([0.16, 0.8], "ascending")
    assert rep.distinct and rep.ordering_holds and rep.globally_identified
    rep = check_theorem_conditions([0.3, 0.3], "ascending")
    assert not rep.distinct and rep.row_unique == (False, False)
    rep = check_theorem_conditions(SC, "descending")
    assert rep.globally_identified
    assert any("globally identified: yes" in line for line in rep.lines())


def test_ordered_solution_picks_the_alternate():
    alt = ordered_solution(SC, "ascending")
    np.testing.assert_allclose(alt.B, [[1, 2], [-5, 1]], atol=1e-12)


def test_alternates_share_the_likelihood(rng):
    spec = builtin_dgps()["SC"]
    ds, path, _ = simulate(spec, rng)
    part = partition_by_state(ds, path[1:])
    base = spec.params
    fmap = build_free_entry_map(2)
    values = []
    for s in alternate_solutions(SC):
        p = ModelParameters(base.alpha_star, base.beta_star, base.gamma, fmap.extract(s.B),
                            s.lambda1, s.lambda2, base.p11, base.p22, base.lag_order, fmap)
        values.append(log_likelihood(part, p))
    assert abs(values[0] - values[1]) <= 1e-8


def test_solution_validation():
    with pytest.raises(ValueError):
        StructuralSolution([[2, 0], [0, 1]], [1, 1], [1, 1])
    with pytest.raises(ValueError):
        StructuralSolution([[1, 0], [0, 1]], [1, -1], [1, 1])
    with pytest.raises(ValueError):
        alternate_solutions(StructuralSolution(np.eye(9), np.ones(9), np.ones(9)))
    with pytest.raises(ValueError, match="unknown"):
        StructuralSolution.from_dict({"B": [[1]], "lambda1": [1], "lambda2": [1], "C": 0})
