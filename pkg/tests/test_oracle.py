from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from misclassiv import dgp
from misclassiv.moments import EmpiricalCell, population_law, tail_means
from misclassiv.oracle import (
    MAX_SUPPORT,
    DiscreteInstance,
    bruteforce_sharp_set,
    compare_with_analytic,
    knapsack_extreme_mean,
    lp_extreme_mean,
    lp_feasible_mixture,
    mahajan_incompatibility_check,
    near_boundary,
)
from misclassiv.partial_id import solve_conditional_means

from test_partial_id import KEYS, instances


def _grids(inst, n=21):
    a0 = np.linspace(0.0, min(inst.p), n)
    a1 = np.linspace(0.0, 1.0 - max(inst.p), n)
    return a0, a1


def _random_instance(rng, n_support=12):
    sup = np.sort(rng.choice(np.arange(-30, 31), n_support, replace=False)) / 3
    masses = {key: rng.dirichlet(np.ones(n_support) * 0.7) for key in KEYS}
    p = np.sort(rng.uniform(0.1, 0.9, 2))
    return DiscreteInstance(sup, masses, (float(p[0]), float(p[1])))


# --- DiscreteInstance ---------------------------------------------------------

def test_instance_validation():
    m = {key: np.array([0.5, 0.5]) for key in KEYS}
    DiscreteInstance([0.0, 1.0], m, (0.3, 0.6))
    with pytest.raises(ValueError, match="strictly increasing"):
        DiscreteInstance([1.0, 0.0], m, (0.3, 0.6))
    bad = dict(m)
    bad[(1, 1)] = np.array([0.7, 0.7])
    with pytest.raises(ValueError, match="probability vector"):
        DiscreteInstance([0.0, 1.0], bad, (0.3, 0.6))
    big = {key: np.full(MAX_SUPPORT + 1, 1 / (MAX_SUPPORT + 1)) for key in KEYS}
    with pytest.raises(ValueError, match="cap"):
        DiscreteInstance(np.arange(MAX_SUPPORT + 1.0), big, (0.3, 0.6))


def test_law_roundtrip():
    inst = _random_instance(np.random.default_rng(0))
    back = DiscreteInstance.from_law(inst.to_law())
    for key in KEYS:
        full = np.zeros(len(inst.support))
        full[np.searchsorted(inst.support, back.support)] = back.masses[key]
        assert np.allclose(full, inst.masses[key], atol=1e-15)
        assert abs(back.mean(*key) - inst.mean(*key)) < 1e-12


# --- extreme means -----------------------------------------------------------------

def test_knapsack_examples():
    sup = np.array([1.0, 2.0, 3.0, 4.0])
    mass = np.full(4, 0.25)
    assert knapsack_extreme_mean(sup, mass, 0.5, True) == 3.5
    assert knapsack_extreme_mean(sup, mass, 0.5, False) == 1.5
    assert knapsack_extreme_mean(sup, mass, 0.375, True) == pytest.approx((0.25 * 4 + 0.125 * 3) / 0.375)
    assert knapsack_extreme_mean(sup, mass, 1.0, True) == 2.5


@given(instances(max_support=12), st.floats(1e-6, 1.0), st.sampled_from(KEYS))
def test_lp_mean_bound_equivalence(inst, r, key):
    sup, mass = inst.support, inst.masses[key]
    lo, hi = tail_means(EmpiricalCell.from_atoms(sup, mass), r)
    scale = max(1.0, np.abs(sup).max())
    assert abs(knapsack_extreme_mean(sup, mass, r, True) - hi) < 1e-9 * scale
    assert abs(knapsack_extreme_mean(sup, mass, r, False) - lo) < 1e-9 * scale
    assert abs(lp_extreme_mean(sup, mass, r, True) - hi) < 1e-9 * scale
    assert abs(lp_extreme_mean(sup, mass, r, False) - lo) < 1e-9 * scale


# --- feasibility -----------------------------------------------------------------------

@given(instances())
def test_origin_feasible(inst):
    assert lp_feasible_mixture(inst, 0.0, 0.0)
    assert lp_feasible_mixture(inst, 0.0, 0.0, method="highs")


def test_c1_endog_truth_feasible():
    inst = DiscreteInstance.from_law(population_law(dgp.c1_endog()))
    assert lp_feasible_mixture(inst, 0.1, 0.2)
    assert lp_feasible_mixture(inst, 0.1, 0.2, method="highs")


def test_latent_mean_outside_hull_infeasible():
    rng = np.random.default_rng(3)
    found = 0
    for _ in range(20):
        inst = _random_instance(rng, 6)
        law = inst.to_law()
        a0g, a1g = _grids(inst)
        for a0 in a0g[1:-1]:
            for a1 in a1g[1:-1]:
                for k in (0, 1):
                    mu0, mu1 = solve_conditional_means(a0, a1, law, k)
                    if max(mu0, mu1) > inst.support[-1] or min(mu0, mu1) < inst.support[0]:
                        assert not lp_feasible_mixture(inst, a0, a1)
                        if found % 10 == 0:
                            assert not lp_feasible_mixture(inst, a0, a1, method="highs")
                        found += 1
    assert found > 0


def test_singular_system_unequal_means_infeasible():
    inst = _random_instance(np.random.default_rng(4), 5)
    assert inst.mean(0, 0) != inst.mean(1, 0)
    assert not lp_feasible_mixture(inst, inst.p[0], 0.0)
    assert not lp_feasible_mixture(inst, 0.0, 1.0 - inst.p[1])


def test_case_iii_full_rectangle():
    rng = np.random.default_rng(5)
    f0, f1 = rng.dirichlet(np.ones(7)), rng.dirichlet(np.ones(7))
    masses = {(0, 0): f0, (1, 0): f0, (0, 1): f1, (1, 1): f1}
    inst = DiscreteInstance(np.arange(7.0), masses, (0.25, 0.65))
    a0g, a1g = _grids(inst)
    mask = bruteforce_sharp_set(inst, a0g, a1g)
    assert mask.all()
    assert bruteforce_sharp_set(inst, a0g, a1g, method="highs").all()


def test_exogenous_degenerate_c1_agreement():
    inst = DiscreteInstance.from_law(population_law(dgp.c1()))
    cmp = compare_with_analytic(inst, *_grids(inst))
    assert cmp.disagreements == 0 and cmp.boundary_disagreements == 0
    assert cmp.bruteforce[0, 0]
    assert cmp.bruteforce.any() and not cmp.bruteforce.all()


def test_random_instances_agree_with_analytic():
    rng = np.random.default_rng(6)
    for _ in range(8):
        inst = _random_instance(rng, int(rng.integers(2, 13)))
        cmp = compare_with_analytic(inst, *_grids(inst))
        assert cmp.disagreements == 0
        assert cmp.boundary_disagreements == 0


def test_greedy_matches_highs():
    rng = np.random.default_rng(7)
    for _ in range(4):
        inst = _random_instance(rng, 8)
        a0g, a1g = _grids(inst, 11)
        assert np.array_equal(bruteforce_sharp_set(inst, a0g, a1g),
                              bruteforce_sharp_set(inst, a0g, a1g, method="highs"))


def test_near_boundary_band():
    m = np.zeros((5, 5), dtype=bool)
    m[:2, :2] = True
    band = near_boundary(m)
    assert band[1, 1] and band[2, 2] and band[0, 2]
    assert not band[0, 0] and not band[4, 4]
    assert not near_boundary(np.ones((3, 3), dtype=bool)).any()


# --- z-invariant latent error means --------------------------------------------------------

def test_incompatibility_examples():
    rep = mahajan_incompatibility_check(0.3, 0.7, 0.5)
    assert abs(float(rep.determinant) - 0.4) < 1e-15
    assert rep.rank == 2 and rep.null_space is None
    assert not rep.consistent and rep.branch == "inconsistent"
    assert rep.unique_solution == (0.0, 0.0)
    rep = mahajan_incompatibility_check(0.4, 0.4, 0.5)
    assert rep.determinant == 0 and rep.rank == 1
    assert rep.consistent and rep.branch == "no_first_stage"
    n0, n1 = rep.null_space
    assert (1 - Fraction(0.4)) * n0 + Fraction(0.4) * n1 == 0 and (n0, n1) != (0, 0)
    rep = mahajan_incompatibility_check(0.3, 0.7, 0.0)
    assert rep.consistent and rep.branch == "exogenous"


@given(st.floats(0.01, 0.99), st.floats(0.01, 0.99), st.floats(-5, 5))
def test_residual_zero_iff(p0, p1, m):
    rep = mahajan_incompatibility_check(p0, p1, m)
    zero = all(x == 0 for x in rep.residual)
    assert zero == (m == 0 or p0 == p1)


def test_residual_equal_probabilities_any_level():
    for m in (0.1, -3.0, 1e-8):
        assert mahajan_incompatibility_check(0.55, 0.55, m).residual == (0, 0)
