import itertools
import math

import numpy as np
import pytest

from steinpair import couplings as C
from steinpair import models as M
from steinpair.numerics import ParameterError


def test_rademacher_two_transitions():
    P = M.rademacher_transition(2)
    assert np.allclose(P, [[0.5, 0.5, 0.0], [0.25, 0.5, 0.25], [0.0, 0.5, 0.5]])


@pytest.mark.parametrize("n", [1, 41, 2.5])
def test_rademacher_size_errors(n):
    with pytest.raises(ParameterError):
        M.rademacher_sum(n)


def test_fixed_points_n3():
    c, _ = M.permutation_fixed_points(3)
    law = dict(zip(c.values.astype(int), c.probs))
    assert law[3] == pytest.approx(1 / 6)
    assert law[1] == pytest.approx(3 / 6)
    assert law[0] == pytest.approx(2 / 6)
    assert 2 not in law


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6, 7])
def test_fixed_point_moments(n):
    c, _ = M.permutation_fixed_points(n)
    assert c.mean() == pytest.approx(1.0, abs=1e-13)
    assert c.var() == pytest.approx(1.0, abs=1e-13)


def test_fixed_points_jumps():
    c, _ = M.permutation_fixed_points(5)
    ker = C.jump_probabilities(c)
    assert set(ker.displacements) <= {-2, -1, 0, 1, 2}
    assert ker.marginal_Pi[2] > 0 and ker.marginal_Pi[-2] > 0


def test_fixed_points_size_error():
    with pytest.raises(ParameterError):
        M.permutation_fixed_points(9)


def _unlumped_fixed_points(n):
    """Random-transposition walk on S_n as a full n!-state chain, lumped afterwards."""
    perms = list(itertools.permutations(range(n)))
    index = {p: i for i, p in enumerate(perms)}
    pairs = list(itertools.combinations(range(n), 2))
    P = np.zeros((len(perms), len(perms)))
    for p in perms:
        for a, b in pairs:
            q = list(p)
            q[a], q[b] = q[b], q[a]
            P[index[p], index[tuple(q)]] += 1 / len(pairs)
    fixed = [sum(p[i] == i for i in range(n)) for p in perms]
    return C.from_markov_chain(P, fixed)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_fixed_points_against_full_chain(n):
    lumped, _ = M.permutation_fixed_points(n)
    full = _unlumped_fixed_points(n)
    assert np.array_equal(lumped.values, full.values)
    assert np.max(np.abs(lumped.joint - full.joint)) < 1e-14


@pytest.mark.parametrize("n", [2, 3, 4])
def test_rademacher_against_full_chain(n):
    states = list(itertools.product((-1, 1), repeat=n))
    index = {s: i for i, s in enumerate(states)}
    P = np.zeros((len(states), len(states)))
    for s in states:
        for i in range(n):
            for sign in (-1, 1):
                t = list(s)
                t[i] = sign
                P[index[s], index[tuple(t)]] += 1 / (2 * n)
    full = C.from_markov_chain(P, [sum(s) / math.sqrt(n) for s in states])
    lumped, _ = M.rademacher_sum(n)
    assert np.allclose(lumped.values, full.values, atol=1e-15)
    assert np.max(np.abs(lumped.joint - full.joint)) < 1e-14


def test_immigration_death_stationary_is_truncated_poisson():
    c, _ = M.immigration_death(2.0, 10)
    k = np.arange(11)
    p = np.array([2.0**i / math.factorial(i) for i in k])
    assert np.allclose(c.probs, p / p.sum(), atol=1e-15)


def test_immigration_death_rate_error():
    with pytest.raises(ParameterError):
        M.immigration_death(1.0, 12, c_norm=5.0)


def test_skewed_two_step_bad_eps():
    with pytest.raises(ParameterError):
        M.skewed_two_step(1.0, 10, eps=0.9)


def test_biased_cycle_values_distinct():
    c, _ = M.biased_cycle_normal(12, 0.2)
    assert c.size == 12
    assert np.allclose(c.probs, 1 / 12, atol=1e-14)
    assert c.marginal_discrepancy < 1e-12


def test_biased_cycle_regression():
    c, _ = M.biased_cycle_normal(12, 0.2)
    d = C.regression_decompose(C.standardize(c))
    assert 0 < d.lam < 1
    assert d.ER2 > 0


def test_biased_cycle_errors():
    with pytest.raises(ParameterError):
        M.biased_cycle_normal(4, 0.1)
    with pytest.raises(ParameterError):
        M.biased_cycle_normal(12, 0.5)


def test_diagonal_is_poisson():
    c, _ = M.diagonal_poisson(2.0)
    assert c.mean() == pytest.approx(2.0, abs=1e-12)
    assert C.is_exchangeable(c)


@pytest.mark.parametrize("name,params", M.NORMAL_ZOO + M.POISSON_ZOO + [
    ("skewed_two_step", {"eps": 0.0}),
    ("biased_cycle", {"m": 24, "drift": 0.1}),
    ("rademacher", {"n": 32}),
    ("fixed_points", {"n": 8}),
])
def test_metadata_honesty(name, params):
    c, meta = M.build_model(name, params)
    assert c.marginal_discrepancy <= 1e-10
    assert abs(c.joint.sum() - 1) <= 1e-10
    assert C.is_exchangeable(c, 1e-12) == meta.exchangeable_expected


@pytest.mark.parametrize("n", [4, 8, 16])
def test_rademacher_conditional_v2(n):
    c, meta = M.rademacher_sum(n)
    d = C.regression_decompose(c, meta.structural_lambda)
    mom = C.conditional_V2(c, d)
    assert mom.var_EWV2 < 1e-28
    assert np.allclose(mom.EW_V2, 2 / n, atol=1e-15)


def test_build_model_parameter_parsing():
    c, meta = M.build_model("rademacher", {"n": "8"})
    assert meta.params == {"n": 8}
    with pytest.raises(ParameterError):
        M.build_model("rademacher", {"n": "eight"})
    with pytest.raises(ParameterError):
        M.build_model("rademacher", {"n": "8.5"})
    with pytest.raises(ParameterError):
        M.build_model("rademacher", {"q": "1"})
    with pytest.raises(ParameterError):
        M.build_model("nosuch", {})
