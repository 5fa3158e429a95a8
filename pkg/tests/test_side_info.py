import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kellycap import (
    InvalidInputError,
    JointMarket,
    SampleSet,
    best_stock_entropy,
    convexity_probe,
    DiscreteMarket,
    entropy,
    fvsi,
    fvsi_bounds,
    fvsi_report,
    garble_labels,
    garble_si,
    mutual_information,
    solve_conditional_portfolios,
    solve_log_optimal,
)

LOG2 = math.log(2)
TOL = 1e-9


def perfect_race():
    return JointMarket.from_atoms(np.diag([2.0, 2.0]), [0.5, 0.5], [1, 2])


def independent_race():
    V = np.vstack([np.diag([2.0, 2.0])] * 2)
    return JointMarket.from_atoms(V, [0.25] * 4, [1, 1, 2, 2])


def section_example():
    # cash plus one stock paying 2 or 3; S reveals the stock
    return JointMarket.from_atoms([[1.0, 2.0], [1.0, 3.0]], [0.5, 0.5], [1, 2])


def random_joint(rng, dim=None, n=None, K=None, horse_race=False):
    dim = dim or int(rng.integers(1, 4))
    n = n or int(rng.integers(1, 6))
    K = K or int(rng.integers(1, 4))
    if horse_race:
        n = dim
        X = np.diag(rng.uniform(0.5, 4.0, dim))
    else:
        X = rng.lognormal(0.0, 0.5, size=(n, dim))
    px = rng.dirichlet(np.ones(n))
    kernel = rng.dirichlet(np.ones(K), size=n)
    V = np.repeat(X, K, axis=0)
    p = (px[:, None] * kernel).ravel()
    s = np.tile(np.arange(1, K + 1), n)
    keep = p > 0
    return JointMarket.from_atoms(V[keep], p[keep], s[keep], K)


def random_kernel(rng, K, K2):
    return rng.dirichlet(np.ones(K2), size=K)


def bsc(eps):
    return np.array([[1 - eps, eps], [eps, 1 - eps]])


def h2(eps):
    return entropy([eps, 1 - eps])


class TestConditionalPortfolios:
    def test_perfect_race(self):
        pol = solve_conditional_portfolios(perfect_race())
        np.testing.assert_allclose(pol.per_state[1].weights, [1.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(pol.per_state[2].weights, [0.0, 1.0], atol=1e-12)
        assert pol.aided_growth == pytest.approx(LOG2, abs=1e-12)

    def test_independent_matches_unconditional(self):
        jm = independent_race()
        b = solve_log_optimal(jm.x_marginal()).weights
        pol = solve_conditional_portfolios(jm)
        for k in (1, 2):
            np.testing.assert_allclose(pol.per_state[k].weights, b, atol=1e-9)

    def test_single_state(self):
        rng = np.random.default_rng(1)
        jm = random_joint(rng, dim=3, n=4, K=1)
        rep = solve_log_optimal(jm.x_marginal())
        pol = solve_conditional_portfolios(jm)
        np.testing.assert_allclose(pol.per_state[1].weights, rep.weights, atol=1e-12)
        assert pol.aided_growth == pytest.approx(rep.growth_rate, abs=1e-14)


class TestFvsi:
    def test_perfect_race(self):
        assert fvsi(perfect_race()) == pytest.approx(LOG2, abs=TOL)

    def test_independent(self):
        assert abs(fvsi(independent_race())) <= TOL

    def test_section_example(self):
        rep = fvsi_report(section_example())
        assert abs(rep.v_raw) <= TOL
        assert rep.mi_bound == pytest.approx(LOG2, abs=1e-15)
        assert rep.entropy_bound == 0.0
        assert rep.tighter == "entropy"

    def test_report_json(self):
        d = json.loads(json.dumps(fvsi_report(perfect_race()).to_dict()))
        for key in ("v_raw", "v_clamped", "mi_bound", "entropy_bound", "policy"):
            assert key in d
        assert float(d["v_clamped_bits"]) == pytest.approx(1.0, abs=1e-9)
        assert set(d["policy"]["per_state"]) == {"1", "2"}

    def test_clamped_keeps_raw(self):
        rep = fvsi_report(independent_race())
        assert rep.v_clamped >= 0.0
        assert rep.v_clamped == max(rep.v_raw, 0.0)

    def test_bounds_on_perfect_race(self):
        mi, ent = fvsi_bounds(perfect_race())
        assert mi == pytest.approx(LOG2, abs=1e-15)
        assert ent == pytest.approx(LOG2, abs=1e-15)

    def test_from_samples(self):
        s = SampleSet(np.array([[2.0, 0.0], [0.0, 2.0]] * 3), np.array([1, 2] * 3))
        assert fvsi(JointMarket(s)) == pytest.approx(LOG2, abs=TOL)

    def test_samples_need_labels(self):
        with pytest.raises(InvalidInputError):
            JointMarket(SampleSet(np.ones((2, 2))))


class TestInformationBounds:
    def test_mi_independent(self):
        assert abs(mutual_information(independent_race())) <= 1e-15

    def test_mi_deterministic(self):
        X = [[1.0, 2.0], [1.0, 3.0], [2.0, 1.0], [3.0, 1.0]]
        jm = JointMarket.from_atoms(X, [0.25] * 4, [1, 1, 2, 2])
        assert mutual_information(jm) == pytest.approx(LOG2, abs=1e-15)

    def test_entropy_best_always_same(self):
        m = DiscreteMarket([[3.0, 1.0], [2.0, 1.5]], [0.5, 0.5])
        assert best_stock_entropy(m) == 0.0

    def test_entropy_three_way(self):
        m = DiscreteMarket([[3.0, 1.0, 1.0], [1.0, 3.0, 1.0], [1.0, 1.0, 3.0]], [0.5, 0.25, 0.25])
        assert best_stock_entropy(m) == pytest.approx(1.5 * LOG2, abs=1e-15)

    def test_entropy_ties_lowest_index(self):
        m = DiscreteMarket([[2.0, 2.0], [1.0, 3.0]], [0.5, 0.5])
        assert best_stock_entropy(m) == pytest.approx(LOG2, abs=1e-15)
        m = DiscreteMarket([[2.0, 2.0]], [1.0])
        assert best_stock_entropy(m) == 0.0


class TestGarbling:
    def test_identity(self):
        jm = random_joint(np.random.default_rng(2), dim=2, n=3, K=3)
        g = garble_si(jm, np.eye(3))
        np.testing.assert_allclose(g.joint_table(), jm.joint_table(), atol=1e-15)
        assert fvsi(g) == pytest.approx(fvsi(jm), abs=1e-12)

    def test_constant_rows(self):
        jm = random_joint(np.random.default_rng(3), dim=3, n=4, K=2)
        g = garble_si(jm, [[0.3, 0.7], [0.3, 0.7]])
        assert abs(mutual_information(g)) <= 1e-14
        assert abs(fvsi(g)) <= TOL

    def test_bsc(self):
        v = fvsi(garble_si(perfect_race(), bsc(0.1)))
        assert v == pytest.approx(LOG2 - h2(0.1), abs=TOL)
        assert v == pytest.approx(0.3681, abs=1e-4)

    @pytest.mark.parametrize("kernel", [[[0.5, 0.6], [0.5, 0.5]], [[1.0, 0.0]], [[-0.1, 1.1], [0, 1]]])
    def test_rejects_kernels(self, kernel):
        with pytest.raises(InvalidInputError):
            garble_si(perfect_race(), kernel)

    def test_garble_labels_seeded(self):
        s = SampleSet(np.ones((200, 2)), np.tile([1, 2], 100))
        a = garble_labels(s, bsc(0.2), seed=5)
        b = garble_labels(s, bsc(0.2), seed=5)
        np.testing.assert_array_equal(a.si_labels, b.si_labels)
        assert 0.1 < np.mean(a.si_labels != s.si_labels) < 0.3
        np.testing.assert_array_equal(garble_labels(s, np.eye(2), seed=0).si_labels, s.si_labels)


class TestConvexityProbe:
    def test_identical(self):
        jm = random_joint(np.random.default_rng(4), dim=2, n=3, K=2)
        r = convexity_probe(jm, jm)
        np.testing.assert_allclose(r.growth, r.chord, atol=1e-12)
        assert r.holds

    def test_race_midpoint(self):
        r = convexity_probe(perfect_race(), independent_race())
        mid = r.growth[5]
        assert r.t_grid[5] == 0.5
        assert mid == pytest.approx(LOG2 - h2(0.25), abs=TOL)
        assert mid == pytest.approx(0.1308, abs=1e-4)
        assert r.chord[5] == pytest.approx(0.5 * LOG2, abs=1e-12)
        assert r.holds

    def test_marginal_mismatch(self):
        other = JointMarket.from_atoms(np.diag([2.0, 2.0]), [0.6, 0.4], [1, 2])
        with pytest.raises(InvalidInputError):
            convexity_probe(perfect_race(), other)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_random_pairs(self, seed):
        rng = np.random.default_rng(seed)
        jm = random_joint(rng, dim=2, n=3, K=2)
        # the product coupling of the two marginals shares both with jm
        T = jm.joint_table()
        q = T.sum(axis=0)
        px = T.sum(axis=1)
        V = np.repeat(jm.x_marginal().values, 2, axis=0)
        p = (px[:, None] * q[None, :]).ravel()
        s = np.tile([1, 2], px.size)
        indep = JointMarket.from_atoms(V, p, s, 2)
        assert convexity_probe(jm, indep).holds


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_value_within_bounds(seed):
    jm = random_joint(np.random.default_rng(seed))
    rep = fvsi_report(jm)
    assert rep.v_raw >= -TOL
    assert rep.v_raw <= min(rep.mi_bound, rep.entropy_bound) + TOL


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_data_processing(seed):
    rng = np.random.default_rng(seed)
    jm = random_joint(rng)
    Z = garble_si(jm, random_kernel(rng, jm.K, int(rng.integers(1, 4))))
    assert fvsi(Z) <= fvsi(jm) + TOL


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_horse_race_value_equals_information(seed):
    jm = random_joint(np.random.default_rng(seed), horse_race=True)
    assert fvsi_report(jm).v_raw == pytest.approx(mutual_information(jm), abs=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_refinement_never_hurts(seed):
    rng = np.random.default_rng(seed)
    fine = random_joint(rng, K=3)
    # merge states 2 and 3 of the fine SI
    coarse = garble_si(fine, [[1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
    assert fvsi(fine) >= fvsi(coarse) - TOL
