import math

import numpy as np
import pytest

from losstomo import fixtures as F
from losstomo.minc import solve_minc
from losstomo.oracle import (AOL, RL, SBRL, SSNL, LinkLikelihood, gradient_check, imp,
                             link_class, link_equation_residuals, loglik, maximize)
from losstomo.path import estimate_all_paths
from losstomo.simulate import LossModel, simulate
from losstomo.stats import StatTable, build_stats


def hand_table():
    t = F.f1()
    return t, StatTable(t, {0: 3}, {(1, 0): 3, (2, 0): 2, (3, 0): 2},
                        joint={(frozenset({2, 3}), 0): 1})


def test_loglik_by_hand():
    t, st = hand_table()
    th = {1: 0.1, 2: 0.2, 3: 0.3}
    # link 1: 3 confirmed, none uncertain; links 2, 3: 2 confirmed, 1 uncertain each
    expect = 3 * math.log(0.9) + 2 * math.log(0.8) + math.log(0.2) \
        + 2 * math.log(0.7) + math.log(0.3)
    assert loglik(th, st, t) == pytest.approx(expect, rel=1e-14)


def test_perfect_observation_limit():
    t = F.f1()
    st = StatTable(t, {0: 50}, {(1, 0): 50, (2, 0): 50, (3, 0): 50})
    assert loglik({1: 1e-12, 2: 1e-12, 3: 1e-12}, st, t) == pytest.approx(0.0, abs=1e-8)


def test_domain_error():
    t, st = hand_table()
    with pytest.raises(ValueError):
        loglik({1: 1.0, 2: 0.1, 3: 0.1}, st, t)


def test_link_classes():
    t = F.f3()
    assert link_class(t, 1) == RL and link_class(t, 6) == RL
    assert link_class(t, 2) == SBRL
    assert link_class(t, 5) == SSNL
    assert link_class(t, 8) == AOL and link_class(t, 14) == AOL


def test_tree_maximizer_matches_tree_polynomial():
    t = F.f1()
    st = StatTable(t, {0: 1000}, {(1, 0): 784, (2, 0): 720, (3, 0): 640})
    res = maximize(st, t)
    A = solve_minc(0.784, [0.72, 0.64])
    assert 1 - res.theta[1] == pytest.approx(A, abs=1e-8)
    assert 1 - res.theta[2] == pytest.approx(0.72 / A, abs=1e-8)


def test_two_source_maximizer_matches_path_estimator():
    t = F.f2()
    st = build_stats(t, simulate(t, LossModel.uniform(t, 0.06), 10_000, seed=1))
    _, le = estimate_all_paths(st, t)
    res = maximize(st, t)
    for k in (5, 6):
        assert res.theta[k] == pytest.approx(le.theta(k), abs=1e-4)
    for c in le.composites:
        assert np.prod([1 - res.theta[k] for k in c.links]) == pytest.approx(c.pass_rate, abs=1e-4)


def test_random_starts_agree():
    t = F.random_tree(np.random.default_rng(2), max_links=8)
    st = build_stats(t, simulate(t, LossModel.uniform(t, 0.08), 5000, seed=2))
    res = maximize(st, t, starts=10, seed=3)
    assert max(res.starts) - min(res.starts) < 1e-8
    for seed in (4, 5):
        other = maximize(st, t, starts=1, seed=seed)
        for k in res.theta:
            assert other.theta[k] == pytest.approx(res.theta[k], abs=1e-6)


def test_path_estimate_beats_random_perturbations():
    t = F.f3()
    st = build_stats(t, simulate(t, F.f3_loss(), 5000, seed=3))
    _, le = estimate_all_paths(st, t)
    f = LinkLikelihood(st, t)
    best = f(le.thetas())
    rng = np.random.default_rng(3)
    x = f.vector(le.thetas())
    for _ in range(100):
        y = np.clip(x + rng.normal(0, 1e-3, len(x)), 1e-9, 0.99)
        assert f(y) <= best + 1e-9


def test_oracle_limit():
    t = F.f3()
    st = build_stats(t, simulate(t, F.f3_loss(), 100, seed=0))
    with pytest.raises(ValueError):
        maximize(st, t)


def test_gradient_against_finite_differences():
    t, _ = hand_table()
    st = build_stats(t, simulate(t, LossModel.uniform(t, 0.0), 200, seed=0))
    assert gradient_check({1: 0.5, 2: 0.5, 3: 0.5}, st, t) < 1e-5
    rng = np.random.default_rng(4)
    st = build_stats(t, simulate(t, LossModel.uniform(t, 0.2), 500, seed=4))
    for _ in range(10):
        th = dict(zip((1, 2, 3), rng.uniform(0.01, 0.9, 3)))
        assert gradient_check(th, st, t) < 1e-5


def test_gradient_vanishes_at_maximizer():
    t = F.f2()
    st = build_stats(t, simulate(t, LossModel.uniform(t, 0.1), 4000, seed=5))
    res = maximize(st, t)
    f = LinkLikelihood(st, t)
    # the serial links are only identified through their product; compare the product direction
    assert res.gradient_norm < 1e-6 or np.abs(f.gradient(res.theta)[[4, 5]]).max() < 1e-6


def test_concave_along_random_segments():
    t = F.f3()
    t = F.random_two_source(np.random.default_rng(6))
    st = build_stats(t, simulate(t, F.random_loss(np.random.default_rng(6), t), 3000, seed=6))
    f = LinkLikelihood(st, t)
    rng = np.random.default_rng(7)
    m = len(f.link_ids)
    for _ in range(100):
        a, b = rng.uniform(0.01, 0.6, m), rng.uniform(0.01, 0.6, m)
        lam = rng.uniform()
        mid = f(lam * a + (1 - lam) * b)
        assert mid >= lam * f(a) + (1 - lam) * f(b) - 1e-9


def test_link_equations_hold_at_the_maximizer():
    rng = np.random.default_rng(8)
    for _ in range(5):
        t = F.random_tree(rng, max_links=9)
        st = build_stats(t, simulate(t, F.random_loss(rng, t), 5000, seed=int(rng.integers(1e6))))
        res = maximize(st, t)
        r = link_equation_residuals(res.theta, st, t)
        assert max(abs(v) for v in r.values()) < 1e-6


def test_unconfirmed_arrivals_match_subtree_rate_at_maximizer():
    t = F.f1()
    st = build_stats(t, simulate(t, LossModel.uniform(t, 0.1), 5000, seed=9))
    res = maximize(st, t)
    beta = LinkLikelihood(st, t).state(res.theta).beta[1]
    n1 = st.n1(1, 0)
    assert imp(res.theta, st, 0, 1, t) == pytest.approx(n1 * (1 - beta) / beta, rel=1e-6)


def test_link_equations_need_a_single_source():
    t = F.f2()
    st = build_stats(t, simulate(t, LossModel.uniform(t, 0.1), 100, seed=0))
    with pytest.raises(ValueError):
        link_equation_residuals({k: 0.1 for k in range(1, 7)}, st, t)
