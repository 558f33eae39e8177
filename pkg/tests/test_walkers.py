import itertools
from fractions import Fraction

import numpy as np
import pytest

from h22sigma.lattice import build_torus, cycle_graph, path_graph, star_graph
from h22sigma.walkers import (
    WalkState,
    env_walk_step,
    env_walk_survey,
    errw_path_probability,
    errw_run,
    errw_transition_probabilities,
    ERRWState,
    jump_probabilities,
    srw_return_probabilities,
    srw_return_within,
)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_zero_field_is_srw(d):
    T = build_torus(d, 6)
    p, death = jump_probabilities(T, np.zeros(T.n_sites), 1.3, 0.0, 0)
    assert death == 0
    assert np.allclose(p, 1 / (2 * d))


def test_death_probability_zero_field():
    T = build_torus(3, 4)
    beta, eps = 2.0, 0.7
    p, death = jump_probabilities(T, np.zeros(T.n_sites), beta, eps, 5)
    assert death == pytest.approx(eps / (6 * beta + eps))
    assert p.sum() + death == pytest.approx(1.0)


def test_probabilities_normalized_random_field(rng):
    T = build_torus(2, 5)
    for _ in range(50):
        t = rng.normal(scale=4, size=T.n_sites)
        i = int(rng.integers(T.n_sites))
        p, death = jump_probabilities(T, t, 0.5, 0.2, i)
        assert np.all(p >= 0) and p.sum() + death == pytest.approx(1.0, abs=1e-12)


def test_constant_shift_invariant_without_death(rng):
    T = build_torus(2, 5)
    t = rng.normal(size=T.n_sites)
    a, _ = jump_probabilities(T, t, 1.0, 0.0, 3)
    b, _ = jump_probabilities(T, t + 7.0, 1.0, 0.0, 3)
    assert np.allclose(a, b)


def test_three_site_chain_occupation(rng):
    # reversible measure of the skeleton chain is e^{t_i} * sum_j e^{t_j}
    g = path_graph(3)
    t = np.array([0.3, -0.5, 1.1])
    counts = np.zeros(3)
    state = WalkState(0, rng=rng)
    for _ in range(200000):
        env_walk_step(g, t, 1.0, 0.0, state)
        counts[state.site] += 1
    e = np.exp(t)
    pi = np.array([e[0] * e[1], e[1] * (e[0] + e[2]), e[2] * e[1]])
    pi /= pi.sum()
    assert np.allclose(counts / counts.sum(), pi, atol=5e-3)


def test_torus_srw_matches_oracle():
    T = build_torus(3, 64)
    M = 1000
    res = env_walk_survey(T, [np.zeros(T.n_sites)], 1.0, 0.0, 4000, M, rng=11)
    p, se = res.return_probability
    exact = srw_return_within(3, M, L=64)
    assert abs(p - exact) <= 3 * se + 1e-3


def test_oracle_consistency():
    # torus and Z^d agree until the walk can wrap around
    zd = srw_return_probabilities(3, 30)
    tor = srw_return_probabilities(3, 30, L=64)
    assert np.allclose(zd, tor, atol=1e-12)
    # 1D closed form: u_2n = C(2n,n)/4^n
    u = srw_return_probabilities(1, 10)
    assert u[4] == pytest.approx(6 / 16) and u[3] == 0
    assert 0.32 < srw_return_within(3, 1500) < 0.3405


def test_one_dimensional_recurrence_trend():
    T = build_torus(1, 4096)
    env = [np.zeros(T.n_sites)]
    p = [env_walk_survey(T, env, 1.0, 0.0, 2000, m, rng=3).return_probability[0] for m in (10, 100, 1000)]
    assert p[0] < p[1] < p[2]
    assert p[2] > 0.95


def test_survey_csv(tmp_path):
    T = build_torus(2, 8)
    res = env_walk_survey(T, [np.zeros(T.n_sites)] * 2, 1.0, 0.1, 10, 50, rng=0)
    path = tmp_path / "walk.csv"
    res.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "config,walker,outcome,jumps,displacement2"
    assert len(lines) == 21
    assert len(res.per_config_return) == 2


def test_errw_uniform_first_step():
    g = star_graph(4)
    probs = errw_transition_probabilities(g, ERRWState(0, {}, Fraction(1)))
    assert [p for _, p in probs] == [Fraction(1, 4)] * 4


def test_errw_reinforcement_exact():
    g = path_graph(3)
    st = ERRWState(1, {(0, 1): 1}, Fraction(1))
    table = dict(errw_transition_probabilities(g, st))
    assert table == {0: Fraction(2, 3), 2: Fraction(1, 3)}


def test_errw_triangle_exchangeable():
    # partial exchangeability: paths with equal edge-crossing counts and endpoints are equiprobable
    g = cycle_graph(3)
    a = Fraction(1, 2)
    groups = {}
    for path in itertools.product(range(3), repeat=5):
        full = (0,) + path
        if any(u == v for u, v in zip(full, full[1:])):
            continue
        cnt = tuple(sorted(((min(u, v), max(u, v)) for u, v in zip(full, full[1:]))))
        key = (cnt, full[-1])
        groups.setdefault(key, set()).add(errw_path_probability(g, a, 0, path))
    assert all(len(v) == 1 for v in groups.values())
    total = sum(
        errw_path_probability(g, a, 0, p) for p in itertools.product(range(3), repeat=5)
    )
    assert total == 1


def test_errw_run_frequencies():
    freq = errw_run(cycle_graph(3), 1.0, 3000, seed=1)
    assert sum(freq.values()) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        errw_run(cycle_graph(3), 0, 10)
