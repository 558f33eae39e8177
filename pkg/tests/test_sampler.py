import math

import numpy as np
import pytest

from h22sigma.elliptic import CouplingMap, assemble, factorize
from h22sigma.lattice import build_torus, path_graph
from h22sigma.observables import exp_t, exp_t_quadrature, hooks
from h22sigma.sampler import (
    SamplerConfig,
    Target,
    hessian_preconditioner,
    initial_field,
    local_delta_action,
    local_log_transition,
    mala_log_transition,
    merge_results,
    run_chain,
    run_chains,
    sample_s_given_t,
    woodbury_update,
)


def small_target(beta=1.3, eps=0.4):
    g = build_torus(1, 4)
    return Target(g, CouplingMap.uniform(g, beta, eps))


def test_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(algorithm="hmc")
    with pytest.raises(ValueError):
        SamplerConfig(sweeps=0)
    with pytest.raises(ValueError):
        SamplerConfig(preconditioner="diag")
    assert SamplerConfig(algorithm="local-metropolis").accept_target == 0.5


def test_mala_kernel_detailed_balance(rng):
    tgt = small_target()
    t0 = initial_field(tgt)
    C = hessian_preconditioner(tgt, t0)
    for _ in range(25):
        t = t0 + rng.normal(scale=0.4, size=4)
        s = t0 + rng.normal(scale=0.4, size=4)
        lhs = -tgt.action(t) + mala_log_transition(tgt, t, s, 0.3, C)
        rhs = -tgt.action(s) + mala_log_transition(tgt, s, t, 0.3, C)
        assert lhs == pytest.approx(rhs, abs=1e-9)


def test_local_kernel_detailed_balance(rng):
    tgt = small_target()
    for _ in range(25):
        t = rng.normal(scale=0.5, size=4)
        k = int(rng.integers(4))
        s = t.copy()
        s[k] += rng.uniform(-0.7, 0.7)
        lhs = -tgt.action(t) + local_log_transition(tgt, t, s, k, 1.0)
        rhs = -tgt.action(s) + local_log_transition(tgt, s, t, k, 1.0)
        assert lhs == pytest.approx(rhs, abs=1e-9)


def test_local_delta_matches_full_action(rng):
    g = build_torus(3, 3)
    tgt = Target(g, CouplingMap.uniform(g, 2.0, 0.2))
    t = rng.normal(scale=0.5, size=g.n_sites)
    G = tgt.factorize(t).inverse()
    for _ in range(20):
        k = int(rng.integers(g.n_sites))
        new = t[k] + rng.normal()
        dF, _, (S, dD, small) = local_delta_action(tgt, t, G, k, new)
        s = t.copy()
        s[k] = new
        assert dF == pytest.approx(tgt.action(s) - tgt.action(t), rel=1e-9, abs=1e-10)
        np.testing.assert_allclose(woodbury_update(G, S, dD, small), tgt.factorize(s).inverse(), rtol=1e-9, atol=1e-12)


def test_s_field_covariance(rng):
    g = path_graph(3)
    c = CouplingMap(np.array([0.7, 1.1]), np.array([0.3, 0.5, 0.9]))
    fact = factorize(assemble(g, c, np.array([0.2, -0.4, 0.1])))
    s = np.array([sample_s_given_t(fact, rng) for _ in range(40000)])
    np.testing.assert_allclose(np.cov(s.T), fact.inverse(), rtol=0.05, atol=0.02)


@pytest.mark.parametrize("algorithm", ["gradient-langevin", "local-metropolis"])
def test_single_site_exp_t(algorithm):
    g = build_torus(1, 1)
    c = CouplingMap.uniform(g, 0.0, 0.5)
    cfg = SamplerConfig(algorithm=algorithm, sweeps=20000, thermalization=500, step_size=1.0, seed=3)
    r = run_chain(g, c, cfg, hooks([exp_t(0)]))
    acc = r["exp_t[0]"]
    assert abs(acc.mean - 1.0) <= max(3 * acc.error, 1e-3)
    assert exp_t_quadrature(0.5) == pytest.approx(1.0, abs=1e-8)


def test_single_site_law_ks():
    from scipy import integrate, stats

    eps = 1.0
    g = build_torus(1, 1)
    cfg = SamplerConfig(sweeps=100_000, thermalization=500, step_size=1.0, seed=9)
    r = run_chain(g, CouplingMap.uniform(g, 0.0, eps), cfg, store_fields=True)

    def density(t):
        return math.sqrt(eps) * math.exp(eps - t / 2 - eps * math.cosh(t)) / math.sqrt(2 * math.pi)

    assert integrate.quad(density, -40, 40, limit=200)[0] == pytest.approx(1.0, abs=1e-10)
    grid = np.linspace(-12, 12, 4001)
    pdf = np.array([density(x) for x in grid])
    cdf = np.concatenate([[0.0], np.cumsum((pdf[1:] + pdf[:-1]) / 2 * np.diff(grid))])
    ks = stats.kstest(r.fields[:, 0], lambda x: np.interp(x, grid, cdf)).statistic
    assert ks <= 0.01


def test_same_seed_same_chain():
    g = build_torus(1, 5)
    c = CouplingMap.uniform(g, 0.5, 0.5)
    cfg = SamplerConfig(sweeps=200, thermalization=20, seed=42)
    a = run_chain(g, c, cfg, hooks([exp_t(0)]))
    b = run_chain(g, c, cfg, hooks([exp_t(0)]))
    np.testing.assert_array_equal(a.series["exp_t[0]"], b.series["exp_t[0]"])


def test_threads_do_not_change_results():
    g = build_torus(1, 4)
    c = CouplingMap.uniform(g, 0.5, 0.5)
    cfg = SamplerConfig(sweeps=100, thermalization=10, seed=9, n_chains=3)
    serial = run_chains(g, c, cfg, hooks([exp_t(1)]))
    threaded = run_chains(g, c, cfg, hooks([exp_t(1)]), threads=3)
    for s, t in zip(serial, threaded):
        np.testing.assert_array_equal(s.series["exp_t[1]"], t.series["exp_t[1]"])
    merged = merge_results(serial)
    assert merged["exp_t[1]"].count == 300


def test_stored_fields():
    g = build_torus(1, 3)
    c = CouplingMap.uniform(g, 0.5, 0.5)
    r = run_chain(g, c, SamplerConfig(sweeps=10, thermalization=0, seed=1), {}, store_fields=True)
    assert r.fields.shape == (10, 3)
    np.testing.assert_array_equal(r.fields[-1], r.final_t)


def test_initial_field_single_site():
    g = build_torus(1, 1)
    t = initial_field(Target(g, CouplingMap.uniform(g, 0.0, 0.5)))
    assert t[0] == pytest.approx(math.asinh(-1.0))
