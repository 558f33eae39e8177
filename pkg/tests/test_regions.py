import json
import math

import numpy as np
import pytest

from h22sigma.elliptic import CouplingMap, assemble, dipole, factorize, greens_form, neumann_restrict
from h22sigma.lattice import LatticeError, build_torus, path_graph
from h22sigma.regions import (
    build_diamond,
    conductance_bound,
    hypothesis_violation,
    lemma5_bound_check,
    poincare_constant,
    synthetic_admissible_field,
)

THETA = math.pi / 8


@pytest.fixture(scope="module")
def torus16():
    return build_torus(3, 16)


@pytest.fixture(scope="module")
def diamond(torus16):
    return build_diamond(torus16, torus16.site([4, 4, 4]), torus16.site([12, 4, 4]), THETA)


def test_unit_separation_is_two_sites(torus16):
    x, y = torus16.site([3, 3, 3]), torus16.site([4, 3, 3])
    assert build_diamond(torus16, x, y, THETA).sites == tuple(sorted((x, y)))


def test_axis_diamond_properties(diamond, torus16):
    assert diamond.x in diamond and diamond.y in diamond
    assert torus16.is_connected(diamond.sites)
    assert diamond.delta > 0
    assert diamond.volume_growth_ok()


def test_volume_growth_direct_count(diamond, torus16):
    for z in (diamond.x, diamond.y):
        dist = torus16.distances_from(z, "euclidean")
        for r in np.linspace(0.5, 8 / math.sqrt(2), 200):
            vol = sum(1 for j in diamond.sites if dist[j] <= r)
            assert vol >= diamond.delta * r**3 - 1e-9


def test_reflection_symmetry_and_determinism(torus16):
    pairs = [([4, 4, 4], [12, 4, 4]), ([2, 3, 4], [7, 6, 4]), ([0, 0, 0], [3, 3, 3]), ([5, 5, 5], [5, 9, 7])]
    for a, b in pairs:
        x, y = torus16.site(a), torus16.site(b)
        r1 = build_diamond(torus16, x, y, THETA)
        assert build_diamond(torus16, y, x, THETA).sites == r1.sites
        again = build_diamond(torus16, x, y, THETA)
        assert again.sites == r1.sites and again.delta == r1.delta
        assert torus16.is_connected(r1.sites)


def test_bad_inputs(torus16):
    x = torus16.site([1, 1, 1])
    with pytest.raises(LatticeError):
        build_diamond(torus16, x, x, THETA)
    with pytest.raises(LatticeError):
        build_diamond(torus16, x, torus16.site([2, 1, 1]), 0.1)
    small = build_torus(3, 6)
    with pytest.raises(LatticeError):
        build_diamond(small, small.site([0, 0, 0]), small.site([3, 3, 0]), THETA)
    with pytest.raises(LatticeError):
        build_diamond(build_torus(2, 8), 0, 3, THETA)


def test_json_export(diamond):
    payload = json.loads(diamond.to_json())
    assert payload["sites"] == list(diamond.sites)
    assert len(payload["coords"]) == diamond.size


def test_poincare_path_spectrum():
    for n in (2, 3, 7, 20):
        g = path_graph(n)
        assert poincare_constant(g) == pytest.approx(1 / (2 - 2 * math.cos(math.pi / n)), rel=1e-10)
    assert poincare_constant(path_graph(2)) == pytest.approx(0.5)


def test_poincare_rejects_disconnected():
    with pytest.raises(ValueError):
        poincare_constant(path_graph(5), [0, 1, 3])


def test_poincare_scaling_across_diamonds():
    ratios = []
    for r in (4, 8, 16):
        T = build_torus(3, 2 * r + 2)
        R = build_diamond(T, T.site([1, 1, 1]), T.site([1 + r, 1, 1]), THETA)
        ratios.append(poincare_constant(T, R.sites) / r**2)
    assert max(ratios) < 1.0


def test_lemma5_zero_field_beta_invariance(diamond, torus16):
    cs = [lemma5_bound_check(diamond, np.zeros(torus16.n_sites), 2.0, 0.3, b, 0.1).empirical_C for b in (1, 10, 100)]
    assert max(cs) - min(cs) <= 1e-9 * max(cs)


def test_lemma5_ordering_on_synthetic_fields(diamond, rng):
    for k in range(10):
        t = synthetic_admissible_field(diamond, 0.3 * rng.uniform(0.5, 1), 1.0, rng, 0.05)
        rep = lemma5_bound_check(diamond, t, 3.0, 0.3, float(rng.choice([1, 10, 100])), 0.1)
        assert rep.hypothesis_ok and rep.ordered


def test_lemma5_reports_violation(diamond, torus16):
    t = np.zeros(torus16.n_sites)
    fam = diamond.endpoint_family(diamond.x)
    j = fam[len(fam) // 2]
    t[j] = 5.0
    rep = lemma5_bound_check(diamond, t, 2.0, 0.3, 1.0, 0.1)
    assert not rep.hypothesis_ok
    assert rep.violating_site == j
    assert str(j) in rep.message()
    assert hypothesis_violation(diamond, np.zeros(torus16.n_sites), 2.0, 0.3) is None


def test_lemma5_preconditions(diamond, torus16):
    with pytest.raises(ValueError):
        lemma5_bound_check(diamond, np.zeros(torus16.n_sites), 2.0, 0.6, 1.0, 0.1)
    with pytest.raises(ValueError):
        lemma5_bound_check(diamond, np.zeros(torus16.n_sites), 1.0, 0.3, 1.0, 0.1)


def test_conductance_zero_field():
    rep = conductance_bound(np.zeros(4), 0, 3, (1, 2))
    assert rep.A == pytest.approx(1.0) and rep.bound_x == pytest.approx(8.0)


def test_conductance_random_triples(rng):
    for _ in range(500_000):
        t = rng.normal(scale=3, size=4)
        s = rng.normal(scale=3, size=4)
        assert conductance_bound(t, 0, 1, (2, 3), s=s).holds
        assert conductance_bound(t, 0, 1, (2, 3)).holds


def test_conductance_shift_invariance(rng):
    t = rng.normal(size=5)
    a = conductance_bound(t, 0, 4, (1, 2)).A
    assert conductance_bound(t + 2.5, 0, 4, (1, 2)).A == pytest.approx(a, rel=1e-12)


def test_neumann_monotonicity(diamond, torus16, rng):
    v = dipole(torus16.n_sites, diamond.x, diamond.y)
    for k in range(100):
        t = synthetic_admissible_field(diamond, 0.3, 1.0, rng, 0.05)
        op = assemble(torus16, CouplingMap.uniform(torus16, float(rng.uniform(0.5, 5)), 0.1), t)
        full = greens_form(factorize(op), v)
        restricted = neumann_restrict(op, diamond.sites)
        sub = restricted.embed(v)
        local = float(sub @ np.linalg.solve(restricted.to_dense(), sub))
        assert local >= full * (1 - 1e-12)
