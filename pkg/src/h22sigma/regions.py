"""Diamond (double-cone) regions, Poincare constants and Neumann Green's bounds."""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

from .elliptic import CouplingMap, assemble, factorize, greens_form, dipole, neumann_restrict
from .lattice import Graph, LatticeError, Torus, connected_components


@dataclass(frozen=True)
class DiamondRegion:
    torus: Torus
    sites: tuple
    x: int
    y: int
    theta: float
    delta: float
    added: tuple = ()

    def __contains__(self, j) -> bool:
        return int(j) in self._set

    @property
    def _set(self) -> frozenset:
        s = self.__dict__.get("_site_set")
        if s is None:
            s = frozenset(self.sites)
            object.__setattr__(self, "_site_set", s)
        return s

    @property
    def size(self) -> int:
        return len(self.sites)

    @property
    def separation(self) -> float:
        return self.torus.euclidean_distance(self.x, self.y)

    @property
    def r_max(self) -> float:
        return self.separation / math.sqrt(2.0)

    def radial(self, z: int, r: float) -> list[int]:
        """``R_z(r)``: region sites within Euclidean distance ``r`` of ``z``."""
        dist = self.torus.distances_from(z, "euclidean")
        return [j for j in self.sites if dist[j] <= r + 1e-12]

    def endpoint_family(self, z: int) -> list[int]:
        """``R^z_xy = {j in R : 1 <= |j - z| <= |x - y| / sqrt(2)}``."""
        dist = self.torus.distances_from(z, "euclidean")
        rmax = self.r_max + 1e-12
        return [j for j in self.sites if 1.0 - 1e-12 <= dist[j] <= rmax]

    def volume_growth_ok(self) -> bool:
        """``vol R_z(r) >= delta r^3`` on a fine grid of ``r`` up to ``|x-y|/sqrt 2``."""
        for z in (self.x, self.y):
            dist = np.sort(self.torus.distances_from(z, "euclidean")[list(self.sites)])
            for r in np.linspace(1e-3, self.r_max, 400):
                vol = np.searchsorted(dist, r + 1e-12, side="right")
                if vol < self.delta * r**3 * (1 - 1e-12):
                    return False
        return True

    def to_json(self) -> str:
        return json.dumps(
            {
                "d": self.torus.d,
                "L": self.torus.L,
                "x": self.x,
                "y": self.y,
                "theta": self.theta,
                "delta": self.delta,
                "sites": list(self.sites),
                "coords": [self.torus.coord(j).tolist() for j in self.sites],
                "added": list(self.added),
            }
        )


def _in_cone(v: np.ndarray, axis: np.ndarray, cos_theta: float, rmax: float) -> bool:
    nv = float(np.linalg.norm(v))
    if nv == 0.0:
        return True
    if nv > rmax + 1e-12:
        return False
    return float(v @ axis) >= nv * np.linalg.norm(axis) * cos_theta - 1e-12


def _bfs_connect(torus: Torus, sites: set, anchor: int) -> list[int]:
    """Add shortest lattice paths until ``sites`` is NN-connected (lexicographic ties)."""
    added = []
    while True:
        comps = connected_components(torus, sorted(sites))
        if len(comps) == 1:
            return added
        main = next(c for c in comps if anchor in c)
        others = set(sites) - set(main)
        parent = {s: None for s in sorted(main)}
        queue = deque(sorted(main))
        hit = None
        while queue and hit is None:
            u = queue.popleft()
            for v in sorted(torus.neighbors[u]):
                if v in parent:
                    continue
                parent[v] = u
                if v in others:
                    hit = v
                    break
                queue.append(v)
        if hit is None:
            raise LatticeError("cannot connect region")
        u = parent[hit]
        while u is not None and u not in main:
            sites.add(u)
            added.append(u)
            u = parent[u]


def _radial_delta(torus: Torus, sites, z: int, rmax: float) -> float:
    """Infimum over ``0 < r <= rmax`` of ``vol R_z(r) / r^3``."""
    dist = np.sort(torus.distances_from(z, "euclidean")[list(sites)])
    best = math.inf
    levels = np.unique(dist[dist <= rmax + 1e-12])
    # just below each level the volume still excludes that shell
    for lev in levels:
        if lev <= 0:
            continue
        vol = np.searchsorted(dist, lev - 1e-9, side="right")
        best = min(best, vol / lev**3)
    vol = np.searchsorted(dist, rmax + 1e-12, side="right")
    best = min(best, vol / max(rmax, 1e-300) ** 3)
    return float(best)


def build_diamond(torus: Torus, x: int, y: int, theta: float) -> DiamondRegion:
    """Lattice double cone about the segment ``x -> y``.

    A site ``j`` joins when, for its nearer endpoint ``z`` (either one on a
    tie), the angle between ``j - z`` and the segment direction is at most
    ``theta`` and ``|j - z| <= |x - y| / sqrt 2``. Shortest NN paths are then
    added until the set is connected. The construction is done from the
    endpoint with the smaller index so that swapping ``x`` and ``y`` gives the
    same set.
    """
    if torus.d != 3:
        raise LatticeError("diamonds are built on 3D tori")
    x, y = int(x), int(y)
    if x == y:
        raise LatticeError("endpoints must differ")
    if theta < math.pi / 10 - 1e-15 or theta >= math.pi / 2:
        raise LatticeError("opening half-angle must lie in [pi/10, pi/2)")
    a, b = min(x, y), max(x, y)
    u = torus.wrapped_offset(a, b).astype(float)
    sep = float(np.linalg.norm(u))
    if np.any(np.abs(u) > torus.L / 2) or sep > torus.L / 2:
        raise LatticeError("endpoints too far apart for the torus")
    rmax = sep / math.sqrt(2.0)
    cos_t = math.cos(theta)

    lo = np.floor(np.minimum(0, u) - rmax).astype(int)
    hi = np.ceil(np.maximum(0, u) + rmax).astype(int)
    ca = torus.coord(a)
    chosen: dict[int, tuple] = {}
    for p in np.stack(np.meshgrid(*[np.arange(l, h + 1) for l, h in zip(lo, hi)], indexing="ij"), -1).reshape(-1, 3):
        pa = p.astype(float)
        pb = pa - u
        da, db = np.linalg.norm(pa), np.linalg.norm(pb)
        ok_a = _in_cone(pa, u, cos_t, rmax)
        ok_b = _in_cone(pb, -u, cos_t, rmax)
        if da < db - 1e-12:
            keep = ok_a
        elif db < da - 1e-12:
            keep = ok_b
        else:
            keep = ok_a or ok_b
        if not keep:
            continue
        j = torus.site((ca + p) % torus.L)
        if j in chosen and chosen[j] != tuple(p):
            raise LatticeError("diamond overlaps itself around the torus")
        chosen[j] = tuple(p)
    sites = set(chosen) | {a, b}
    added = _bfs_connect(torus, sites, a)
    ordered = tuple(sorted(sites))
    if sep <= 1.0 + 1e-12:
        delta = float(len(ordered))
    else:
        delta = min(_radial_delta(torus, ordered, z, rmax) for z in (x, y))
    return DiamondRegion(torus, ordered, x, y, float(theta), delta, tuple(added))


# --- Poincare constant ---------------------------------------------------------------


def poincare_constant(graph: Graph, sites=None) -> float:
    """``1 / lambda_2`` of the Neumann graph Laplacian on ``sites``."""
    sites = list(range(graph.n_sites)) if sites is None else sorted(int(s) for s in sites)
    if len(sites) > 4096:
        raise ValueError("dense eigensolve limited to 4096 sites")
    if len(connected_components(graph, sites)) != 1:
        raise ValueError("region is not NN-connected")
    if len(sites) == 1:
        return 0.0
    pos = {s: k for k, s in enumerate(sites)}
    n = len(sites)
    lap = np.zeros((n, n))
    for i, j in graph.edges:
        if i in pos and j in pos:
            a, b = pos[int(i)], pos[int(j)]
            lap[a, a] += 1
            lap[b, b] += 1
            lap[a, b] -= 1
            lap[b, a] -= 1
    lam = sla.eigh(lap, eigvals_only=True, subset_by_index=[1, 1])[0]
    return float(1.0 / lam)


# --- Neumann Green's-function ordering ----------------------------------------------


@dataclass(frozen=True)
class Lemma5Report:
    hypothesis_ok: bool
    violating_site: int | None = None
    violating_endpoint: int | None = None
    G: float = float("nan")
    G_N: float = float("nan")
    beta: float = float("nan")

    @property
    def ordered(self) -> bool:
        return self.hypothesis_ok and 0.0 <= self.G <= self.G_N * (1 + 1e-12)

    @property
    def empirical_C(self) -> float:
        return self.beta * self.G_N

    def message(self) -> str:
        if not self.hypothesis_ok:
            return f"hypothesis violated at site {self.violating_site} (endpoint {self.violating_endpoint})"
        return f"G = {self.G:.6g}, G^N = {self.G_N:.6g}, beta*G^N = {self.empirical_C:.6g}, ordered = {self.ordered}"


def hypothesis_violation(region: DiamondRegion, t, a: float, alpha: float):
    """First ``(site, endpoint)`` with ``cosh(t_j - t_z) > a |j - z|^alpha``, else None."""
    t = np.asarray(t, float)
    for z in (region.x, region.y):
        dist = region.torus.distances_from(z, "euclidean")
        for j in region.endpoint_family(z):
            if math.cosh(t[j] - t[z]) > a * dist[j] ** alpha:
                return j, z
    return None


def lemma5_bound_check(region: DiamondRegion, t, a: float, alpha: float, beta: float, eps: float) -> Lemma5Report:
    """Check ``0 <= G_xy <= G^N_xy`` and record ``beta G^N_xy``.

    ``G`` uses ``B_xy = cosh(t_x - t_y)`` (the s-part set to zero); the
    Neumann form drops every bond leaving the region, sets eps to zero inside
    it and inverts on the mean-zero subspace.
    """
    if not 0 < alpha < 0.5:
        raise ValueError("alpha must lie in (0, 1/2)")
    if a <= 1:
        raise ValueError("a must exceed 1")
    t = np.asarray(t, float)
    bad = hypothesis_violation(region, t, a, alpha)
    if bad is not None:
        return Lemma5Report(False, int(bad[0]), int(bad[1]), beta=beta)
    torus = region.torus
    x, y = region.x, region.y
    c = CouplingMap.uniform(torus, beta, eps)
    op = assemble(torus, c, t)
    scale = math.exp(t[x] + t[y]) / math.cosh(t[x] - t[y])
    g_full = scale * greens_form(factorize(op), dipole(torus.n_sites, x, y))
    rop = neumann_restrict(op, region.sites, include_eps=False)
    v = rop.embed(dipole(torus.n_sites, x, y))
    g_n = scale * rop.deflated_greens_form(v)
    return Lemma5Report(True, None, None, g_full, g_n, beta)


def synthetic_admissible_field(region: DiamondRegion, alpha: float, cap: float, rng=None, noise: float = 0.0):
    """``t_j = min(alpha ln(1 + |j - x|), cap)`` plus optional uniform noise in ``[-noise, noise]``."""
    dist = region.torus.distances_from(region.x, "euclidean")
    t = np.minimum(alpha * np.log1p(dist), cap)
    if noise:
        rng = np.random.default_rng(rng)
        t = t + rng.uniform(-noise, noise, size=t.shape)
    return t


# --- conductance bound -------------------------------------------------------------------


@dataclass(frozen=True)
class ConductanceReport:
    A: float
    bound_x: float
    bound_y: float

    @property
    def holds(self) -> bool:
        return 1.0 / self.A <= min(self.bound_x, self.bound_y) * (1 + 1e-12)


def conductance_bound(t, x: int, y: int, edge, s=None) -> ConductanceReport:
    """``A = B_xy e^{-t_x - t_y} e^{t_i + t_j}`` with ``8 cosh(t_i - t_z) cosh(t_j - t_z)`` for z in {x, y}.

    ``s`` defaults to zero; pass the sampled s-field to include the s-part of B.
    """
    t = np.asarray(t, float)
    i, j = edge
    lb = abs(t[x] - t[y]) + math.log1p(math.exp(-2 * abs(t[x] - t[y]))) - math.log(2.0)
    if s is not None:
        ds = float(s[x] - s[y])
        if ds != 0.0:
            lb = float(np.logaddexp(lb, 2 * math.log(abs(ds)) - math.log(2.0) + t[x] + t[y]))
    A = math.exp(lb - t[x] - t[y] + t[i] + t[j])
    bx = 8.0 * math.cosh(t[i] - t[x]) * math.cosh(t[j] - t[x])
    by = 8.0 * math.cosh(t[i] - t[y]) * math.cosh(t[j] - t[y])
    rep = ConductanceReport(A, bx, by)
    if not rep.holds:
        raise AssertionError(f"conductance bound violated: 1/A = {1 / A:g}, bounds {bx:g}, {by:g}")
    return rep
