"""Random walk in the environment generated by ``D(t)`` and edge-reinforced walks.

From site ``i`` the jump chain moves to neighbor ``j`` with probability
``beta e^{t_i + t_j} / W_i`` and dies with probability ``eps e^{t_i} / W_i``,
where ``W_i = sum_j beta e^{t_i + t_j} + eps e^{t_i}``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .lattice import Graph, Torus


# --- environment walk --------------------------------------------------------------


@dataclass
class WalkState:
    site: int
    jumps: int = 0
    alive: bool = True
    rng: np.random.Generator = field(default_factory=np.random.default_rng)


def jump_probabilities(graph: Graph, t, beta: float, eps: float, i: int) -> tuple[np.ndarray, float]:
    """``(neighbor probabilities in graph.neighbors[i] order, death probability)``."""
    t = np.asarray(t, float)
    nb = np.asarray(graph.neighbors[i], dtype=np.int64)
    # the common factor e^{t_i} cancels
    w = beta * np.exp(t[nb] - t[nb].max()) if len(nb) else np.zeros(0)
    kill = eps * math.exp(-t[nb].max()) if len(nb) else eps
    total = w.sum() + kill
    if total == 0:
        raise ValueError(f"site {i} has zero total rate")
    return w / total, kill / total


def env_walk_step(graph: Graph, t, beta: float, eps: float, state: WalkState) -> WalkState:
    if not state.alive:
        return state
    p, death = jump_probabilities(graph, t, beta, eps, state.site)
    u = state.rng.random()
    if u < death:
        state.alive = False
        return state
    k = int(np.searchsorted(np.cumsum(p), u - death, side="right"))
    state.site = int(graph.neighbors[state.site][min(k, len(p) - 1)])
    state.jumps += 1
    return state


@dataclass
class _JumpTable:
    cum: np.ndarray  # (N, K + 1) cumulative, death first
    dest: np.ndarray  # (N, K)
    disp: np.ndarray  # (N, K, d)


def _torus_table(torus: Torus, t, beta: float, eps: float) -> _JumpTable:
    K = max(len(nb) for nb in torus.neighbors)
    dest = np.array([list(nb) + [i] * (K - len(nb)) for i, nb in enumerate(torus.neighbors)], dtype=np.int64)
    valid = np.array([[k < len(nb) for k in range(K)] for nb in torus.neighbors])
    t = np.asarray(t, float)
    w = np.where(valid, beta * np.exp(t[:, None] + t[dest]), 0.0)
    raw = torus.coords[dest] - torus.coords[:, None, :]
    disp = (raw + torus.L // 2) % torus.L - torus.L // 2
    if torus.L % 2 == 0:
        disp = np.where(disp == -(torus.L // 2), torus.L // 2, disp)
    kill = eps * np.exp(t)
    total = w.sum(axis=1) + kill
    probs = np.concatenate([kill[:, None], w], axis=1) / total[:, None]
    cum = np.cumsum(probs, axis=1)
    cum[:, -1] = 1.0
    return _JumpTable(cum, dest, disp)


@dataclass
class WalkRecord:
    config: int
    walker: int
    outcome: str  # "returned", "died" or "alive"
    jumps: int
    disp2: int


@dataclass
class SurveyResult:
    records: list
    msd_jumps: np.ndarray
    msd: np.ndarray
    msd_err: np.ndarray
    per_config_return: np.ndarray

    @property
    def return_probability(self) -> tuple[float, float]:
        """Annealed return probability with its binomial standard error."""
        r = np.array([rec.outcome == "returned" for rec in self.records], float)
        return float(r.mean()), float(r.std(ddof=1) / math.sqrt(len(r))) if len(r) > 1 else 0.0

    @property
    def quenched_spread(self) -> float:
        """Standard deviation of the per-environment return frequency."""
        return float(np.std(self.per_config_return, ddof=1)) if len(self.per_config_return) > 1 else 0.0

    @property
    def mean_survival(self) -> float:
        died = [rec.jumps for rec in self.records if rec.outcome == "died"]
        return float(np.mean(died)) if died else float("nan")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["config", "walker", "outcome", "jumps", "displacement2"])
            for r in self.records:
                w.writerow([r.config, r.walker, r.outcome, r.jumps, r.disp2])


def env_walk_survey(
    torus: Torus,
    environments: Iterable,
    beta: float,
    eps: float,
    walkers: int,
    max_jumps: int,
    rng=None,
    origin: int = 0,
    msd_points: int = 16,
) -> SurveyResult:
    """Run ``walkers`` independent walks from ``origin`` in each frozen environment.

    Each walk's recorded outcome is its first event: return to the origin,
    death, or reaching ``max_jumps`` alive. The mean-square displacement
    (unwrapped) is tracked for every walker until death.
    """
    rng = np.random.default_rng(rng)
    checkpoints = np.unique(np.geomspace(1, max_jumps, msd_points).astype(int))
    msd_sum = np.zeros(len(checkpoints))
    msd_sq = np.zeros(len(checkpoints))
    msd_n = np.zeros(len(checkpoints))
    records = []
    per_cfg = []
    for c, t in enumerate(environments):
        table = _torus_table(torus, t, beta, eps)
        site = np.full(walkers, origin, dtype=np.int64)
        pos = np.zeros((walkers, torus.d), dtype=np.int64)
        alive = np.ones(walkers, bool)
        event = np.full(walkers, -1, dtype=np.int64)  # jump index of first event
        outcome = np.array(["alive"] * walkers, dtype=object)
        disp_at = np.zeros(walkers, dtype=np.int64)
        ck = 0
        for n in range(1, max_jumps + 1):
            idx = np.flatnonzero(alive)
            if len(idx) == 0:
                break
            u = rng.random(len(idx))
            col = (table.cum[site[idx]] <= u[:, None]).sum(axis=1)
            col = np.minimum(col, table.cum.shape[1] - 1)
            dead = col == 0
            if dead.any():
                di = idx[dead]
                alive[di] = False
                fresh = event[di] < 0
                event[di[fresh]] = n - 1
                outcome[di[fresh]] = "died"
                disp_at[di[fresh]] = (pos[di[fresh]] ** 2).sum(axis=1)
            mv = idx[~dead]
            k = col[~dead] - 1
            pos[mv] += table.disp[site[mv], k]
            site[mv] = table.dest[site[mv], k]
            back = mv[(site[mv] == origin) & (event[mv] < 0)]
            event[back] = n
            outcome[back] = "returned"
            if ck < len(checkpoints) and n == checkpoints[ck]:
                live = np.flatnonzero(alive)
                d2 = (pos[live] ** 2).sum(axis=1)
                msd_sum[ck] += d2.sum()
                msd_sq[ck] += (d2.astype(float) ** 2).sum()
                msd_n[ck] += len(live)
                ck += 1
        open_ = event < 0
        event[open_] = max_jumps
        disp_at[open_] = (pos[open_] ** 2).sum(axis=1)
        for w in range(walkers):
            records.append(WalkRecord(c, w, str(outcome[w]), int(event[w]), int(disp_at[w])))
        per_cfg.append(float(np.mean(outcome == "returned")))
    with np.errstate(invalid="ignore", divide="ignore"):
        msd = msd_sum / msd_n
        var = msd_sq / msd_n - msd**2
        err = np.sqrt(np.maximum(var, 0) / np.maximum(msd_n - 1, 1))
    return SurveyResult(records, checkpoints, msd, err, np.array(per_cfg))


# --- exact simple-random-walk oracle -----------------------------------------------------


def _first_return_from_returns(u: np.ndarray) -> np.ndarray:
    """Renewal inversion ``f_n = u_n - sum_{k<n} f_k u_{n-k}`` (``u_0 = 1``)."""
    m = len(u) - 1
    f = np.zeros(m + 1)
    for n in range(1, m + 1):
        f[n] = u[n] - np.dot(f[1:n], u[n - 1 : 0 : -1])
    return f


def srw_return_probabilities(d: int, max_steps: int, L: int | None = None) -> np.ndarray:
    """``u_n = P(S_n = 0)`` for ``n <= max_steps`` on ``Z^d`` or the ``L``-torus.

    On ``Z^d`` the walk is Poissonized over axes: with ``w_n(k) = p1(k)
    Pois(k; n/d)``, ``u_n = (w_n^{*d})(n) / Pois(n; n)``, where ``p1`` is the
    one-dimensional return law. On a torus the Fourier mode sum is used.
    """
    from scipy import stats

    M = max_steps
    u = np.zeros(M + 1)
    u[0] = 1.0
    if L is not None:
        k = 2 * np.pi * np.arange(L) / L
        c1 = np.cos(k)
        phis = c1
        for _ in range(d - 1):
            phis = (phis[:, None] + c1[None, :]).ravel()
        vals, mult = np.unique(np.round(phis / d, 15), return_counts=True)
        p = np.ones_like(vals)
        for n in range(1, M + 1):
            p *= vals
            u[n] = float(mult @ p) / L**d
        return u
    ks = np.arange(M + 1)
    from scipy.special import gammaln

    with np.errstate(divide="ignore"):
        lp1 = np.where(ks % 2 == 0, gammaln(ks + 1) - 2 * gammaln(ks // 2 + 1) - ks * math.log(2), -np.inf)
    for n in range(1, M + 1):
        lam = n / d
        w = np.exp(lp1[: n + 1] + stats.poisson.logpmf(ks[: n + 1], lam))
        conv = w
        for _ in range(d - 1):
            conv = np.convolve(conv, w)[: n + 1]
        u[n] = conv[n] / stats.poisson.pmf(n, n)
    return u


def srw_return_within(d: int, max_steps: int, L: int | None = None) -> float:
    """Probability that simple random walk returns to its start within ``max_steps``."""
    f = _first_return_from_returns(srw_return_probabilities(d, max_steps, L))
    return float(f[1:].sum())


# --- edge-reinforced random walk -----------------------------------------------------------


@dataclass
class ERRWState:
    vertex: int
    counts: dict
    a: object
    rng: np.random.Generator = field(default_factory=np.random.default_rng)
    steps: int = 0


def _edge_key(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


def errw_transition_probabilities(graph: Graph, state: ERRWState) -> list[tuple[int, object]]:
    """``(neighbor, (a + n(e)) / S_a(v))`` for every edge at the current vertex.

    With a ``Fraction`` weight the probabilities are exact rationals.
    """
    v = state.vertex
    weights = [(j, state.a + state.counts.get(_edge_key(v, j), 0)) for j in graph.neighbors[v]]
    total = sum(w for _, w in weights)
    expected = state.a * len(weights) + sum(state.counts.get(_edge_key(v, j), 0) for j in graph.neighbors[v])
    if total != expected:
        raise AssertionError("incident weight audit failed")
    return [(j, w / total) for j, w in weights]


def errw_step(graph: Graph, state: ERRWState) -> ERRWState:
    probs = errw_transition_probabilities(graph, state)
    if not probs:
        raise ValueError(f"vertex {state.vertex} has no edges")
    u = state.rng.random()
    acc = 0.0
    nxt = probs[-1][0]
    for j, p in probs:
        acc += float(p)
        if u < acc:
            nxt = j
            break
    key = _edge_key(state.vertex, nxt)
    state.counts[key] = state.counts.get(key, 0) + 1
    state.vertex = nxt
    state.steps += 1
    return state


def errw_run(graph: Graph, a, steps: int, start: int = 0, seed=None) -> dict:
    """Edge-traversal frequencies after ``steps`` reinforced steps."""
    if not a > 0:
        raise ValueError("a must be positive")
    state = ERRWState(start, {}, a, np.random.default_rng(seed))
    for _ in range(steps):
        errw_step(graph, state)
    return {tuple(map(int, e)): state.counts.get(_edge_key(int(e[0]), int(e[1])), 0) / steps for e in graph.edges}


def errw_path_probability(graph: Graph, a, start: int, path: Sequence[int]):
    """Exact probability of visiting ``path`` (vertex sequence after ``start``)."""
    state = ERRWState(start, {}, a)
    prob = Fraction(1) if isinstance(a, (int, Fraction)) else 1.0
    for nxt in path:
        table = dict(errw_transition_probabilities(graph, state))
        if nxt not in table:
            return 0 * prob
        prob *= table[nxt]
        key = _edge_key(state.vertex, nxt)
        state.counts[key] = state.counts.get(key, 0) + 1
        state.vertex = nxt
    return prob
