"""Markov chain Monte Carlo for the t-field with density ``exp(-F(t))``.

Two kernels are available:

* ``gradient-langevin``: Metropolis-adjusted Langevin with a fixed
  preconditioner (inverse Hessian of F at the starting point).
* ``local-metropolis``: single-site uniform moves. Changing ``t_k`` alters
  ``D`` only on the block ``{k} + N(k)``, so the determinant ratio is a
  small determinant ``det(I + G_SS dD_SS)`` with ``G = D^{-1}`` maintained
  by Woodbury updates.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np
import scipy.linalg as sla

from .action import action_gradient, action_hessian, effective_action
from .elliptic import (
    CouplingMap,
    Factorization,
    FactorizationError,
    assemble,
    factorize,
)
from .lattice import Graph, Torus
from .stats import Accumulator

log = logging.getLogger(__name__)

ALGORITHMS = ("gradient-langevin", "local-metropolis")


@dataclass(frozen=True)
class SamplerConfig:
    algorithm: str = "gradient-langevin"
    step_size: float = 0.1
    sweeps: int = 1000
    thermalization: int = 200
    thinning: int = 1
    seed: int = 0
    adapt_window: int = 50
    target_accept: float | None = None
    preconditioner: str = "hessian"
    init: str = "saddle"
    n_chains: int = 1

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if not self.step_size >= 0:
            raise ValueError("step_size must be >= 0")
        if self.sweeps <= 0:
            raise ValueError("sweeps must be > 0")
        if self.thermalization < 0 or self.thinning <= 0 or self.adapt_window <= 0:
            raise ValueError("thermalization >= 0, thinning > 0 and adapt_window > 0 required")
        if self.preconditioner not in ("hessian", "none"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")
        if self.init not in ("saddle", "zero"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.n_chains < 1:
            raise ValueError("n_chains must be >= 1")

    @property
    def accept_target(self) -> float:
        if self.target_accept is not None:
            return self.target_accept
        return 0.574 if self.algorithm == "gradient-langevin" else 0.5


class HookError(RuntimeError):
    pass


@dataclass(frozen=True)
class Target:
    """The density ``exp(-F)`` for fixed graph and couplings."""

    graph: Graph
    couplings: CouplingMap
    logdet_scale: float = 1.0

    def factorize(self, t) -> Factorization:
        return factorize(assemble(self.graph, self.couplings, t))

    def action(self, t, fact=None) -> float:
        return effective_action(self.graph, self.couplings, t, fact, logdet_scale=self.logdet_scale).total

    def gradient(self, t, fact=None) -> np.ndarray:
        return action_gradient(self.graph, self.couplings, t, fact, logdet_scale=self.logdet_scale)


@dataclass
class ChainState:
    t: np.ndarray
    fact: Factorization
    action: float
    rng: np.random.Generator
    grad: np.ndarray | None = None
    inverse: np.ndarray | None = None
    step_size: float = 0.1
    precond: np.ndarray | None = None  # lower Cholesky factor C of the inverse mass, P = C C^T
    accepted: int = 0
    proposed: int = 0
    sweep: int = 0

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else float("nan")


def initial_field(target: Target, init: str = "saddle") -> np.ndarray:
    g, c = target.graph, target.couplings
    if init == "saddle" and isinstance(g, Torus) and c.is_uniform and c.eps > 0 and g.n_edges:
        from .saddle import solve_saddle

        return np.full(g.n_sites, solve_saddle(g, c.beta, c.eps).t_star)
    if init == "saddle" and g.n_sites == 1 and c.eps_site[0] > 0:
        return np.array([math.asinh(-0.5 / c.eps_site[0])])
    return np.zeros(g.n_sites)


def new_state(target: Target, t, rng: np.random.Generator, step_size: float = 0.1) -> ChainState:
    t = np.array(t, dtype=float)
    fact = target.factorize(t)
    return ChainState(t, fact, target.action(t, fact), rng, step_size=step_size)


def hessian_preconditioner(target: Target, t, floor: float = 1e-2) -> np.ndarray:
    """Lower Cholesky factor of the inverse of the floored exact Hessian of F at ``t``."""
    hess = action_hessian(target.graph, target.couplings, t, logdet_scale=target.logdet_scale)
    hess = 0.5 * (hess + hess.T)
    w, v = np.linalg.eigh(hess)
    w = np.maximum(w, floor * max(w.max(), 1.0) * 1e-3 + floor)
    inv_mass = (v / w) @ v.T
    return np.linalg.cholesky(0.5 * (inv_mass + inv_mass.T))


# --- Langevin --------------------------------------------------------------


def _mala_mean(t, grad, h, C):
    pg = grad if C is None else C @ (C.T @ grad)
    return t - 0.5 * h * pg


def _mala_logq(t_to, mean, h, C) -> float:
    r = t_to - mean
    if C is not None:
        r = sla.solve_triangular(C, r, lower=True, check_finite=False)
    return -float(r @ r) / (2.0 * h)


def mala_log_transition(target: Target, t, t_new, h: float, C=None) -> float:
    """log of q(t -> t_new) * acceptance(t -> t_new), up to the proposal normalization."""
    t, t_new = np.asarray(t, float), np.asarray(t_new, float)
    f0 = target.factorize(t)
    f1 = target.factorize(t_new)
    a0, a1 = target.action(t, f0), target.action(t_new, f1)
    g0, g1 = target.gradient(t, f0), target.gradient(t_new, f1)
    fwd = _mala_logq(t_new, _mala_mean(t, g0, h, C), h, C)
    bwd = _mala_logq(t, _mala_mean(t_new, g1, h, C), h, C)
    log_acc = min(0.0, a0 - a1 + bwd - fwd)
    return fwd + log_acc


def langevin_step(state: ChainState, target: Target) -> ChainState:
    """One Metropolis-adjusted Langevin update of the whole field (in place)."""
    h = state.step_size
    state.proposed += 1
    state.sweep += 1
    if h == 0.0:
        state.accepted += 1
        return state
    if state.grad is None:
        state.grad = target.gradient(state.t, state.fact)
    C = state.precond
    mean = _mala_mean(state.t, state.grad, h, C)
    xi = state.rng.standard_normal(len(state.t))
    noise = xi if C is None else C @ xi
    t_new = mean + math.sqrt(h) * noise
    u = state.rng.random()
    if not np.all(np.isfinite(t_new)):
        state._last_accept_prob = 0.0
        return state
    try:
        fact = target.factorize(t_new)
    except (FactorizationError, ValueError):
        state._last_accept_prob = 0.0
        return state
    a_new = target.action(t_new, fact)
    g_new = target.gradient(t_new, fact)
    fwd = -0.5 * float(xi @ xi)
    bwd = _mala_logq(state.t, _mala_mean(t_new, g_new, h, C), h, C)
    log_acc = state.action - a_new + bwd - fwd
    p = math.exp(min(0.0, log_acc)) if math.isfinite(log_acc) else 0.0
    state._last_accept_prob = p
    if u < p:
        state.t, state.fact, state.action, state.grad = t_new, fact, a_new, g_new
        state.accepted += 1
    return state


# --- local Metropolis --------------------------------------------------------


def _local_block(target: Target, t, k: int):
    """Sites S = [k, N(k)...] and the matrix M with dD_SS = (e^{t'_k} - e^{t_k}) M."""
    g, c = target.graph, target.couplings
    nb = np.array(g.neighbors[k], dtype=np.int64)
    beta_k = _edge_betas(target, k)
    w = beta_k * np.exp(t[nb])
    S = np.concatenate([[k], nb])
    M = np.zeros((len(S), len(S)))
    M[0, 0] = w.sum() + c.eps_site[k]
    M[0, 1:] = M[1:, 0] = -w
    M[np.arange(1, len(S)), np.arange(1, len(S))] = w
    return S, M, nb, beta_k


def _edge_betas(target: Target, k: int) -> np.ndarray:
    cache = target.__dict__.get("_edge_beta_cache")
    if cache is None:
        g = target.graph
        lookup = {(int(a), int(b)): e for e, (a, b) in enumerate(g.edges)}
        cache = [
            np.array([target.couplings.beta_edge[lookup[(min(v, j), max(v, j))]] for j in g.neighbors[v]])
            for v in range(g.n_sites)
        ]
        object.__setattr__(target, "_edge_beta_cache", cache)
    return cache[k]


def local_delta_action(target: Target, t, G, k: int, new_tk: float) -> tuple[float, float, tuple]:
    """(dF, log det ratio, update data) for the move ``t_k -> new_tk``.

    ``G`` is the current inverse ``D^{-1}``. A non-positive determinant ratio
    (indefinite proposal) gives ``dF = inf``.
    """
    c = target.couplings
    S, M, nb, beta_k = _local_block(target, t, k)
    dexp = math.exp(new_tk) - math.exp(t[k])
    dD = dexp * M
    small = np.eye(len(S)) + G[np.ix_(S, S)] @ dD
    sign, log_ratio = np.linalg.slogdet(small)
    if sign <= 0:
        return math.inf, float("nan"), (S, dD, small)
    d_local = float(np.sum(beta_k * (np.cosh(new_tk - t[nb]) - np.cosh(t[k] - t[nb]))))
    d_lin = (new_tk - t[k]) + c.eps_site[k] * (math.cosh(new_tk) - math.cosh(t[k]))
    dF = d_local + d_lin - 0.5 * target.logdet_scale * log_ratio
    return dF, float(log_ratio), (S, dD, small)


def local_log_transition(target: Target, t, t_new, k: int, width: float) -> float:
    """log kernel density for the single-site move at ``k`` (site choice not included)."""
    t = np.asarray(t, float)
    G = target.factorize(t).inverse()
    dF, _, _ = local_delta_action(target, t, G, k, float(t_new[k]))
    return -math.log(2.0 * width) + min(0.0, -dF)


def woodbury_update(G: np.ndarray, S, dD, small) -> np.ndarray:
    """Inverse of ``D + E_S dD E_S^T`` given ``G = D^{-1}`` and ``small = I + G_SS dD``."""
    corr = np.linalg.solve(small, G[S, :])
    return G - G[:, S] @ (dD @ corr)


def local_metropolis_step(state: ChainState, target: Target) -> ChainState:
    """One sweep of single-site updates in site order (in place)."""
    n = len(state.t)
    w = state.step_size
    if state.inverse is None:
        state.inverse = state.fact.inverse().copy()
    G = state.inverse
    t = state.t
    acc_sum = 0.0
    for k in range(n):
        delta = (2.0 * state.rng.random() - 1.0) * w
        u = state.rng.random()
        state.proposed += 1
        if delta == 0.0:
            state.accepted += 1
            acc_sum += 1.0
            continue
        new_tk = t[k] + delta
        dF, _, (S, dD, small) = local_delta_action(target, t, G, k, new_tk)
        p = math.exp(min(0.0, -dF)) if math.isfinite(dF) else 0.0
        acc_sum += p
        if u < p:
            G = woodbury_update(G, S, dD, small)
            t = t.copy()
            t[k] = new_tk
            state.accepted += 1
    state._last_accept_prob = acc_sum / n
    if not np.array_equal(t, state.t):
        state.t = t
        state.fact = target.factorize(t)
        state.action = target.action(t, state.fact)
        state.grad = None
        # drop the accumulated Woodbury round-off once per sweep
        state.inverse = state.fact.inverse().copy()
    else:
        state.inverse = G
    state.sweep += 1
    return state


def step(state: ChainState, target: Target, algorithm: str) -> ChainState:
    if algorithm == "gradient-langevin":
        return langevin_step(state, target)
    return local_metropolis_step(state, target)


# --- conditional Gaussian ------------------------------------------------------


def sample_s_given_t(fact: Factorization, rng: np.random.Generator) -> np.ndarray:
    """Draw ``s ~ N(0, D(t)^{-1})``."""
    return fact.apply_inverse_sqrt_transpose(rng.standard_normal(fact.n))


# --- driver ------------------------------------------------------------------


class Measurement:
    """Per-configuration context handed to observable hooks.

    Solves against unit vectors and the conditional s-field are cached so
    several hooks on the same configuration share them.
    """

    def __init__(self, graph: Graph, couplings: CouplingMap, t, fact: Factorization, rng, sweep: int):
        self.graph = graph
        self.couplings = couplings
        self.t = t
        self.fact = fact
        self.rng = rng
        self.sweep = sweep
        self._cols: dict[int, np.ndarray] = {}
        self._s = None

    def column(self, x: int) -> np.ndarray:
        """Column ``D^{-1}(., x)``."""
        if x not in self._cols:
            e = np.zeros(self.graph.n_sites)
            e[x] = 1.0
            self._cols[x] = self.fact.solve(e)
        return self._cols[x]

    def s_field(self) -> np.ndarray:
        if self._s is None:
            self._s = sample_s_given_t(self.fact, self.rng)
        return self._s


Hook = Callable[[Measurement], float]


@dataclass
class ChainResult:
    series: dict
    sweeps: np.ndarray
    accumulators: dict
    diagnostics: dict = field(default_factory=dict)
    final_t: np.ndarray | None = None
    fields: np.ndarray | None = None  # measured configurations, when stored

    def __getitem__(self, name: str) -> Accumulator:
        return self.accumulators[name]

    def merge(self, other: "ChainResult") -> "ChainResult":
        acc = {k: self.accumulators[k].merge(other.accumulators[k]) for k in self.accumulators}
        series = {k: np.concatenate([self.series[k], other.series[k]]) for k in self.series}
        diag = {"chains": self.diagnostics.get("chains", 1) + other.diagnostics.get("chains", 1)}
        for key in ("acceptance_rate", "step_size"):
            diag[key] = [*np.atleast_1d(self.diagnostics.get(key, [])), *np.atleast_1d(other.diagnostics.get(key, []))]
        fields = None
        if self.fields is not None and other.fields is not None:
            fields = np.concatenate([self.fields, other.fields])
        return ChainResult(series, np.concatenate([self.sweeps, other.sweeps]), acc, diag, fields=fields)


def _adapt(state: ChainState, n: int, target_rate: float) -> None:
    p = getattr(state, "_last_accept_prob", target_rate)
    gain = 1.0 / (n + 10) ** 0.6
    state.step_size *= math.exp(gain * 2.0 * (p - target_rate))


def run_chain(
    graph: Graph,
    couplings: CouplingMap,
    config: SamplerConfig,
    hooks: Mapping[str, Hook] | None = None,
    *,
    logdet_scale: float = 1.0,
    t0=None,
    seed_seq: np.random.SeedSequence | None = None,
    store_fields: bool = False,
) -> ChainResult:
    """Thermalize (adapting the step size), then measure every ``thinning`` sweeps.

    With ``store_fields`` the measured configurations are kept in
    ``ChainResult.fields`` (shape ``(n_measurements, N)``).
    """
    hooks = dict(hooks or {})
    target = Target(graph, couplings, logdet_scale)
    ss = seed_seq if seed_seq is not None else np.random.SeedSequence(config.seed)
    chain_ss, meas_ss = ss.spawn(2)
    rng = np.random.default_rng(chain_ss)
    meas_rng = np.random.default_rng(meas_ss)
    t_init = initial_field(target, config.init) if t0 is None else np.asarray(t0, float)
    state = new_state(target, t_init, rng, config.step_size)
    if config.algorithm == "gradient-langevin" and config.preconditioner == "hessian":
        state.precond = hessian_preconditioner(target, state.t)

    started = time.perf_counter()
    rate = config.accept_target
    for n in range(config.thermalization):
        step(state, target, config.algorithm)
        if config.step_size > 0:
            _adapt(state, n, rate)
    warm_acc, warm_prop = state.accepted, state.proposed

    names = list(hooks)
    n_meas = config.sweeps // config.thinning
    series = {k: np.empty(n_meas) for k in names}
    sweeps = np.empty(n_meas, dtype=np.int64)
    fields = np.empty((n_meas, graph.n_sites)) if store_fields else None
    m = 0
    for sw in range(config.sweeps):
        step(state, target, config.algorithm)
        if (sw + 1) % config.thinning:
            continue
        meas = Measurement(graph, couplings, state.t, state.fact, meas_rng, sw)
        for k in names:
            try:
                series[k][m] = float(hooks[k](meas))
            except Exception as exc:  # surface with position in the chain
                raise HookError(f"hook {k!r} failed at sweep {sw}: {exc}") from exc
        sweeps[m] = sw
        if fields is not None:
            fields[m] = state.t
        m += 1

    accs = {}
    for k in names:
        a = Accumulator()
        a.extend(series[k])
        accs[k] = a
    diag = {
        "chains": 1,
        "acceptance_rate": (state.accepted - warm_acc) / max(state.proposed - warm_prop, 1),
        "step_size": state.step_size,
        "seconds": time.perf_counter() - started,
        "tau_int": {k: accs[k].tau_int for k in names},
    }
    log.info("chain done: %s", {k: diag[k] for k in ("acceptance_rate", "step_size", "seconds")})
    return ChainResult(series, sweeps, accs, diag, final_t=state.t.copy(), fields=fields)


def run_chains(
    graph: Graph,
    couplings: CouplingMap,
    config: SamplerConfig,
    hooks: Mapping[str, Hook] | None = None,
    *,
    threads: int = 1,
    logdet_scale: float = 1.0,
    store_fields: bool = False,
) -> list[ChainResult]:
    """Independent chains with seeds spawned from ``config.seed``; order is seed order."""
    seqs = np.random.SeedSequence(config.seed).spawn(config.n_chains) if config.n_chains > 1 else [None]

    def one(ss):
        return run_chain(
            graph, couplings, config, hooks, logdet_scale=logdet_scale, seed_seq=ss, store_fields=store_fields
        )

    if threads <= 1 or len(seqs) == 1:
        return [one(ss) for ss in seqs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, seqs))


def merge_results(results: list[ChainResult]) -> ChainResult:
    out = results[0]
    for r in results[1:]:
        out = out.merge(r)
    return out


def with_seed(config: SamplerConfig, seed: int) -> SamplerConfig:
    return replace(config, seed=seed)
