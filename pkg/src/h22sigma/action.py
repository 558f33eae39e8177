"""Effective action of the reduced t-field model and its gradient.

    F(t) = sum_edges beta_ij (cosh(t_i - t_j) - 1) - 1/2 log det D(t)
           + sum_k (t_k - eps_k + eps_k cosh t_k)

The stationary density of the sampler is ``exp(-F) prod dt_k / sqrt(2 pi)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .elliptic import (
    CouplingMap,
    Factorization,
    assemble,
    check_field,
    edge_pattern,
    factorize,
    reduced_logdet,
    selected_inverse,
)
from .lattice import Graph


@dataclass(frozen=True)
class ActionValue:
    local_cosh_part: float
    logdet_part: float
    linear_eps_part: float

    @property
    def total(self) -> float:
        return self.local_cosh_part + self.logdet_part + self.linear_eps_part


def cosh_part(graph: Graph, couplings: CouplingMap, t) -> float:
    i, j = graph.edges[:, 0], graph.edges[:, 1]
    return float(np.sum(couplings.beta_edge * (np.cosh(t[i] - t[j]) - 1.0)))


def linear_eps_part(couplings: CouplingMap, t) -> float:
    eps = couplings.eps_site
    return float(np.sum(t + eps * (np.cosh(t) - 1.0)))


def effective_action(
    graph: Graph,
    couplings: CouplingMap,
    t,
    fact: Factorization | None = None,
    *,
    logdet_scale: float = 1.0,
) -> ActionValue:
    """Evaluate F(t) split into its three pieces.

    ``logdet_scale`` multiplies the determinant term; it exists only so that
    the Ward-identity suite can be checked against a deliberately wrong action.
    """
    t = check_field(graph, t)
    if fact is None:
        fact = factorize(assemble(graph, couplings, t))
    return ActionValue(
        cosh_part(graph, couplings, t),
        -0.5 * logdet_scale * fact.logdet(),
        linear_eps_part(couplings, t),
    )


def action_gradient(
    graph: Graph,
    couplings: CouplingMap,
    t,
    fact: Factorization | None = None,
    *,
    logdet_scale: float = 1.0,
) -> np.ndarray:
    """Exact gradient of F.

    The log-determinant term uses ``tr(D^{-1} dD/dt_k)``, which only needs
    the diagonal and edge entries of ``D^{-1}``.
    """
    t = check_field(graph, t)
    if fact is None:
        fact = factorize(assemble(graph, couplings, t))
    n = graph.n_sites
    i, j = graph.edges[:, 0], graph.edges[:, 1]
    beta = couplings.beta_edge
    eps = couplings.eps_site

    grad = 1.0 + eps * np.sinh(t)
    sh = beta * np.sinh(t[i] - t[j])
    np.add.at(grad, i, sh)
    np.add.at(grad, j, -sh)

    rows, cols = edge_pattern(graph)
    sel = selected_inverse(fact, rows, cols)
    diag = sel[:n]
    off = sel[n : n + len(i)]
    # [(d_i - d_j); D^{-1} (d_i - d_j)] for every edge
    dip = diag[i] + diag[j] - 2.0 * off
    w = beta * np.exp(t[i] + t[j]) * dip
    trace = eps * np.exp(t) * diag
    np.add.at(trace, i, w)
    np.add.at(trace, j, w)
    return grad - 0.5 * logdet_scale * trace


def action_hessian(
    graph: Graph,
    couplings: CouplingMap,
    t,
    fact: Factorization | None = None,
    *,
    logdet_scale: float = 1.0,
) -> np.ndarray:
    """Exact dense Hessian of F.

    Write ``dD/dt_a = sum_k w_k u_k u_k^T`` over the terms ``k`` touching
    ``a`` (edge dipoles and the site's own mass term). Then

        d_a d_b (-1/2 log det D) = 1/2 sum_{k in a, l in b} w_k w_l [u_k; G u_l]^2
                                   - 1/2 tr(G d_a d_b D)

    with ``G = D^{-1}``; the second derivative of ``D`` is nonzero only for
    ``a = b`` or ``a ~ b``.
    """
    t = check_field(graph, t)
    if fact is None:
        fact = factorize(assemble(graph, couplings, t))
    n = graph.n_sites
    i, j = graph.edges[:, 0], graph.edges[:, 1]
    m_e = len(i)
    beta = couplings.beta_edge
    eps = couplings.eps_site
    G = fact.inverse()

    w = np.concatenate([beta * np.exp(t[i] + t[j]), eps * np.exp(t)])
    # P_kl = [u_k; G u_l] for edge dipoles followed by unit vectors
    gi, gj = G[:, i], G[:, j]
    Ge = gi - gj
    P = np.empty((m_e + n, m_e + n))
    P[:m_e, :m_e] = Ge[i] - Ge[j]
    P[:m_e, m_e:] = (gi - gj).T
    P[m_e:, :m_e] = Ge
    P[m_e:, m_e:] = G
    Q = (w[:, None] * P**2) * w[None, :]
    rows = np.concatenate([i, j, np.arange(n)])
    cols = np.concatenate([np.arange(m_e), np.arange(m_e), m_e + np.arange(n)])
    S = np.zeros((n, m_e + n))
    S[rows, cols] = 1.0
    hess_ld = 0.5 * S @ Q @ S.T

    diagP = np.diag(P)
    tr_aa = S @ (w * diagP)
    hess_ld[np.arange(n), np.arange(n)] -= 0.5 * tr_aa
    edge_tr = w[:m_e] * diagP[:m_e]
    np.add.at(hess_ld, (i, j), -0.5 * edge_tr)
    np.add.at(hess_ld, (j, i), -0.5 * edge_tr)

    ch = beta * np.cosh(t[i] - t[j])
    hess_loc = np.zeros((n, n))
    np.add.at(hess_loc, (i, i), ch)
    np.add.at(hess_loc, (j, j), ch)
    np.add.at(hess_loc, (i, j), -ch)
    np.add.at(hess_loc, (j, i), -ch)
    hess_loc[np.arange(n), np.arange(n)] += eps * np.cosh(t)
    return hess_loc + logdet_scale * hess_ld


def deflated_action(graph: Graph, beta_edge, t) -> float:
    """F at eps = 0 with the zero mode removed.

    The determinant is replaced by the reduced (spanning-tree) determinant
    times ``exp(2 mean(t))``, which carries the scaling ``e^{2c}`` of the
    missing zero eigenvalue under ``t -> t + c``.
    """
    t = check_field(graph, t)
    c = CouplingMap(beta_edge, np.zeros(graph.n_sites))
    op = assemble(graph, c, t)
    logdet = reduced_logdet(op) + 2.0 * float(np.mean(t))
    return cosh_part(graph, c, t) - 0.5 * logdet + float(np.sum(t))


def dense_action_batch(graph: Graph, couplings: CouplingMap, ts: np.ndarray, logdet_scale: float = 1.0) -> np.ndarray:
    """F for a stack of small fields ``ts`` of shape ``(M, N)`` (dense batched slogdet)."""
    ts = np.asarray(ts, dtype=float)
    m, n = ts.shape
    i, j = graph.edges[:, 0], graph.edges[:, 1]
    cond = couplings.beta_edge * np.exp(ts[:, i] + ts[:, j])
    d = np.zeros((m, n, n))
    d[:, np.arange(n), np.arange(n)] = couplings.eps_site * np.exp(ts)
    for k in range(len(i)):
        a, b = i[k], j[k]
        d[:, a, a] += cond[:, k]
        d[:, b, b] += cond[:, k]
        d[:, a, b] -= cond[:, k]
        d[:, b, a] -= cond[:, k]
    sign, ld = np.linalg.slogdet(d)
    ld = np.where(sign > 0, ld, np.nan)
    local = np.sum(couplings.beta_edge * (np.cosh(ts[:, i] - ts[:, j]) - 1.0), axis=1)
    lin = np.sum(ts + couplings.eps_site * (np.cosh(ts) - 1.0), axis=1)
    return local - 0.5 * logdet_scale * ld + lin


def convexity_split(graph: Graph, couplings: CouplingMap, t):
    """Return ``(log_concave_part, log_convex_part)`` as callables of t.

    ``exp(-beta sum cosh(t_i - t_j))`` is log concave and ``det D(t)`` is log
    convex; the first callable gives ``-beta sum cosh``, the second ``log det D``.
    """

    def log_concave(tt):
        tt = np.asarray(tt, float)
        i, j = graph.edges[:, 0], graph.edges[:, 1]
        return -float(np.sum(couplings.beta_edge * np.cosh(tt[i] - tt[j])))

    def log_convex(tt):
        return factorize(assemble(graph, couplings, tt)).logdet()

    return log_concave, log_convex


def fd_hessian(fun, t, h: float = 1e-4) -> np.ndarray:
    """Central finite-difference Hessian of a scalar function."""
    t = np.asarray(t, dtype=float)
    n = len(t)
    hess = np.zeros((n, n))
    for a in range(n):
        for b in range(a, n):
            ea = np.zeros(n)
            eb = np.zeros(n)
            ea[a] = h
            eb[b] = h
            val = (
                fun(t + ea + eb) - fun(t + ea - eb) - fun(t - ea + eb) + fun(t - ea - eb)
            ) / (4 * h * h)
            hess[a, b] = hess[b, a] = val
    return hess
