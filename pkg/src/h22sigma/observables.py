"""Exact-identity oracles and physics measurements.

Every identity below has an exact target that holds for any couplings:

* ``Z = 1`` (checked by quadrature on one and two sites),
* ``<exp(t_x)> = 1``,
* ``eps * sum_y <exp(t_x + t_y) D^{-1}(x, y)> = 1``,
* ``<B_xy^m (1 - m G_xy)> = 1`` and its determinant form for several pairs.

Observables are plain per-configuration functions of a
:class:`~h22sigma.sampler.Measurement`; reports are built from the
accumulated chain data.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .action import dense_action_batch
from .elliptic import CouplingMap, assemble, factorize
from .lattice import Graph, Torus
from .sampler import ChainResult, Measurement
from .stats import Accumulator

log = logging.getLogger(__name__)

WARD_FLOOR = 1e-3
N_SIGMA = 3.0


@dataclass(frozen=True)
class WardReport:
    name: str
    measured: float
    target: float
    stderr: float
    floor: float = WARD_FLOOR
    kind: str = "exact"  # "exact": two-sided; "upper": one-sided bound

    @property
    def deviation(self) -> float:
        return self.measured - self.target

    @property
    def passed(self) -> bool:
        tol = max(N_SIGMA * self.stderr, self.floor)
        if self.kind == "upper":
            return self.measured - N_SIGMA * self.stderr <= self.target
        return abs(self.measured - self.target) <= tol

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "mean": self.measured,
            "stderr": self.stderr,
            "target": self.target,
            "kind": self.kind,
            "pass": bool(self.passed),
        }

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"[{flag}] {self.name}: {self.measured:.6g} +- {self.stderr:.2g} (target {self.target:.6g})"


@dataclass(frozen=True)
class Observable:
    name: str
    fn: Callable[[Measurement], float]
    target: float | None = None
    kind: str = "exact"


def hooks(observables: Sequence[Observable]) -> dict:
    return {o.name: o.fn for o in observables}


def report(result: ChainResult | Accumulator, obs: Observable, floor: float = WARD_FLOOR) -> WardReport:
    acc = result if isinstance(result, Accumulator) else result[obs.name]
    target = obs.target if obs.target is not None else float("nan")
    return WardReport(obs.name, acc.mean, target, acc.error, floor, obs.kind)


# --- partition function by quadrature ------------------------------------------


@dataclass(frozen=True)
class QuadratureSpec:
    panel_width: float = 0.4
    order: int = 20
    log_cut: float = 45.0


def _site_bounds(eps: float, log_cut: float) -> tuple[float, float]:
    """Interval outside which ``sqrt(eps) e^eps e^{-t/2 - eps cosh t}`` is below ``e^{-log_cut}``."""

    def g(t):
        return 0.5 * math.log(eps) + eps - 0.5 * t - eps * math.cosh(t)

    lo, hi = -1.0, 1.0
    while g(lo) > -log_cut:
        lo *= 1.25
    while g(hi) > -log_cut:
        hi *= 1.25
    return lo, hi


def brute_force_Z(
    graph: Graph, couplings: CouplingMap, spec: QuadratureSpec | None = None, *, logdet_scale: float = 1.0
) -> float:
    """``int exp(-F) prod dt / sqrt(2 pi)`` for graphs with at most two sites.

    One site uses adaptive quadrature; two sites use a composite tensor
    Gauss-Legendre rule. The integration box comes from the bound
    ``det D >= prod_k eps_k e^{t_k}`` which dominates the integrand by a
    product of one-site densities.
    """
    return brute_force_expectation(graph, couplings, None, spec, logdet_scale=logdet_scale)


def brute_force_expectation(
    graph: Graph,
    couplings: CouplingMap,
    fn: Callable[[np.ndarray], np.ndarray] | None,
    spec: QuadratureSpec | None = None,
    *,
    logdet_scale: float = 1.0,
) -> float:
    """``int fn(t) exp(-F) prod dt / sqrt(2 pi)``; ``fn`` maps ``(M, N)`` fields to ``(M,)`` values.

    ``fn`` must grow at most like ``exp(|t|/2)`` in each variable for the
    truncation box to stay valid.
    """
    spec = spec or QuadratureSpec()
    n = graph.n_sites
    if n > 2:
        raise ValueError(f"quadrature limited to two sites, got {n}")
    if np.any(couplings.eps_site <= 0):
        raise ValueError("eps must be positive at every site")

    def weight(ts):
        w = np.exp(-dense_action_batch(graph, couplings, ts, logdet_scale))
        return w if fn is None else w * fn(ts)

    bounds = [_site_bounds(e, spec.log_cut) for e in couplings.eps_site]
    if n == 1:
        val, _ = integrate.quad(
            lambda t: float(weight(np.array([[t]]))[0]), *bounds[0], epsabs=1e-14, epsrel=1e-13, limit=500
        )
        return val / math.sqrt(2 * math.pi)

    x, w = np.polynomial.legendre.leggauss(spec.order)
    axes = []
    for lo, hi in bounds:
        n_pan = max(1, int(math.ceil((hi - lo) / spec.panel_width)))
        edges = np.linspace(lo, hi, n_pan + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        axes.append(((mid[:, None] + half[:, None] * x[None, :]).ravel(), (half[:, None] * w[None, :]).ravel()))
    (t0, w0), (t1, w1) = axes
    total = 0.0
    for chunk in range(0, len(t0), 64):
        a = t0[chunk : chunk + 64]
        ts = np.stack(np.broadcast_arrays(a[:, None], t1[None, :]), axis=-1).reshape(-1, 2)
        vals = weight(ts).reshape(len(a), len(t1))
        total += float(w0[chunk : chunk + 64] @ vals @ w1)
    return total / (2 * math.pi)


def exp_t_quadrature(eps: float) -> float:
    """``<exp(t)>`` on a single site by adaptive quadrature."""
    from .lattice import build_torus

    g = build_torus(1, 1)
    c = CouplingMap.uniform(g, 0.0, eps)
    lo, hi = _site_bounds(eps, 45.0)

    def f(t):
        return math.exp(t - dense_action_batch(g, c, np.array([[t]]))[0])

    val, _ = integrate.quad(f, lo, hi, epsabs=1e-14, epsrel=1e-13, limit=500)
    return val / math.sqrt(2 * math.pi)


# --- B observables ---------------------------------------------------------------


def log_cosh(u):
    u = np.abs(u)
    return u + np.log1p(np.exp(-2.0 * u)) - math.log(2.0)


def log_B(t, s, x, y):
    """``log B_xy`` with ``B = cosh(t_x - t_y) + (s_x - s_y)^2 e^{t_x + t_y} / 2``."""
    lc = log_cosh(t[x] - t[y])
    ds = s[x] - s[y]
    if np.all(ds == 0):
        return lc
    with np.errstate(divide="ignore"):
        ls = 2.0 * np.log(np.abs(ds)) - math.log(2.0) + t[x] + t[y]
    return np.logaddexp(lc, ls)


def B_value(t, s, x, y) -> float:
    return float(np.exp(log_B(np.asarray(t), np.asarray(s), x, y)))


def _dipole_form(meas: Measurement, x: int, y: int) -> float:
    cx, cy = meas.column(x), meas.column(y)
    return max(cx[x] + cy[y] - 2.0 * cx[y], 0.0)


def green_G(meas: Measurement, x: int, y: int, b: float) -> float:
    t = meas.t
    return math.exp(t[x] + t[y]) / b * _dipole_form(meas, x, y)


def _finite(value: float, what: str, meas: Measurement) -> float:
    if not math.isfinite(value):
        log.error("non-finite %s at sweep %d; t = %s", what, meas.sweep, np.array2string(meas.t, precision=6))
        raise OverflowError(f"non-finite {what} at sweep {meas.sweep}")
    return value


def exp_t(x: int) -> Observable:
    return Observable(f"exp_t[{x}]", lambda m: math.exp(m.t[x]), 1.0)


def sum_rule(x: int) -> Observable:
    """``eps * sum_y exp(t_x + t_y) D^{-1}(x, y)`` (uniform eps)."""

    def fn(m: Measurement) -> float:
        eps = m.couplings.eps
        return eps * math.exp(m.t[x]) * float(m.column(x) @ np.exp(m.t))

    return Observable(f"sum_rule[{x}]", fn, 1.0)


def ward_B(x: int, y: int, m: float) -> Observable:
    def fn(meas: Measurement) -> float:
        if m == 0:
            return 1.0
        b = _finite(B_value(meas.t, meas.s_field(), x, y), "B", meas)
        return b**m * (1.0 - m * green_G(meas, x, y, b))

    return Observable(f"ward_B[{x},{y};m={m:g}]", fn, 1.0)


def ward_B_det(pairs: Sequence[tuple[int, int]], m: float) -> Observable:
    pairs = [tuple(p) for p in pairs]

    def fn(meas: Measurement) -> float:
        t, s = meas.t, meas.s_field()
        n = meas.graph.n_sites
        bs = np.array([B_value(t, s, x, y) for x, y in pairs])
        _finite(float(np.prod(bs)), "B", meas)
        g = np.zeros((n, len(pairs)))
        for k, (x, y) in enumerate(pairs):
            scale = math.exp(0.5 * (t[x] + t[y])) / math.sqrt(bs[k])
            g[x, k] += scale
            g[y, k] -= scale
        gmat = g.T @ meas.fact.solve(g)
        return float(np.prod(bs**m) * np.linalg.det(np.eye(len(pairs)) - m * gmat))

    label = ",".join(f"({x},{y})" for x, y in pairs)
    return Observable(f"ward_B_det[{label};m={m:g}]", fn, 1.0)


def nn_bound(pairs: Sequence[tuple[int, int]], gamma: float, beta: float) -> Observable:
    """``exp(beta gamma sum_j (B_j - 1))`` with bound ``(1 - gamma)^{-n}`` for NN pairs."""
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    pairs = [tuple(p) for p in pairs]

    def fn(meas: Measurement) -> float:
        t, s = meas.t, meas.s_field()
        for x, y in pairs:
            if y not in meas.graph.neighbors[x]:
                raise ValueError(f"pair ({x}, {y}) is not nearest-neighbor")
        expo = sum(math.expm1(float(log_B(t, s, x, y))) for x, y in pairs)
        return _finite(math.exp(beta * gamma * expo), "exp(beta gamma (B - 1))", meas)

    label = ",".join(f"({x},{y})" for x, y in pairs)
    return Observable(f"nn_bound[{label};gamma={gamma:g}]", fn, (1.0 - gamma) ** (-len(pairs)), "upper")


def nn_bound_check(result: ChainResult, obs: Observable) -> WardReport:
    return report(result, obs)


def cosh_diff_moment(x: int, y: int, m: float) -> Observable:
    def fn(meas):
        if m == 0 or x == y:
            return 1.0
        return float(np.exp(m * log_cosh(meas.t[x] - meas.t[y])))

    return Observable(f"cosh_diff^{m:g}[{x},{y}]", fn, 2.0, "upper")


def cosh_moment(x: int, p: float) -> Observable:
    def fn(meas):
        return 1.0 if p == 0 else float(np.exp(p * log_cosh(meas.t[x])))

    return Observable(f"cosh^{p:g}[{x}]", fn, 2.5, "upper")


def correlation_C(x: int, y: int) -> Observable:
    """``exp(t_x + t_y) D^{-1}(x, y)``."""
    return Observable(f"C[{x},{y}]", lambda m: math.exp(m.t[x] + m.t[y]) * m.column(y)[x])


def c_row(meas: Measurement, x: int) -> np.ndarray:
    return np.exp(meas.t[x] + meas.t) * meas.column(x)


def c_row_min(x: int) -> Observable:
    """Smallest entry of the C-row; positive on every configuration."""
    return Observable(f"C_row_min[{x}]", lambda m: float(np.min(c_row(m, x))))


def c_form(f, name: str = "f") -> Observable:
    """``[f; C f]`` per configuration: ``[e^t f; D^{-1} e^t f]``."""
    f = np.asarray(f, dtype=float)

    def fn(meas):
        w = np.exp(meas.t) * f
        return float(w @ meas.fact.solve(w))

    return Observable(f"C_form[{name}]", fn)


def triangle_check_B(t, s, x: int, y: int, c: int) -> tuple[bool, float]:
    """Check ``B_xy < 2 B_xc B_cy``; returns (holds, log margin)."""
    t, s = np.asarray(t, float), np.asarray(s, float)
    margin = float(math.log(2.0) + log_B(t, s, x, c) + log_B(t, s, c, y) - log_B(t, s, x, y))
    return margin > 0, margin


def triangle_margins(t, s, x, y, c) -> np.ndarray:
    """Vectorized log margins for arrays of configurations (rows of t, s)."""
    t, s = np.atleast_2d(t), np.atleast_2d(s)

    def lb(a, b):
        lc = log_cosh(t[:, a] - t[:, b])
        ds = s[:, a] - s[:, b]
        with np.errstate(divide="ignore"):
            ls = 2.0 * np.log(np.abs(ds)) - math.log(2.0) + t[:, a] + t[:, b]
        return np.logaddexp(lc, ls)

    return math.log(2.0) + lb(x, c) + lb(c, y) - lb(x, y)


# --- Green's-function sandwich ------------------------------------------------------


@dataclass(frozen=True)
class SandwichReport:
    c_form: float
    c_form_err: float
    upper_form: float
    lower_form: float
    K_hat: float
    K_prime_hat: float
    K: float | None = None
    K_prime: float | None = None

    @property
    def finite_positive(self) -> bool:
        vals = (self.c_form, self.upper_form, self.lower_form, self.K_hat, self.K_prime_hat)
        return all(math.isfinite(v) and v > 0 for v in vals)

    @property
    def bounds_hold(self) -> bool | None:
        if self.K is None or self.K_prime is None:
            return None
        return self.lower_form / self.K_prime <= self.c_form <= self.K * self.upper_form

    def as_dict(self) -> dict:
        return {
            "C_form": self.c_form,
            "C_form_err": self.c_form_err,
            "upper_form": self.upper_form,
            "lower_form": self.lower_form,
            "K_hat": self.K_hat,
            "K_prime_hat": self.K_prime_hat,
        }


def fourier_greens_form(torus: Torus, beta: float, mass2: float, f) -> float:
    """``[f; (-beta Lap + mass2)^{-1} f]`` by FFT diagonalization."""
    f = np.asarray(f, dtype=float)
    shape = (torus.L,) * torus.d
    # site index is row-major with axis 0 fastest -> reverse for numpy C-order
    grid = f.reshape(shape[::-1])
    fh = np.fft.fftn(grid)
    lam = torus.fourier_eigenvalues().reshape(shape[::-1])
    return float(np.sum(np.abs(fh) ** 2 / (beta * lam + mass2)) / f.size)


def sandwich_check(
    c_estimate: Accumulator | tuple[float, float],
    f,
    x: int,
    alpha: float,
    torus: Torus,
    beta: float,
    eps: float,
    K: float | None = None,
    K_prime: float | None = None,
    metric: str = "l1",
) -> SandwichReport:
    """Compare ``[f; C f]`` with ``[f; G0~ f]`` (mass eps/2) and ``[f~; G0 f~]`` (mass eps).

    ``f~(j) = f(j) / (1 + |j - x|^alpha)``. The constants ``K_hat`` and
    ``K'_hat`` are the empirical ratios; they are reported, not asserted.
    """
    f = np.asarray(f, dtype=float)
    if np.any(f < 0):
        raise ValueError("f must be nonnegative")
    if isinstance(c_estimate, Accumulator):
        cf, cerr = c_estimate.mean, c_estimate.error
    else:
        cf, cerr = c_estimate
    dist = torus.distances_from(x, metric)
    f_tilde = f / (1.0 + dist.astype(float) ** alpha)
    upper = fourier_greens_form(torus, beta, eps / 2.0, f)
    lower = fourier_greens_form(torus, beta, eps, f_tilde)
    return SandwichReport(cf, cerr, upper, lower, cf / upper, lower / cf, K, K_prime)


# --- good points --------------------------------------------------------------------


def _offsets_within(torus: Torus, radius: int):
    """Distinct torus displacements with 1 <= L1 distance <= radius, as (sites-from-0, distance)."""
    d0 = torus.distances_from(0, "l1")
    sel = np.flatnonzero((d0 >= 1) & (d0 <= radius))
    return torus.coords[sel], d0[sel]


def n_good_points(torus: Torus, t, s, a: float, alpha: float, n: int) -> np.ndarray:
    """Boolean per site: ``B_xy <= a |x - y|^alpha`` for all ``1 <= |x - y| <= 4^n``."""
    offs, dist = _offsets_within(torus, 4**n)
    if len(offs) == 0:
        return np.ones(torus.n_sites, dtype=bool)
    coords = torus.coords
    ys = ((coords[:, None, :] + offs[None, :, :]) % torus.L) @ (torus.L ** np.arange(torus.d))
    tx, ty = t[:, None], t[ys]
    sx, sy = s[:, None], s[ys]
    lc = log_cosh(tx - ty)
    with np.errstate(divide="ignore"):
        ls = 2.0 * np.log(np.abs(sx - sy)) - math.log(2.0) + tx + ty
    logb = np.logaddexp(lc, ls)
    thresh = math.log(a) + alpha * np.log(dist.astype(float))
    return np.all(logb <= thresh[None, :], axis=1)


def cube_has_no_good_point(torus: Torus, good: np.ndarray, n: int) -> np.ndarray:
    """For every cube of side ``4^n`` (indexed by its lowest corner): True if it has no n-good point."""
    side = 4**n
    if side > torus.L:
        raise ValueError(f"cube side {side} exceeds lattice side {torus.L}")
    # array axis k is lattice axis d-1-k; the cube test is symmetric in the axes
    any_good = good.reshape((torus.L,) * torus.d).astype(bool)
    for ax in range(torus.d):
        acc = np.zeros_like(any_good)
        for k in range(side):
            acc |= np.roll(any_good, -k, axis=ax)
        any_good = acc
    return ~any_good.reshape(-1)


def bad_cube_fraction(n: int, a: float, alpha: float) -> Observable:
    """Fraction of side-``4^n`` cubes without an n-good point in the current (t, s)."""

    def fn(meas: Measurement) -> float:
        good = n_good_points(meas.graph, meas.t, meas.s_field(), a, alpha, n)
        return float(np.mean(cube_has_no_good_point(meas.graph, good, n)))

    return Observable(f"bad_cube[n={n};a={a:g};alpha={alpha:g}]", fn)


def nn_exceed_fraction(a: float) -> Observable:
    """Fraction of sites with some NN pair having ``B > a`` (same event as ``n = 0``)."""

    def fn(meas: Measurement) -> float:
        g = meas.graph
        t, s = meas.t, meas.s_field()
        i, j = g.edges[:, 0], g.edges[:, 1]
        lb = np.logaddexp(log_cosh(t[i] - t[j]), 2 * np.log(np.abs(s[i] - s[j]) + 1e-300) - math.log(2) + t[i] + t[j])
        bad = np.zeros(g.n_sites, dtype=bool)
        exceed = lb > math.log(a)
        bad[i[exceed]] = True
        bad[j[exceed]] = True
        return float(np.mean(bad))

    return Observable(f"nn_exceed[a={a:g}]", fn)


@dataclass
class CensusRow:
    n: int
    frequency: float
    stderr: float
    reference: float


def bad_point_census(result: ChainResult, n_values, a: float, alpha: float, m: float) -> list[CensusRow]:
    """Tabulate measured bad-cube frequencies against ``2^{-(n+1) alpha m}``."""
    rows = []
    for n in n_values:
        acc = result[bad_cube_fraction(n, a, alpha).name]
        rows.append(CensusRow(n, acc.mean, acc.error, 2.0 ** (-(n + 1) * alpha * m)))
    return rows


def chi_bar(t, s, region, a: float, alpha: float) -> int:
    """Product of ``chi(B_zj / (a |j - z|^alpha))`` over ``j`` in the two endpoint families."""
    t, s = np.asarray(t, float), np.asarray(s, float)
    for z in (region.x, region.y):
        for j in region.endpoint_family(z):
            r = region.torus.euclidean_distance(z, j)
            if log_B(t, s, z, j) > math.log(a) + alpha * math.log(r):
                return 0
    return 1


# --- per-configuration identities --------------------------------------------------------


def ward_exp_t(result: ChainResult, x: int) -> WardReport:
    return report(result, exp_t(x))


def ward_sum_rule(result: ChainResult, x: int) -> WardReport:
    return report(result, sum_rule(x))


def ward_B_identity(result: ChainResult, pairs, m: float) -> WardReport:
    pairs = [tuple(p) for p in pairs]
    obs = ward_B(*pairs[0], m) if len(pairs) == 1 else ward_B_det(pairs, m)
    return report(result, obs)


def exact_Z_report(name: str, value: float, tol: float) -> WardReport:
    return WardReport(name, value, 1.0, 0.0, tol, "exact")
