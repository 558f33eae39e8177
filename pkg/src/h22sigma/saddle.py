"""Constant-field saddle point of the effective action.

At a constant field ``t*`` the stationarity condition reads
``1 - exp(2 t*) = G0(x, x)`` with ``G0 = (-beta Lap + eps exp(-t*))^{-1}``;
the torus diagonal ``G0(x, x)`` is an average over Fourier modes.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from .lattice import Torus


@functools.lru_cache(maxsize=32)
def _spectrum(d: int, L: int) -> tuple[np.ndarray, np.ndarray]:
    """Distinct eigenvalues of -Lap on the (d, L) torus with multiplicities."""
    k = np.arange(L)
    lam1 = 2.0 - 2.0 * np.cos(2.0 * np.pi * k / L)
    if L == 2:
        lam1 = lam1 / 2.0
    # cos(2 pi k / L) = cos(2 pi (L-k) / L): fold equal modes together
    key = np.minimum(k, (L - k) % L)
    vals1, mult1 = np.unique(key, return_counts=True)
    lam1 = lam1[vals1]
    lam, mult = np.zeros(1), np.ones(1)
    for _ in range(d):
        lam = (lam[:, None] + lam1[None, :]).ravel()
        mult = (mult[:, None] * mult1[None, :]).ravel()
    order = np.argsort(lam, kind="stable")
    return lam[order], mult[order].astype(float)


def g0_diag(torus: Torus | tuple[int, int], beta: float, mass2: float) -> float:
    """Diagonal of ``(-beta Lap + mass2)^{-1}`` on a torus, from the Fourier symbol."""
    if mass2 <= 0:
        raise ValueError("mass2 must be positive")
    d, L = (torus.d, torus.L) if isinstance(torus, Torus) else torus
    lam, mult = _spectrum(d, L)
    return float(np.dot(mult, 1.0 / (beta * lam + mass2)) / L**d)


@dataclass(frozen=True)
class SaddleResult:
    t_star: float
    mass2: float
    g0_xx: float
    iterations: int
    residual: float
    finite_size_gap: float

    @property
    def asymptotic(self) -> bool:
        """True when the mass dominates the smallest nonzero mode ``beta * lambda_1``."""
        return self.finite_size_gap < self.mass2


def solve_saddle(torus: Torus | tuple[int, int], beta: float, eps: float, tol: float = 1e-15) -> SaddleResult:
    """Bisection for ``h(t) = 1 - exp(2t) - G0(t) = 0`` on ``t <= 0``.

    ``h`` increases as ``t`` decreases (``G0`` shrinks as the mass grows), so
    a bracket ``[t_lo, 0]`` with ``h(t_lo) > 0 >= h(0)`` is found by doubling.
    """
    if beta <= 0 or eps <= 0:
        raise ValueError("beta and eps must be positive")
    d, L = (torus.d, torus.L) if isinstance(torus, Torus) else torus

    def h(t):
        return -math.expm1(2.0 * t) - g0_diag((d, L), beta, eps * math.exp(-t))

    hi = 0.0
    lo = -1.0
    while h(lo) <= 0.0:
        lo *= 2.0
        if lo < -700:
            raise RuntimeError("saddle bracket not found")
    it = 0
    while hi - lo > tol and it < 400:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if h(mid) > 0.0:
            lo = mid
        else:
            hi = mid
        it += 1
    t_star = lo if abs(h(lo)) < abs(h(hi)) else hi
    mass2 = eps * math.exp(-t_star)
    g = g0_diag((d, L), beta, mass2)
    lam, _ = _spectrum(d, L)
    gap = beta * (lam[1] if len(lam) > 1 else math.inf)
    return SaddleResult(t_star, mass2, g, it, abs(-math.expm1(2 * t_star) - g), gap)


@dataclass
class ScanTable:
    rows: list
    slope: float
    scaling: str

    def as_dicts(self) -> list[dict]:
        keys = ("d", "L", "beta", "eps", "t_star", "mass2", "finite_size_gap", "residual")
        return [dict(zip(keys, r)) for r in self.rows]


def asymptotics_scan(d: int, L: int, betas, epsilons) -> ScanTable:
    """Saddle over a (beta, eps) grid plus the fitted small-mass scaling.

    In 1D the slope is ``d log(eps e^{-t*}) / d log beta``; in 2D and 3D it
    is ``d log(eps e^{-t*}) / d beta``. The fit uses all rows.
    """
    rows = []
    for beta in betas:
        for eps in epsilons:
            r = solve_saddle((d, L), beta, eps)
            rows.append((d, L, float(beta), float(eps), r.t_star, r.mass2, r.finite_size_gap, r.residual))
    arr = np.array([[r[2], r[5]] for r in rows])
    x = np.log(arr[:, 0]) if d == 1 else arr[:, 0]
    y = np.log(arr[:, 1])
    slope = float(np.polyfit(x, y, 1)[0]) if len(set(x)) > 1 else float("nan")
    return ScanTable(rows, slope, "log-log" if d == 1 else "log-linear")
