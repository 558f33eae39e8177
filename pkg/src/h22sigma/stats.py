"""Streaming mean and binning (blocking) error estimates for Markov chain data."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

MIN_BLOCKS = 32


@dataclass
class _Level:
    n: int = 0
    s: float = 0.0
    s2: float = 0.0
    pending: float = 0.0
    pending_n: int = 0


@dataclass
class Accumulator:
    """Running mean with a binary tower of block means.

    Level ``l`` holds statistics of block means over ``2**l`` consecutive
    samples. Accumulators from independent chains merge by adding the
    completed-block statistics; unfinished blocks are discarded at merge time
    so the result does not depend on the merge order.
    """

    count: int = 0
    total: float = 0.0
    levels: list = field(default_factory=list)

    def push(self, x: float) -> None:
        x = float(x)
        if not math.isfinite(x):
            raise ValueError(f"non-finite sample {x!r}")
        self.count += 1
        self.total += x
        lvl = 0
        while True:
            if lvl == len(self.levels):
                self.levels.append(_Level())
            L = self.levels[lvl]
            L.n += 1
            L.s += x
            L.s2 += x * x
            L.pending += x
            L.pending_n += 1
            if L.pending_n < 2:
                break
            x = L.pending / 2.0
            L.pending, L.pending_n = 0.0, 0
            lvl += 1

    def extend(self, xs) -> None:
        for x in np.asarray(xs, dtype=float).ravel():
            self.push(x)

    def merge(self, other: "Accumulator") -> "Accumulator":
        out = Accumulator(self.count + other.count, self.total + other.total)
        for k in range(max(len(self.levels), len(other.levels))):
            a = self.levels[k] if k < len(self.levels) else _Level()
            b = other.levels[k] if k < len(other.levels) else _Level()
            out.levels.append(_Level(a.n + b.n, a.s + b.s, a.s2 + b.s2))
        return out

    @property
    def mean(self) -> float:
        return self.total / self.count if self.count else float("nan")

    def _level_error(self, k: int) -> float:
        L = self.levels[k]
        if L.n < 2:
            return float("nan")
        m = L.s / L.n
        var = max(L.s2 / L.n - m * m, 0.0) * L.n / (L.n - 1)
        return math.sqrt(var / L.n)

    @property
    def naive_error(self) -> float:
        if self.count < 2:
            return 0.0
        return self._level_error(0)

    @property
    def blocking_error(self) -> float:
        errs = [self._level_error(k) for k in range(len(self.levels)) if self.levels[k].n >= MIN_BLOCKS]
        return max(errs) if errs else self.naive_error

    @property
    def error(self) -> float:
        """Conservative standard error: the larger of blocked and naive estimates."""
        return max(self.blocking_error, self.naive_error)

    @property
    def n_blocks(self) -> int:
        usable = [k for k in range(len(self.levels)) if self.levels[k].n >= MIN_BLOCKS]
        return self.levels[usable[-1]].n if usable else self.count

    @property
    def tau_int(self) -> float:
        """Integrated autocorrelation time implied by ``(err_block / err_naive)**2 / 2``."""
        naive = self.naive_error
        if naive == 0.0:
            return 0.5
        return 0.5 * (self.error / naive) ** 2

    def summary(self) -> dict:
        return {
            "mean": self.mean,
            "stderr": self.error,
            "n": self.count,
            "blocks": self.n_blocks,
            "tau_int": self.tau_int,
        }


def accumulate(xs) -> Accumulator:
    acc = Accumulator()
    acc.extend(xs)
    return acc


def blocking_error(xs) -> float:
    return accumulate(xs).error
