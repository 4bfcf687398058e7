"""Two-colour Polya urns and subtree-size laws of random recursive trees."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numba as nb
import numpy as np
from scipy import special

from .errors import BadIndices, HypothesisViolation
from .laws import WalkParams, draw_law
from .rng import SLOT_XI, RandomTape, uniform1, uniforms
from .walk import _fill_increments

_MASK32 = np.uint64(0xFFFFFFFF)
_SLOT_URN = 0


@dataclass(frozen=True)
class UrnState:
    red: int
    blue: int
    n: int


@nb.njit(cache=True)
def _polya(k0, k1, s0, s1, n):
    red = 1
    blue = 1
    for i in range(1, n):
        if uniform1(k0, k1, s0, s1, i, _SLOT_URN) * (red + blue) < red:
            red += 1
        else:
            blue += 1
    return red, blue


@nb.njit(cache=True)
def _words(base, i):
    idx = base + np.uint64(i)
    return np.uint32(idx & _MASK32), np.uint32(idx >> np.uint64(32))


@nb.njit(parallel=True, cache=True)
def _polya_batch(k0, k1, base, n, red):
    for i in nb.prange(red.shape[0]):
        s0, s1 = _words(base, i)
        red[i], _ = _polya(k0, k1, s0, s1, n)


def polya_sample(n: int, tape: RandomTape) -> UrnState:
    """Urn started from one red and one blue ball after ``n - 1`` draws."""
    if n < 1:
        raise ValueError("n must be >= 1")
    red, blue = _polya(*tape.words(), n)
    return UrnState(int(red), int(blue), n)


def polya_batch(n: int, size: int, tape: RandomTape) -> np.ndarray:
    """Red counts of ``size`` independent urns (replicate ``i`` on stream ``base + i``)."""
    red = np.empty(int(size), dtype=np.int64)
    k0, k1 = tape.key
    _polya_batch(k0, k1, np.uint64(tape.stream_index), int(n), red)
    return red


@dataclass(frozen=True)
class SubtreeSizeLaw:
    """Law of the size at time ``n`` of the subtree rooted at vertex ``r``."""

    n: int
    r: int
    pmf: np.ndarray  # pmf[i - 1] = P(Y = i), i = 1..n-r+1

    @property
    def support(self) -> np.ndarray:
        return np.arange(1, len(self.pmf) + 1)

    def mean(self) -> float:
        return float(np.dot(self.support, self.pmf))

    def sample(self, size: int, tape: RandomTape, slot: int = 0) -> np.ndarray:
        cdf = np.cumsum(self.pmf)
        cdf[-1] = 1.0
        u = uniforms(tape, slot, size)
        return np.searchsorted(cdf, u, side="right") + 1


def _check(n, r):
    if not (isinstance(n, (int, np.integer)) and isinstance(r, (int, np.integer))) or not 2 <= r <= n:
        raise BadIndices(f"needs integers 2 <= r <= n, got r={r}, n={n}")


def y_pmf_exact(n: int, r: int) -> list[Fraction]:
    """The subtree-size pmf as exact rationals."""
    _check(n, r)
    f = math.factorial
    head = Fraction((r - 1) * f(n - r), f(n - 1))
    return [head * Fraction(f(n - i - 1), f(n - r + 1 - i)) for i in range(1, n - r + 2)]


def y_pmf(n: int, r: int) -> SubtreeSizeLaw:
    """``P(Y = i) = (r-1) (n-r)!/(n-1)! (n-i-1)!/(n-r+1-i)!`` via log-factorials."""
    _check(n, r)
    i = np.arange(1, n - r + 2)
    logp = (
        math.log(r - 1)
        + special.gammaln(n - r + 1)
        - special.gammaln(n)
        + special.gammaln(n - i)
        - special.gammaln(n - r + 2 - i)
    )
    return SubtreeSizeLaw(int(n), int(r), np.exp(logp))


@nb.njit(parallel=True, cache=True)
def _composite(echo, k0, k1, base, n, out):
    one = np.array([0.0, 1.0, 1.0, 1.0, 1.0])  # encoded Constant(1)
    for i in nb.prange(out.shape[0]):
        s0, s1 = _words(base, 3 * i)
        red, blue = _polya(k0, k1, s0, s1, n)
        xi = draw_law(echo, k0, k1, s0, s1, 0, SLOT_XI)
        a0, a1 = _words(base, 3 * i + 1)
        b0, b1 = _words(base, 3 * i + 2)
        hat = np.empty(red)
        _fill_increments(1.0, echo, one, k0, k1, a0, a1, hat)
        check = np.empty(blue)
        _fill_increments(1.0, echo, one, k0, k1, b0, b1, check)
        out[i] = hat.sum() + xi * check.sum()


def composite_sample(params: WalkParams, n: int, size: int, tape: RandomTape) -> np.ndarray:
    """Samples of ``S^_{R_n} + xi S'_{B_n}`` built from two independent pure-echo walks.

    Sample ``i`` uses streams ``3i``, ``3i+1`` and ``3i+2`` past
    ``tape.stream_index`` for the urn with ``xi``, and the two walks.
    """
    if params.p != 1.0 or not (params.spin.is_constant and params.spin.mean == 1.0):
        raise HypothesisViolation("the urn identity needs p = 1 and X = 1")
    if n < 1:
        raise ValueError("n must be >= 1")
    out = np.empty(int(size))
    k0, k1 = tape.key
    _composite(params.echo.encode(), k0, k1, np.uint64(tape.stream_index), int(n), out)
    return out
