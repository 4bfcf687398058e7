"""Direct simulation of echo-reinforced walks.

Step ``k`` (1-based) reads its randoms at counter ``k-1`` of the tape:
the memory coin at slot ``SLOT_EPS``, the echoed index at ``SLOT_U``, the
echo factor at ``SLOT_XI`` and the fresh spin at ``SLOT_X``. Draws a step
does not need are simply not evaluated, which leaves every other draw
unchanged. The tree module reads the same addresses, so both
representations agree path by path.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numba as nb
import numpy as np

from .laws import Law, WalkParams, check_spin, draw_law
from .rng import SLOT_EPS, SLOT_U, SLOT_X, SLOT_XI, RandomTape, uniform1, uniform_index

_MASK32 = np.uint64(0xFFFFFFFF)


@dataclass(frozen=True)
class Trajectory:
    """Increments ``X~_1..X~_n`` and positions ``S~_1..S~_n``."""

    increments: np.ndarray
    positions: np.ndarray

    @property
    def n(self) -> int:
        return len(self.positions)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "increment", "position"])
            for k, (x, s) in enumerate(zip(self.increments, self.positions), start=1):
                w.writerow([k, f"{x:.17g}", f"{s:.17g}"])


@nb.njit(cache=True)
def compensated_cumsum(x, out):
    """Neumaier-compensated prefix sums of ``x`` written into ``out``."""
    s = 0.0
    c = 0.0
    for i in range(x.shape[0]):
        v = x[i]
        t = s + v
        if abs(s) >= abs(v):
            c += (s - t) + v
        else:
            c += (v - t) + s
        s = t
        out[i] = s + c


@nb.njit(cache=True)
def _fill_increments(p, echo, spin, k0, k1, s0, s1, inc):
    inc[0] = draw_law(spin, k0, k1, s0, s1, 0, SLOT_X)
    for k in range(1, inc.shape[0]):
        if p >= 1.0 or uniform1(k0, k1, s0, s1, k, SLOT_EPS) < p:
            j = uniform_index(k0, k1, s0, s1, k, SLOT_U, k)
            inc[k] = draw_law(echo, k0, k1, s0, s1, k, SLOT_XI) * inc[j]
        else:
            inc[k] = draw_law(spin, k0, k1, s0, s1, k, SLOT_X)


@nb.njit(cache=True)
def _fill_spins(spin, k0, k1, s0, s1, inc):
    for k in range(inc.shape[0]):
        inc[k] = draw_law(spin, k0, k1, s0, s1, k, SLOT_X)


def simulate(params: WalkParams, n: int, tape: RandomTape) -> Trajectory:
    """One trajectory of ``n`` steps."""
    if n < 1:
        raise ValueError("n must be >= 1")
    inc = np.empty(n)
    _fill_increments(
        float(params.p), params.echo.encode(), params.spin.encode(), *tape.words(), inc
    )
    pos = np.empty(n)
    compensated_cumsum(inc, pos)
    return Trajectory(inc, pos)


def simulate_orw(spin: Law, n: int, tape: RandomTape) -> Trajectory:
    """Ordinary random walk on the same spin addresses as :func:`simulate`."""
    if n < 1:
        raise ValueError("n must be >= 1")
    check_spin(spin)
    inc = np.empty(n)
    _fill_spins(spin.encode(), *tape.words(), inc)
    pos = np.empty(n)
    compensated_cumsum(inc, pos)
    return Trajectory(inc, pos)


@nb.njit(parallel=True, cache=True)
def _ensemble_kernel(p, echo, spin, k0, k1, base, checkpoints, orw, out):
    n = checkpoints[-1]
    for r in nb.prange(out.shape[0]):
        idx = base + np.uint64(r)
        s0 = np.uint32(idx & _MASK32)
        s1 = np.uint32(idx >> np.uint64(32))
        inc = np.empty(n)
        if orw:
            _fill_spins(spin, k0, k1, s0, s1, inc)
        else:
            _fill_increments(p, echo, spin, k0, k1, s0, s1, inc)
        s = 0.0
        c = 0.0
        j = 0
        for i in range(n):
            v = inc[i]
            t = s + v
            if abs(s) >= abs(v):
                c += (s - t) + v
            else:
                c += (v - t) + s
            s = t
            if i + 1 == checkpoints[j]:
                out[r, j] = s + c
                j += 1


def positions_at(params, checkpoints, reps: int, tape: RandomTape, orw: bool = False) -> np.ndarray:
    """``S~_n`` at every checkpoint for ``reps`` replicates.

    Replicate ``r`` runs on ``tape.stream(tape.stream_index + r)``, so row
    ``r`` equals ``simulate(params, n, tape.stream(tape.stream_index + r))``
    read at the checkpoints. Output does not depend on the thread count.
    """
    cps = np.asarray(checkpoints, dtype=np.int64)
    if cps.ndim != 1 or len(cps) == 0 or cps[0] < 1 or np.any(np.diff(cps) <= 0):
        raise ValueError("checkpoints must be a strictly increasing sequence of positive integers")
    if tape.stream_index + reps > 2**64:
        raise ValueError("replicate streams overflow the 64-bit stream index")
    out = np.empty((int(reps), len(cps)))
    k0, k1 = tape.key
    _ensemble_kernel(
        float(params.p),
        params.echo.encode(),
        params.spin.encode(),
        k0,
        k1,
        np.uint64(tape.stream_index),
        cps,
        bool(orw),
        out,
    )
    return out
