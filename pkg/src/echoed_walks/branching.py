"""Continuous-time branching random walk built on a Yule genealogy.

Particle ``j`` (0-based, in birth order) is born at ``T_j``; ``T_0 = 0``
and, with ``j`` particles alive, the next birth comes after an ``Exp(j)``
wait. Its parent is uniform among the ``j`` alive particles and it sits at
the parent's position plus ``log xi``. Birth ``j`` reads its wait at
``(j, 0)``, its parent at ``(j, 1)`` and its echo factor at
``(j, SLOT_XI)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numba as nb
import numpy as np
from scipy import special

from .errors import HorizonTooLarge, TiltingUnavailable
from .laws import Bernoulli, Constant, Discrete, Law, Scaled, Thinned, draw_law
from .rng import SLOT_XI, RandomTape, uniform1, uniform_index

MAX_PARTICLES = 10_000_000
_MASK32 = np.uint64(0xFFFFFFFF)
_SLOT_WAIT = 0
_SLOT_PARENT = 1


@dataclass(frozen=True)
class BrwState:
    law: Law
    position: np.ndarray
    birth_time: np.ndarray
    parent: np.ndarray  # 1-based; 0 for the root
    clock: float

    @property
    def count(self) -> int:
        return len(self.position)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "parent", "birth_time", "position"])
            for j in range(self.count):
                w.writerow(
                    [j + 1, int(self.parent[j]), f"{self.birth_time[j]:.17g}", f"{self.position[j]:.17g}"]
                )


@nb.njit(cache=True)
def _words(base, i):
    idx = base + np.uint64(i)
    return np.uint32(idx & _MASK32), np.uint32(idx >> np.uint64(32))


@nb.njit(cache=True)
def _log_pos(v):
    return math.log(v) if v > 0.0 else -np.inf


@nb.njit(cache=True)
def _births(echo, k0, k1, s0, s1, tmax, nmax, pos, birth, parent):
    """Fill births until time ``tmax`` or ``nmax`` particles; -1 on overflow."""
    pos[0] = 0.0
    birth[0] = 0.0
    parent[0] = 0
    t = 0.0
    j = 1
    while j < nmax:
        t += -math.log(uniform1(k0, k1, s0, s1, j, _SLOT_WAIT)) / j
        if t > tmax:
            break
        if j >= pos.shape[0]:
            return -1
        a = uniform_index(k0, k1, s0, s1, j, _SLOT_PARENT, j)
        parent[j] = a + 1
        birth[j] = t
        pos[j] = pos[a] + _log_pos(draw_law(echo, k0, k1, s0, s1, j, SLOT_XI))
        j += 1
    return j


def _run(law, words, tmax, nmax, cap):
    enc = law.encode()
    while True:
        pos = np.empty(cap)
        birth = np.empty(cap)
        parent = np.empty(cap, dtype=np.int64)
        k = _births(enc, *words, tmax, nmax, pos, birth, parent)
        if k >= 0:
            return pos[:k], birth[:k], parent[:k]
        if cap >= MAX_PARTICLES:
            raise HorizonTooLarge(f"more than {MAX_PARTICLES} particles")
        cap = min(2 * cap, MAX_PARTICLES)


def simulate_brw(law: Law, tape: RandomTape, t: float | None = None, count: int | None = None) -> BrwState:
    """Run the branching random walk up to time ``t`` or until ``count`` particles exist."""
    if (t is None) == (count is None):
        raise ValueError("give exactly one of t or count")
    if t is not None:
        if not t >= 0 or t > math.log(MAX_PARTICLES):
            raise HorizonTooLarge(f"expected particle count e^{t} exceeds {MAX_PARTICLES}")
        pos, birth, parent = _run(law, tape.words(), float(t), MAX_PARTICLES + 1, max(16, int(4 * math.exp(t))))
        clock = float(t)
    else:
        if not 1 <= count <= MAX_PARTICLES:
            raise HorizonTooLarge(f"count must lie in [1, {MAX_PARTICLES}]")
        pos, birth, parent = _run(law, tape.words(), np.inf, int(count), int(count))
        clock = float(birth[-1])
    return BrwState(law, pos, birth, parent, clock)


def _log_sigma(pos, theta):
    if theta == 0.0:
        return math.log(len(pos))
    return float(special.logsumexp(theta * pos))


def sigma(state: BrwState, theta: float, t: float | None = None) -> float:
    """``sum_x exp(theta x)`` over particles born by time ``t`` (default: the clock)."""
    pos = state.position if t is None else state.position[state.birth_time <= t]
    return math.exp(_log_sigma(pos, theta))


def w_process(state: BrwState, theta: float, checkpoints) -> np.ndarray:
    """``exp(-m_theta t) Sigma_t`` at each checkpoint time."""
    m = state.law.moment(theta)
    out = []
    for t in checkpoints:
        pos = state.position[state.birth_time <= t]
        out.append(math.exp(_log_sigma(pos, theta) - m * t))
    return np.array(out)


def embedded_walk(state: BrwState, theta: float) -> np.ndarray:
    """``Sigma`` just after each birth: the prefix sums of ``exp(theta x_j)`` in birth order."""
    vals = np.ones(state.count) if theta == 0.0 else np.exp(theta * state.position)
    return np.cumsum(vals)


# ---------------------------------------------------------------------------
# ensembles


@nb.njit(parallel=True, cache=True)
def _sigma_batch(echo, theta, k0, k1, base, times, cap, out, counts):
    tmax = times[-1]
    for r in nb.prange(out.shape[0]):
        s0, s1 = _words(base, r)
        c = cap
        while True:
            pos = np.empty(c)
            birth = np.empty(c)
            parent = np.empty(c, dtype=np.int64)
            k = _births(echo, k0, k1, s0, s1, tmax, 1 << 62, pos, birth, parent)
            if k >= 0:
                break
            c *= 2
        for i in range(times.shape[0]):
            acc = 0.0
            n = 0
            for j in range(k):
                if birth[j] <= times[i]:
                    acc += math.exp(theta * pos[j]) if theta != 0.0 else 1.0
                    n += 1
            out[r, i] = acc
            counts[r, i] = n


def sigma_ensemble(law: Law, theta: float, times, reps: int, tape: RandomTape):
    """``Sigma_t`` and particle counts at ``times`` for ``reps`` independent runs.

    Run ``r`` uses stream ``tape.stream_index + r``.
    """
    times = np.asarray(times, dtype=float)
    if times[-1] > math.log(MAX_PARTICLES):
        raise HorizonTooLarge("horizon too large")
    out = np.empty((int(reps), len(times)))
    counts = np.empty((int(reps), len(times)), dtype=np.int64)
    k0, k1 = tape.key
    cap = max(16, int(4 * math.exp(times[-1])))
    _sigma_batch(law.encode(), float(theta), k0, k1, np.uint64(tape.stream_index), times, cap, out, counts)
    return out, counts


def w_ensemble(law: Law, theta: float, times, reps: int, tape: RandomTape) -> np.ndarray:
    sig, _ = sigma_ensemble(law, theta, times, reps, tape)
    return sig * np.exp(-law.moment(theta) * np.asarray(times, dtype=float))


# ---------------------------------------------------------------------------
# spine


def tilted_law(law: Law, theta: float) -> Law:
    """Law with ``P(v) proportional to P(xi = v) v**theta`` for discrete ``xi``."""
    if isinstance(law, Constant):
        return law
    if isinstance(law, Bernoulli):
        return Constant(1.0)
    if isinstance(law, Discrete):
        vals = [v for v, p in zip(law.values, law.probs) if v > 0 and p > 0]
        w = np.array([p * v**theta for v, p in zip(law.values, law.probs) if v > 0 and p > 0])
        return Discrete(tuple(vals), tuple(w / w.sum()))
    if isinstance(law, Scaled):
        return Scaled(tilted_law(law.inner, theta), law.factor)
    if isinstance(law, Thinned):
        return tilted_law(law.inner, theta)
    raise TiltingUnavailable(f"no exact tilting for {type(law).__name__}; use weighted mode")


@dataclass(frozen=True)
class SpineProcess:
    """Compound Poisson path with rate ``intensity`` on ``[0, t]``.

    ``log_weight`` is the log importance weight of the path relative to the
    tilted jump law (0 in exact mode, ``-inf`` for a path that hit a zero).
    """

    intensity: float
    t: float
    jump_times: np.ndarray
    jumps: np.ndarray
    log_weight: float

    def value(self, s: float) -> float:
        return float(self.jumps[self.jump_times <= s].sum())


@nb.njit(cache=True)
def _spine(jump_enc, rate, t, k0, k1, s0, s1, weighted, times_out, jumps_out):
    """Fill jump times and sizes; returns ``(count, log_weight_extra)``."""
    s = 0.0
    i = 0
    lw = 0.0
    while True:
        s += -math.log(uniform1(k0, k1, s0, s1, i, _SLOT_WAIT)) / rate
        if s > t:
            return i, lw
        if i >= times_out.shape[0]:
            return -1, 0.0
        v = draw_law(jump_enc, k0, k1, s0, s1, i, SLOT_XI)
        times_out[i] = s
        jumps_out[i] = _log_pos(v)
        if weighted:
            # xi**theta/m_theta per jump; the xi**theta part is folded into the caller
            if v <= 0.0:
                lw = -np.inf
        i += 1


def _jump_law(law, theta, mode):
    if mode == "exact":
        return tilted_law(law, theta), False
    if mode == "weighted":
        return law, True
    raise ValueError(f"unknown mode {mode!r}")


def spine_sample(law: Law, theta: float, t: float, tape: RandomTape, mode: str = "exact") -> SpineProcess:
    """One path of the spine: rate ``m_theta``, jumps from the tilted ``log xi`` law.

    In ``weighted`` mode jumps come from ``log xi`` itself and the path
    carries the importance weight ``prod xi_i**theta / m_theta``.
    """
    m = law.moment(theta)
    jl, weighted = _jump_law(law, theta, mode)
    cap = 16 + int(4 * m * t)
    while True:
        jt = np.empty(cap)
        js = np.empty(cap)
        k, lw = _spine(jl.encode(), m, float(t), *tape.words(), weighted, jt, js)
        if k >= 0:
            break
        cap *= 2
    jt, js = jt[:k], js[:k]
    if weighted and lw == 0.0:
        lw = theta * js.sum() - k * math.log(m)
    return SpineProcess(m, float(t), jt, js, float(lw))


@nb.njit(parallel=True, cache=True)
def _spine_batch(jump_enc, rate, theta, t, k0, k1, base, weighted, grid, paths, logw):
    for r in nb.prange(paths.shape[0]):
        s0, s1 = _words(base, r)
        cap = 16 + int(8 * rate * t)
        while True:
            jt = np.empty(cap)
            js = np.empty(cap)
            k, lw = _spine(jump_enc, rate, t, k0, k1, s0, s1, weighted, jt, js)
            if k >= 0:
                break
            cap *= 2
        total = 0.0
        for i in range(k):
            total += js[i]
        for g in range(grid.shape[0]):
            acc = 0.0
            for i in range(k):
                if jt[i] <= grid[g]:
                    acc += js[i]
            paths[r, g] = acc
        if weighted:
            # exp(-theta P + m t) prod(xi^theta / m) = exp(m t) m^(-k)
            logw[r] = -np.inf if lw == -np.inf else rate * t - k * math.log(rate)
        else:
            logw[r] = -theta * total + rate * t


@nb.njit(parallel=True, cache=True)
def _particle_paths_count(echo, k0, k1, base, t, cap, counts):
    for r in nb.prange(counts.shape[0]):
        s0, s1 = _words(base, r)
        c = cap
        while True:
            pos = np.empty(c)
            birth = np.empty(c)
            parent = np.empty(c, dtype=np.int64)
            k = _births(echo, k0, k1, s0, s1, t, 1 << 62, pos, birth, parent)
            if k >= 0:
                break
            c *= 2
        counts[r] = k


@nb.njit(parallel=True, cache=True)
def _particle_paths_fill(echo, k0, k1, base, t, grid, offsets, out):
    for r in nb.prange(offsets.shape[0] - 1):
        s0, s1 = _words(base, r)
        k = offsets[r + 1] - offsets[r]
        pos = np.empty(k)
        birth = np.empty(k)
        parent = np.empty(k, dtype=np.int64)
        _births(echo, k0, k1, s0, s1, t, k, pos, birth, parent)
        for j in range(k):
            for g in range(grid.shape[0]):
                a = j
                while birth[a] > grid[g]:
                    a = parent[a] - 1
                out[offsets[r] + j, g] = pos[a]


def particle_paths(law: Law, t: float, grid, reps: int, tape: RandomTape):
    """Ancestral positions ``x(s)`` at ``grid`` times for every particle alive at ``t``.

    Returns ``(paths, offsets)``: rows ``offsets[r]:offsets[r+1]`` of
    ``paths`` belong to run ``r``.
    """
    if t > math.log(MAX_PARTICLES):
        raise HorizonTooLarge("horizon too large")
    grid = np.asarray(grid, dtype=float)
    k0, k1 = tape.key
    base = np.uint64(tape.stream_index)
    enc = law.encode()
    counts = np.empty(int(reps), dtype=np.int64)
    _particle_paths_count(enc, k0, k1, base, float(t), max(16, int(4 * math.exp(t))), counts)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    out = np.empty((int(offsets[-1]), len(grid)))
    _particle_paths_fill(enc, k0, k1, base, float(t), grid, offsets, out)
    return out, offsets


def spine_paths(law: Law, theta: float, t: float, grid, reps: int, tape: RandomTape, mode: str = "exact"):
    """Spine values at ``grid`` and the log of ``exp(-theta P(t) + m_theta t)`` times any importance weight."""
    m = law.moment(theta)
    jl, weighted = _jump_law(law, theta, mode)
    grid = np.asarray(grid, dtype=float)
    paths = np.empty((int(reps), len(grid)))
    logw = np.empty(int(reps))
    k0, k1 = tape.key
    _spine_batch(jl.encode(), m, float(theta), float(t), k0, k1, np.uint64(tape.stream_index), weighted, grid, paths, logw)
    return paths, logw


@dataclass(frozen=True)
class ManyToOneResult:
    lhs: float
    rhs: float
    lhs_se: float
    rhs_se: float

    @property
    def pooled_se(self) -> float:
        return math.hypot(self.lhs_se, self.rhs_se)

    @property
    def z(self) -> float:
        se = self.pooled_se
        return abs(self.lhs - self.rhs) / se if se > 0 else (0.0 if self.lhs == self.rhs else math.inf)


def many_to_one_check(
    law: Law,
    theta: float,
    t: float,
    f,
    reps: int,
    tape: RandomTape,
    grid=None,
    mode: str = "exact",
) -> ManyToOneResult:
    """Monte Carlo estimates of both sides of the many-to-one formula.

    Parameters
    ----------
    f : callable
        Maps an array of path values of shape ``(K, len(grid))`` to ``K``
        reals. ``grid`` defaults to ``[t]`` (endpoint functionals).

    Notes
    -----
    The particle side uses ``tape.derive("brw")`` and the spine side
    ``tape.derive("spine")``, so the two estimates are independent.
    """
    grid = np.array([t] if grid is None else grid, dtype=float)
    paths, offsets = particle_paths(law, t, grid, reps, tape.derive("brw"))
    fv = np.asarray(f(paths), dtype=float)
    per_run = np.add.reduceat(fv, offsets[:-1]) if len(fv) else np.zeros(reps)
    sp, logw = spine_paths(law, theta, t, grid, reps, tape.derive("spine"), mode)
    g = np.asarray(f(sp), dtype=float)
    with np.errstate(invalid="ignore"):
        rhs_vals = np.where(np.isneginf(logw), 0.0, np.exp(logw) * g)
    n = float(reps)
    return ManyToOneResult(
        float(per_run.mean()),
        float(rhs_vals.mean()),
        float(per_run.std(ddof=1) / math.sqrt(n)),
        float(rhs_vals.std(ddof=1) / math.sqrt(n)),
    )
