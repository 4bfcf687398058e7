"""Sample pools approximating the limit laws.

The pure-echo limit ``L`` solves ``L = V**m1 L' + xi (1-V)**m1 L''`` in
law. :func:`fixpoint_pool` iterates that map on a finite pool (population
dynamics). Component limits and the supercritical series are built on top
of such pools.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numba as nb
import numpy as np
from scipy import special

from .errors import HypothesisViolation
from .laws import Law, Thinned, WalkParams, draw_law, xi_log_xi
from .rng import SLOT_EPS, SLOT_U, SLOT_X, SLOT_XI, RandomTape, uniform1, uniform_index

_MASK32 = np.uint64(0xFFFFFFFF)
# pool-update slots
_S_V, _S_A, _S_B, _S_EPS = 0, 1, 4, 5
# series slots beyond the tree layout
_S_DIR, _S_PICK = 5, 6


class TruncationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SamplePool:
    samples: np.ndarray
    generation: int
    provenance: dict = field(default_factory=dict)
    degenerate: bool = False
    companion: np.ndarray | None = None  # second coordinate of a pair pool

    @property
    def size(self) -> int:
        return len(self.samples)

    def moment(self, k: int) -> float:
        return float(np.mean(self.samples**k))

    def moment_se(self, k: int) -> float:
        return float(np.std(self.samples**k, ddof=1) / math.sqrt(self.size))

    def metadata(self) -> dict:
        d = dict(self.provenance)
        d.update(
            N=self.size,
            generations=self.generation,
            degenerate=self.degenerate,
            moments=[self.moment(k) for k in (1, 2, 3)],
        )
        return d

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("sample\n")
            for x in self.samples:
                fh.write(f"{x:.17g}\n")
        with open(f"{path}.json", "w") as fh:
            json.dump(self.metadata(), fh, indent=2, sort_keys=True)


def _provenance(law, tape, **extra):
    try:
        spec = law.spec()
    except Exception:
        spec = repr(law)
    d = {"law": spec, "seed": tape.master_seed, "stream": tape.stream_index}
    d.update(extra)
    return d


@nb.njit(parallel=True, cache=True)
def _generation(echo, m1, old, k0, k1, s0, s1, new):
    n = old.shape[0]
    for i in nb.prange(n):
        v = uniform1(k0, k1, s0, s1, i, _S_V)
        a = uniform_index(k0, k1, s0, s1, i, _S_A, n)
        b = uniform_index(k0, k1, s0, s1, i, _S_B, n)
        xi = draw_law(echo, k0, k1, s0, s1, i, SLOT_XI)
        new[i] = v**m1 * old[a] + xi * (1.0 - v) ** m1 * old[b]


def _ui(law):
    return xi_log_xi(law) < law.moment(1.0)


def fixpoint_pool(
    law: Law, N: int, generations: int, tape: RandomTape, renormalise: bool = True
) -> SamplePool:
    """Population dynamics for the pure-echo limit of echo law ``law``.

    The pool starts at the constant ``1/Gamma(1+m1)``; generation ``g``
    draws from ``tape.derive(f"fixpoint/{g}")``. When the limit is
    degenerate the zero pool is returned with ``degenerate=True``.

    The fixed-point map commutes with scaling, so a finite pool's mean
    wanders like a random walk across generations. With ``renormalise``
    the pool is rescaled to the exact mean after every generation.
    """
    prov = _provenance(law, tape, kind="fixpoint")
    if not _ui(law):
        return SamplePool(np.zeros(int(N)), 0, prov, degenerate=True)
    m1 = law.moment(1.0)
    enc = law.encode()
    target = 1.0 / math.gamma(1.0 + m1)
    cur = np.full(int(N), target)
    nxt = np.empty_like(cur)
    for g in range(generations):
        _generation(enc, m1, cur, *tape.derive(f"fixpoint/{g}").words(), nxt)
        cur, nxt = nxt, cur
        if renormalise:
            cur *= target / cur.mean()
    return SamplePool(cur, generations, prov)


def advance(
    pool: SamplePool, law: Law, tape: RandomTape, generations: int = 1, renormalise: bool = True
) -> SamplePool:
    """Apply further generations of the fixed-point map to ``pool``."""
    if pool.degenerate:
        return pool
    m1 = law.moment(1.0)
    enc = law.encode()
    cur = pool.samples.copy()
    nxt = np.empty_like(cur)
    target = 1.0 / math.gamma(1.0 + m1)
    for g in range(generations):
        _generation(enc, m1, cur, *tape.derive(f"advance/{pool.generation + g}").words(), nxt)
        cur, nxt = nxt, cur
        if renormalise:
            cur *= target / cur.mean()
    return SamplePool(cur, pool.generation + generations, pool.provenance)


def compound_echo(params: WalkParams) -> Law:
    """The echo law ``eps xi`` with ``eps ~ Bernoulli(p)``."""
    return Thinned(params.echo, params.p) if params.p < 1.0 else params.echo


def component_pool(params: WalkParams, r: int, base: SamplePool, tape: RandomTape) -> SamplePool:
    """Marginal samples of the component limit at vertex ``r``.

    ``base`` must approximate the pure-echo limit of ``eps xi`` (see
    :func:`compound_echo`). For ``r >= 2`` each base sample is multiplied
    by ``(1 - eps) beta**(p m1)`` with ``beta ~ Beta(1, r-1)``.
    """
    if r < 1:
        raise ValueError("r must be >= 1")
    if r == 1:
        return base
    n = base.size
    u_eps = np.empty(n)
    u_beta = np.empty(n)
    from .rng import fill_uniforms

    k = tape.words()
    fill_uniforms(*k, np.uint32(_S_EPS), u_eps)
    fill_uniforms(*k, np.uint32(_S_V), u_beta)
    keep = u_eps >= params.p  # 1 - eps
    beta = -np.expm1(np.log(u_beta) / (r - 1))  # 1 - U**(1/(r-1))
    vals = np.where(keep, base.samples * beta ** params.pm1, 0.0)
    prov = dict(base.provenance, kind="component", r=r, p=params.p)
    return SamplePool(vals, base.generation, prov, base.degenerate)


# ---------------------------------------------------------------------------
# series limit


@nb.njit(parallel=True, cache=True)
def _pair_generation(echo, spin, p, pm, a_old, z_old, k0, k1, s0, s1, a_new, z_new):
    n = a_old.shape[0]
    for i in nb.prange(n):
        v = uniform1(k0, k1, s0, s1, i, _S_V)
        a = uniform_index(k0, k1, s0, s1, i, _S_A, n)
        b = uniform_index(k0, k1, s0, s1, i, _S_B, n)
        lv = v**pm
        rv = (1.0 - v) ** pm
        if p >= 1.0 or uniform1(k0, k1, s0, s1, i, _S_EPS) < p:
            xi = draw_law(echo, k0, k1, s0, s1, i, SLOT_XI)
            a_new[i] = lv * a_old[a] + xi * rv * a_old[b]
            z_new[i] = lv * z_old[a] + rv * z_old[b]
        else:
            x = draw_law(spin, k0, k1, s0, s1, i, SLOT_X)
            a_new[i] = lv * a_old[a]
            z_new[i] = lv * z_old[a] + rv * (x * a_old[b] + z_old[b])


def pair_pool(params: WalkParams, N: int, generations: int, tape: RandomTape) -> SamplePool:
    """Joint pool of ``(A, Z)`` for a percolated tree grown from one root.

    ``A`` is the limiting weight of the root's component and ``Z`` the
    limit of the spin-weighted sum over all other components, both scaled
    by ``n**(p m1)``. Needs ``p m1 > 1`` so that ``Z`` is finite.
    """
    pm = params.pm1
    if not pm > 1.0:
        raise HypothesisViolation("the pair recursion needs p m1 > 1")
    prov = _provenance(params.echo, tape, kind="pair", p=params.p)
    if not _ui(params.echo):
        return SamplePool(np.zeros(int(N)), 0, prov, True, np.zeros(int(N)))
    p = params.p
    g0 = math.gamma(1.0 + pm)
    a = np.full(int(N), 1.0 / g0)
    z = np.full(int(N), params.spin.mean * (1.0 - p) / ((pm - 1.0) * g0))
    a2, z2 = np.empty_like(a), np.empty_like(z)
    echo, spin = params.echo.encode(), params.spin.encode()
    for g in range(generations):
        _pair_generation(echo, spin, p, pm, a, z, *tape.derive(f"pairs/{g}").words(), a2, z2)
        a, a2 = a2, a
        z, z2 = z2, z
        # same neutral scale drift as the pure-echo pool; Z is contracted
        a *= 1.0 / (g0 * a.mean())
    return SamplePool(a, generations, prov, False, z)


@nb.njit(cache=True)
def _words(base, i):
    idx = base + np.uint64(i)
    return np.uint32(idx & _MASK32), np.uint32(idx >> np.uint64(32))


@nb.njit(parallel=True, cache=True)
def _series(echo, spin, p, pm, R, a_pool, z_pool, use_tail, centre, k0, k1, base, out):
    npool = a_pool.shape[0]
    for i in nb.prange(out.shape[0]):
        s0, s1 = _words(base, i)
        w = np.empty(R)
        comp = np.empty(R, dtype=np.int64)
        x = np.empty(R)
        d = np.empty(R)
        dsum = 0.0
        for k in range(R):
            x[k] = draw_law(spin, k0, k1, s0, s1, k, SLOT_X)
            d[k] = -math.log(uniform1(k0, k1, s0, s1, k, _S_DIR))
            dsum += d[k]
            if k == 0:
                w[k] = 1.0
                comp[k] = 0
            else:
                j = uniform_index(k0, k1, s0, s1, k, SLOT_U, k)
                xi = draw_law(echo, k0, k1, s0, s1, k, SLOT_XI)
                if p >= 1.0 or uniform1(k0, k1, s0, s1, k, SLOT_EPS) < p:
                    w[k] = xi * w[j]
                    comp[k] = comp[j]
                else:
                    w[k] = 1.0
                    comp[k] = k
        acc = 0.0
        for k in range(R):
            pick = uniform_index(k0, k1, s0, s1, k, _S_PICK, npool)
            scale = (d[k] / dsum) ** pm
            acc += x[comp[k]] * w[k] * scale * a_pool[pick]
            if use_tail:
                acc += scale * z_pool[pick]
        out[i] = acc - centre


def series_tail_bound(params: WalkParams, R: int) -> float:
    """``sum_{r>R} E|X| E L_r``, the mean absolute truncation error of the series."""
    pm = params.pm1
    if not pm > 1.0:
        return math.inf
    ax = params.spin.abs_moment(1.0)
    return ax * (1.0 - params.p) / (pm - 1.0) * math.exp(special.gammaln(R + 1) - special.gammaln(R + pm))


def series_centre(params: WalkParams, R: int) -> float:
    """``sum_{r<=R} E[X_r L_r]``."""
    r = np.arange(1, R + 1)
    lead = np.where(r > 1, 1.0 - params.p, 1.0)
    return float(params.spin.mean * np.sum(lead * np.exp(special.gammaln(r) - special.gammaln(r + params.pm1))))


def series_limit_pool(
    params: WalkParams,
    R: int,
    N: int,
    tape: RandomTape,
    *,
    tail: bool = False,
    centred: bool | None = None,
    pool_size: int = 100_000,
    generations: int = 200,
    tol: float | None = None,
) -> SamplePool:
    """Samples of ``sum_{r<=R} X_r L_r`` with the ``L_r`` drawn jointly.

    The first ``R`` vertices of the percolated tree are drawn exactly; the
    vertices arriving later split among them in Dirichlet(1, ..., 1)
    proportions ``D``, and vertex ``k``'s branch contributes
    ``D_k**(p m1)`` times an independent copy of its limiting weight.
    With ``tail=True`` (supercritical only) the components rooted beyond
    ``R`` are added from the pair pool, giving the full series.

    For ``p m1`` in ``(1/2, 1]`` the centred partial sum
    ``sum_{r<=R} (X_r L_r - E[X_r L_r])`` is returned instead
    (``centred`` defaults to that choice).
    """
    pm = params.pm1
    super_ = pm > 1.0
    if centred is None:
        centred = not super_
    if not super_ and not centred:
        raise HypothesisViolation("the uncentred series needs p m1 > 1")
    if centred and not 0.5 < pm <= 1.0 + 1e-12:
        raise HypothesisViolation("the centred series needs p m1 in (1/2, 1]")
    if tail and not super_:
        raise HypothesisViolation("the series tail is only finite for p m1 > 1")
    if not _ui(params.echo):
        prov = _provenance(params.echo, tape, kind="series", R=R, p=params.p)
        return SamplePool(np.zeros(int(N)), 0, prov, True)
    if super_:
        pool = pair_pool(params, pool_size, generations, tape.derive("series/pairs"))
        a_pool, z_pool = pool.samples, pool.companion
    else:
        pool = fixpoint_pool(compound_echo(params), pool_size, generations, tape.derive("series/base"))
        a_pool, z_pool = pool.samples, np.zeros(1)
    bound = series_tail_bound(params, R)
    if tol is not None and not tail and bound > tol:
        warnings.warn(f"series truncation bound {bound:.3g} exceeds tolerance {tol:.3g}", TruncationWarning)
    centre = series_centre(params, R) if centred else 0.0
    out = np.empty(int(N))
    sub = tape.derive("series/draws")
    _series(
        params.echo.encode(), params.spin.encode(), float(params.p), pm, int(R),
        a_pool, z_pool, bool(tail), centre, *sub.key, np.uint64(sub.stream_index), out,
    )
    prov = _provenance(params.echo, tape, kind="series", R=R, p=params.p, tail=tail, centred=centred,
                       tail_bound=None if tail else bound)
    return SamplePool(out, generations, prov)


# ---------------------------------------------------------------------------
# characteristic-function residual


@nb.njit(parallel=True, cache=True)
def _ecf_grid(samples, h, out_re, out_im):
    for g in nb.prange(out_re.shape[0]):
        s = g * h
        cr = 0.0
        ci = 0.0
        for x in samples:
            cr += math.cos(s * x)
            ci += math.sin(s * x)
        out_re[g] = cr / samples.shape[0]
        out_im[g] = ci / samples.shape[0]


def _interp(arg, h, re, im):
    a = np.abs(arg)
    sign = np.sign(arg)
    return np.interp(a, np.arange(len(re)) * h, re) + 1j * sign * np.interp(a, np.arange(len(im)) * h, im)


def ecf(samples, t) -> np.ndarray:
    """Empirical characteristic function at the points ``t``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    return np.array([np.mean(np.exp(1j * s * samples)) for s in t])


def ecf_residual(pool: SamplePool, law: Law, t_grid, tape: RandomTape, K: int | None = None, h: float = 0.005) -> float:
    """Max over ``t_grid`` of ``|phi(t) - mean_k phi(t V_k**m1) phi(t xi_k (1-V_k)**m1)|``.

    ``phi`` is the empirical characteristic function of ``pool``, tabulated
    on a grid of spacing ``h`` and linearly interpolated.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if pool.degenerate:
        return 0.0
    K = pool.size if K is None else int(K)
    m1 = law.moment(1.0)
    from .laws import sample
    from .rng import uniforms

    v = uniforms(tape, _S_V, K)
    xi = sample(law, K, tape, SLOT_XI)
    smax = float(np.max(np.abs(t_grid))) * max(1.0, float(xi.max()))
    h = max(h, smax / 50_000)
    ng = int(math.ceil(smax / h)) + 2
    re = np.empty(ng)
    im = np.empty(ng)
    _ecf_grid(np.ascontiguousarray(pool.samples, dtype=float), h, re, im)
    worst = 0.0
    for t in t_grid:
        lhs = _interp(np.array([t]), h, re, im)[0]
        rhs = np.mean(_interp(t * v**m1, h, re, im) * _interp(t * xi * (1.0 - v) ** m1, h, re, im))
        worst = max(worst, abs(lhs - rhs))
    return float(worst)
