"""Percolated random recursive tree carrying the memory of a walk.

Vertex ``k`` attaches to ``parent[k]``, uniform on ``{1..k-1}``; its edge
carries the echo factor ``xi_k`` and survives percolation iff
``eps_k = 1``. Weights follow ``w(1) = 1`` and
``w(k) = (1 - eps_k) + eps_k xi_k w(parent[k])``. The draws live at the
same tape addresses as in :mod:`echoed_walks.walk`.

Arrays are indexed by ``vertex - 1``; vertex labels stored in ``parent``
and ``component_of`` are 1-based, and the root's parent is 0.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numba as nb
import numpy as np
from scipy import special

from .errors import OutOfMomentDomain
from .laws import WalkParams, draw_law
from .rng import SLOT_EPS, SLOT_U, SLOT_XI, RandomTape, uniform1, uniform_index
from .walk import Trajectory, _fill_spins, compensated_cumsum


@dataclass(frozen=True)
class MemoryTree:
    parent: np.ndarray  # int64, 1-based labels, parent[0] = 0
    edge_weight: np.ndarray  # xi_k; nan for the root
    retained: np.ndarray  # bool, False for the root
    weight: np.ndarray  # w(k)
    log_weight: np.ndarray  # log w(k), -inf where w(k) = 0

    @property
    def n(self) -> int:
        return len(self.parent)


@dataclass(frozen=True)
class SubtreeWeights:
    roots: np.ndarray  # 1-based labels r with r = 1 or eps_r = 0
    component_of: np.ndarray  # 1-based root label per vertex
    total: np.ndarray  # ||T_r(n)|| indexed by r - 1; 0 for non-roots
    size: np.ndarray  # vertex count per component, indexed like total

    def weight(self, r: int) -> float:
        return float(self.total[r - 1])


@nb.njit(cache=True)
def _grow_kernel(p, echo, k0, k1, s0, s1, parent, edge, kept, w, logw):
    parent[0] = 0
    edge[0] = np.nan
    kept[0] = False
    w[0] = 1.0
    logw[0] = 0.0
    for k in range(1, parent.shape[0]):
        j = uniform_index(k0, k1, s0, s1, k, SLOT_U, k)
        parent[k] = j + 1
        xi = draw_law(echo, k0, k1, s0, s1, k, SLOT_XI)
        edge[k] = xi
        e = p >= 1.0 or uniform1(k0, k1, s0, s1, k, SLOT_EPS) < p
        kept[k] = e
        if e:
            w[k] = xi * w[j]
            logw[k] = (math.log(xi) + logw[j]) if xi > 0.0 else -np.inf
        else:
            w[k] = 1.0
            logw[k] = 0.0


def grow(params: WalkParams, n: int, tape: RandomTape) -> MemoryTree:
    """Grow the percolated, weighted tree on ``n`` vertices."""
    if n < 1:
        raise ValueError("n must be >= 1")
    parent = np.empty(n, dtype=np.int64)
    edge = np.empty(n)
    kept = np.empty(n, dtype=np.bool_)
    w = np.empty(n)
    logw = np.empty(n)
    _grow_kernel(float(params.p), params.echo.encode(), *tape.words(), parent, edge, kept, w, logw)
    return MemoryTree(parent, edge, kept, w, logw)


@nb.njit(cache=True)
def _components(parent, kept, w, comp, total, size):
    for k in range(parent.shape[0]):
        if k == 0 or not kept[k]:
            comp[k] = k + 1
        else:
            comp[k] = comp[parent[k] - 1]
        total[comp[k] - 1] += w[k]
        size[comp[k] - 1] += 1


def subtree_weights(tree: MemoryTree) -> SubtreeWeights:
    """Percolation components with their total vertex weights."""
    n = tree.n
    comp = np.empty(n, dtype=np.int64)
    total = np.zeros(n)
    size = np.zeros(n, dtype=np.int64)
    _components(tree.parent, tree.retained, tree.weight, comp, total, size)
    roots = np.flatnonzero(~tree.retained) + 1
    return SubtreeWeights(roots, comp, total, size)


def component_weights_at(tree: MemoryTree, m: int) -> SubtreeWeights:
    """Components of the subtree on vertices ``1..m``."""
    sub = MemoryTree(
        tree.parent[:m], tree.edge_weight[:m], tree.retained[:m], tree.weight[:m], tree.log_weight[:m]
    )
    return subtree_weights(sub)


def spins_for(params: WalkParams, n: int, tape: RandomTape) -> np.ndarray:
    """The fresh spins ``X_1..X_n`` at the addresses the walk uses."""
    out = np.empty(n)
    _fill_spins(params.spin.encode(), *tape.words(), out)
    return out


def reconstruct_walk(tree: MemoryTree, spins) -> Trajectory:
    """Positions ``S~_m = sum_r X_r ||T_r(m)||`` for all ``m <= n``.

    The increment of vertex ``k`` is ``w(k) X_{root(k)}``, so one forward
    pass over vertices yields every prefix at once.
    """
    spins = np.asarray(spins, dtype=float)
    if len(spins) < tree.n:
        raise ValueError("need one spin per vertex")
    comp = subtree_weights(tree).component_of
    inc = tree.weight * spins[comp - 1]
    pos = np.empty(tree.n)
    compensated_cumsum(inc, pos)
    return Trajectory(inc, pos)


def subtree_size(tree: MemoryTree, v: int) -> int:
    """Number of descendants of ``v`` (inclusive) in the unpercolated tree."""
    inside = np.zeros(tree.n, dtype=np.bool_)
    inside[v - 1] = True
    for k in range(v, tree.n):
        inside[k] = inside[tree.parent[k] - 1]
    return int(inside.sum())


def expected_subtree_moment(params: WalkParams, alpha: float, r: int, n: int) -> float:
    """``E sum_{i in T_r(n)} w(i)**alpha``.

    Equals ``(1 - p 1{r>1}) (r-1)!/(n-1)! Gamma(n + p m_alpha)/Gamma(r + p m_alpha)``.
    """
    if not 1 <= r <= n:
        raise ValueError("needs 1 <= r <= n")
    ma = params.echo.moment(alpha)
    if not math.isfinite(ma):
        raise OutOfMomentDomain(f"m_{alpha} is infinite")
    pm = params.p * ma
    lead = 1.0 - params.p if r > 1 else 1.0
    return lead * math.exp(
        special.gammaln(r) - special.gammaln(n) + special.gammaln(n + pm) - special.gammaln(r + pm)
    )


def to_csv(tree: MemoryTree, path) -> None:
    comp = subtree_weights(tree).component_of
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["vertex", "parent", "edge_weight", "retained", "vertex_weight", "component_root"])
        for k in range(tree.n):
            wr.writerow(
                [
                    k + 1,
                    int(tree.parent[k]),
                    "" if k == 0 else f"{tree.edge_weight[k]:.17g}",
                    int(tree.retained[k]),
                    f"{tree.weight[k]:.17g}",
                    int(comp[k]),
                ]
            )


def pointwise_gap(a: Trajectory, b: Trajectory) -> float:
    """Largest ``|a_m - b_m|`` relative to ``sum_{i<=m} |increment_i|``."""
    scale = np.maximum(np.cumsum(np.abs(a.increments)), np.abs(a.positions))
    scale = np.where(scale > 0, scale, 1.0)
    return float(np.max(np.abs(a.positions - b.positions) / scale))
