"""Memory tree: structure, pointwise identity with the walk, subtree laws."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from echoed_walks import tree, walk
from echoed_walks.laws import Bernoulli, Constant, Exponential, LogNormal, Normal, Rademacher, Uniform, WalkParams
from echoed_walks.rng import RandomTape

ECHOES = [Constant(2.0), Bernoulli(0.5), Exponential(1.0), LogNormal(0.0, 0.5), Uniform(0.0, 3.0)]
SPINS = [Constant(1.0), Normal(0.0, 1.0), Rademacher(), Exponential(2.0)]


def test_structure(tape):
    tr = tree.grow(WalkParams(0.6, Exponential(1.0)), 2000, tape)
    k = np.arange(2, 2001)
    assert tr.parent[0] == 0
    assert np.all((tr.parent[1:] >= 1) & (tr.parent[1:] < k))
    assert not tr.retained[0]
    lost = ~tr.retained[1:]
    assert np.all(tr.weight[1:][lost] == 1.0)
    kept = np.flatnonzero(tr.retained)
    assert np.allclose(tr.weight[kept], tr.edge_weight[kept] * tr.weight[tr.parent[kept] - 1])


def test_parents_uniform(tape):
    # parent of vertex 11 is uniform on 1..10
    parents = np.array([tree.grow(WalkParams(0.5, Constant(1.0)), 11, tape.stream(i)).parent[10]
                        for i in range(5000)])
    counts = np.bincount(parents, minlength=11)[1:]
    assert stats.chisquare(counts).pvalue > 1e-4


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 1.0), st.sampled_from(ECHOES), st.sampled_from(SPINS), st.integers(0, 2**63),
       st.integers(1, 600))
def test_pointwise_identity_property(p, echo, spin, seed, n):
    params = WalkParams(p, echo, spin)
    tp = RandomTape(seed)
    w = walk.simulate(params, n, tp)
    rec = tree.reconstruct_walk(tree.grow(params, n, tp), tree.spins_for(params, n, tp))
    assert tree.pointwise_gap(w, rec) <= 1e-12


def test_components_partition(tape):
    tr = tree.grow(WalkParams(0.7, Exponential(1.0)), 3000, tape)
    sw = tree.subtree_weights(tr)
    assert sw.size[sw.roots - 1].sum() == 3000
    assert sw.total.sum() == pytest.approx(tr.weight.sum())
    # every vertex's component root is an ancestor reached through retained edges
    for v in range(2, 3001, 97):
        u = v
        while tr.retained[u - 1]:
            u = tr.parent[u - 1]
        assert sw.component_of[v - 1] == u


def test_component_weights_at_prefix(tape):
    params = WalkParams(0.7, Exponential(1.0))
    big = tree.grow(params, 800, tape)
    small = tree.grow(params, 300, tape)
    a = tree.component_weights_at(big, 300)
    b = tree.subtree_weights(small)
    assert np.allclose(a.total, b.total)


def test_subtree_size(tape):
    tr = tree.grow(WalkParams(0.5, Constant(1.0)), 500, tape)
    assert tree.subtree_size(tr, 1) == 500
    sizes = [tree.subtree_size(tr, v) for v in range(2, 500)]
    assert all(1 <= s <= 500 for s in sizes)


@pytest.mark.parametrize("r", [1, 2, 8])
@pytest.mark.parametrize("alpha", [1.0, 2.0])
def test_expected_subtree_moment(r, alpha):
    # bounded echo keeps the alpha = 2 sums light-tailed enough for a 4 s.e. test
    params = WalkParams(0.8, Uniform(0.0, 2.0))
    n, N = 64, 6000
    vals = np.empty(N)
    base = RandomTape(99).derive(f"sub/{r}/{alpha}")
    for i in range(N):
        tr = tree.grow(params, n, base.stream(i))
        sw = tree.subtree_weights(tr)
        vals[i] = tr.weight[sw.component_of == r].__pow__(alpha).sum() if (r == 1 or not tr.retained[r - 1]) else 0.0
    target = tree.expected_subtree_moment(params, alpha, r, n)
    se = vals.std(ddof=1) / math.sqrt(N)
    assert abs(vals.mean() - target) <= 4 * se


def test_expected_subtree_moment_identity_echo():
    # xi = 1, p = 1: the whole tree is one component of size n
    assert tree.expected_subtree_moment(WalkParams(1.0, Constant(1.0)), 1.0, 1, 37) == pytest.approx(37.0)


def test_csv(tmp_path, tape):
    tr = tree.grow(WalkParams(0.5, Constant(2.0)), 5, tape)
    path = tmp_path / "t.csv"
    tree.to_csv(tr, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "vertex,parent,edge_weight,retained,vertex_weight,component_root"
    assert lines[1].startswith("1,0,,0,1,1")
    assert len(lines) == 6
