"""Walk simulator: exact small cases, law of S_n against enumeration, reproducibility."""

import math
from collections import defaultdict
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from echoed_walks import analytic
from echoed_walks.laws import Bernoulli, Constant, Discrete, Exponential, Normal, WalkParams
from echoed_walks.rng import RandomTape
from echoed_walks.walk import Trajectory, compensated_cumsum, positions_at, simulate, simulate_orw
from oracles import enumerate_walk


def test_identity_echo_is_counting(tape):
    traj = simulate(WalkParams(1.0, Constant(1.0)), 50, tape)
    assert np.array_equal(traj.positions, np.arange(1, 51))


def test_pure_echo_constant_gives_powers(tape):
    traj = simulate(WalkParams(1.0, Constant(2.0)), 300, tape)
    logs = np.log2(traj.increments)
    assert np.allclose(logs, np.round(logs))
    assert traj.increments[0] == 1.0


def test_positions_are_prefix_sums(tape):
    traj = simulate(WalkParams(0.6, Exponential(1.0), Normal(0.0, 1.0)), 1000, tape)
    assert np.allclose(traj.positions, np.cumsum(traj.increments), rtol=1e-12, atol=1e-9)


def test_compensated_cumsum_recovers_cancellation():
    x = np.array([1e16, 1.0, -1e16, 1.0])
    out = np.empty(4)
    compensated_cumsum(x, out)
    assert out[2] == 1.0 and out[3] == 2.0


def test_same_tape_same_path(tape):
    params = WalkParams(0.7, Bernoulli(0.5), Normal(0.0, 1.0))
    a = simulate(params, 500, tape)
    b = simulate(params, 500, RandomTape(tape.master_seed, tape.stream_index))
    assert np.array_equal(a.increments, b.increments)
    c = simulate(params, 500, tape.stream(1))
    assert not np.array_equal(a.increments, c.increments)


def test_prefix_consistency(tape):
    # the first m steps of a longer run are the m-step run
    params = WalkParams(0.7, Exponential(2.0), Normal(0.0, 1.0))
    long = simulate(params, 400, tape)
    short = simulate(params, 100, tape)
    assert np.array_equal(long.increments[:100], short.increments)


def test_ensemble_rows_equal_single_runs(tape):
    params = WalkParams(0.8, Exponential(1.0), Normal(0.5, 1.0))
    cps = [3, 17, 64]
    out = positions_at(params, cps, 20, tape.stream(5))
    for r in range(20):
        traj = simulate(params, 64, tape.stream(5 + r))
        assert np.array_equal(out[r], traj.positions[np.array(cps) - 1])


def test_orw_shares_spin_addresses(tape):
    spin = Normal(0.0, 1.0)
    orw = simulate_orw(spin, 200, tape)
    walk = simulate(WalkParams(1e-12, Constant(1.0), spin), 200, tape)
    assert np.array_equal(orw.increments, walk.increments)


def test_bad_arguments(tape):
    params = WalkParams(0.5, Constant(1.0))
    with pytest.raises(ValueError):
        simulate(params, 0, tape)
    with pytest.raises(ValueError):
        positions_at(params, [5, 3], 10, tape)


def test_csv_layout(tmp_path, tape):
    path = tmp_path / "w.csv"
    simulate(WalkParams(1.0, Constant(1.0)), 3, tape).to_csv(path)
    assert path.read_text().splitlines() == ["step,increment,position", "1,1,1", "2,1,2", "3,1,3"]


@pytest.mark.parametrize(
    "p,echo,spin",
    [
        (0.5, [(2, 1)], [(1, 1)]),
        (0.8, [(0, Fraction(1, 2)), (1, Fraction(1, 2))], [(-1, Fraction(1, 2)), (1, Fraction(1, 2))]),
        (1.0, [(1, Fraction(1, 2)), (3, Fraction(1, 2))], [(1, 1)]),
    ],
)
def test_law_of_s4_matches_enumeration(p, echo, spin, tape):
    n, N = 4, 200_000
    pmf = defaultdict(Fraction)
    for inc, w in enumerate_walk(p, [(Fraction(v), Fraction(q)) for v, q in echo],
                                 [(Fraction(v), Fraction(q)) for v, q in spin], n):
        pmf[sum(inc)] += w
    params = WalkParams(p, Discrete(tuple(float(v) for v, _ in echo), tuple(float(q) for _, q in echo)),
                        Discrete(tuple(float(v) for v, _ in spin), tuple(float(q) for _, q in spin)))
    s = positions_at(params, [n], N, tape)[:, 0]
    support = sorted(pmf)
    observed = np.array([np.sum(np.isclose(s, float(v))) for v in support])
    assert observed.sum() == N
    expected = np.array([float(pmf[v]) * N for v in support])
    keep = expected > 5
    chi2 = ((observed[keep] - expected[keep]) ** 2 / expected[keep]).sum()
    assert stats.chi2.sf(chi2, max(keep.sum() - 1, 1)) > 1e-4


@settings(max_examples=8, deadline=None)
@given(st.floats(0.1, 1.0), st.sampled_from([Constant(1.5), Bernoulli(0.6), Exponential(1.0)]),
       st.integers(0, 2**40))
def test_ensemble_mean_matches_closed_form_property(p, echo, seed):
    params = WalkParams(p, echo, Normal(1.0, 1.0))
    n = 64
    s = positions_at(params, [n], 4000, RandomTape(seed))[:, 0]
    se = s.std(ddof=1) / math.sqrt(len(s))
    assert abs(s.mean() - analytic.expected_position(params, n)) <= 5 * se
