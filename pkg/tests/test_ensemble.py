"""Ensemble summaries and rate estimates, plus the martingale diagnostic and KS test."""

import json
import math

import numba
import numpy as np
import pytest
from scipy import stats

from echoed_walks import analytic, ensemble
from echoed_walks.errors import InsufficientCheckpoints, TooFewSamples
from echoed_walks.laws import Bernoulli, Constant, Exponential, Normal, WalkParams
from echoed_walks.rng import RandomTape


def test_identity_walk_raw_is_exact(tape):
    summ = ensemble.run(WalkParams(1.0, Constant(1.0)), "raw", [10, 100], 50, tape)
    assert np.array_equal(summ.mean, [10.0, 100.0])
    assert np.array_equal(summ.var, [0.0, 0.0])


def test_subcritical_per_step_tends_to_one(tape):
    summ = ensemble.run(WalkParams(0.5, Constant(1.0)), "per_step", [1000], 100, tape)
    assert summ.mean[0] == pytest.approx(1.0)


def test_scaled_mean_matches_exact(tape):
    params = WalkParams(0.8, Constant(2.0))
    summ = ensemble.run(params, "scaled", [256], 5000, tape)
    exact = analytic.expected_position(params, 256) / 256**1.6
    assert abs(summ.mean[0] - exact) <= 4 * summ.se[0]


def test_transforms_agree_with_definitions():
    params = WalkParams(0.5, Constant(3.0), Normal(1.0, 1.0))  # pm1 = 1.5
    n = np.array([[10, 100]])
    s = np.array([[5.0, 70.0]])
    assert np.allclose(ensemble.transform(params, "scaled", n, s), s / n**1.5)
    m = ensemble.transform(params, "martingale", n, s)
    ref = [math.exp(math.lgamma(k) - math.lgamma(k + 1.5)) * (v - analytic.expected_position(params, k))
           for k, v in zip(n[0], s[0])]
    assert np.allclose(m[0], ref)
    crit = WalkParams(0.5, Constant(2.0))
    assert np.allclose(ensemble.transform(crit, "centered_log", n, s), (s - 0.5 * n * np.log(n)) / n)
    with pytest.raises(ValueError):
        ensemble.transform(params, "nope", n, s)


def test_reproducible_csv_bytes(tmp_path, tape):
    params = WalkParams(0.7, Exponential(1.0), Normal(0.0, 1.0))
    paths = []
    for i, threads in enumerate((1, numba.config.NUMBA_NUM_THREADS)):
        numba.set_num_threads(threads)
        p = tmp_path / f"s{i}.csv"
        ensemble.run(params, "raw", [8, 64, 512], 3000, tape).to_csv(p)
        paths.append(p)
    assert paths[0].read_bytes() == paths[1].read_bytes()
    meta = json.loads((tmp_path / "s0.csv.json").read_text())
    assert meta["config_hash"] == ensemble.config_hash(meta)
    assert meta["seed"] == tape.master_seed
    header = paths[0].read_text().splitlines()[0]
    assert header == "checkpoint,mean,var,q05,q25,q50,q75,q95,N"


def test_rate_estimate(tape):
    summ = ensemble.run(WalkParams(0.8, Constant(2.0)), "abs", [16, 64, 256, 2048], 3000, tape)
    slope, err = ensemble.rate_estimate(summ)
    assert abs(slope - 1.6) < 0.08 and err >= 0
    ident = ensemble.run(WalkParams(1.0, Constant(1.0)), "abs", [10, 100, 1000, 5000], 10, tape)
    assert ensemble.rate_estimate(ident)[0] == pytest.approx(1.0, abs=1e-12)


def test_rate_estimate_needs_span(tape):
    summ = ensemble.run(WalkParams(1.0, Constant(1.0)), "abs", [10, 20, 40, 80], 10, tape)
    with pytest.raises(InsufficientCheckpoints):
        ensemble.rate_estimate(summ)
    summ = ensemble.run(WalkParams(1.0, Constant(1.0)), "abs", [10, 1000, 10000], 10, tape)
    with pytest.raises(InsufficientCheckpoints):
        ensemble.rate_estimate(summ)


@pytest.mark.parametrize(
    "params",
    [WalkParams(0.8, Constant(2.0)), WalkParams(0.5, Bernoulli(0.5), Normal(1.0, 1.0)),
     WalkParams(0.5, Constant(2.0))],
    ids=["super", "sub", "critical"],
)
def test_martingale_mean_zero(params, tape):
    diag = ensemble.martingale_diagnostic(params, [8, 64, 512], 4000, tape)
    assert diag.passes(4.0)


def test_ks_basics():
    a = np.random.default_rng(0).normal(size=500)
    assert ensemble.ks_two_sample(a, a)[0] == 0.0
    assert ensemble.ks_critical(0.01) == pytest.approx(1.628, abs=1e-3)
    with pytest.raises(TooFewSamples):
        ensemble.ks_two_sample(a[:50], a)


def test_ks_matches_scipy():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=3000), rng.normal(0.1, 1.0, size=2000)
    d, _ = ensemble.ks_two_sample(a, b)
    assert d == pytest.approx(stats.ks_2samp(a, b).statistic, abs=1e-12)


def test_ks_calibration(tape):
    # same law on both sides: rejections at 1% stay near 1%
    rng = np.random.default_rng(2)
    trials = 400
    rej = sum(
        d > thr
        for d, thr in (ensemble.ks_two_sample(rng.exponential(size=2000), rng.exponential(size=2000))
                       for _ in range(trials))
    )
    assert rej / trials <= 0.03
