"""Acceptance suite: eleven end-to-end checks of simulators against closed forms.

Each criterion returns a :class:`CriterionResult` whose ``checks`` record
every sub-test's measurement next to its target and tolerance. Reports
hold no timings, so equal seeds give byte-identical JSON.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import analytic, branching, ensemble, limits, tree, urn, walk
from .laws import (
    Bernoulli,
    Constant,
    Discrete,
    Exponential,
    Normal,
    WalkParams,
    classify,
    parse_law,
    phi_minimizer,
)
from .rng import RandomTape

SE_K = ensemble.SE_MULTIPLIER


@dataclass
class CriterionResult:
    key: str
    title: str
    checks: list = field(default_factory=list)
    notes: str = ""

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(c["passed"] for c in self.checks)

    def add(self, name: str, passed: bool, **values) -> bool:
        clean = {k: _clean(v) for k, v in values.items()}
        self.checks.append({"name": name, "passed": bool(passed), **clean})
        return bool(passed)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.key}: {self.title}"


def _clean(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_clean(x) for x in v]
    return v


def _tape(seed: int, label: str) -> RandomTape:
    return RandomTape(seed).derive(label)


def _mean_check(res, name, values, target, k=SE_K, **extra):
    values = np.asarray(values, dtype=float)
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(len(values)))
    if se == 0.0:
        ok = abs(mean - target) <= 1e-9 * max(1.0, abs(target))
    else:
        ok = abs(mean - target) <= k * se
    return res.add(name, ok, mean=mean, target=target, se=se,
                   z=(abs(mean - target) / se if se > 0 else 0.0), k=k, **extra)


# ---------------------------------------------------------------------------


def c1_mean_formula(seed: int) -> CriterionResult:
    res = CriterionResult("C1", "ensemble means of S_n match the closed-form sum of expected increments")
    cps = [64, 512, 4096]
    N = 20_000
    for p in (0.5, 0.8, 1.0):
        for text in ("const:1", "const:2", "bernoulli:0.5"):
            params = WalkParams(p, parse_law(text), Constant(1.0))
            s = walk.positions_at(params, cps, N, _tape(seed, f"c1/{p}/{text}"))
            for j, n in enumerate(cps):
                _mean_check(res, f"p={p} echo={text} n={n}", s[:, j], analytic.expected_position(params, n))
    return res


def c2_exponents(seed: int) -> CriterionResult:
    res = CriterionResult("C2", "growth exponents across the phase transition")
    cps = [16, 64, 256, 1024, 4096]
    for label, params, target in (
        ("supercritical p=0.8 echo=const:2", WalkParams(0.8, Constant(2.0)), 1.6),
        ("subcritical p=0.5 echo=const:1", WalkParams(0.5, Constant(1.0)), 1.0),
    ):
        summ = ensemble.run(params, "abs", cps, 20_000, _tape(seed, f"c2/{label}"))
        slope, err = ensemble.rate_estimate(summ)
        res.add(f"slope {label}", abs(slope - target) <= 0.05, slope=slope, stderr=err, target=target, tol=0.05)
    crit = WalkParams(0.5, Discrete((1.0, 3.0), (0.5, 0.5)))
    n = 2**16
    summ = ensemble.run(crit, "per_nlogn", [n], 20_000, _tape(seed, "c2/critical"))
    mean = float(summ.mean[0])
    exact = analytic.expected_position(crit, n) / (n * math.log(n))
    res.add(
        "critical p=0.5 echo={1,3}: mean S_n/(n ln n) at n=2^16 within 10% of 0.5",
        abs(mean - 0.5) <= 0.05,
        mean=mean, se=float(summ.se[0]), target=0.5, rel_tol=0.10,
        exact_finite_n_mean=exact, exact_relative_gap=(exact - 0.5) / 0.5,
    )
    res.notes = (
        "At pm1 = 1 the exact mean is n (p + (1-p) H_n), so E S_n/(n ln n) = 0.5 + (0.5 + 0.5 gamma_E)/ln n "
        "+ O(1/n); at n = 2^16 this is 0.571, 14% above the limit. Within 10% needs ln n > 15.8, "
        "i.e. n above about 7e6."
    )
    return res


def c3_supercritical_mean(seed: int) -> CriterionResult:
    res = CriterionResult("C3", "supercritical limit mean of S_n/n^pm1")
    params = WalkParams(0.8, Constant(2.0))
    n = 4096
    _, const, _ = analytic.asymptotic_mean_constant(params)
    s = walk.positions_at(params, [n], 20_000, _tape(seed, "c3"))[:, 0] / n**params.pm1
    _mean_check(res, "mean S_4096/4096^1.6 vs asymptotic constant", s, const,
                exact_finite_n_mean=analytic.expected_position(params, n) / n**params.pm1)
    return res


def c4_degeneracy(seed: int) -> CriterionResult:
    res = CriterionResult("C4", "degenerate versus non-degenerate pure-echo limits")
    n = 4096
    N = 20_000
    s3 = walk.positions_at(WalkParams(1.0, Constant(3.0)), [n], N, _tape(seed, "c4/3"))[:, 0] / n**3.0
    q95 = float(np.quantile(s3, 0.95))
    res.add("echo=const:3: q95 of S_n/n^3 below 0.05", q95 < 0.05, q95=q95, threshold=0.05,
            median=float(np.median(s3)), mean=float(s3.mean()), exact_mean=analytic.expected_position(
                WalkParams(1.0, Constant(3.0)), n) / n**3.0)
    s2 = walk.positions_at(WalkParams(1.0, Constant(2.0)), [n], N, _tape(seed, "c4/2"))[:, 0] / n**2.0
    med = float(np.median(s2))
    res.add("echo=const:2: median of S_n/n^2 above 0.1", med > 0.1, median=med, threshold=0.1)
    res.notes = (
        "For xi = 3 the limit is zero but the approach is extremely slow: in the branching picture "
        "(t = ln n) the bulk of Sigma_t sits near e^(e ln3 t) against the mean e^(3t), a decay "
        "rate of only 3 - e ln 3 = 0.014 per unit of t, so the upper quantiles stay O(0.1) far "
        "beyond desk-scale n."
    )
    return res


def c5_pointwise(seed: int) -> CriterionResult:
    res = CriterionResult("C5", "walk and tree representations agree path by path")
    n = 512
    for label, params in (
        ("p=0.7 echo=exp:1 spin=normal:0,1", WalkParams(0.7, Exponential(1.0), Normal(0.0, 1.0))),
        ("p=0.8 echo=const:2 spin=const:1", WalkParams(0.8, Constant(2.0), Constant(1.0))),
        ("p=0.5 echo=bernoulli:0.5 spin=rademacher", WalkParams(0.5, Bernoulli(0.5), parse_law("rademacher", "spin"))),
    ):
        base = _tape(seed, f"c5/{label}")
        worst = 0.0
        bad = 0
        for r in range(1000):
            tp = base.stream(r)
            w = walk.simulate(params, n, tp)
            tr = tree.grow(params, n, tp)
            rec = tree.reconstruct_walk(tr, tree.spins_for(params, n, tp))
            gap = tree.pointwise_gap(w, rec)
            worst = max(worst, gap)
            bad += gap > 1e-12
        res.add(f"{label}: 1000 tapes", bad == 0, failures=bad, worst_relative_gap=worst, tol=1e-12)
    return res


def c6_urn(seed: int) -> CriterionResult:
    res = CriterionResult("C6", "Polya-urn decomposition of the pure-echo walk")
    N = 100_000
    for text in ("bernoulli:0.5", "const:2", "exp:1"):
        params = WalkParams(1.0, parse_law(text))
        for n in (8, 64):
            a = urn.composite_sample(params, n, N, _tape(seed, f"c6/urn/{text}/{n}"))
            b = walk.positions_at(params, [n + 1], N, _tape(seed, f"c6/walk/{text}/{n}"))[:, 0]
            d, thr = ensemble.ks_two_sample(a, b, 0.01)
            res.add(f"echo={text} n={n}: KS at 1%", d <= thr, D=d, threshold=thr)
    return res


def c7_brw(seed: int) -> CriterionResult:
    res = CriterionResult("C7", "additive martingale of the branching random walk has mean one")
    times = [2.0, 4.0, 6.0]
    reps = 10_000
    for text in ("const:2", "bernoulli:0.5"):
        law = parse_law(text)
        sig, _ = branching.sigma_ensemble(law, 1.0, times, reps, _tape(seed, f"c7/w/{text}"))
        w = sig * np.exp(-law.moment(1.0) * np.asarray(times))
        for j, t in enumerate(times):
            _mean_check(res, f"echo={text}: mean W_t at t={t:g}", w[:, j], 1.0)
        theta = 0.5
        sig, _ = branching.sigma_ensemble(law, theta, times, reps, _tape(seed, f"c7/s/{text}"))
        for j, t in enumerate(times):
            _mean_check(res, f"echo={text}: mean Sigma_t^(0.5) at t={t:g}", sig[:, j],
                        math.exp(law.moment(theta) * t))
    return res


def c8_many_to_one(seed: int) -> CriterionResult:
    res = CriterionResult("C8", "many-to-one formula: particle sums versus the tilted spine")
    law = Discrete((0.5, 2.0), (0.5, 0.5))
    theta, t, N = 1.0, 3.0, 100_000
    funcs = {
        "f=1": lambda x: np.ones(len(x)),
        "f=exp(theta x)": lambda x: np.exp(theta * x[:, -1]),
        "f=1{x>0}": lambda x: (x[:, -1] > 0).astype(float),
    }
    for name, f in funcs.items():
        r = branching.many_to_one_check(law, theta, t, f, N, _tape(seed, f"c8/{name}"))
        res.add(name, r.z <= 3.0, lhs=r.lhs, rhs=r.rhs, pooled_se=r.pooled_se, z=r.z, k=3.0)
    return res


def c9_fixed_point(seed: int) -> CriterionResult:
    res = CriterionResult("C9", "population dynamics reproduces the pure-echo limit law")
    law = Bernoulli(0.5)
    pool = limits.fixpoint_pool(law, 100_000, 200, _tape(seed, "c9/pool"))
    exact = analytic.l_moments(law, 2)
    for k, target in zip((1, 2), (1.0 / math.gamma(1.5), 2.0 / math.gamma(2.0))):
        m = pool.moment(k)
        res.add(f"pool moment k={k} within 2%", abs(m - target) <= 0.02 * target, value=m, target=target,
                recursion_value=exact[k - 1], rel_tol=0.02)
    raw = limits.fixpoint_pool(law, 100_000, 200, _tape(seed, "c9/pool"), renormalise=False)
    res.notes = (
        "Fixed points of the smoothing transform form a scale family, so the first moment is a "
        "normalisation: the pool is rescaled to it after every generation and the k=1 check only "
        "confirms that step. The second moment and the ECF residual carry the test. Without "
        f"rescaling the finite pool mean drifts; the same run then gives moments "
        f"{raw.moment(1):.4f} and {raw.moment(2):.4f}."
    )
    resid = limits.ecf_residual(pool, law, np.linspace(-5.0, 5.0, 101), _tape(seed, "c9/ecf"))
    res.add("ECF residual on [-5, 5] below 0.02", resid < 0.02, value=resid, threshold=0.02)
    return res


UI_GRID = (
    # law, hand-computed E[xi log xi] < m1
    ("const:1", True),  # 0 < 1
    ("const:2", True),  # 2 ln 2 = 1.386 < 2
    ("const:3", False),  # 3 ln 3 = 3.296 >= 3
    ("bernoulli:0.5", True),  # 0 < 0.5
    ("exp:1", True),  # 1 - gamma_E = 0.423 < 1
    ("exp:0.5", False),  # 2 (1 - gamma_E + ln 2) = 2.231 >= 2
)


def c10_lambda(seed: int) -> CriterionResult:
    res = CriterionResult("C10", "phi minimiser and uniform-integrability classification")
    r = phi_minimizer(Exponential(1.0), 1.0)
    res.add("phi_1 minimiser for exp:1", abs(r - 1.4616) <= 1e-3, value=r, target=1.4616, tol=1e-3)
    for text, ui in UI_GRID:
        rep = classify(WalkParams(1.0, parse_law(text)))
        res.add(f"classify echo={text}", rep.ui_holds == ui and rep.lambda_nonempty == ui,
                ui_holds=rep.ui_holds, lambda_nonempty=rep.lambda_nonempty, expected=ui,
                xi_log_xi=rep.xi_log_xi, lambda_sup=rep.lambda_sup)
    return res


def c11_rates_proxy(seed: int) -> CriterionResult:
    res = CriterionResult("C11", "martingale mean-zero diagnostic and variance stabilisation")
    cps = [16, 64, 256, 1024, 4096]
    N = 20_000
    configs = (
        ("supercritical p=0.8 echo=const:2", WalkParams(0.8, Constant(2.0))),
        ("subcritical p=0.5 echo=const:1", WalkParams(0.5, Constant(1.0))),
        ("critical p=0.5 echo={1,3}", WalkParams(0.5, Discrete((1.0, 3.0), (0.5, 0.5)))),
    )
    for label, params in configs:
        diag = ensemble.martingale_diagnostic(params, cps, N, _tape(seed, f"c11/{label}"))
        res.add(f"{label}: mean M_n = 0 within 4 s.e. at every checkpoint", diag.passes(SE_K),
                z=diag.z, checkpoints=diag.checkpoints)
    params = configs[0][1]
    stab = [41, 410, 4096]
    vals = walk.positions_at(params, stab, N, _tape(seed, "c11/stability"))
    m = ensemble.transform(params, "martingale", np.asarray(stab)[None, :], vals)
    var = m.var(axis=0, ddof=1)
    change = abs(var[2] - var[1]) / var[1]
    change2 = abs(var[2] - var[0]) / var[0]
    g = 1.5
    absg = np.mean(np.abs(m) ** g, axis=0)
    res.add("supercritical p=0.8 echo=const:2: Var M_n changes < 10% over the last decade",
            change < 0.10, variance=var, checkpoints=stab, relative_change=change, two_decade_change=change2, tol=0.10,
            abs_moment_1_5=absg, abs_moment_1_5_change=abs(absg[2] - absg[1]) / absg[1])
    res.notes = (
        "This configuration has p m2 = 3.2 = 2 p m1, the boundary of L2: Lambda is (1, 2), so M_n is "
        "bounded in L^gamma only for gamma < 2 and its variance keeps growing (logarithmically). "
        "The fourth moment is infinite too, so the sample variance itself is dominated by a few "
        "paths. The 1.5-th absolute moment is reported alongside as the in-range analogue; it is "
        "bounded but approaches its limit only like n^-(1.5 pm1 - p m_1.5) = n^-0.137."
    )
    return res


CRITERIA = {
    "C1": c1_mean_formula,
    "C2": c2_exponents,
    "C3": c3_supercritical_mean,
    "C4": c4_degeneracy,
    "C5": c5_pointwise,
    "C6": c6_urn,
    "C7": c7_brw,
    "C8": c8_many_to_one,
    "C9": c9_fixed_point,
    "C10": c10_lambda,
    "C11": c11_rates_proxy,
}


def resolve(suite: str) -> list[str]:
    if suite.lower() == "all":
        return list(CRITERIA)
    keys = [s.strip().upper() for s in suite.split(",") if s.strip()]
    unknown = [k for k in keys if k not in CRITERIA]
    if unknown:
        raise KeyError(f"unknown criteria {unknown}; choose from {list(CRITERIA)} or 'all'")
    return keys


def run(suite: str = "all", seed: int = 7) -> list[CriterionResult]:
    return [CRITERIA[k](seed) for k in resolve(suite)]


def report(results, seed: int) -> str:
    body = {
        "seed": seed,
        "passed": all(r.passed for r in results),
        "criteria": [r.to_dict() for r in results],
    }
    return json.dumps(body, indent=2, sort_keys=True)


def main(argv=None) -> int:
    import argparse

    ap = argparse.ArgumentParser(prog="python -m echoed_walks.acceptance")
    ap.add_argument("suite", nargs="?", default="all")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out")
    args = ap.parse_args(argv)
    results = run(args.suite, args.seed)
    for r in results:
        print(r.line(), flush=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(report(results, args.seed))
    return 0 if all(r.passed for r in results) else 1


if __name__ == "__main__":
    raise SystemExit(main())
