"""Monte Carlo ensembles of rescaled walks and their summaries."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import analytic
from .errors import InsufficientCheckpoints, TooFewSamples
from .laws import WalkParams
from .rng import RandomTape
from .walk import positions_at

QUANTILES = (0.05, 0.25, 0.50, 0.75, 0.95)
SE_MULTIPLIER = 4.0

STATISTICS = (
    "raw",
    "abs",
    "scaled",
    "centered_linear",
    "centered_log",
    "martingale",
    "per_step",
    "per_nlogn",
)


def transform(params: WalkParams, statistic: str, n, s) -> np.ndarray:
    """Map positions ``s`` observed at steps ``n`` to ``statistic``.

    ``scaled``: ``S/n**pm1``; ``centered_linear``: ``(S - c n)/n**pm1`` with
    ``c = (1-p) EX/(1-pm1)``; ``centered_log``: ``(S - (1-p) EX n log n)/n``;
    ``martingale``: ``(n-1)!/Gamma(n+pm1) (S - E S)``.
    """
    n = np.asarray(n, dtype=float)
    s = np.asarray(s, dtype=float)
    p, pm, ex = params.p, params.pm1, params.spin.mean
    if statistic == "raw":
        return s
    if statistic == "abs":
        return np.abs(s)
    if statistic == "scaled":
        return s / n**pm
    if statistic == "centered_linear":
        return (s - (1.0 - p) * ex / (1.0 - pm) * n) / n**pm
    if statistic == "centered_log":
        return (s - (1.0 - p) * ex * n * np.log(n)) / n
    if statistic == "martingale":
        flat = [analytic.expected_position(params, int(k)) for k in n.ravel()]
        mean = np.reshape(flat, n.shape)
        return np.exp(analytic.log_martingale_scale(n, pm)) * (s - mean)
    if statistic == "per_step":
        return s / n
    if statistic == "per_nlogn":
        return s / (n * np.log(n))
    raise ValueError(f"unknown statistic {statistic!r}; choose from {STATISTICS}")


@dataclass(frozen=True)
class EnsembleSummary:
    checkpoints: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    quantiles: np.ndarray  # shape (len(checkpoints), 5)
    N: int
    seed: int
    statistic: str
    config: dict = field(default_factory=dict)
    values: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(self.var / self.N)

    def rows(self):
        for j, n in enumerate(self.checkpoints):
            yield [int(n), self.mean[j], self.var[j], *self.quantiles[j], self.N]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["checkpoint", "mean", "var", "q05", "q25", "q50", "q75", "q95", "N"])
            for row in self.rows():
                w.writerow([row[0], *(f"{x:.17g}" for x in row[1:-1]), row[-1]])
        with open(f"{path}.json", "w") as fh:
            json.dump(self.metadata(), fh, indent=2, sort_keys=True)

    def metadata(self) -> dict:
        cfg = dict(self.config, statistic=self.statistic, N=self.N, seed=self.seed,
                   checkpoints=[int(c) for c in self.checkpoints])
        cfg["config_hash"] = config_hash(cfg)
        return cfg


def config_hash(cfg: dict) -> str:
    blob = json.dumps({k: v for k, v in cfg.items() if k != "config_hash"}, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def summarise(values: np.ndarray, checkpoints, statistic: str, seed: int, config: dict | None = None,
              keep_values: bool = True) -> EnsembleSummary:
    N = values.shape[0]
    mean = values.mean(axis=0)
    var = values.var(axis=0, ddof=1) if N > 1 else np.zeros(values.shape[1])
    qs = np.quantile(values, QUANTILES, axis=0).T
    return EnsembleSummary(
        np.asarray(checkpoints, dtype=np.int64), mean, var, qs, int(N), int(seed), statistic,
        dict(config or {}), values if keep_values else None,
    )


def params_config(params: WalkParams) -> dict:
    def spec(law):
        try:
            return law.spec()
        except Exception:
            return repr(law)

    return {"p": params.p, "echo": spec(params.echo), "spin": spec(params.spin)}


def run(params: WalkParams, statistic: str, checkpoints, N: int, tape: RandomTape) -> EnsembleSummary:
    """``N`` trajectories observed at every checkpoint, summarised per checkpoint.

    Replicate ``r`` runs on stream ``tape.stream_index + r``.
    """
    if statistic not in STATISTICS:
        raise ValueError(f"unknown statistic {statistic!r}; choose from {STATISTICS}")
    cps = np.asarray(checkpoints, dtype=np.int64)
    s = positions_at(params, cps, N, tape)
    vals = transform(params, statistic, cps[None, :], s)
    cfg = params_config(params)
    cfg["stream"] = tape.stream_index
    return summarise(vals, cps, statistic, tape.master_seed, cfg)


def rate_estimate(summary: EnsembleSummary):
    """Least-squares slope of ``log mean|S_n|`` against ``log n``.

    Returns ``(slope, stderr)``.
    """
    cps = np.asarray(summary.checkpoints, dtype=float)
    if len(cps) < 4 or math.log10(cps[-1] / cps[0]) < 2.0:
        raise InsufficientCheckpoints("need at least 4 checkpoints spanning 2 decades")
    if summary.statistic == "abs":
        means = summary.mean
    elif summary.statistic == "raw" and summary.values is not None:
        means = np.abs(summary.values).mean(axis=0)
    else:
        raise ValueError("rate_estimate needs an 'abs' summary, or a 'raw' one with values")
    fit = stats.linregress(np.log(cps), np.log(means))
    return float(fit.slope), float(fit.stderr)


@dataclass(frozen=True)
class MartingaleDiagnostic:
    checkpoints: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    var: np.ndarray

    @property
    def z(self) -> np.ndarray:
        return np.abs(self.mean) / np.where(self.se > 0, self.se, np.inf)

    def passes(self, k: float = SE_MULTIPLIER) -> bool:
        return bool(np.all(np.where(self.se > 0, self.z <= k, np.abs(self.mean) < 1e-9)))


def martingale_diagnostic(params: WalkParams, checkpoints, N: int, tape: RandomTape) -> MartingaleDiagnostic:
    summ = run(params, "martingale", checkpoints, N, tape)
    return MartingaleDiagnostic(summ.checkpoints, summ.mean, summ.se, summ.var)


def ks_critical(alpha: float) -> float:
    """``c(alpha) = sqrt(-log(alpha/2)/2)``."""
    return math.sqrt(-math.log(alpha / 2.0) / 2.0)


def ks_two_sample(a, b, alpha: float = 0.01):
    """Two-sample Kolmogorov-Smirnov distance and its asymptotic threshold.

    Returns ``(D, threshold)``; the null is rejected when ``D > threshold``.
    """
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    na, nb = len(a), len(b)
    if na < 100 or nb < 100:
        raise TooFewSamples("each sample needs at least 100 points")
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / na
    fb = np.searchsorted(b, grid, side="right") / nb
    d = float(np.max(np.abs(fa - fb)))
    return d, ks_critical(alpha) * math.sqrt((na + nb) / (na * nb))
