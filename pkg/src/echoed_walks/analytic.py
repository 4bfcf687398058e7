"""Closed-form moments and constants, evaluated in log space.

Functions that take ``params`` expect a :class:`~echoed_walks.laws.WalkParams`
(only its attributes are used, so this module does not import ``laws``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import (
    DegenerateModel,
    EqualParameters,
    HypothesisViolation,
    MomentConditionError,
    OutOfMomentDomain,
)

CRITICAL_TOL = 1e-12
_HARMONIC_EXACT_MAX = 10_000


def log_ratio(n, a, b):
    """``log Gamma(n+a) - log Gamma(n+b)``."""
    return special.gammaln(np.add(n, a)) - special.gammaln(np.add(n, b))


def ratio(n, a, b):
    """``Gamma(n+a) / Gamma(n+b)``."""
    return np.exp(log_ratio(n, a, b))


def gamma_sum(m: int, n: int, a: float, b: float) -> float:
    """``sum_{i=m}^{n} Gamma(i+a) / Gamma(i+1+b)`` via telescoping."""
    if abs(a - b) < 1e-14:
        raise EqualParameters("gamma_sum needs a != b")
    if not 1 <= m <= n:
        raise ValueError("gamma_sum needs 1 <= m <= n")
    hi = float(log_ratio(m, a, b))
    lo = float(log_ratio(n + 1, a, b))
    # difference of two exponentials, kept sign-safe
    return float(np.exp(hi) * -np.expm1(lo - hi) / (b - a))


def harmonic(n: int) -> float:
    """``H_n = sum_{j=1}^{n} 1/j``."""
    if n < 1:
        return 0.0
    if n <= _HARMONIC_EXACT_MAX:
        return math.fsum(1.0 / j for j in range(1, n + 1))
    return float(special.digamma(n + 1) + np.euler_gamma)


def _moment_sum(p, mq, c, n):
    """``c * sum_{k<=n} a_k`` where ``a_1 = 1``, ``a_{k+1} = 1 - p + p mq s_k / k``."""
    pm = p * mq
    if abs(pm - 1.0) <= CRITICAL_TOL:
        return n * c * (p + (1.0 - p) * harmonic(n))
    gr = float(np.exp(special.gammaln(n + pm) - special.gammaln(n) - special.gammaln(1.0 + pm)))
    return c / (1.0 - pm) * ((1.0 - p) * n + p * (1.0 - mq) * gr)


def expected_moment_sum(params, q: float, n: int) -> float:
    """``sum_{k<=n} E|X~_k|**q``.

    Parameters
    ----------
    params : WalkParams
    q : float
        Positive exponent with ``E xi**q`` and ``E|X|**q`` finite.
    n : int
        Number of steps, ``n >= 1``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    mq = params.echo.moment(q)
    xq = params.spin.abs_moment(q)
    if not (math.isfinite(mq) and math.isfinite(xq)):
        raise OutOfMomentDomain(f"q={q} outside the moment domain")
    return _moment_sum(params.p, mq, xq, n)


def expected_position(params, n: int) -> float:
    """``E S~_n`` (the signed counterpart of ``expected_moment_sum`` at q=1)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return _moment_sum(params.p, params.echo.moment(1.0), params.spin.mean, n)


def mean_asymptotics(p: float, m1: float, ex: float):
    """``(exponent, constant, log_correction)`` with ``E S~_n ~ constant * n**exponent``
    (times ``log n`` when ``log_correction``)."""
    pm = p * m1
    if p == 1.0:
        return m1, ex / math.gamma(1.0 + m1), False
    if abs(pm - 1.0) <= CRITICAL_TOL:
        return 1.0, (1.0 - p) * ex, True
    if pm > 1.0:
        return pm, ex / math.gamma(1.0 + pm) * (1.0 + (1.0 - p) / (pm - 1.0)), False
    return 1.0, (1.0 - p) * ex / (1.0 - pm), False


def asymptotic_mean_constant(params):
    if not 0.0 < params.p <= 1.0:
        raise DegenerateModel("memory parameter must lie in (0, 1]")
    return mean_asymptotics(params.p, params.echo.moment(1.0), params.spin.mean)


def log_martingale_scale(n, pm):
    """``log((n-1)! / Gamma(n + pm))``; the normalisation of the centred walk."""
    return special.gammaln(n) - special.gammaln(np.add(n, pm))


@dataclass(frozen=True)
class LimitMean:
    value: float
    degenerate: bool


def _ui(echo) -> bool:
    return echo.moment_log(1.0) < echo.moment(1.0)


def limit_mean(params, form: str = "M", r: int = 1) -> LimitMean:
    """Mean of a limit variable.

    ``form="M"``: the supercritical limit of ``S~_n / n**pm1``.
    ``form="L"``: the pure-echo limit, mean ``1/Gamma(1+m1)``.
    ``form="component"``: the component limit at vertex ``r``.
    A failing uniform-integrability condition gives value 0 with the
    ``degenerate`` flag.
    """
    echo, p = params.echo, params.p
    m1 = echo.moment(1.0)
    degenerate = not _ui(echo)
    if form == "L":
        val = 1.0 / math.gamma(1.0 + m1)
    elif form == "M":
        pm = p * m1
        if pm <= 1.0 + CRITICAL_TOL:
            raise HypothesisViolation("the n**pm1 limit needs pm1 > 1")
        _, val, _ = mean_asymptotics(p, m1, params.spin.mean)
    elif form == "component":
        if r < 1:
            raise ValueError("r must be >= 1")
        lead = 1.0 - p if r > 1 else 1.0
        val = lead * math.exp(special.gammaln(r) - special.gammaln(r + p * m1))
    else:
        raise ValueError(f"unknown form {form!r}")
    return LimitMean(0.0 if degenerate else val, degenerate)


def l_moments(law, k: int) -> list[float]:
    """``E L**j`` for ``j = 1..k`` of the pure-echo limit ``L``.

    Raises
    ------
    MomentConditionError
        When ``m_j >= j m1`` for some ``2 <= j <= k``; carries the largest
        order for which all moments are finite.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    m = [law.moment(float(j)) for j in range(k + 1)]
    m1 = m[1]
    if not _ui(law):
        if k == 1:
            return [0.0]
        raise MomentConditionError("limit is degenerate (E xi log xi >= m1)", 1)
    for j in range(2, k + 1):
        if not m[j] < j * m1:
            raise MomentConditionError(f"m_{j} >= {j} m1", j - 1)
    lg = [special.gammaln(1.0 + j * m1) for j in range(k + 1)]
    out = [0.0, 1.0 / math.gamma(1.0 + m1)]
    for j in range(2, k + 1):
        acc = math.fsum(
            math.comb(j, i) * m[i] * math.exp(lg[i] + lg[j - i] - lg[j]) * out[i] * out[j - i]
            for i in range(1, j)
        )
        out.append(acc / (j * m1 - m[j]))
    return out[1:]


def ml_moment(q: float, a: float) -> float:
    """``Gamma(1+a) / Gamma(1+q a)``, the Mellin transform of a Mittag-Leffler law."""
    if not 0.0 < q <= 1.0 or not a > -1.0:
        raise OutOfMomentDomain("needs q in (0, 1] and a > -1")
    return float(np.exp(special.gammaln(1.0 + a) - special.gammaln(1.0 + q * a)))


def atom_factorization_check(law, k: int):
    """Both sides of the atom factorisation at moment order ``k``.

    ``lhs = E L(xi)**k``, ``rhs = E L(xi+)**k * E M**(k m1/(1-p0))`` with
    ``xi+`` the law of ``xi`` given ``xi > 0`` and ``M`` Mittag-Leffler with
    index ``1 - p0``.
    """
    p0 = law.atom_at_zero
    lhs = l_moments(law, k)[k - 1]
    if p0 == 0.0:
        return lhs, lhs
    plus = law.positive_part()
    m1 = law.moment(1.0)
    rhs = l_moments(plus, k)[k - 1] * ml_moment(1.0 - p0, k * m1 / (1.0 - p0))
    return lhs, rhs
