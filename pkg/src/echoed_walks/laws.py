"""Echo and spin laws: samplers with moments, plus regime classification.

Laws are small frozen dataclasses. The same classes serve as echo laws
(which must be non-negative and not identically zero) and as spin laws
(which must not be identically zero); :func:`check_echo` and
:func:`check_spin` enforce the role-specific constraints.

Inside compiled kernels a law is a flat float array produced by
:meth:`Law.encode`: ``[code, scale, keep, n, params...]``. ``scale`` and
``keep`` carry the folded :class:`Scaled` factors and :class:`Thinned`
retention probabilities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numba as nb
import numpy as np
from scipy import optimize, special

from . import analytic
from .errors import (
    DegenerateModel,
    DivergentIntegral,
    InvalidLaw,
    NegativeMomentOfAtomAtZero,
    OutOfMomentDomain,
)
from .rng import SLOT_XI, SUB, RandomTape, uniform1, uniform2

CRITICAL_TOL = 1e-12

_CONST, _BERN, _DISC, _EXP, _LOGN, _UNIF, _RADEM, _NORMAL = range(8)


class Law:
    """Common interface of all law families."""

    def moment(self, gamma: float) -> float:
        """``E xi**gamma`` with ``0**0 = 1``; ``inf`` when divergent."""
        gamma = float(gamma)
        if gamma == 0.0:
            return 1.0
        if gamma < 0.0 and self.atom_at_zero > 0.0:
            raise NegativeMomentOfAtomAtZero(
                f"E xi^{gamma} is infinite: P(xi=0) = {self.atom_at_zero}"
            )
        lm = self.log_moment(gamma)
        return math.exp(lm) if lm < 709.0 else math.inf

    # subclasses override ------------------------------------------------
    def log_moment(self, gamma: float) -> float:
        raise NotImplementedError

    def moment_log(self, gamma: float) -> float:
        """``E[xi**gamma * log xi]`` with ``0 * log 0 = 0``."""
        raise NotImplementedError

    def abs_moment(self, q: float) -> float:
        """``E|X|**q`` for ``q > 0``."""
        raise NotImplementedError

    @property
    def atom_at_zero(self) -> float:
        return 0.0

    @property
    def nonnegative(self) -> bool:
        return True

    @property
    def mean(self) -> float:
        return self.moment(1.0)

    @property
    def is_constant(self) -> bool:
        return False

    def positive_part(self) -> "Law":
        """Law of ``xi`` conditioned on ``xi > 0``."""
        return self

    def spec(self) -> str:
        raise InvalidLaw(f"{type(self).__name__} has no mini-grammar form")

    def _encode(self):
        raise NotImplementedError

    def encode(self) -> np.ndarray:
        code, scale, keep, params = self._encode()
        params = np.asarray(params, dtype=float)
        n = len(params) // 2 if code == _DISC else len(params)
        return np.concatenate([[code, scale, keep, n], params])

    def atom_at(self, value: float) -> float:
        return 0.0


@dataclass(frozen=True)
class Constant(Law):
    c: float

    def log_moment(self, gamma):
        if self.c < 0:
            raise OutOfMomentDomain("moments of a negative constant")
        if self.c == 0:
            return -math.inf if gamma > 0 else 0.0
        return gamma * math.log(self.c)

    def moment_log(self, gamma):
        if self.c <= 0:
            return 0.0
        return self.c**gamma * math.log(self.c)

    def abs_moment(self, q):
        return abs(self.c) ** q

    @property
    def atom_at_zero(self):
        return 1.0 if self.c == 0 else 0.0

    @property
    def nonnegative(self):
        return self.c >= 0

    @property
    def mean(self):
        return float(self.c)

    @property
    def is_constant(self):
        return True

    def atom_at(self, value):
        return 1.0 if self.c == value else 0.0

    def spec(self):
        return f"const:{self.c!r}"

    def _encode(self):
        return _CONST, 1.0, 1.0, [self.c]


@dataclass(frozen=True)
class Bernoulli(Law):
    q: float

    def __post_init__(self):
        if not 0.0 <= self.q <= 1.0:
            raise InvalidLaw("Bernoulli parameter must lie in [0, 1]")

    def log_moment(self, gamma):
        return math.log(self.q) if self.q > 0 else -math.inf

    def moment_log(self, gamma):
        return 0.0

    def abs_moment(self, q):
        return self.q

    @property
    def atom_at_zero(self):
        return 1.0 - self.q

    @property
    def mean(self):
        return self.q

    def atom_at(self, value):
        return {0.0: 1.0 - self.q, 1.0: self.q}.get(value, 0.0)

    def positive_part(self):
        return Constant(1.0)

    def spec(self):
        return f"bernoulli:{self.q!r}"

    def _encode(self):
        return _BERN, 1.0, 1.0, [self.q]


@dataclass(frozen=True)
class Discrete(Law):
    values: tuple
    probs: tuple

    def __post_init__(self):
        v = tuple(float(x) for x in self.values)
        p = tuple(float(x) for x in self.probs)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "probs", p)
        if len(v) == 0 or len(v) != len(p):
            raise InvalidLaw("values and probabilities must have equal, non-zero length")
        if min(p) < 0 or abs(math.fsum(p) - 1.0) > 1e-12:
            raise InvalidLaw("probabilities must be non-negative and sum to 1")

    def _terms(self, gamma):
        return [(pi, vi) for vi, pi in zip(self.values, self.probs) if pi > 0 and (vi != 0 or gamma == 0)]

    def log_moment(self, gamma):
        if min(self.values) < 0:
            raise OutOfMomentDomain("moments of a law with negative support")
        terms = self._terms(gamma)
        if not terms:
            return -math.inf
        logs = [math.log(pi) + (gamma * math.log(vi) if vi != 0 else 0.0) for pi, vi in terms]
        return float(special.logsumexp(logs))

    def moment_log(self, gamma):
        return math.fsum(pi * vi**gamma * math.log(vi) for pi, vi in self._terms(gamma) if vi > 0)

    def abs_moment(self, q):
        return math.fsum(pi * abs(vi) ** q for vi, pi in zip(self.values, self.probs))

    @property
    def atom_at_zero(self):
        return self.atom_at(0.0)

    @property
    def nonnegative(self):
        return min(v for v, p in zip(self.values, self.probs) if p > 0) >= 0

    @property
    def mean(self):
        return math.fsum(v * p for v, p in zip(self.values, self.probs))

    @property
    def is_constant(self):
        return len({v for v, p in zip(self.values, self.probs) if p > 0}) == 1

    def atom_at(self, value):
        return math.fsum(p for v, p in zip(self.values, self.probs) if v == value)

    def positive_part(self):
        keep = [(v, p) for v, p in zip(self.values, self.probs) if v > 0 and p > 0]
        total = math.fsum(p for _, p in keep)
        return Discrete(tuple(v for v, _ in keep), tuple(p / total for _, p in keep))

    def spec(self):
        return "discrete:" + ",".join(f"{v!r}@{p!r}" for v, p in zip(self.values, self.probs))

    def _encode(self):
        cum = np.cumsum(self.probs)
        cum[-1] = 1.0
        return _DISC, 1.0, 1.0, list(self.values) + list(cum)


@dataclass(frozen=True)
class Exponential(Law):
    rate: float = 1.0

    def __post_init__(self):
        if not self.rate > 0:
            raise InvalidLaw("exponential rate must be positive")

    def log_moment(self, gamma):
        if gamma <= -1:
            return math.inf
        return float(special.gammaln(gamma + 1) - gamma * math.log(self.rate))

    def moment_log(self, gamma):
        if gamma <= -1:
            return math.inf
        g = special.gamma(gamma + 1)
        return float(g * (special.digamma(gamma + 1) - math.log(self.rate)) / self.rate**gamma)

    def abs_moment(self, q):
        return self.moment(q)

    def spec(self):
        return f"exp:{self.rate!r}"

    def _encode(self):
        return _EXP, 1.0, 1.0, [self.rate]


@dataclass(frozen=True)
class LogNormal(Law):
    mu: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if self.sigma < 0:
            raise InvalidLaw("lognormal sigma must be non-negative")

    def log_moment(self, gamma):
        return gamma * self.mu + 0.5 * gamma**2 * self.sigma**2

    def moment_log(self, gamma):
        return (self.mu + gamma * self.sigma**2) * math.exp(self.log_moment(gamma))

    def abs_moment(self, q):
        return self.moment(q)

    @property
    def is_constant(self):
        return self.sigma == 0

    def spec(self):
        return f"lognormal:{self.mu!r},{self.sigma!r}"

    def _encode(self):
        return _LOGN, 1.0, 1.0, [self.mu, self.sigma]


@dataclass(frozen=True)
class Uniform(Law):
    a: float = 0.0
    b: float = 1.0

    def __post_init__(self):
        if not self.a < self.b:
            raise InvalidLaw("uniform law needs a < b")

    def log_moment(self, gamma):
        a, b = self.a, self.b
        if a < 0:
            raise OutOfMomentDomain("moments of a law with negative support")
        g1 = gamma + 1.0
        if a == 0.0:
            if g1 <= 0:
                return math.inf
            return g1 * math.log(b) - math.log(g1) - math.log(b)
        if abs(g1) < 1e-12:
            return math.log((math.log(b) - math.log(a)) / (b - a))
        # (b^g1 - a^g1) / (g1 (b - a)) in log form, sign-safe for g1 < 0
        t = g1 * (math.log(a) - math.log(b))
        return g1 * math.log(b) + math.log(-math.expm1(t) / g1) - math.log(b - a)

    def moment_log(self, gamma):
        a, b = self.a, self.b
        g1 = gamma + 1.0

        def antideriv(x):
            if x == 0.0:
                return 0.0
            return x**g1 * math.log(x) / g1 - x**g1 / g1**2

        return (antideriv(b) - antideriv(a)) / (b - a)

    def abs_moment(self, q):
        def f(x):
            return math.copysign(abs(x) ** (q + 1) / (q + 1), x)

        return (f(self.b) - f(self.a)) / (self.b - self.a)

    @property
    def nonnegative(self):
        return self.a >= 0

    @property
    def mean(self):
        return 0.5 * (self.a + self.b)

    def spec(self):
        return f"uniform:{self.a!r},{self.b!r}"

    def _encode(self):
        return _UNIF, 1.0, 1.0, [self.a, self.b]


@dataclass(frozen=True)
class Rademacher(Law):
    def log_moment(self, gamma):
        raise OutOfMomentDomain("Rademacher is a spin law")

    def abs_moment(self, q):
        return 1.0

    @property
    def nonnegative(self):
        return False

    @property
    def mean(self):
        return 0.0

    def spec(self):
        return "rademacher"

    def _encode(self):
        return _RADEM, 1.0, 1.0, []


@dataclass(frozen=True)
class Normal(Law):
    mu: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if self.sigma < 0:
            raise InvalidLaw("normal sigma must be non-negative")

    def log_moment(self, gamma):
        raise OutOfMomentDomain("Normal is a spin law")

    def abs_moment(self, q):
        if self.sigma == 0:
            return abs(self.mu) ** q
        if self.mu == 0:
            return self.sigma**q * 2 ** (q / 2) * special.gamma((q + 1) / 2) / math.sqrt(math.pi)
        from scipy import integrate, stats

        val, _ = integrate.quad(
            lambda x: abs(x) ** q * stats.norm.pdf(x, self.mu, self.sigma), -np.inf, np.inf
        )
        return val

    @property
    def atom_at_zero(self):
        return 1.0 if self.sigma == 0 and self.mu == 0 else 0.0

    @property
    def nonnegative(self):
        return False

    @property
    def mean(self):
        return self.mu

    @property
    def is_constant(self):
        return self.sigma == 0

    def spec(self):
        return f"normal:{self.mu!r},{self.sigma!r}"

    def _encode(self):
        return _NORMAL, 1.0, 1.0, [self.mu, self.sigma]


@dataclass(frozen=True)
class Scaled(Law):
    """``factor * inner`` for a positive factor."""

    inner: Law
    factor: float

    def __post_init__(self):
        if not self.factor > 0:
            raise InvalidLaw("scale factor must be positive")

    def log_moment(self, gamma):
        return gamma * math.log(self.factor) + self.inner.log_moment(gamma)

    def moment_log(self, gamma):
        f = self.factor
        return f**gamma * (self.inner.moment_log(gamma) + math.log(f) * self.inner.moment(gamma))

    def abs_moment(self, q):
        return self.factor**q * self.inner.abs_moment(q)

    @property
    def atom_at_zero(self):
        return self.inner.atom_at_zero

    @property
    def nonnegative(self):
        return self.inner.nonnegative

    @property
    def mean(self):
        return self.factor * self.inner.mean

    @property
    def is_constant(self):
        return self.inner.is_constant

    def atom_at(self, value):
        return self.inner.atom_at(value / self.factor)

    def positive_part(self):
        return Scaled(self.inner.positive_part(), self.factor)

    def _encode(self):
        code, scale, keep, params = self.inner._encode()
        return code, scale * self.factor, keep, params


@dataclass(frozen=True)
class Thinned(Law):
    """``eps * inner`` with ``eps ~ Bernoulli(keep)`` independent of ``inner``.

    This is the compound echo law of a percolation component.
    """

    inner: Law
    keep: float

    def __post_init__(self):
        if not 0.0 < self.keep <= 1.0:
            raise InvalidLaw("retention probability must lie in (0, 1]")

    def log_moment(self, gamma):
        return math.log(self.keep) + self.inner.log_moment(gamma)

    def moment_log(self, gamma):
        return self.keep * self.inner.moment_log(gamma)

    def abs_moment(self, q):
        return self.keep * self.inner.abs_moment(q)

    @property
    def atom_at_zero(self):
        return 1.0 - self.keep * (1.0 - self.inner.atom_at_zero)

    @property
    def nonnegative(self):
        return self.inner.nonnegative

    @property
    def mean(self):
        return self.keep * self.inner.mean

    @property
    def is_constant(self):
        return self.keep == 1.0 and self.inner.is_constant

    def atom_at(self, value):
        base = self.keep * self.inner.atom_at(value)
        return base + (1.0 - self.keep) if value == 0 else base

    def positive_part(self):
        return self.inner.positive_part()

    def _encode(self):
        code, scale, keep, params = self.inner._encode()
        return code, scale, keep * self.keep, params


EchoLaw = Law
SpinLaw = Law

_SPIN_ONLY = (Rademacher, Normal)


def check_echo(law: Law) -> Law:
    if isinstance(law, _SPIN_ONLY) or not law.nonnegative:
        raise InvalidLaw(f"echo law must be supported on [0, inf): {law!r}")
    if law.atom_at_zero >= 1.0:
        raise InvalidLaw("echo law must satisfy P(xi = 0) < 1")
    return law


def check_spin(law: Law) -> Law:
    if isinstance(law, Thinned):
        raise InvalidLaw("thinned laws are echo-only")
    if law.atom_at_zero >= 1.0:
        raise InvalidLaw("spin law must satisfy P(X = 0) < 1")
    return law


@dataclass(frozen=True)
class WalkParams:
    """Memory parameter ``p`` in (0, 1] with the echo and spin laws."""

    p: float
    echo: Law
    spin: Law = field(default_factory=lambda: Constant(1.0))

    def __post_init__(self):
        if not 0.0 < self.p <= 1.0:
            raise DegenerateModel(f"memory parameter must lie in (0, 1], got {self.p}")
        try:
            check_echo(self.echo)
            check_spin(self.spin)
        except InvalidLaw as exc:
            raise DegenerateModel(str(exc)) from exc

    @property
    def m1(self) -> float:
        return self.echo.moment(1.0)

    @property
    def pm1(self) -> float:
        return self.p * self.m1

    @property
    def spin_mean(self) -> float:
        return self.spin.mean


# ---------------------------------------------------------------------------
# sampling


@nb.njit(cache=True)
def draw_law(enc, k0, k1, s0, s1, counter, slot):
    """One draw of an encoded law at address ``(counter, slot)``."""
    code = int(enc[0])
    keep = enc[2]
    if keep < 1.0:
        if uniform1(k0, k1, s0, s1, counter, slot + SUB) >= keep:
            return 0.0
    if code == _CONST:
        return enc[1] * enc[4]
    u1, u2 = uniform2(k0, k1, s0, s1, counter, slot)
    if code == _BERN:
        v = 1.0 if u1 < enc[4] else 0.0
    elif code == _DISC:
        n = int(enc[3])
        j = 0
        while j < n - 1 and u1 >= enc[4 + n + j]:
            j += 1
        v = enc[4 + j]
    elif code == _EXP:
        v = -math.log(u1) / enc[4]
    elif code == _LOGN:
        z = math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
        v = math.exp(enc[4] + enc[5] * z)
    elif code == _UNIF:
        v = enc[4] + (enc[5] - enc[4]) * u1
    elif code == _RADEM:
        v = 1.0 if u1 < 0.5 else -1.0
    else:
        z = math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
        v = enc[4] + enc[5] * z
    return enc[1] * v


@nb.njit(cache=True)
def _fill_law(enc, k0, k1, s0, s1, slot, out):
    for i in range(out.shape[0]):
        out[i] = draw_law(enc, k0, k1, s0, s1, i, slot)


def sample(law: Law, size: int, tape: RandomTape, slot: int = SLOT_XI) -> np.ndarray:
    """``size`` draws at counters ``0..size-1`` of ``slot`` on ``tape``."""
    out = np.empty(int(size))
    _fill_law(law.encode(), *tape.words(), np.uint32(slot), out)
    return out


# ---------------------------------------------------------------------------
# moment oracles


def moment(law: Law, gamma: float) -> float:
    return law.moment(gamma)


def xi_log_xi(law: Law) -> float:
    """``E[xi log xi]`` with the convention ``0 log 0 = 0``."""
    val = law.moment_log(1.0)
    if not math.isfinite(val):
        raise DivergentIntegral(f"E[xi log xi] diverges for {law!r}")
    return val


def phi(law: Law, theta: float, r: float) -> float:
    """``m_{r theta} / r``."""
    if not r > 0:
        raise OutOfMomentDomain("phi needs r > 0")
    val = law.moment(r * theta) / r
    if not math.isfinite(val):
        raise OutOfMomentDomain(f"m_{r * theta} is infinite")
    return val


def _log_phi(law, theta, r):
    return law.log_moment(r * theta) - math.log(r)


def phi_minimizer(law: Law, theta: float) -> float:
    """Minimiser of ``r -> m_{r theta}/r`` on ``(0, inf]``."""
    if not math.isfinite(law.log_moment(theta)):
        raise OutOfMomentDomain(f"theta={theta} outside the moment domain")
    grid = np.exp(np.arange(-8.0, 40.5, 0.5))
    vals = [_log_phi(law, theta, r) for r in grid]
    for k in range(1, len(grid) - 1):
        if vals[k + 1] >= vals[k]:
            if vals[k] >= vals[k - 1]:
                # flat or rising from the start: the minimum lies left of grid[k]
                lo, mid, hi = grid[max(k - 2, 0)] * 0.5, grid[k - 1], grid[k]
            else:
                lo, mid, hi = grid[k - 1], grid[k], grid[k + 1]
            res = optimize.minimize_scalar(
                lambda r: _log_phi(law, theta, r),
                bracket=(lo, mid, hi),
                method="golden",
                options={"xtol": 1e-10},
            )
            return float(res.x)
    return math.inf


# ---------------------------------------------------------------------------
# classification


class Regime(str, Enum):
    SUPERCRITICAL = "supercritical"
    CRITICAL = "critical"
    SUBCRITICAL = "subcritical"


@dataclass(frozen=True)
class RegimeReport:
    pm1: float
    regime: Regime
    xi_log_xi: float
    ui_holds: bool
    lambda_nonempty: bool
    lambda_sup: float
    subcritical_refined: bool
    limit_constant: float
    scaling_exponent: float
    log_correction: bool

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["regime"] = self.regime.value
        d["lambda_sup"] = "inf" if math.isinf(self.lambda_sup) else self.lambda_sup
        return d


def regime_of(pm1: float) -> Regime:
    if abs(pm1 - 1.0) <= CRITICAL_TOL:
        return Regime.CRITICAL
    return Regime.SUPERCRITICAL if pm1 > 1.0 else Regime.SUBCRITICAL


def lambda_sup(law: Law) -> float:
    """``sup{g > 1 : m_g < g m_1}``; 1.0 when that set is empty."""
    r1 = phi_minimizer(law, 1.0)
    if math.isinf(r1):
        return math.inf
    log_m1 = law.log_moment(1.0)
    if r1 <= 1.0 or _log_phi(law, 1.0, r1) >= log_m1:
        return 1.0
    hi = 2.0 * r1
    while _log_phi(law, 1.0, hi) < log_m1:
        hi *= 2.0
        if hi > 1e12:
            return math.inf
    return float(optimize.bisect(lambda g: _log_phi(law, 1.0, g) - log_m1, r1, hi, xtol=1e-12))


def classify(params: WalkParams) -> RegimeReport:
    echo, p = params.echo, params.p
    m1 = echo.moment(1.0)
    pm1 = p * m1
    xlx = xi_log_xi(echo)
    lam = lambda_sup(echo)
    refined = False
    if pm1 < 1.0 and regime_of(pm1) is Regime.SUBCRITICAL:
        a = 1.0 / pm1
        in_domain = math.isfinite(echo.moment(a)) and math.isfinite(params.spin.abs_moment(a))
        refined = in_domain and p * echo.moment(a) < 1.0
    exponent, constant, log_flag = analytic.mean_asymptotics(p, m1, params.spin_mean)
    return RegimeReport(
        pm1=pm1,
        regime=regime_of(pm1),
        xi_log_xi=xlx,
        ui_holds=xlx < m1,
        lambda_nonempty=lam > 1.0,
        lambda_sup=lam,
        subcritical_refined=refined,
        limit_constant=constant,
        scaling_exponent=exponent,
        log_correction=log_flag,
    )


# ---------------------------------------------------------------------------
# mini-grammar


def _floats(text, n=None):
    vals = [float(x) for x in text.split(",")]
    if n is not None and len(vals) != n:
        raise InvalidLaw(f"expected {n} parameters, got {text!r}")
    return vals


def parse_law(text: str, role: str = "echo") -> Law:
    """Parse ``family:params`` (e.g. ``const:2``, ``discrete:0.5@0.25,2@0.75``)."""
    text = text.strip()
    name, _, rest = text.partition(":")
    name = name.lower()
    try:
        if name in ("const", "constant"):
            law = Constant(*_floats(rest, 1))
        elif name in ("bernoulli", "bern"):
            law = Bernoulli(*_floats(rest, 1))
        elif name == "discrete":
            pairs = [item.split("@") for item in rest.split(",")]
            law = Discrete(tuple(float(v) for v, _ in pairs), tuple(float(p) for _, p in pairs))
        elif name in ("exp", "exponential"):
            law = Exponential(*_floats(rest, 1))
        elif name == "lognormal":
            law = LogNormal(*_floats(rest, 2))
        elif name == "uniform":
            law = Uniform(*_floats(rest, 2))
        elif name == "rademacher":
            law = Rademacher()
        elif name == "normal":
            law = Normal(*_floats(rest, 2))
        else:
            raise InvalidLaw(f"unknown law family {name!r}")
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InvalidLaw):
            raise
        raise InvalidLaw(f"cannot parse law {text!r}: {exc}") from exc
    if role == "echo":
        return check_echo(law)
    if role == "spin":
        return check_spin(law)
    raise ValueError(f"unknown role {role!r}")
