"""Offspring, displacement and last-generation (mu) laws.

Every law is a frozen dataclass with a ``kind`` tag used by the JSON config
format, a ``to_dict`` round trip and vectorised sampling from a numpy
``Generator``.
"""

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import special, stats

from .errors import AssumptionViolated, ConfigError, InvalidMu

# series cut-over for the uniform tilt, |theta * width| below this
_UNIFORM_SERIES = 1e-3


# --------------------------------------------------------------------------
# offspring laws
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DeterministicOffspring:
    """Every particle has exactly ``b`` children."""

    b: int = 2
    kind = "b_ary"

    def mean(self):
        return float(self.b)

    def prob(self, k):
        return 1.0 if k == self.b else 0.0

    def sample(self, gen, size):
        return np.full(size, self.b, dtype=np.int64)

    def to_dict(self):
        if self.b == 2:
            return {"kind": "binary"}
        return {"kind": "b_ary", "b": self.b}


@dataclass(frozen=True)
class PoissonAtLeastOne:
    """Poisson(lam) conditioned on being at least one."""

    lam: float
    kind = "poisson_ge1"

    def mean(self):
        return self.lam / -math.expm1(-self.lam)

    def prob(self, k):
        if k < 1:
            return 0.0
        return float(stats.poisson.pmf(k, self.lam) / -math.expm1(-self.lam))

    def sample(self, gen, size):
        # inverse CDF restricted to (P(N=0), 1): no rejection loop
        p0 = math.exp(-self.lam)
        u = p0 + (1.0 - p0) * gen.random(size)
        k = stats.poisson.ppf(u, self.lam)
        return np.maximum(k, 1).astype(np.int64)

    def to_dict(self):
        return {"kind": "poisson_ge1", "lam": self.lam}


@dataclass(frozen=True)
class GeometricOffspring:
    """Geometric on {1, 2, ...} with success probability ``p``."""

    p: float
    kind = "geometric"

    def mean(self):
        return 1.0 / self.p

    def prob(self, k):
        return 0.0 if k < 1 else self.p * (1.0 - self.p) ** (k - 1)

    def sample(self, gen, size):
        return gen.geometric(self.p, size).astype(np.int64)

    def to_dict(self):
        return {"kind": "geometric", "p": self.p}


@dataclass(frozen=True)
class FinitePmfOffspring:
    """Offspring count with ``P(N = k) = probs[k]``."""

    probs: tuple
    kind = "pmf"

    def mean(self):
        return float(np.dot(np.arange(len(self.probs)), self.probs))

    def prob(self, k):
        return self.probs[k] if 0 <= k < len(self.probs) else 0.0

    def sample(self, gen, size):
        cdf = np.cumsum(self.probs)
        cdf[-1] = 1.0
        return np.searchsorted(cdf, gen.random(size), side="right").astype(np.int64)

    def to_dict(self):
        return {"kind": "pmf", "probs": list(self.probs)}


def offspring_from_dict(d):
    kind = d.get("kind")
    if kind == "binary":
        return DeterministicOffspring(2)
    if kind in ("b_ary", "deterministic"):
        return DeterministicOffspring(int(d["b"]))
    if kind == "poisson_ge1":
        return PoissonAtLeastOne(float(d["lam"]))
    if kind == "poisson":
        # plain Poisson puts mass on N = 0
        lam = float(d["lam"])
        return FinitePmfOffspring(tuple(stats.poisson.pmf(np.arange(64), lam)))
    if kind == "geometric":
        return GeometricOffspring(float(d["p"]))
    if kind == "pmf":
        return FinitePmfOffspring(tuple(float(x) for x in d["probs"]))
    raise ConfigError(f"unknown offspring kind {kind!r}")


def check_offspring(law):
    """Raise AssumptionViolated unless the law satisfies A2 and A3."""
    if isinstance(law, DeterministicOffspring):
        if law.b < 1:
            raise AssumptionViolated("A2", f"b-ary offspring with b={law.b} dies out")
        if law.b == 1:
            raise AssumptionViolated("A2", "P(N=1)=1: the tree does not branch")
    elif isinstance(law, PoissonAtLeastOne):
        if not law.lam > 0 or not math.isfinite(law.lam):
            raise ConfigError(f"Poisson rate must be positive, got {law.lam}")
    elif isinstance(law, GeometricOffspring):
        if not 0 < law.p <= 1:
            raise ConfigError(f"geometric p must lie in (0, 1], got {law.p}")
        if law.p == 1:
            raise AssumptionViolated("A2", "P(N=1)=1: the tree does not branch")
    elif isinstance(law, FinitePmfOffspring):
        probs = np.asarray(law.probs, dtype=float)
        if probs.ndim != 1 or probs.size == 0 or np.any(probs < 0):
            raise ConfigError("offspring pmf must be a non-empty non-negative vector")
        if abs(probs.sum() - 1.0) > 1e-6:
            raise ConfigError(f"offspring pmf sums to {probs.sum()}, not 1")
        if probs[0] > 0:
            raise AssumptionViolated(
                "A2", f"P(N=0)={probs[0]:.3g} > 0 gives positive extinction probability"
            )
        if probs.size > 1 and probs[1] >= 1.0:
            raise AssumptionViolated("A2", "P(N=1)=1: the tree does not branch")
    else:
        raise ConfigError(f"unsupported offspring law {law!r}")


# --------------------------------------------------------------------------
# displacement laws; each exposes the log-MGF kappa and its two derivatives
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Gaussian:
    mean: float = 0.0
    var: float = 1.0
    kind = "gaussian"

    def log_mgf(self, t):
        return t * self.mean + 0.5 * self.var * t * t

    def log_mgf_derivatives(self, t):
        return self.mean + self.var * t, self.var

    def tilt_gap(self, t):
        # t * kappa'(t) - kappa(t)
        return 0.5 * self.var * t * t

    def degenerate(self):
        return self.var == 0

    def sample(self, gen, size):
        return gen.normal(self.mean, math.sqrt(self.var), size)

    def to_dict(self):
        return {"kind": "gaussian", "mean": self.mean, "var": self.var}


@dataclass(frozen=True)
class UniformDisplacement:
    lo: float
    hi: float
    kind = "uniform"

    @property
    def width(self):
        return self.hi - self.lo

    def log_mgf(self, t):
        x = t * self.width
        if abs(x) < _UNIFORM_SERIES:
            rel = x / 2 + x * x / 24
        elif x > 30:
            rel = x + math.log1p(-math.exp(-x)) - math.log(x)
        else:
            rel = math.log(math.expm1(x) / x)
        return t * self.lo + rel

    def log_mgf_derivatives(self, t):
        w = self.width
        x = t * w
        if abs(x) < _UNIFORM_SERIES:
            d1 = self.lo + w * (0.5 + x / 12)
            d2 = w * w * (1.0 / 12 - x * x / 240)
            return d1, d2
        em = -math.expm1(-x)  # 1 - e^{-x}
        d1 = self.lo + w / em - 1.0 / t
        d2 = 1.0 / (t * t) - (w / (2.0 * math.sinh(x / 2))) ** 2
        return d1, d2

    def tilt_gap(self, t):
        x = t * self.width
        if abs(x) < _UNIFORM_SERIES:
            return x * x / 24
        em = -math.expm1(-x)
        if x > 30:
            log_rel = x + math.log1p(-math.exp(-x)) - math.log(x)
        else:
            log_rel = math.log(math.expm1(x) / x)
        return x / em - 1.0 - log_rel

    def degenerate(self):
        return self.width == 0

    def sample(self, gen, size):
        return gen.uniform(self.lo, self.hi, size)

    def to_dict(self):
        return {"kind": "uniform", "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class TwoPoint:
    """Mass ``p`` at ``a`` and ``1 - p`` at ``c``."""

    p: float
    a: float
    c: float
    kind = "two_point"

    def _tilted(self, t):
        la = math.log(self.p) + t * self.a if self.p > 0 else -math.inf
        lc = math.log1p(-self.p) + t * self.c if self.p < 1 else -math.inf
        k = np.logaddexp(la, lc)
        return float(k), la - k, lc - k

    def log_mgf(self, t):
        return self._tilted(t)[0]

    def log_mgf_derivatives(self, t):
        _, lqa, lqc = self._tilted(t)
        qa, qc = math.exp(lqa), math.exp(lqc)
        return qa * self.a + qc * self.c, qa * qc * (self.a - self.c) ** 2

    def tilt_gap(self, t):
        # equals KL(tilted || base)
        _, lqa, lqc = self._tilted(t)
        gap = 0.0
        if lqa > -math.inf:
            gap += math.exp(lqa) * (lqa - math.log(self.p))
        if lqc > -math.inf:
            gap += math.exp(lqc) * (lqc - math.log1p(-self.p))
        return gap

    def degenerate(self):
        return self.p in (0.0, 1.0) or self.a == self.c

    def sample(self, gen, size):
        return np.where(gen.random(size) < self.p, self.a, self.c)

    def to_dict(self):
        return {"kind": "two_point", "p": self.p, "a": self.a, "c": self.c}


_HEAVY_KINDS = {"cauchy", "student_t", "pareto", "levy", "stable"}


def displacement_from_dict(d):
    kind = d.get("kind")
    if kind == "gaussian":
        var = float(d.get("var", 1.0))
        if var < 0:
            raise ConfigError(f"Gaussian variance must be >= 0, got {var}")
        return Gaussian(float(d.get("mean", 0.0)), var)
    if kind == "uniform":
        lo, hi = float(d["lo"]), float(d["hi"])
        if hi < lo:
            raise ConfigError(f"uniform needs lo <= hi, got ({lo}, {hi})")
        return UniformDisplacement(lo, hi)
    if kind == "two_point":
        p = float(d["p"])
        if not 0 <= p <= 1:
            raise ConfigError(f"two-point p must lie in [0, 1], got {p}")
        return TwoPoint(p, float(d["a"]), float(d["c"]))
    if kind in _HEAVY_KINDS:
        raise AssumptionViolated(
            "A1", f"{kind} displacements have no exponential moments on a neighbourhood of 0"
        )
    raise ConfigError(f"unknown displacement kind {kind!r}")


# --------------------------------------------------------------------------
# mu: positively supported laws with finite mean
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MuLaw:
    """Law of the multiplicative weight ``Y_v`` attached to last-generation particles.

    Supported kinds: ``delta`` (point mass at ``c``), ``uniform`` on
    ``(lo, hi)``, ``lognormal`` with log-mean ``m`` and log-sd ``s``, and
    ``exponential`` with ``rate`` shifted by ``shift``.
    """

    kind: str
    c: float = 1.0
    lo: float = 0.0
    hi: float = 0.0
    m: float = 0.0
    s: float = 1.0
    rate: float = 1.0
    shift: float = 0.0

    def __post_init__(self):
        if self.kind == "delta":
            ok = self.c > 0 and math.isfinite(self.c)
        elif self.kind == "uniform":
            ok = 0 < self.lo < self.hi < math.inf
        elif self.kind == "lognormal":
            ok = self.s >= 0 and math.isfinite(self.m) and math.isfinite(self.s)
        elif self.kind == "exponential":
            ok = 0 < self.rate < math.inf and 0 <= self.shift < math.inf
        else:
            raise InvalidMu(f"unknown mu kind {self.kind!r}")
        if not ok:
            raise InvalidMu(f"{self.kind} law with these parameters is not a "
                            "positively supported law with finite mean")

    @classmethod
    def delta(cls, c=1.0):
        return cls("delta", c=float(c))

    @classmethod
    def uniform(cls, lo, hi):
        return cls("uniform", lo=float(lo), hi=float(hi))

    @classmethod
    def lognormal(cls, m=0.0, s=1.0):
        return cls("lognormal", m=float(m), s=float(s))

    @classmethod
    def exponential(cls, rate=1.0, shift=0.0):
        return cls("exponential", rate=float(rate), shift=float(shift))

    @property
    def is_delta(self):
        return self.kind == "delta"

    def mean(self):
        return self.moment(1.0)

    def moment(self, r):
        """``E[Y^r]`` for ``r >= 0``."""
        if self.kind == "delta":
            return self.c ** r
        if self.kind == "uniform":
            if r == -1:
                return math.log(self.hi / self.lo) / (self.hi - self.lo)
            return (self.hi ** (r + 1) - self.lo ** (r + 1)) / ((r + 1) * (self.hi - self.lo))
        if self.kind == "lognormal":
            return math.exp(r * self.m + 0.5 * (r * self.s) ** 2)
        # shifted exponential: E[(shift + X/rate)^r]
        if self.shift == 0:
            return special.gamma(r + 1) / self.rate ** r
        return float(stats.expon(loc=self.shift, scale=1 / self.rate).expect(lambda y: y ** r))

    def sample(self, gen, size):
        if self.kind == "delta":
            return np.full(size, self.c)
        if self.kind == "uniform":
            return gen.uniform(self.lo, self.hi, size)
        if self.kind == "lognormal":
            return np.exp(gen.normal(self.m, self.s, size))
        return self.shift + gen.standard_exponential(size) / self.rate

    def log_sample(self, gen, size):
        if self.kind == "delta":
            return np.full(size, math.log(self.c))
        if self.kind == "lognormal":
            return gen.normal(self.m, self.s, size)
        return np.log(self.sample(gen, size))

    def to_dict(self):
        keys = {"delta": ("c",), "uniform": ("lo", "hi"), "lognormal": ("m", "s"),
                "exponential": ("rate", "shift")}[self.kind]
        full = asdict(self)
        return {"kind": self.kind, **{k: full[k] for k in keys}}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kind = d.pop("kind", None)
        if kind is None:
            raise InvalidMu("mu spec needs a 'kind'")
        if kind == "uniform":
            d = {"lo": d.get("lo", d.get("a")), "hi": d.get("hi", d.get("b"))}
        if kind == "lognormal":
            d = {"m": d.get("m", d.get("mean", 0.0)), "s": d.get("s", d.get("sigma", 1.0))}
        try:
            return cls(kind, **{k: float(v) for k, v in d.items()})
        except TypeError as exc:
            raise InvalidMu(str(exc)) from None
