"""Branching point-process models and their cumulant machinery.

A model couples a :class:`ModelSpec` (what the point process ``Z`` is) with a
cumulant mode (closed form, or a Monte Carlo estimate over a frozen set of
realizations). From ``nu(theta) = log E[sum_j exp(theta * xi_j)]`` everything
else follows: the tangency point ``theta0``, the regime of a scale
parameter, and the boundary variance ``sigma^2``.
"""

import math
import threading
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .accumulate import logsumexp
from .errors import (AssumptionViolated, ConfigError, NumericFailure, OutOfDomain,
                     RequiresFiniteTheta0)
from .laws import (DeterministicOffspring, check_offspring, displacement_from_dict,
                   offspring_from_dict)
from .reports import TestReport
from .rng import RngStream, as_generator, stable_stream_id

DEFAULT_SEARCH_MAX = 64.0
DEFAULT_TOL = 1e-10


# --------------------------------------------------------------------------
# specifications
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class IidProduct:
    """``N`` children with i.i.d. displacements, ``N`` independent of them."""

    offspring: object
    displacement: object
    family = "iid_product"

    def to_dict(self):
        return {"family": self.family, "offspring": self.offspring.to_dict(),
                "displacement": self.displacement.to_dict()}


@dataclass(frozen=True)
class DeterministicAtoms:
    """``Z`` is the same finite atom set at every branching event."""

    atoms: tuple
    family = "deterministic_atoms"

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(float(a) for a in self.atoms))

    def to_dict(self):
        return {"family": self.family, "atoms": list(self.atoms)}


ModelSpec = IidProduct | DeterministicAtoms


def model_spec_from_dict(d):
    """Parse the tagged-record form used in experiment configs."""
    if not isinstance(d, dict):
        raise ConfigError(f"model spec must be an object, got {type(d).__name__}")
    family = d.get("family")
    if family == "iid_product":
        try:
            return IidProduct(offspring_from_dict(d["offspring"]),
                              displacement_from_dict(d["displacement"]))
        except KeyError as exc:
            raise ConfigError(f"iid_product spec is missing {exc}") from None
    if family == "deterministic_atoms":
        atoms = d.get("atoms")
        if not atoms:
            raise ConfigError("deterministic_atoms needs a non-empty 'atoms' list")
        return DeterministicAtoms(tuple(atoms))
    raise ConfigError(f"unknown model family {family!r}")


def check_assumptions(spec):
    """Raise :class:`AssumptionViolated` naming the first failing assumption."""
    if isinstance(spec, DeterministicAtoms):
        atoms = np.asarray(spec.atoms)
        if not np.all(np.isfinite(atoms)):
            raise ConfigError("atoms must be finite reals")
        if atoms.size == 1:
            raise AssumptionViolated("A2", "a single atom means P(N=1)=1")
        if np.all(atoms == atoms[0]):
            raise AssumptionViolated("A2", "all atoms coincide, so Z is trivial")
    elif isinstance(spec, IidProduct):
        check_offspring(spec.offspring)
        if spec.displacement.degenerate():
            raise AssumptionViolated("A2", "degenerate displacement law makes Z trivial")
    else:
        raise ConfigError(f"unsupported model spec {spec!r}")


# --------------------------------------------------------------------------
# cumulant modes and results
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Analytic:
    pass


@dataclass(frozen=True)
class Numeric:
    """Monte Carlo cumulant over ``mc_samples`` frozen realizations of ``Z``.

    The realizations are drawn once from ``seed``, so the estimated ``nu`` is
    a smooth function of theta and finite differences behave.
    """

    mc_samples: int = 200_000
    diff_step: float = 1e-4
    seed: int = 0


@dataclass(frozen=True)
class Theta0Finite:
    theta0: float
    nu_theta0: float
    finite = True


@dataclass(frozen=True)
class Theta0UnboundedWithin:
    search_max: float
    gap: float
    finite = False


class Regime(str, Enum):
    BELOW = "below"
    BOUNDARY = "boundary"
    ABOVE = "above"


@dataclass(frozen=True)
class RegimeInfo:
    regime: Regime
    theta: float
    theta0: float  # inf when unbounded within the search range
    boundary_tol: float


# --------------------------------------------------------------------------
# the model
# --------------------------------------------------------------------------


class PointProcessModel:
    """A validated point process ``Z`` with its cumulant ``nu``.

    Parameters
    ----------
    spec : IidProduct or DeterministicAtoms
    mode : Analytic or Numeric, optional
    check : bool
        Validate assumptions A1-A3. Only the operator-level helpers, which
        accept degenerate processes such as a single atom at zero, turn this
        off.
    """

    def __init__(self, spec, mode=None, check=True):
        if check:
            check_assumptions(spec)
        self.spec = spec
        self.mode = mode or Analytic()
        # every built-in law has a finite MGF on the whole real line
        self.vartheta = math.inf
        self._lock = threading.Lock()
        self._theta0_cache = {}
        self._frozen = None
        if isinstance(spec, IidProduct):
            self.mean_offspring = spec.offspring.mean()
        else:
            self.mean_offspring = float(len(spec.atoms))

    def __repr__(self):
        return f"PointProcessModel({self.spec!r}, mode={self.mode!r})"

    def __getstate__(self):
        state = self.__dict__.copy()
        del state["_lock"]
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._lock = threading.Lock()

    @property
    def is_numeric(self):
        return isinstance(self.mode, Numeric)

    @property
    def deterministic_offspring(self):
        """Offspring count if it is the same for every particle, else None."""
        if isinstance(self.spec, DeterministicAtoms):
            return len(self.spec.atoms)
        if isinstance(self.spec.offspring, DeterministicOffspring):
            return self.spec.offspring.b
        return None

    # -- sampling ---------------------------------------------------------

    def sample_children(self, gen, n_parents):
        """Draw ``n_parents`` independent copies of ``Z``.

        Returns ``(counts, displacements)`` with displacements grouped by
        parent in parent order.
        """
        spec = self.spec
        if isinstance(spec, DeterministicAtoms):
            atoms = np.asarray(spec.atoms)
            counts = np.full(n_parents, atoms.size, dtype=np.int64)
            return counts, np.tile(atoms, n_parents)
        counts = spec.offspring.sample(gen, n_parents)
        return counts, spec.displacement.sample(gen, int(counts.sum()))

    # -- cumulant ---------------------------------------------------------

    def _check_domain(self, theta):
        if not math.isfinite(theta) or theta <= -self.vartheta:
            raise OutOfDomain(f"theta={theta} outside (-{self.vartheta}, inf)")

    def _realizations(self):
        with self._lock:
            if self._frozen is None:
                rng = RngStream(self.mode.seed, stable_stream_id("numeric-cumulant"))
                counts, xs = self.sample_children(rng.generator, self.mode.mc_samples)
                owner = np.repeat(np.arange(counts.size), counts)
                self._frozen = (counts, xs, owner)
        return self._frozen

    def nu(self, theta):
        theta = float(theta)
        self._check_domain(theta)
        if self.is_numeric:
            _, xs, _ = self._realizations()
            return logsumexp(theta * xs) - math.log(self.mode.mc_samples)
        spec = self.spec
        if isinstance(spec, DeterministicAtoms):
            return logsumexp(theta * np.asarray(spec.atoms))
        return math.log(self.mean_offspring) + spec.displacement.log_mgf(theta)

    def nu_derivatives(self, theta):
        theta = float(theta)
        self._check_domain(theta)
        if self.is_numeric:
            h = self.mode.diff_step * max(1.0, abs(theta))
            up, mid, down = self.nu(theta + h), self.nu(theta), self.nu(theta - h)
            return (up - down) / (2 * h), (up - 2 * mid + down) / (h * h)
        spec = self.spec
        if isinstance(spec, DeterministicAtoms):
            atoms = np.asarray(spec.atoms)
            logq = theta * atoms - logsumexp(theta * atoms)
            q = np.exp(logq)
            d1 = float(np.dot(q, atoms))
            return d1, float(np.dot(q, (atoms - d1) ** 2))
        return spec.displacement.log_mgf_derivatives(theta)

    def tangent_gap(self, theta):
        """``f(theta) = theta * nu'(theta) - nu(theta)``, evaluated stably.

        ``f`` is negative exactly where a line from the origin lies above the
        graph of ``nu``; its first zero on ``(0, inf)`` is ``theta0``.
        """
        theta = float(theta)
        self._check_domain(theta)
        if self.is_numeric:
            return theta * self.nu_derivatives(theta)[0] - self.nu(theta)
        spec = self.spec
        if isinstance(spec, DeterministicAtoms):
            # f = sum q log q for the tilted atom weights q
            atoms = np.asarray(spec.atoms)
            logq = theta * atoms - logsumexp(theta * atoms)
            q = np.exp(logq)
            keep = q > 0
            return float(np.dot(q[keep], logq[keep]))
        return spec.displacement.tilt_gap(theta) - math.log(self.mean_offspring)

    def cumulant_standard_error(self, theta):
        """Monte Carlo standard error of ``nu(theta)`` in Numeric mode."""
        if not self.is_numeric:
            return 0.0
        counts, xs, owner = self._realizations()
        w = np.exp(theta * xs - self.nu(theta))
        per = np.bincount(owner, weights=w, minlength=counts.size)
        # per-realization ratio to the mean; delta method on the log
        return float(np.std(per, ddof=1) / math.sqrt(counts.size))

    # -- theta0 -----------------------------------------------------------

    def theta0(self, search_max=DEFAULT_SEARCH_MAX, tol=DEFAULT_TOL):
        key = (float(search_max), float(tol))
        with self._lock:
            hit = self._theta0_cache.get(key)
        if hit is None:
            hit = _solve_theta0(self, *key)
            with self._lock:
                hit = self._theta0_cache.setdefault(key, hit)
        return hit


def _solve_theta0(model, search_max, tol):
    if not search_max > 0 or not tol > 0:
        raise ValueError("search_max and tol must be positive")

    def f(t):
        v = model.tangent_gap(t)
        if not math.isfinite(v):
            raise NumericFailure(f"tangent gap is {v} at theta={t}")
        return v

    lo = min(tol, search_max)
    if f(lo) >= 0:
        # f(0+) = -nu(0) < 0 under (A2); only hit when tol is coarse
        raise NumericFailure(f"tangent gap already non-negative at theta={lo}")
    hi = lo
    while True:
        nxt = min(2 * hi, search_max)
        fn = f(nxt)
        if fn >= 0:
            lo, hi = hi, nxt
            break
        if nxt >= search_max:
            return Theta0UnboundedWithin(search_max=search_max, gap=-fn)
        hi = nxt
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    root = 0.5 * (lo + hi)
    return Theta0Finite(theta0=root, nu_theta0=model.nu(root))


# --------------------------------------------------------------------------
# module-level operations
# --------------------------------------------------------------------------


def make_model(spec, mode=None):
    """Validate ``spec`` and wrap it in a :class:`PointProcessModel`."""
    if isinstance(spec, dict):
        spec = model_spec_from_dict(spec)
    return PointProcessModel(spec, mode=mode)


def cumulant(model, theta):
    """``nu(theta) = log m(theta)``."""
    return model.nu(theta)


def cumulant_derivatives(model, theta):
    """``(nu'(theta), nu''(theta))``."""
    return model.nu_derivatives(theta)


def solve_theta0(model, search_max=DEFAULT_SEARCH_MAX, tol=DEFAULT_TOL):
    """Locate the tangency point ``theta0`` of ``nu`` seen from the origin.

    Brackets the sign change of ``theta * nu'(theta) - nu(theta)`` by
    doubling from ``tol`` up to ``search_max``, then bisects to width
    ``tol``. When no sign change occurs before ``search_max`` the result is
    :class:`Theta0UnboundedWithin`, carrying the remaining gap.
    """
    return model.theta0(search_max, tol)


def theta0_value(model, search_max=DEFAULT_SEARCH_MAX, tol=DEFAULT_TOL):
    """``theta0`` as a float, ``inf`` when unbounded within the search range."""
    res = model.theta0(search_max, tol)
    return res.theta0 if res.finite else math.inf


def classify_theta(model, theta, boundary_tol=None):
    if not theta > 0:
        raise ValueError(f"theta must be positive, got {theta}")
    t0 = theta0_value(model)
    if not math.isfinite(t0):
        return RegimeInfo(Regime.BELOW, theta, t0, boundary_tol or 0.0)
    if boundary_tol is None:
        boundary_tol = 1e-9 * t0
    if abs(theta - t0) <= boundary_tol:
        regime = Regime.BOUNDARY
    elif theta < t0:
        regime = Regime.BELOW
    else:
        regime = Regime.ABOVE
    return RegimeInfo(regime, theta, t0, boundary_tol)


def limiting_speed(model, theta):
    """Almost-sure limit of ``R_n^* / n``: ``nu(beta)/beta`` with ``beta = min(theta, theta0)``."""
    beta = min(theta, theta0_value(model))
    return model.nu(beta) / beta


def sigma_sq(model, mc_samples=None, rng=None, method="auto"):
    """Tilted second moment of the first-generation increment at ``theta0``.

    ``method="analytic"`` uses ``theta0^2 nu''(theta0) + f(theta0)^2``, exact
    for closed-form cumulants. ``method="mc"`` averages
    ``sum_v (theta0 S_v - nu0)^2 exp(theta0 S_v - nu0)`` over ``mc_samples``
    fresh realizations of ``Z``. ``"auto"`` picks analytic unless the model
    is in Numeric mode.
    """
    res = model.theta0()
    if not res.finite:
        raise RequiresFiniteTheta0("sigma^2 is defined only when theta0 is finite")
    t0, nu0 = res.theta0, res.nu_theta0
    if method == "auto":
        method = "mc" if model.is_numeric else "analytic"
    if method == "analytic":
        d2 = model.nu_derivatives(t0)[1]
        return t0 * t0 * d2 + model.tangent_gap(t0) ** 2
    if method != "mc":
        raise ValueError(f"unknown method {method!r}")
    gen = as_generator(rng)
    mc_samples = int(mc_samples or 200_000)
    total = 0.0
    chunk = 1 << 16
    for start in range(0, mc_samples, chunk):
        m = min(chunk, mc_samples - start)
        _, xs = model.sample_children(gen, m)
        x = t0 * xs - nu0
        total += float(np.sum(x * x * np.exp(x)))
    return total / mc_samples


def verify_convexity(model, grid):
    """Check ``nu'' > 0`` on ``grid`` and that ``nu(theta)/theta`` decreases below theta0."""
    grid = np.asarray(sorted(float(g) for g in grid))
    d2 = np.array([model.nu_derivatives(t)[1] for t in grid])
    failures = [f"nu''({t:g}) = {v:g} <= 0" for t, v in zip(grid, d2) if not v > 0]
    t0 = theta0_value(model)
    inside = grid[(grid > 0) & (grid < t0)]
    ratio = np.array([model.nu(t) / t for t in inside])
    for (ta, ra), (tb, rb) in zip(zip(inside, ratio), zip(inside[1:], ratio[1:])):
        if not rb < ra:
            failures.append(f"nu/theta not decreasing between {ta:g} and {tb:g}")
    return TestReport(
        name="convexity",
        statistic=float(d2.min()) if d2.size else math.nan,
        p_value=None,
        sizes=(int(grid.size),),
        params={"min_nu_second": float(d2.min()) if d2.size else math.nan,
                "decreasing_points": int(inside.size)},
        alpha=0.0,
        passed=not failures,
        notes=failures,
    )
