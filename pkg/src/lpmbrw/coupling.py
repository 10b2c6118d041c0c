"""The max/linear coupling of the last-progeny-modified BRW.

Adding ``(1/theta) log(Y_v / E_v)`` to every generation-``n`` particle and
taking the maximum gives the same law as ``(1/theta)(log Y_n - log E)`` where
``Y_n = sum_v exp(theta S(v)) Y_v``. This module samples both sides, the
one-step max/linear/link operators they are built from, and the extremal
point-process views used by the Poisson-limit checks.
"""

import csv
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .accumulate import logsumexp
from .engine import log_w
from .errors import InvalidRegime, NumericFailure, RequiresFiniteTheta0
from .laws import MuLaw
from .model import Regime, classify_theta
from .rng import as_generator

DELTA1 = MuLaw.delta(1.0)


class Method(str, Enum):
    DIRECT = "direct"
    COUPLED = "coupled"


class Centering(str, Enum):
    BY_LOG_W = "log_w"
    BY_DRIFT = "drift"
    BY_DRIFT_BOUNDARY = "drift_boundary"


@dataclass
class LpmSample:
    """One draw of ``R_n^*(theta, mu)``."""

    value: float
    method: Method
    n: int
    theta: float
    log_y: float | None = None
    log_w: float | None = None


@dataclass
class AtomSet:
    """Top-``k`` atoms of a centered extremal point process, sorted descending."""

    values: np.ndarray
    centering: str
    n: int
    theta: float
    replication_id: int | None = None

    @property
    def k(self):
        return int(self.values.size)


# --------------------------------------------------------------------------
# link operator and LPM maxima
# --------------------------------------------------------------------------


def link_sample(mu, rng, size=None):
    """Draw ``log Y - log E`` with ``Y ~ mu`` and ``E ~ Exp(1)`` independent."""
    gen = as_generator(rng)
    m = 1 if size is None else size
    out = mu.log_sample(gen, m) - np.log(gen.standard_exponential(m))
    return float(out[0]) if size is None else out


def lpm_max_direct(traj, theta, mu=DELTA1, rng=None, companions=False):
    """Maximum of ``S(v) + (1/theta)(log Y_v - log E_v)`` over the final generation.

    ``Y_v`` are drawn first, in particle order, then ``E_v``. With
    ``companions=True`` the same ``Y_v`` also give ``log Y_n^mu(theta)``.
    """
    if not theta > 0:
        raise ValueError(f"theta must be positive, got {theta}")
    gen = as_generator(rng)
    pos = traj.positions
    log_y = mu.log_sample(gen, pos.size)
    log_e = np.log(gen.standard_exponential(pos.size))
    value = float(np.max(pos + (log_y - log_e) / theta))
    sample = LpmSample(value, Method.DIRECT, traj.n, theta)
    if companions:
        sample.log_y = logsumexp(theta * pos + log_y)
        sample.log_w = log_w(traj, theta)
    return sample


def lpm_max_coupled(traj, theta, mu=DELTA1, rng=None, companions=False):
    """``(1/theta)(log Y_n^mu(theta) - log E)`` with a single fresh ``E``."""
    if not theta > 0:
        raise ValueError(f"theta must be positive, got {theta}")
    gen = as_generator(rng)
    pos = traj.positions
    if mu.is_delta:
        ly = math.log(mu.c) + log_w(traj, theta)
    else:
        ly = logsumexp(theta * pos + mu.log_sample(gen, pos.size))
    value = (ly - math.log(gen.standard_exponential())) / theta
    sample = LpmSample(value, Method.COUPLED, traj.n, theta)
    if companions:
        sample.log_y = ly
        sample.log_w = log_w(traj, theta)
    return sample


# --------------------------------------------------------------------------
# one-step operators on laws, represented by samplers gen, size -> array
# --------------------------------------------------------------------------


def operator_step(kind, model, input_sampler, rng, size=None):
    """One draw (or ``size`` draws) of a max or smoothing step.

    ``kind="max"`` returns ``max_j (xi_j + X_j)``; ``kind="linear"`` returns
    ``sum_j exp(xi_j) Y_j``. Each draw uses a fresh realization of ``Z`` and
    fresh i.i.d. inputs from ``input_sampler(gen, count)``.
    """
    gen = as_generator(rng)
    m = 1 if size is None else int(size)
    counts, xs = model.sample_children(gen, m)
    inputs = np.asarray(input_sampler(gen, xs.size), dtype=float)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    if kind == "max":
        out = np.maximum.reduceat(xs + inputs, starts)
    elif kind == "linear":
        if np.any(inputs < 0):
            raise ValueError("smoothing step needs non-negative inputs")
        out = np.add.reduceat(np.exp(xs) * inputs, starts)
    else:
        raise ValueError(f"unknown operator kind {kind!r}")
    return float(out[0]) if size is None else out


def max_sampler(model, inner):
    """Sampler for ``M_Z(eta)`` given a sampler for ``eta``."""
    return lambda gen, size: operator_step("max", model, inner, gen, size)


def linear_sampler(model, inner):
    """Sampler for ``L_Z(mu)`` given a sampler for ``mu``."""
    return lambda gen, size: operator_step("linear", model, inner, gen, size)


def mu_sampler(mu):
    return lambda gen, size: mu.sample(gen, size)


def link_sampler(mu):
    """Sampler for the link law ``E(mu)`` = law of ``log(Y / E)``."""
    return lambda gen, size: link_sample(mu, gen, size)


def link_of(sampler):
    """Sampler for ``E(law)`` where ``law`` is given by a positive sampler."""
    def draw(gen, size):
        y = sampler(gen, size)
        return np.log(y) - np.log(gen.standard_exponential(size))
    return draw


def iterate(step, model, base, times):
    """Compose ``step`` (``max_sampler`` or ``linear_sampler``) ``times`` times."""
    s = base
    for _ in range(times):
        s = step(model, s)
    return s


# --------------------------------------------------------------------------
# point-process views
# --------------------------------------------------------------------------


def rescale_atoms(atoms, a, b):
    """Map every atom ``z`` to ``a z - b`` (``a >= 0`` keeps the order)."""
    if a < 0:
        raise ValueError(f"scale must be >= 0, got {a}")
    if isinstance(atoms, AtomSet):
        return AtomSet(a * atoms.values - b, atoms.centering, atoms.n, atoms.theta,
                       atoms.replication_id)
    return AtomSet(a * np.asarray(atoms, dtype=float) - b, "rescaled", 0, math.nan)


def _top_k_desc(values, k):
    k = min(k, values.size)
    idx = np.argpartition(-values, k - 1)[:k] if k < values.size else np.arange(values.size)
    # ties broken by particle index
    idx = idx[np.lexsort((idx, -values[idx]))]
    top = values[idx].copy()
    for i in range(1, top.size):
        if top[i] >= top[i - 1]:
            top[i] = np.nextafter(top[i - 1], -np.inf)
    return top


def centering_offset(traj, theta, centering):
    centering = Centering(centering)
    if centering is Centering.BY_LOG_W:
        return log_w(traj, theta)
    if centering is Centering.BY_DRIFT:
        return traj.n * traj.model.nu(theta)
    res = traj.model.theta0()
    if not res.finite:
        raise RequiresFiniteTheta0("boundary centering needs a finite theta0")
    if not math.isclose(theta, res.theta0, rel_tol=1e-6):
        raise InvalidRegime(f"boundary centering needs theta = theta0 = {res.theta0}")
    shift = 0.5 * math.log(traj.n) if traj.n > 0 else 0.0
    return traj.n * res.nu_theta0 - shift


def extremal_atoms(traj, theta, rng, k, centering=Centering.BY_LOG_W, replication_id=None):
    """Top ``k`` of ``theta S(v) - log E_v - c`` with fresh ``E_v`` (``mu = delta_1``)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    gen = as_generator(rng)
    offset = centering_offset(traj, theta, centering)
    vals = theta * traj.positions - np.log(gen.standard_exponential(traj.positions.size))
    return AtomSet(_top_k_desc(vals - offset, k), Centering(centering).value, traj.n,
                   float(theta), replication_id)


def poisson_transform(traj, theta, rng, k):
    """Smallest ``k`` of ``E_v W_n(theta) exp(-theta S(v))``, ascending.

    Conditionally on the tree these are independent exponentials with rates
    ``exp(theta S(v)) / W_n(theta)`` summing to one.
    """
    gen = as_generator(rng)
    pos = traj.positions
    lw = log_w(traj, theta)
    log_rates = theta * pos - lw
    total = float(np.sum(np.exp(log_rates)))
    if abs(total - 1.0) >= 1e-9:
        raise NumericFailure(f"Poisson rates sum to {total!r}")
    vals = np.log(gen.standard_exponential(pos.size)) - log_rates
    k = min(k, pos.size)
    part = np.partition(vals, k - 1)[:k] if k < pos.size else vals
    return np.exp(np.sort(part))


def rde_one_step(delta_samples, model, theta, rng, size=None):
    """Apply ``Delta -> sum_{|v|=1} exp(theta S(v) - nu(theta)) Delta_v`` once.

    ``Delta_v`` are bootstrap draws from ``delta_samples``.
    """
    if classify_theta(model, theta).regime is not Regime.BELOW:
        raise InvalidRegime("the linear fixed-point equation needs theta < theta0")
    pool = np.asarray(delta_samples, dtype=float)
    if pool.size == 0 or np.any(pool <= 0):
        raise ValueError("delta_samples must be non-empty and positive")
    nu = model.nu(theta)

    def resample(gen, count):
        return pool[gen.integers(0, pool.size, count)]

    gen = as_generator(rng)
    m = 1 if size is None else int(size)
    counts, xs = model.sample_children(gen, m)
    inputs = resample(gen, xs.size)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    out = np.add.reduceat(np.exp(theta * xs - nu) * inputs, starts)
    return float(out[0]) if size is None else out


def write_atoms_csv(atom_sets, path):
    """Rows ``(rank, atom_value, centering, n, theta, replication_id)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rank", "atom_value", "centering", "n", "theta", "replication_id"])
        for s in atom_sets:
            for rank, v in enumerate(s.values, start=1):
                w.writerow([rank, repr(float(v)), s.centering, s.n, repr(float(s.theta)),
                            "" if s.replication_id is None else s.replication_id])
