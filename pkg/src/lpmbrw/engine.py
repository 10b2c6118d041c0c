"""Generation-synchronous BRW simulation and the particle functionals built on it.

Only the final generation's positions are kept. Earlier generations are
folded into per-generation summaries (maximum, additive martingale on a
declared theta grid, derivative martingale, population size) while the
simulation runs, so memory stays ``O(N_n)``.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from .accumulate import SignedLogSumAccumulator, logsumexp
from .errors import PopulationCapExceeded, RequiresFiniteTheta0
from .rng import as_generator

DEFAULT_CAP = 1 << 27


@dataclass
class Trajectory:
    """One simulated BRW run.

    Attributes
    ----------
    model : PointProcessModel
    n : int
        Number of generations simulated.
    positions : ndarray
        Positions ``S(v)`` of all generation-``n`` particles.
    rightmost : ndarray, shape (n + 1,)
        ``R_k`` for ``k = 0..n``.
    sizes : ndarray, shape (n + 1,)
        Population sizes ``N_k``.
    theta_grid : tuple
        Thetas for which ``log W_k(theta, nu(theta))`` was tracked.
    log_martingale : ndarray, shape (n + 1, len(theta_grid))
    derivative : ndarray or None
        ``D_k`` for ``k = 0..n`` when theta0 is finite and tracking was on.
    """

    model: object
    n: int
    positions: np.ndarray
    rightmost: np.ndarray
    sizes: np.ndarray
    theta_grid: tuple
    log_martingale: np.ndarray
    derivative: np.ndarray | None = None

    @property
    def population(self):
        return int(self.positions.size)

    def summary_rows(self):
        """One record per generation: ``k, N_k, R_k``, one ``logW`` per grid theta, ``D_k``."""
        rows = []
        for k in range(self.n + 1):
            row = {"k": k, "N_k": int(self.sizes[k]), "R_k": float(self.rightmost[k])}
            for j, t in enumerate(self.theta_grid):
                row[f"logW_{t!r}"] = float(self.log_martingale[k, j])
            row["D_k"] = float(self.derivative[k]) if self.derivative is not None else ""
            rows.append(row)
        return rows


def write_summary_csv(traj, path):
    rows = traj.summary_rows()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(rows[0]))
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row.values()])


def _derivative_value(positions, k, theta0, nu0):
    # D_k = -sum (x e^x), x = theta0 S - k nu0; positive and negative parts
    # are accumulated separately and differenced once
    x = theta0 * positions - k * nu0
    nz = x != 0
    x = x[nz]
    acc = SignedLogSumAccumulator()
    acc.add(np.log(np.abs(x)) + x, -np.sign(x))
    return acc.value


def simulate(model, n, rng, cap=DEFAULT_CAP, theta_grid=(), track_derivative=None):
    """Simulate ``n`` generations of the BRW driven by ``model``.

    Parameters
    ----------
    model : PointProcessModel
    n : int
    rng : RngStream or numpy Generator
    cap : int
        Hard limit on any generation's size; exceeding it raises
        :class:`PopulationCapExceeded` instead of truncating.
    theta_grid : sequence of float
        Thetas at which ``log W_k(theta, nu(theta))`` is recorded each
        generation. Must be declared up front.
    track_derivative : bool, optional
        Record ``D_k``. Defaults to on whenever theta0 is finite.
    """
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    if cap < 1:
        raise ValueError(f"cap must be >= 1, got {cap}")
    gen = as_generator(rng)
    grid = tuple(float(t) for t in theta_grid)
    nus = np.array([model.nu(t) for t in grid])
    res = model.theta0()
    if track_derivative is None:
        track_derivative = res.finite
    if track_derivative and not res.finite:
        raise RequiresFiniteTheta0("derivative martingale needs a finite theta0")

    rightmost = np.zeros(n + 1)
    sizes = np.ones(n + 1, dtype=np.int64)
    log_mart = np.zeros((n + 1, len(grid)))
    deriv = np.zeros(n + 1) if track_derivative else None

    b = model.deterministic_offspring
    pos = np.zeros(1)
    for k in range(1, n + 1):
        if b is not None:
            size = pos.size * b
            if size > cap:
                raise PopulationCapExceeded(k, size, cap)
            _, disp = model.sample_children(gen, pos.size)
            pos = (pos[:, None] + disp.reshape(-1, b)).ravel()
        else:
            counts, disp = _sample_with_cap(model, gen, pos.size, k, cap)
            pos = np.repeat(pos, counts) + disp
        rightmost[k] = pos.max()
        sizes[k] = pos.size
        for j, (t, nu) in enumerate(zip(grid, nus)):
            log_mart[k, j] = logsumexp(t * pos) - k * nu
        if track_derivative:
            deriv[k] = _derivative_value(pos, k, res.theta0, res.nu_theta0)
    return Trajectory(model=model, n=n, positions=pos, rightmost=rightmost, sizes=sizes,
                      theta_grid=grid, log_martingale=log_mart, derivative=deriv)


def _sample_with_cap(model, gen, n_parents, k, cap):
    counts = model.spec.offspring.sample(gen, n_parents)
    size = int(counts.sum())
    if size > cap:
        raise PopulationCapExceeded(k, size, cap)
    return counts, model.spec.displacement.sample(gen, size)


def expected_population(model, n):
    """``E[N_n] = E[N]^n`` (exact for deterministic offspring)."""
    b = model.deterministic_offspring
    if b is not None:
        return b ** n
    return model.mean_offspring ** n


# --------------------------------------------------------------------------
# functionals of the final generation
# --------------------------------------------------------------------------


def linear_statistic(traj, a, b=0.0):
    """``log W_n(a, b) = log sum_v exp(a S(v) - n b)``.

    Returns ``(sign, log_value)``; the sign is always +1. Re-centering uses
    ``W_n(a, b) = W_n(a, 0) e^{-n b}`` without re-summing.
    """
    return 1, logsumexp(a * traj.positions) - traj.n * b


def log_w(traj, theta):
    """Shorthand for ``log W_n(theta, 0)``."""
    return linear_statistic(traj, theta)[1]


def derivative_martingale(traj, theta0, nu0):
    """``D_n = -sum_v (theta0 S(v) - n nu0) exp(theta0 S(v) - n nu0)``."""
    if theta0 is None or not math.isfinite(theta0):
        raise RequiresFiniteTheta0("derivative martingale needs a finite theta0")
    return _derivative_value(traj.positions, traj.n, theta0, nu0)


def weighted_sum_Y(traj, theta, mu, rng):
    """``log Y_n^mu(theta) = log sum_v exp(theta S(v)) Y_v`` with fresh ``Y_v ~ mu``."""
    gen = as_generator(rng)
    log_y = mu.log_sample(gen, traj.positions.size)
    return logsumexp(theta * traj.positions + log_y)


def rightmost(traj):
    return float(traj.positions.max())


def max_weight_fraction(traj, theta):
    """``M_n(theta) = exp(theta R_n) / W_n(theta)``, the largest normalized weight."""
    return math.exp(theta * rightmost(traj) - log_w(traj, theta))


# --------------------------------------------------------------------------
# growth regimes of W_n(a, b)
# --------------------------------------------------------------------------


def predicted_trend(model, a, b):
    """Almost-sure limit of ``W_n(a, b)`` for ``a > 0``.

    Returns ``(case, trend)`` with ``case`` one of ``"i"``..``"v"`` and
    ``trend`` one of ``"zero"``, ``"finite"``, ``"infinite"``.
    """
    if not a > 0:
        raise ValueError("a must be positive")
    res = model.theta0()
    t0 = res.theta0 if res.finite else math.inf
    if a < t0:
        nu_a = model.nu(a)
        if math.isclose(b, nu_a, rel_tol=1e-12, abs_tol=1e-12):
            return "ii", "finite"
        return ("i", "zero") if b > nu_a else ("iii", "infinite")
    speed = res.nu_theta0 / res.theta0
    return ("iv", "zero") if b >= a * speed else ("v", "infinite")


def growth_diagnostics(trajectories, theta_grid):
    """Tabulate ``log W_n(theta) / (n theta)`` against its almost-sure limit.

    ``trajectories`` may hold trajectories of different lengths; one row is
    produced per (trajectory, theta) with ``n >= 1``.
    """
    rows = []
    for traj in trajectories:
        if traj.n < 1:
            continue
        model = traj.model
        res = model.theta0()
        for theta in theta_grid:
            value = log_w(traj, theta) / (traj.n * theta)
            if res.finite and theta >= res.theta0:
                limit = res.nu_theta0 / res.theta0
            else:
                limit = model.nu(theta) / theta
            rows.append({"n": traj.n, "theta": float(theta), "value": value, "limit": limit})
    return rows
