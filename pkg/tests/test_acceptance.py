"""Acceptance criteria, each at its stated size and tolerance.

Every test records one PASS/FAIL line, printed in the terminal summary
under "acceptance criteria". All Monte Carlo uses one fixed seed.
"""

import math
import os
import time

import pytest

from lpmbrw.coupling import iterate, linear_sampler, link_of, link_sampler, max_sampler, mu_sampler
from lpmbrw.engine import linear_statistic, rightmost, simulate
from lpmbrw.experiments import (ExperimentConfig, _draw_chunks, conditional_coupling_samples,
                                default_config, run_experiment)
from lpmbrw.inference import gumbel_cdf, ks_one_sample, ks_two_sample
from lpmbrw.laws import MuLaw
from lpmbrw.model import make_model, sigma_sq, solve_theta0
from lpmbrw.rng import RngStream, stable_stream_id

from conftest import BINARY_GAUSSIAN, PLUS_MINUS, record_acceptance

SEED = 20261017
ALPHA = 0.001
UNIFORM_MU = MuLaw.uniform(0.5, 1.5)

pytestmark = pytest.mark.acceptance


def finish(number, checks, elapsed, limit):
    """Record the verdict line and fail the test if any check failed."""
    timing_ok = elapsed < limit
    parts = [f"{name}={'ok' if ok else 'FAIL'} ({info})" for name, ok, info in checks]
    parts.append(f"runtime={elapsed:.1f}s<{limit:g}s {'ok' if timing_ok else 'FAIL'}")
    passed = all(ok for _, ok, _ in checks) and timing_ok
    record_acceptance(number, passed, "; ".join(parts))
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'}")
    assert passed, "; ".join(parts)


def from_reports(reports, prefix):
    sel = [r for r in reports if r.name.startswith(prefix)]
    assert sel, f"no report named {prefix!r}"
    return [(r.name, r.passed, f"stat={r.statistic:.4g}"
             + ("" if r.p_value is None else f" p={r.p_value:.3g}")) for r in sel]


def test_c01_constants():
    t = time.perf_counter()
    bg = make_model(BINARY_GAUSSIAN)
    res = solve_theta0(bg)
    t0_err = abs(res.theta0 - math.sqrt(2 * math.log(2)))
    s_an = sigma_sq(bg, method="analytic")
    s_mc = sigma_sq(bg, mc_samples=5_000_000, rng=RngStream(SEED, 1), method="mc")
    pm = solve_theta0(make_model(PLUS_MINUS))
    elapsed = time.perf_counter() - t
    target = 2 * math.log(2)
    finish(1, [
        ("theta0", t0_err < 1e-8, f"err={t0_err:.2e}"),
        ("sigma2_analytic", abs(s_an - target) < 1e-6, f"err={abs(s_an - target):.2e}"),
        ("sigma2_mc", abs(s_mc / target - 1) < 0.01, f"rel={abs(s_mc / target - 1):.2e}"),
        ("plus_minus_unbounded", not pm.finite and pm.search_max == 64, repr(pm)),
    ], elapsed, 1.0)


def test_c02_exact_algebra():
    t = time.perf_counter()
    pm = make_model(PLUS_MINUS)
    worst, r_ok = 0.0, True
    for n in range(21):
        tree = simulate(pm, n, RngStream(SEED, n), track_derivative=False)
        r_ok &= rightmost(tree) == n
        for theta in (0.25, 1.0, 2.0):
            exact = n * math.log(2 * math.cosh(theta))
            got = linear_statistic(tree, theta)[1]
            worst = max(worst, abs(got - exact) / max(abs(exact), 1e-300))
    elapsed = time.perf_counter() - t
    finish(2, [("log_w", worst < 1e-10, f"max rel err={worst:.2e}"),
               ("rightmost", r_ok, "R_n = n")], elapsed, 10.0)


def test_c03_conditional_coupling():
    t = time.perf_counter()
    bg = make_model(BINARY_GAUSSIAN)
    tree = simulate(bg, 10, RngStream(SEED, stable_stream_id("c03", "tree")),
                    track_derivative=False)
    checks = []
    for theta in (0.5, solve_theta0(bg).theta0):
        x = conditional_coupling_samples(tree, theta, RngStream(SEED, stable_stream_id("c03", theta)),
                                         10_000)
        rep = ks_one_sample(x, gumbel_cdf, alpha=ALPHA)
        checks.append((f"theta={theta:.4g}", rep.passed, f"p={rep.p_value:.3g}"))
    finish(3, checks, time.perf_counter() - t, 30.0)


def test_c04_distributional_coupling():
    cfg = default_config("coupling_check")
    cfg.options.update(conditional_samples=0, operator_n=[])
    res = run_experiment(cfg)
    finish(4, from_reports(res.reports, "direct vs coupled"), res.elapsed, 300.0)


def test_c05_operator_identity():
    t = time.perf_counter()
    bg = make_model(BINARY_GAUSSIAN)
    checks = []
    for k in (1, 2):
        lhs = iterate(max_sampler, bg, link_sampler(UNIFORM_MU), k)
        rhs = link_of(iterate(linear_sampler, bg, mu_sampler(UNIFORM_MU), k))
        a = _draw_chunks(lhs, RngStream(SEED, stable_stream_id("c05", "max", k)), 100_000)
        b = _draw_chunks(rhs, RngStream(SEED, stable_stream_id("c05", "linear", k)), 100_000)
        rep = ks_two_sample(a, b, alpha=ALPHA)
        checks.append((f"n={k}", rep.passed, f"D={rep.statistic:.4g} p={rep.p_value:.3g}"))
    finish(5, checks, time.perf_counter() - t, 60.0)


def test_c06_slln():
    res = run_experiment(default_config("slln"))
    checks = [(f"theta={r['theta']:.4g}", abs(r["median"] - r["target"]) <= 0.2,
               f"median={r['median']:.4f} target={r['target']:.4f}")
              for r in res.tables["slln"]]
    finish(6, checks, res.elapsed, 600.0)


def test_c07_log_correction():
    res = run_experiment(default_config("log_correction"))
    checks = []
    for f in res.tables["log_correction_fits"]:
        if f["regime"] == "below":
            ok = abs(f["slope"]) < 0.15
        else:
            ok = abs(f["slope"] - f["target"]) <= 0.25 * abs(f["target"])
        checks.append((f["regime"], ok, f"slope={f['slope']:.4f} target={f['target']:.4f} "
                                        f"CI=({f['ci_low']:.3f}, {f['ci_high']:.3f})"))
    disjoint = [r for r in res.reports if r.name == "regime slope intervals disjoint"][0]
    checks.append(("CIs disjoint", disjoint.passed, ""))
    finish(7, checks, res.elapsed, 1800.0)


@pytest.fixture(scope="module")
def centered():
    return run_experiment(default_config("centered_limit"))


def test_c08_aidekon_shi(centered):
    row = [r for r in centered.tables["centered_limit"] if r["regime"] == "boundary"][0]
    target = math.sqrt(2 / (math.pi * 2 * math.log(2)))
    rel = abs(row["ratio_median"] / target - 1)
    finish(8, [("ratio", row["n"] == 16 and rel <= 0.15,
                f"median={row['ratio_median']:.4f} target={target:.4f} rel={rel:.3f}")],
           centered.elapsed, 600.0)


def test_c09_y_over_w(centered):
    row = [r for r in centered.tables["centered_limit"] if r["theta"] == 0.5][0]
    rel = abs(row["yw_median"] - 1.0)
    finish(9, [("Y/W", row["n"] == 16 and rel <= 0.02,
                f"median={row['yw_median']:.4f}")], centered.elapsed, 300.0)


def test_c10_poisson_limit():
    res = run_experiment(default_config("point_process"))
    checks = from_reports(res.reports, "spacings") + from_reports(res.reports, "top atom gumbel")
    finish(10, checks, res.elapsed, 600.0)


def test_c11_rde_fixed_point():
    res = run_experiment(default_config("rde_check"))
    checks = (from_reports(res.reports, "rde fixed point")
              + from_reports(res.reports, "martingale mean"))
    finish(11, checks, res.elapsed, 300.0)


def test_c12_reproducibility(tmp_path):
    t = time.perf_counter()
    cfgs = [
        ExperimentConfig("log_correction", thetas=[0.5, "theta0", 3.0], n=[6, 8, 10, 12],
                         replications=400, seed=SEED),
        ExperimentConfig("centered_limit", thetas=[0.5, "theta0"], n=[10], replications=300,
                         mu={"kind": "uniform", "lo": 0.5, "hi": 1.5}, seed=SEED),
        ExperimentConfig("coupling_check", thetas=[0.5], n=[6], replications=300, seed=SEED,
                         options={"operator_samples": 5000, "conditional_samples": 1000}),
    ]
    checks = []
    for cfg in cfgs:
        blobs = []
        for run, threads in (("a", 1), ("b", 1), ("c", 2)):
            d = tmp_path / f"{cfg.kind}-{run}"
            cfg.output_dir = str(d)
            run_experiment(cfg, threads=threads)
            blobs.append({f: (d / f).read_bytes() for f in sorted(os.listdir(d))
                          if f.endswith((".csv", ".json")) and f != "config.json"})
        same = blobs[0] == blobs[1] == blobs[2] and len(blobs[0]) >= 3
        checks.append((cfg.kind, same, f"{len(blobs[0])} files, threads 1/1/2"))
    finish(12, checks, time.perf_counter() - t, math.inf)
