import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special, stats
from sklearn.base import clone

from lpmbrw.errors import DegenerateSample, TooFewPoints, TooFewSamples
from lpmbrw.inference import (EULER_GAMMA, GumbelMomentEstimator, LogCorrectionRegressor,
                              SlopeFit, exponential_cdf, fit_gumbel, fit_log_correction,
                              gumbel_cdf, intervals_disjoint, kolmogorov_sf, ks_one_sample,
                              ks_two_sample, spacing_exponentiality, spacings)
from lpmbrw.reports import TestReport


class TestKolmogorovSeries:
    @pytest.mark.parametrize("x", [0.3, 0.5, 0.8, 1.0, 1.36, 1.95, 3.0])
    def test_matches_scipy(self, x):
        assert kolmogorov_sf(x) == pytest.approx(special.kolmogorov(x), abs=1e-10)

    def test_small_argument(self):
        assert kolmogorov_sf(0.1) == 1.0
        assert special.kolmogorov(0.2) == pytest.approx(1.0, abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0.2, 5.0), st.floats(0.2, 5.0))
    def test_monotone(self, a, b):
        lo, hi = sorted((a, b))
        assert kolmogorov_sf(lo) >= kolmogorov_sf(hi)


class TestKsOneSample:
    def test_gumbel_cdf_value(self):
        assert gumbel_cdf(0.0) == pytest.approx(math.exp(-1))

    def test_statistic_matches_scipy(self):
        x = np.random.default_rng(0).gumbel(size=500)
        rep = ks_one_sample(x, gumbel_cdf)
        assert rep.statistic == pytest.approx(stats.kstest(x, "gumbel_r").statistic, abs=1e-12)

    def test_null_passes(self):
        x = -np.log(np.random.default_rng(1).standard_exponential(10_000))
        rep = ks_one_sample(x, gumbel_cdf)
        assert rep.passed and rep.p_value >= 0.001
        assert rep.sizes == (10_000,)

    def test_constant_fails(self):
        rep = ks_one_sample(np.zeros(100), gumbel_cdf)
        assert rep.statistic >= 0.5 and not rep.passed

    def test_too_few(self):
        with pytest.raises(TooFewSamples):
            ks_one_sample(np.arange(7.0), gumbel_cdf)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(-20, 20), min_size=8, max_size=200))
    def test_statistic_in_unit_interval(self, xs):
        rep = ks_one_sample(xs, gumbel_cdf)
        assert 0 <= rep.statistic <= 1 and 0 <= rep.p_value <= 1
        assert rep.passed == (rep.p_value >= rep.alpha)


class TestKsTwoSample:
    def test_statistic_matches_scipy(self):
        g = np.random.default_rng(2)
        a, b = g.normal(size=300), g.normal(0.1, size=450)
        assert ks_two_sample(a, b).statistic == pytest.approx(stats.ks_2samp(a, b).statistic,
                                                              abs=1e-12)

    def test_identical(self):
        a = np.random.default_rng(3).normal(size=50)
        rep = ks_two_sample(a, a)
        assert rep.statistic == 0 and rep.passed

    def test_shifted(self):
        a = np.random.default_rng(4).normal(size=500)
        rep = ks_two_sample(a + 10, a)
        assert rep.p_value < 1e-6 and not rep.passed

    def test_too_few(self):
        with pytest.raises(TooFewSamples):
            ks_two_sample(np.arange(7.0), np.arange(20.0))

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-5, 5), min_size=8, max_size=60),
           st.lists(st.floats(-5, 5), min_size=8, max_size=60))
    def test_symmetric(self, a, b):
        assert ks_two_sample(a, b).statistic == ks_two_sample(b, a).statistic


class TestGumbelFit:
    def test_standard(self):
        x = -np.log(np.random.default_rng(5).standard_exponential(100_000))
        loc, scale, rep = fit_gumbel(x)
        assert abs(loc) < 0.02 and abs(scale - 1) < 0.02
        assert rep.params == {"location": loc, "scale": scale}

    def test_moment_formulas(self):
        x = np.random.default_rng(6).normal(size=500)
        est = GumbelMomentEstimator().fit(x)
        s = np.std(x, ddof=1)
        assert est.scale_ == pytest.approx(s * math.sqrt(6) / math.pi)
        assert est.location_ == pytest.approx(x.mean() - EULER_GAMMA * est.scale_)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.1, 10), st.floats(-10, 10))
    def test_affine_equivariance(self, c, d):
        x = np.random.default_rng(7).gumbel(size=300)
        loc, scale, _ = fit_gumbel(x)
        loc2, scale2, _ = fit_gumbel(c * x + d)
        assert scale2 == pytest.approx(c * scale, rel=1e-9)
        assert loc2 == pytest.approx(c * loc + d, rel=1e-9, abs=1e-9)

    def test_constant(self):
        with pytest.raises(DegenerateSample):
            fit_gumbel(np.ones(200))

    def test_too_few(self):
        with pytest.raises(TooFewSamples):
            fit_gumbel(np.arange(50.0))

    def test_estimator_api(self):
        est = GumbelMomentEstimator(alpha=0.01)
        assert est.get_params() == {"alpha": 0.01, "min_samples": 100}
        x = np.random.default_rng(8).gumbel(2.0, 3.0, size=2000)
        est.fit(x.reshape(-1, 1))
        z = est.transform(x)
        assert np.allclose(z, (x - est.location_) / est.scale_)
        assert np.all(np.diff(est.cdf(np.sort(x))) >= 0)
        dens = np.exp(est.score_samples(np.array([est.location_])))
        assert dens[0] == pytest.approx(math.exp(-1) / est.scale_)
        assert clone(est).get_params() == est.get_params()


class TestLogCorrection:
    def test_exact_recovery(self):
        ns = [6, 8, 10, 12, 14, 16, 18, 20]
        fit = fit_log_correction({n: 0.7 - 0.42466 * math.log(n) for n in ns}, -0.42466)
        assert fit.slope == pytest.approx(-0.42466, abs=1e-12)
        assert fit.intercept == pytest.approx(0.7, abs=1e-12)
        assert fit.slope_se == pytest.approx(0, abs=1e-12)
        assert fit.within(1e-9)

    def test_against_scipy(self):
        g = np.random.default_rng(9)
        ns = np.array([6, 8, 10, 12, 14, 16, 18, 20])
        y = 1 - 1.27 * np.log(ns) + g.normal(0, 0.05, ns.size)
        fit = fit_log_correction(dict(zip(ns.tolist(), y)))
        ref = stats.linregress(np.log(ns), y)
        assert fit.slope == pytest.approx(ref.slope, rel=1e-10)
        assert fit.slope_se == pytest.approx(ref.stderr, rel=1e-10)
        lo, hi = fit.ci()
        q = stats.t.ppf(0.975, ns.size - 2)
        assert hi - lo == pytest.approx(2 * q * ref.stderr, rel=1e-10)

    def test_too_few(self):
        with pytest.raises(TooFewPoints):
            fit_log_correction({6: 1.0, 8: 2.0, 10: 3.0})

    def test_regressor(self):
        reg = LogCorrectionRegressor(known_slope=0.0)
        ns = np.array([4, 8, 16, 32])
        reg.fit(ns.reshape(-1, 1), 2 + 0.5 * np.log(ns))
        assert reg.predict([64])[0] == pytest.approx(2 + 0.5 * math.log(64))
        assert reg.score(ns, 2 + 0.5 * np.log(ns)) == pytest.approx(1.0)

    def test_disjoint(self):
        a = SlopeFit(0.0, 0, 0.01, 0, 8)
        b = SlopeFit(-0.4, 0, 0.01, 0, 8)
        c = SlopeFit(-0.41, 0, 0.05, 0, 8)
        assert intervals_disjoint([a, b])
        assert not intervals_disjoint([a, b, c])


class TestSpacings:
    def test_gaps(self):
        assert spacings([1.0, 1.5, 4.0]).tolist() == [1.0, 0.5, 2.5]

    def test_unit_poisson_passes(self):
        g = np.random.default_rng(10)
        pts = np.cumsum(g.standard_exponential((2000, 10)), axis=1)
        rep = spacing_exponentiality(pts)
        assert rep.passed

    def test_rate_two_fails(self):
        g = np.random.default_rng(11)
        pts = np.cumsum(g.exponential(0.5, (2000, 10)), axis=1)
        assert not spacing_exponentiality(pts).passed

    def test_needs_two(self):
        with pytest.raises(TooFewSamples):
            spacing_exponentiality([[1.0]])

    def test_exponential_cdf(self):
        assert exponential_cdf(-1.0) == 0
        assert exponential_cdf(1.0) == pytest.approx(1 - math.exp(-1))


class TestReportJson:
    def test_roundtrip(self):
        rep = ks_one_sample(np.random.default_rng(12).gumbel(size=50), gumbel_cdf, name="x")
        d = rep.to_json_dict()
        assert {"name", "statistic", "p_value", "params", "alpha", "pass"} <= set(d)
        assert TestReport.from_json_dict(d) == rep

    def test_reproducible(self):
        x = np.random.default_rng(13).gumbel(size=300)
        assert fit_gumbel(x)[2].to_json_dict() == fit_gumbel(x.copy())[2].to_json_dict()
