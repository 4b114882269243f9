import math

import numpy as np
import pytest

from gcds import simdata as sd


class TestModelConstruction:
    def test_dims(self):
        dims = {"m1": (5, 1), "m2": (5, 1), "m3": (30, 1), "m4": (1, 1), "helix": (1, 2)}
        for mid, (d, q) in dims.items():
            m = sd.make_model(mid)
            assert (m.d, m.q) == (d, q)

    def test_unknown_id(self):
        with pytest.raises(ValueError):
            sd.make_model("m9")

    def test_helix_sigma(self):
        assert sd.make_model("helix").noise_sigma == 0.6
        assert sd.make_model("helix", noise_sigma=0.2).noise_sigma == 0.2
        with pytest.raises(ValueError):
            sd.make_model("helix", noise_sigma=0.0)
        with pytest.raises(ValueError):
            sd.make_model("m1", noise_sigma=0.5)


class TestGenerate:
    @pytest.mark.parametrize("mid", sd.MODEL_IDS)
    def test_shapes_and_determinism(self, mid):
        m = sd.make_model(mid)
        a = sd.generate(m, 50, seed=3)
        b = sd.generate(m, 50, seed=3)
        c = sd.generate(m, 50, seed=4)
        assert a.X.shape == (50, m.d) and a.Y.shape == (50, m.q)
        assert np.array_equal(a.X, b.X) and np.array_equal(a.Y, b.Y)
        assert not np.array_equal(a.Y, c.Y)
        tag = ":sigma=0.6" if mid == "helix" else ""
        assert a.provenance == f"{mid}{tag}:n=50:seed=3"

    def test_m1_residuals_are_standard_normal(self):
        m = sd.make_model("m1")
        ds = sd.generate(m, 200_000, seed=0)
        resid = ds.Y[:, 0] - sd.true_mean(m, ds.X)
        assert abs(resid.mean()) < 0.02
        assert abs(resid.std() - 1.0) < 0.02

    def test_m2_scaled_residuals_are_standard_normal(self):
        m = sd.make_model("m2")
        ds = sd.generate(m, 200_000, seed=1)
        z = (ds.Y[:, 0] - sd.true_mean(m, ds.X)) / (
            0.5 + ds.X[:, 1] ** 2 / 2.0 + ds.X[:, 4] ** 2 / 2.0
        )
        assert abs(z.mean()) < 0.02
        assert abs(z.std() - 1.0) < 0.02

    def test_m4_mixture_structure(self):
        m = sd.make_model("m4")
        ds = sd.generate(m, 100_000, seed=2)
        signed = ds.Y[:, 0] / np.where(ds.X[:, 0] == 0.0, 1.0, ds.X[:, 0])
        # half the draws track +x, half track -x
        frac = np.mean(signed > 0)
        assert abs(frac - 0.5) < 0.01


class TestMoments:
    def test_m1_pinned_point(self):
        m = sd.make_model("m1")
        x = np.zeros(5)
        assert sd.true_mean(m, x) == pytest.approx(1.0, abs=1e-12)
        assert sd.true_sd(m, x) == 1.0

    def test_m2_pinned_point(self):
        m = sd.make_model("m2")
        x = np.ones(5)
        assert sd.true_mean(m, x) == pytest.approx(1.0 + math.exp(4.0 / 3.0), abs=1e-12)
        assert sd.true_sd(m, x) == pytest.approx(1.5, abs=1e-12)

    def test_m3_pinned_point(self):
        m = sd.make_model("m3")
        x = np.zeros(30)
        assert sd.true_mean(m, x) == pytest.approx(8.7427, abs=5e-5)
        assert sd.true_sd(m, x) == pytest.approx(5.0 * 1.77354, abs=5e-5)

    def test_m4_pinned_point(self):
        m = sd.make_model("m4")
        x = np.array([2.0])
        assert sd.true_mean(m, x) == pytest.approx(0.0, abs=1e-12)
        assert sd.true_sd(m, x) == pytest.approx(math.sqrt(4.0 + 0.0625), abs=1e-12)

    def test_helix_pinned_point(self):
        m = sd.make_model("helix")
        x = np.array([0.5])
        mean = sd.true_mean(m, x)
        assert mean.shape == (2,)
        # E[U sin 2U] = -1/2 and E[U cos 2U] = 0 over U ~ Unif[0, 2pi]
        assert mean[0] == pytest.approx(0.5, abs=1e-9)
        assert mean[1] == pytest.approx(1.0, abs=1e-9)

    def test_m3_against_mc_oracle(self):
        m = sd.make_model("m3")
        rng = np.random.default_rng(5)
        x = rng.standard_normal(30)
        n = 2_000_000
        s = 5.0 + x[0] ** 2 / 3.0 + x[1] ** 2 + x[2] ** 2 + x[3] + x[4]
        comp = rng.integers(0, 2, size=n)
        eps = rng.normal(np.where(comp == 0, -2.0, 2.0), 1.0)
        draws = s * np.exp(0.5 * eps)
        se_mean = draws.std() / math.sqrt(n)
        assert sd.true_mean(m, x) == pytest.approx(draws.mean(), abs=4 * se_mean)
        sd_mc = draws.std(ddof=1)
        assert abs(sd.true_sd(m, x) - sd_mc) / sd_mc < 0.01

    def test_vectorized_matches_scalar(self):
        for mid in ("m1", "m2", "m3", "m4"):
            m = sd.make_model(mid)
            rng = np.random.default_rng(1)
            pts = rng.standard_normal((4, m.d))
            vec = sd.true_mean(m, pts)
            for i in range(4):
                assert vec[i] == pytest.approx(sd.true_mean(m, pts[i]), abs=1e-12)
            vec_sd = sd.true_sd(m, pts)
            for i in range(4):
                assert vec_sd[i] == pytest.approx(sd.true_sd(m, pts[i]), abs=1e-12)


class TestCdfAndQuantile:
    def test_cdf_at_mean_is_half_for_gaussian_models(self):
        for mid in ("m1", "m2"):
            m = sd.make_model(mid)
            x = np.full(m.d, 0.3)
            mu = sd.true_mean(m, x)
            assert sd.true_cdf(m, x, mu) == pytest.approx(0.5, abs=1e-12)

    def test_gaussian_quantile_closed_form(self):
        m = sd.make_model("m2")
        x = np.full(5, -0.7)
        from scipy.stats import norm

        mu, sigma = sd.true_mean(m, x), sd.true_sd(m, x)
        for tau in (0.05, 0.5, 0.95):
            assert sd.true_quantile(m, x, tau) == pytest.approx(
                mu + sigma * norm.ppf(tau), abs=1e-10
            )

    @pytest.mark.parametrize("mid", ("m1", "m2", "m3", "m4"))
    def test_cdf_of_quantile_recovers_tau(self, mid):
        m = sd.make_model(mid)
        rng = np.random.default_rng(17)
        for _ in range(12):
            x = rng.standard_normal(m.d)
            tau = float(rng.uniform(0.02, 0.98))
            yq = sd.true_quantile(m, x, tau)
            assert abs(sd.true_cdf(m, x, yq) - tau) < 1e-8

    def test_m4_quantile_pinned(self):
        m = sd.make_model("m4")
        x = np.array([2.0])
        assert sd.true_quantile(m, x, 0.25) == pytest.approx(-2.0, abs=1e-2)
        assert sd.true_quantile(m, x, 0.75) == pytest.approx(2.0, abs=1e-2)

    def test_m3_cdf_handles_negative_signal(self):
        m = sd.make_model("m3")
        x = np.zeros(30)
        x[3] = -10.0  # drives s(x) negative
        # response is s * exp(...) < 0 almost surely
        assert sd.true_cdf(m, x, 0.0) == pytest.approx(1.0, abs=1e-12)
        tau = 0.3
        yq = sd.true_quantile(m, x, tau)
        assert yq < 0
        assert abs(sd.true_cdf(m, x, yq) - tau) < 1e-8

    def test_m4_cdf_against_mc(self):
        m = sd.make_model("m4")
        x = np.array([1.3])
        rng = np.random.default_rng(23)
        n = 1_000_000
        sign = np.where(rng.integers(0, 2, size=n) == 0, 1.0, -1.0)
        draws = sign * 1.3 + rng.normal(0.0, 0.25, size=n)
        for y in (-1.5, 0.0, 1.1):
            mc = np.mean(draws <= y)
            se = math.sqrt(mc * (1 - mc) / n)
            assert sd.true_cdf(m, x, y) == pytest.approx(mc, abs=5 * se + 1e-6)

    def test_vector_response_has_no_scalar_cdf(self):
        m = sd.make_model("helix")
        with pytest.raises(ValueError):
            sd.true_cdf(m, np.array([0.0]), 0.0)
        with pytest.raises(ValueError):
            sd.true_quantile(m, np.array([0.0]), 0.5)


class TestTruthFunctionals:
    def test_bundle_delegates(self):
        m = sd.make_model("m1")
        tf = sd.truth_functionals(m)
        x = np.zeros(5)
        assert tf.cond_mean(x) == sd.true_mean(m, x)
        assert tf.cond_sd(x) == sd.true_sd(m, x)
        assert tf.cond_quantile(x, 0.5) == sd.true_quantile(m, x, 0.5)
        assert tf.cond_cdf(x, 1.0) == sd.true_cdf(m, x, 1.0)
