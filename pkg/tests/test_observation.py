import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from semfuse.core import argmax_class
from semfuse.observation import (FusionConfig, aleatoric_entropy, build_observation,
                                 clamp_variance, concentration, epistemic_variance,
                                 observation_from_moments, predictive_mean, raw_variance,
                                 regularize)


def random_samples(rng, M, K):
    return rng.dirichlet(np.ones(K), size=M)


class TestPredictiveMean:
    def test_identical_samples(self):
        np.testing.assert_array_equal(predictive_mean([[0.9, 0.1]] * 5), [0.9, 0.1])

    def test_symmetric_pair(self):
        np.testing.assert_array_equal(predictive_mean([[1, 0], [0, 1]]), [0.5, 0.5])

    def test_matches_extended_precision_sum(self):
        s = random_samples(np.random.default_rng(0), 32, 6)
        oracle = [float(mpmath.fsum(mpmath.mpf(x) for x in s[:, i]) / 32) for i in range(6)]
        np.testing.assert_allclose(predictive_mean(s), oracle, rtol=0, atol=1e-12)

    def test_rejects_off_simplex_samples(self):
        with pytest.raises(ValueError):
            predictive_mean([[0.6, 0.6]])

    @given(st.integers(1, 40), st.integers(2, 12), st.integers(0, 2**32 - 1))
    def test_stays_on_simplex(self, M, K, seed):
        m = predictive_mean(random_samples(np.random.default_rng(seed), M, K))
        assert abs(m.sum() - 1.0) < 1e-9 and np.all(m >= 0)


class TestEpistemicVariance:
    def test_identical_samples_hit_floor(self):
        np.testing.assert_array_equal(epistemic_variance([[0.9, 0.1]] * 4), [1e-6, 1e-6])

    def test_symmetric_pair_hits_ceiling(self):
        np.testing.assert_allclose(epistemic_variance([[1, 0], [0, 1]]), [0.25, 0.25])

    def test_two_pass_oracle(self):
        s = random_samples(np.random.default_rng(1), 8, 4)
        for i in range(4):
            col = [mpmath.mpf(x) for x in s[:, i]]
            mean = mpmath.fsum(col) / 8
            var = mpmath.fsum((x - mean) ** 2 for x in col) / 8
            assert raw_variance(s)[i] == pytest.approx(float(var), abs=1e-12)

    def test_population_not_sample_variance(self):
        assert raw_variance([[1, 0], [0, 1]])[0] == 0.25

    def test_clamp_bounds(self):
        cfg = FusionConfig(eps_var=1e-4)
        np.testing.assert_array_equal(clamp_variance([0.0, 0.1, 0.3], cfg), [1e-4, 0.1, 0.25])


class TestAleatoricEntropy:
    def test_deterministic(self):
        assert aleatoric_entropy([1.0, 0.0]) == 0.0

    def test_uniform(self):
        assert aleatoric_entropy([0.25] * 4) == pytest.approx(math.log(4), abs=1e-12)

    def test_scalar_value(self):
        expected = -(0.7 * math.log(0.7) + 0.3 * math.log(0.3))
        assert aleatoric_entropy([0.7, 0.3]) == pytest.approx(expected, abs=1e-12)
        assert aleatoric_entropy([0.7, 0.3]) == pytest.approx(0.6109, abs=1e-4)


class TestRegularize:
    def test_beta_zero_identity(self):
        np.testing.assert_array_equal(regularize([0.2, 0.8], 0.0), [0.2, 0.8])

    def test_beta_one_uniform(self):
        np.testing.assert_allclose(regularize([0.0, 0.1, 0.9], 1.0), [1 / 3] * 3)

    def test_outlier_example(self):
        np.testing.assert_allclose(regularize([0.01, 0.99], 0.3, 2), [0.157, 0.843], atol=1e-15)

    def test_rejects_bad_beta(self):
        with pytest.raises(ValueError):
            regularize([0.5, 0.5], 1.5)

    @given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=10).filter(lambda v: sum(v) > 0),
           st.floats(0.0, 0.999))
    def test_floor_and_argmax(self, raw, beta):
        p = np.asarray(raw) / sum(raw)
        q = regularize(p, beta)
        assert np.all(q >= beta / len(p) - 1e-15)
        assert abs(q.sum() - 1.0) < 1e-9
        if np.sum(p == p.max()) == 1:
            assert argmax_class(q) == argmax_class(p)


class TestConcentration:
    def test_ceiling(self):
        assert concentration(0.25) == pytest.approx(math.log(4), abs=1e-15)

    def test_exact_inverse(self):
        assert concentration(math.exp(-2)) == pytest.approx(2.0, abs=1e-15)

    def test_floor(self):
        assert concentration(1e-6) == pytest.approx(13.8155, abs=1e-4)
        assert concentration(1e-6) == pytest.approx(6 * math.log(10), abs=1e-12)

    def test_rejects_unclamped(self):
        with pytest.raises(ValueError):
            concentration(0.0)
        with pytest.raises(ValueError):
            concentration(0.3)


class TestBuildObservation:
    def test_confident_samples(self):
        obs = build_observation([[1.0, 0.0]] * 8, FusionConfig(beta=0.3, eps_var=1e-6))
        np.testing.assert_allclose(obs.p_tilde, [0.85, 0.15], atol=1e-15)
        np.testing.assert_allclose(obs.alpha, [13.8155, 13.8155], atol=1e-4)

    def test_symmetric_pair(self):
        obs = build_observation([[1, 0], [0, 1]], FusionConfig(beta=0.0))
        np.testing.assert_allclose(obs.p_tilde, [0.5, 0.5])
        np.testing.assert_allclose(obs.alpha, [math.log(4)] * 2)

    def test_equals_manual_pipeline(self):
        cfg = FusionConfig(beta=0.2, eps_var=1e-5)
        s = random_samples(np.random.default_rng(7), 32, 5)
        obs = build_observation(s, cfg)
        np.testing.assert_array_equal(obs.p_tilde, regularize(predictive_mean(s), 0.2))
        np.testing.assert_array_equal(obs.alpha, concentration(epistemic_variance(s, cfg)))

    def test_moments_path_matches_samples_path(self):
        s = random_samples(np.random.default_rng(8), 16, 3)
        a = build_observation(s)
        b = observation_from_moments(s.mean(axis=0), s.var(axis=0))
        np.testing.assert_array_equal(a.p_tilde, b.p_tilde)
        np.testing.assert_array_equal(a.alpha, b.alpha)

    @given(st.integers(1, 32), st.integers(2, 8), st.integers(0, 2**32 - 1), st.floats(0.01, 1.0))
    def test_outputs_bounded(self, M, K, seed, beta):
        cfg = FusionConfig(beta=beta)
        obs = build_observation(random_samples(np.random.default_rng(seed), M, K), cfg)
        assert np.all(obs.p_tilde >= beta / K - 1e-15)
        assert np.all(np.isfinite(obs.alpha))
        assert np.all(obs.alpha >= cfg.alpha_min - 1e-12)
        assert np.all(obs.alpha <= cfg.alpha_max + 1e-12)


class TestFusionConfig:
    def test_defaults(self):
        cfg = FusionConfig()
        assert (cfg.beta, cfg.eps_var, cfg.mc_samples) == (0.3, 1e-6, 32)
        assert cfg.alpha_min == pytest.approx(math.log(4))

    @pytest.mark.parametrize("kwargs", [{"beta": -0.1}, {"beta": 1.1}, {"eps_var": 0.0},
                                        {"eps_var": 0.3}, {"p_min": 0.0}, {"mc_samples": 0}])
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(ValueError):
            FusionConfig(**kwargs)

    def test_p_min_below_one_over_k(self):
        FusionConfig(p_min=0.1).check_classes(9)
        with pytest.raises(ValueError):
            FusionConfig(p_min=0.1).check_classes(10)
