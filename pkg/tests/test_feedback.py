import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hfbandit.feedback import (AdditiveNoiseModel, QuadraticSkewModel, TableModel, biased_btl_prob,
                               btl_prob, check_conditions, inverse_mean_bias, logistic, mean_bias,
                               model_from_dict, sample_preference, sample_rating)


def logistic_oracle(x):
    return 1.0 / (1.0 + math.exp(-x))


class TestSampleRating:
    def test_zero_reward(self, rng):
        assert np.all(sample_rating(QuadraticSkewModel(1.0), np.zeros(1000), rng) == 0.0)

    def test_mean_and_variance(self):
        rng = np.random.default_rng(7)
        draws = sample_rating(QuadraticSkewModel(1.0), np.full(10**6, 0.5), rng)
        # Var = 3 r^4 sigma^4 = 0.1875, sd of the mean ~ 4.3e-4
        assert abs(draws.mean() - 0.25) <= 0.003
        assert abs(draws.var() / 0.1875 - 1.0) <= 0.03

    def test_reward_outside_range(self, rng):
        with pytest.raises(ValueError):
            sample_rating(QuadraticSkewModel(1.0), 1.2, rng)


class TestMeanBias:
    @pytest.mark.parametrize("r,expected", [(0.0, 0.0), (0.5, 0.25), (1.0, 1.0)])
    def test_quadratic(self, r, expected):
        assert mean_bias(QuadraticSkewModel(1.0), r) == expected

    def test_inverse_values(self):
        m = QuadraticSkewModel(1.0)
        assert inverse_mean_bias(m, 0.25) == 0.5
        assert inverse_mean_bias(m, 0.0) == 0.0
        assert inverse_mean_bias(m, 0.09) == pytest.approx(0.3, abs=1e-9)

    def test_bisection_matches_analytic_root(self):
        table = TableModel(np.linspace(0, 1, 2001), np.linspace(0, 1, 2001) ** 2, 1.0, "skew")
        assert table.inverse_mean_bias(0.09) == pytest.approx(0.3, abs=1e-6)
        assert table.inverse_mean_bias(0.0) == pytest.approx(0.0, abs=1e-9)

    def test_inverse_out_of_range(self):
        with pytest.raises(ValueError):
            inverse_mean_bias(QuadraticSkewModel(1.0), 1.5)

    @given(st.floats(0.0, 1.0))
    def test_roundtrip(self, r):
        for m in (QuadraticSkewModel(0.7), TableModel([0, 0.5, 1], [0, 0.2, 1], 1.0)):
            assert m.inverse_mean_bias(m.mean_bias(r)) == pytest.approx(r, abs=1e-9)


class TestBTL:
    def test_equal(self):
        assert btl_prob(0.3, 0.3) == 0.5

    def test_gap_one(self):
        assert btl_prob(0.0, 1.0) == pytest.approx(0.731059, abs=1e-6)
        assert btl_prob(1.0, 0.0) == pytest.approx(0.268941, abs=1e-6)

    def test_biased(self):
        m = QuadraticSkewModel(1.0)
        assert biased_btl_prob(m, 0.4, 0.4) == 0.5
        assert biased_btl_prob(m, 0.0, 1.0) == pytest.approx(logistic_oracle(1.0), abs=1e-12)
        assert biased_btl_prob(m, 0.6, 0.8) == pytest.approx(0.569546, abs=1e-6)
        assert biased_btl_prob(m, 0.6, 0.8) == pytest.approx(logistic_oracle(0.28), abs=1e-12)

    def test_logistic_extremes(self):
        assert logistic(800.0) == 1.0
        assert logistic(-800.0) == 0.0
        assert np.isfinite(logistic(np.array([-1e4, 1e4]))).all()

    @given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-10, 10))
    def test_translation_invariant(self, r0, r1, c):
        assert btl_prob(r0 + c, r1 + c) == pytest.approx(btl_prob(r0, r1), abs=1e-12)

    @given(st.floats(-20, 20))
    def test_matches_oracle(self, x):
        assert logistic(x) == pytest.approx(logistic_oracle(x), rel=1e-12)


class TestSamplePreference:
    def test_degenerate(self, rng):
        assert np.all(sample_preference(np.ones(100), rng) == 1)
        assert np.all(sample_preference(np.zeros(100), rng) == 0)

    def test_fair_coin(self, rng):
        assert 0.494 <= sample_preference(np.full(10**5, 0.5), rng).mean() <= 0.506

    def test_scalar(self, rng):
        assert sample_preference(1.0, rng) == 1

    def test_invalid(self, rng):
        with pytest.raises(ValueError):
            sample_preference(1.5, rng)


class TestConditions:
    def test_quadratic_passes(self, rng):
        rep = check_conditions(QuadraticSkewModel(1.0), rng=rng)
        assert rep.monotone_ok and rep.zero_at_zero_ok
        assert rep.c_h1_est <= 1 + 1e-6
        assert rep.symmetry_stat <= 4 / math.sqrt(2000)

    def test_c_h1_on_other_grids(self, rng):
        for size in (11, 57, 201):
            rep = check_conditions(QuadraticSkewModel(2.0), grid_size=size, samples_per_point=50, rng=rng)
            assert rep.c_h1_est <= 1 + 1e-6

    def test_gapped_c_h2(self, rng):
        # h_bar = r^2: (r1^2 - r2^2) / (r1 - r2)^2 = (r1 + r2)/(r1 - r2), largest at r1 = 1, gap = min_gap
        rep = check_conditions(QuadraticSkewModel(1.0), grid_size=101, samples_per_point=10, min_gap=0.05, rng=rng)
        assert rep.c_h2_est == pytest.approx((1 + 0.95) / 0.05, rel=1e-9)

    def test_non_monotone(self, rng):
        xs = np.linspace(0, 1, 101)
        rep = check_conditions(TableModel(xs, xs * (1 - xs), 1.0), samples_per_point=10, rng=rng)
        assert not rep.monotone_ok

    def test_report_serialises(self, rng):
        doc = check_conditions(QuadraticSkewModel(1.0), samples_per_point=10, rng=rng).to_dict()
        assert set(doc) == {"monotone_ok", "zero_at_zero_ok", "symmetry_stat", "c_h1_est", "c_h2_est", "grid_spec"}


class TestModelDocuments:
    @pytest.mark.parametrize("model", [
        QuadraticSkewModel(0.5),
        TableModel([0, 0.5, 1], [0, 0.3, 1], 0.2, "skew"),
        AdditiveNoiseModel(QuadraticSkewModel(1.0), 1.0),
    ])
    def test_roundtrip(self, model):
        again = model_from_dict(model.to_dict())
        assert type(again) is type(model)
        grid = np.linspace(0, model.reward_bound, 17)
        np.testing.assert_array_equal(again.mean_bias(grid), model.mean_bias(grid))
        assert again.variance_proxy == model.variance_proxy

    def test_unknown_key(self):
        with pytest.raises(ValueError):
            model_from_dict({"kind": "quadratic_skew", "sigma": 1, "colour": "red"})

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            model_from_dict({"kind": "cubic"})

    def test_additive_noise_keeps_bias(self, rng):
        m = AdditiveNoiseModel(QuadraticSkewModel(1.0), 1.0)
        draws = m.sample(np.full(10**5, 0.8), rng)
        assert abs(draws.mean() - 0.64) < 3 * 1.0 / math.sqrt(10**5)
        assert abs(draws.std() - 1.0) < 0.02
