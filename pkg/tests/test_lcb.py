import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hfbandit.bandit import ContextualBandit, optimal_policy
from hfbandit.datasets import RatingDataset
from hfbandit.feedback import QuadraticSkewModel
from hfbandit.lcb import PenaltySpec, empirical_means, lcb_policy, penalty


def standard_oracle(c_b, v, S, A, delta, m):
    return c_b * math.sqrt(v * math.log(S * A / delta) / m)


class TestPenalty:
    def test_standard(self):
        assert penalty(PenaltySpec.standard(1.0, 1.0, 0.1), 100, 1, 1) == pytest.approx(0.151743, abs=1e-6)

    def test_subexp(self):
        L = math.log(20)
        assert penalty(PenaltySpec.subexp(1.0, 0.1), 100, 1, 2) == pytest.approx(1.62432, abs=1e-5)
        assert penalty(PenaltySpec.subexp(1.0, 0.1), 100, 1, 2) == pytest.approx(
            math.sqrt(64 * L / 100) + 8 * L / 100, abs=1e-12)

    def test_chaos(self):
        L = math.log(6 / 0.05)
        assert penalty(PenaltySpec.chaos(2.0, 3.0, 2, 0.05), 7, 2, 3) == pytest.approx(
            2 * math.sqrt(3 * L**2 / 7), rel=1e-12)

    @pytest.mark.parametrize("spec", [PenaltySpec.standard(), PenaltySpec.chaos(), PenaltySpec.subexp()])
    def test_unobserved(self, spec):
        assert math.isinf(penalty(spec, 0, 2, 2))

    def test_vectorised(self):
        b = penalty(PenaltySpec.standard(), np.array([0, 1, 4]), 1, 3)
        assert math.isinf(b[0]) and b[1] == pytest.approx(2 * b[2])

    def test_c_v_scales_v(self):
        assert PenaltySpec.standard(1.0, 3.0, 0.1, c_v=2.0).v_sq == 6.0

    def test_negative_count(self):
        with pytest.raises(ValueError):
            penalty(PenaltySpec.standard(), -1, 1, 1)

    def test_roundtrip(self):
        spec = PenaltySpec.chaos(1.5, 2.0, 3, 0.2)
        assert PenaltySpec.from_dict(spec.to_dict()) == spec

    @given(st.sampled_from(["standard", "chaos", "subexp"]), st.integers(1, 10**6),
           st.floats(0.001, 0.9), st.integers(1, 5), st.integers(1, 5))
    def test_monotone(self, variant, m, delta, S, A):
        spec = PenaltySpec.from_dict({"variant": variant, "delta": delta})
        tighter = PenaltySpec.from_dict({"variant": variant, "delta": delta / 2})
        assert penalty(spec, m + 1, S, A) < penalty(spec, m, S, A)
        assert penalty(tighter, m, S, A) > penalty(spec, m, S, A)


class TestEmpiricalMeans:
    def test_mean(self):
        means, counts = empirical_means(RatingDataset([0, 0], [0, 0], [1.0, 3.0]), 1, 2)
        assert means[0, 0] == 2.0 and counts[0, 0] == 2
        assert means[0, 1] == 0.0 and counts[0, 1] == 0

    def test_single(self):
        means, counts = empirical_means(RatingDataset([0], [0], [0.7]), 1, 1)
        assert means[0, 0] == 0.7 and counts[0, 0] == 1

    def test_normalize_by_total(self):
        means, _ = empirical_means(RatingDataset([0, 0, 0], [0, 0, 1], [1.0, 3.0, 3.0]), 1, 2, True)
        np.testing.assert_allclose(means, [[4 / 3, 1.0]])


class TestLcbPolicy:
    def test_count_penalty_wins(self):
        data = RatingDataset([0] * 101, [0] * 100 + [1], [1.0] * 100 + [2.0])
        policy, pess = lcb_policy(data, 1, 2, PenaltySpec.standard(1.0, 1.0, 0.1))
        b100 = standard_oracle(1, 1, 1, 2, 0.1, 100)
        b1 = standard_oracle(1, 1, 1, 2, 0.1, 1)
        assert b100 == pytest.approx(0.173082, abs=1e-6) and b1 == pytest.approx(1.730818, abs=1e-6)
        np.testing.assert_allclose(pess[0], [1.0 - b100, 2.0 - b1], atol=1e-12)
        assert pess[0, 0] == pytest.approx(0.826918, abs=1e-6)
        assert policy.action_of.tolist() == [0]

    def test_unobserved_ties(self):
        policy, pess = lcb_policy(RatingDataset([], [], []), 1, 2, PenaltySpec.standard())
        assert policy.action_of.tolist() == [0] and np.all(pess == 0)

    def test_zero_ratings(self):
        policy, pess = lcb_policy(RatingDataset([0, 0], [0, 1], [0.0, 0.0]), 1, 2, PenaltySpec.standard())
        assert policy.action_of.tolist() == [0] and np.all(pess == 0)

    def test_noiseless_recovers_biased_argmax(self):
        rng = np.random.default_rng(0)
        model = QuadraticSkewModel(1.0)
        reward = rng.uniform(0.2, 1.0, size=(4, 3))
        hbar = model.mean_bias(reward)
        counts = rng.integers(1, 50, size=(4, 3))
        s, a = np.nonzero(np.ones((4, 3)))
        rep = counts.ravel()
        data = RatingDataset(np.repeat(s, rep), np.repeat(a, rep), np.repeat(hbar.ravel(), rep))
        gaps = np.sort(hbar, axis=1)
        min_gap = float(np.min(gaps[:, -1] - gaps[:, -2]))
        # scale the penalty so its largest value sits below the smallest biased gap
        spec = PenaltySpec.standard(c_b=1.0, v_sq=1.0, delta=0.1)
        c_b = 0.4 * min_gap / penalty(spec, 1, 4, 3)
        policy, _ = lcb_policy(data, 4, 3, PenaltySpec.standard(c_b, 1.0, 0.1))
        assert policy == optimal_policy(ContextualBandit(hbar))

    @given(st.integers(0, 2**32 - 1))
    def test_pessimism_below_mean(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 60))
        data = RatingDataset(rng.integers(0, 2, n), rng.integers(0, 3, n), rng.normal(0.5, 1.0, n))
        means, counts = empirical_means(data, 2, 3)
        _, pess = lcb_policy(data, 2, 3, PenaltySpec.subexp(1.0, 0.1))
        seen = counts > 0
        assert np.all(pess[seen] <= np.maximum(means[seen], 0.0))
        assert np.all(pess >= 0)
