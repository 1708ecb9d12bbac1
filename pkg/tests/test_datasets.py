import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from hfbandit.bandit import ContextualBandit, DeterministicPolicy, ShapeError, Visitation, visitation
from hfbandit.datasets import (PairSamplingDist, PreferenceDataset, RatingDataset, RatingSamplingDist,
                               check_coverage, concentrability_cdagger, concentrability_cstar,
                               generate_preference_dataset, generate_rating_dataset)
from hfbandit.feedback import QuadraticSkewModel
from hfbandit.instances import hard_instance_partial


def rayleigh(w, sigma, v):
    w = w - w.mean()
    return (w @ v) ** 2 / (v @ sigma @ v)


def random_search_cdagger(pair_dist, visit, draws, rng):
    """Brute-force sup over random sum-zero directions."""
    sigma = pair_dist.covariance()
    w = visit.mass.ravel()
    w = w - w.mean()
    v = rng.normal(size=(draws, w.size))
    v -= v.mean(axis=1, keepdims=True)
    quad = np.einsum("ij,jk,ik->i", v, sigma, v)
    return math.sqrt(np.max((v @ w) ** 2 / quad))


class TestGenerateRating:
    def test_point_mass(self, rng):
        b = ContextualBandit([[0.2, 0.7]])
        d = generate_rating_dataset(b, QuadraticSkewModel(1.0), RatingSamplingDist([[0.0, 1.0]]), 5, rng)
        assert d.samples[0][:2] == (0, 1) and len(d) == 5
        assert set(d.actions.tolist()) == {1}

    def test_uniform_counts(self, rng):
        b = ContextualBandit([[0.2, 0.7]])
        d = generate_rating_dataset(b, QuadraticSkewModel(1.0), RatingSamplingDist.uniform(1, 2), 10**5, rng)
        assert np.all(np.abs(d.counts(1, 2) - 50000) <= 500)

    def test_zero_rewards_rate_zero(self, rng):
        b = ContextualBandit(np.zeros((2, 3)))
        d = generate_rating_dataset(b, QuadraticSkewModel(1.0), RatingSamplingDist.uniform(2, 3), 200, rng)
        assert np.all(d.ratings == 0.0)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ShapeError):
            generate_rating_dataset(ContextualBandit([[0.1, 0.2]]), QuadraticSkewModel(1.0),
                                    RatingSamplingDist.uniform(1, 3), 10, rng)

    def test_zero_size(self, rng):
        with pytest.raises(ValueError):
            generate_rating_dataset(ContextualBandit([[0.1]]), QuadraticSkewModel(1.0),
                                    RatingSamplingDist.uniform(1, 1), 0, rng)


class TestGeneratePreference:
    def _single_pair(self):
        prob = np.zeros((1, 2, 2))
        prob[0, 0, 1] = 1.0
        return PairSamplingDist(prob)

    def test_equal_rewards(self, rng):
        d = generate_preference_dataset(ContextualBandit([[0.4, 0.4]]), None, self._single_pair(), 10**5, rng)
        assert 0.494 <= d.labels.mean() <= 0.506

    def test_gap_one(self, rng):
        d = generate_preference_dataset(ContextualBandit([[0.0, 1.0]]), None, self._single_pair(), 10**5, rng)
        assert abs(d.labels.mean() - 0.7311) <= 0.0045

    def test_biased_gap_one(self, rng):
        d = generate_preference_dataset(ContextualBandit([[0.0, 1.0]]), QuadraticSkewModel(1.0),
                                        self._single_pair(), 10**5, rng)
        assert abs(d.labels.mean() - 0.7311) <= 0.0045

    def test_never_compares_action_with_itself(self, rng):
        d = generate_preference_dataset(ContextualBandit(np.full((2, 4), 0.5)), None,
                                        PairSamplingDist.uniform(2, 4), 5000, rng)
        assert np.all(d.actions0 != d.actions1)

    def test_diagonal_rejected(self):
        prob = np.zeros((1, 2, 2))
        prob[0, 0, 0] = 1.0
        with pytest.raises(ValueError):
            PairSamplingDist(prob)


class TestCsv:
    def test_rating_roundtrip(self, rng):
        d = generate_rating_dataset(ContextualBandit([[0.3, 0.9]]), QuadraticSkewModel(1.0),
                                    RatingSamplingDist.uniform(1, 2), 50, rng)
        again = RatingDataset.from_csv(d.to_csv())
        assert again.samples == d.samples
        assert d.to_csv().splitlines()[0] == "s,a,r"

    def test_preference_roundtrip(self, rng):
        d = generate_preference_dataset(ContextualBandit([[0.3, 0.9, 0.1]]), None,
                                        PairSamplingDist.uniform(1, 3), 50, rng)
        again = PreferenceDataset.from_csv(d.to_csv())
        assert again.samples == d.samples
        assert d.to_csv().splitlines()[0] == "s,a0,a1,y"

    def test_bad_header(self):
        with pytest.raises(ValueError):
            RatingDataset.from_csv("x,y,z\n0,0,1.0\n")


class TestCstar:
    def test_hard_instance(self):
        bundle = hard_instance_partial(10)
        visit = visitation(bundle.bandit, DeterministicPolicy([0]))
        assert concentrability_cstar(bundle.rating_dist, visit) == 2.0

    def test_on_policy(self):
        mass = [[0.2, 0.3], [0.5, 0.0]]
        assert concentrability_cstar(RatingSamplingDist(mass), Visitation(mass)) == 1.0

    def test_uncovered(self):
        assert math.isinf(concentrability_cstar(RatingSamplingDist([[1.0, 0.0]]), Visitation([[0.0, 1.0]])))

    @given(hnp.arrays(float, (2, 3), elements=st.floats(0.0, 1.0)), st.floats(0.05, 1.0))
    def test_at_least_one(self, raw, mix):
        if raw.sum() <= 0:
            return
        visit = raw / raw.sum()
        dist = mix * visit + (1 - mix) / 6.0
        c = concentrability_cstar(RatingSamplingDist(dist / dist.sum()), Visitation(visit))
        assert c >= 1.0 - 1e-12
        if mix == 1.0:
            assert c == pytest.approx(1.0, abs=1e-12)


class TestCdagger:
    def test_single_pair(self):
        prob = np.zeros((1, 2, 2))
        prob[0, 0, 1] = 1.0
        assert concentrability_cdagger(PairSamplingDist(prob), Visitation([[0.0, 1.0]])) == pytest.approx(0.5, abs=1e-12)

    def test_uncovered_direction(self):
        prob = np.zeros((1, 3, 3))
        prob[0, 0, 1] = 1.0
        assert math.isinf(concentrability_cdagger(PairSamplingDist(prob), Visitation([[0.0, 0.0, 1.0]])))

    def test_random_search_oracle(self):
        rng = np.random.default_rng(3)
        raw = rng.random((1, 3, 3))
        raw[0, np.arange(3), np.arange(3)] = 0
        pd = PairSamplingDist(raw / raw.sum())
        visit = Visitation([[0.0, 1.0, 0.0]])
        oracle = random_search_cdagger(pd, visit, 10**6, rng)
        assert concentrability_cdagger(pd, visit) == pytest.approx(oracle, rel=1e-3)

    @given(st.integers(0, 2**32 - 1), st.floats(0.01, 100.0))
    def test_sup_dominates_every_direction(self, seed, scale):
        rng = np.random.default_rng(seed)
        raw = rng.random((1, 3, 3))
        raw[0, np.arange(3), np.arange(3)] = 0
        pd = PairSamplingDist(raw / raw.sum())
        mass = rng.dirichlet(np.ones(3)).reshape(1, 3)
        c = concentrability_cdagger(pd, Visitation(mass))
        v = rng.normal(size=3)
        v -= v.mean()
        q = rayleigh(mass.ravel(), pd.covariance(), v)
        assert q == pytest.approx(rayleigh(mass.ravel(), pd.covariance(), scale * v), rel=1e-9)
        assert q <= c**2 * (1 + 1e-9)


class TestCoverage:
    def test_uniform(self):
        assert check_coverage(RatingSamplingDist.uniform(2, 2), assumption="uniform")
        assert not check_coverage(RatingSamplingDist([[1.0, 0.0]]), assumption="uniform")

    def test_partial_on_hard_instance(self):
        bundle = hard_instance_partial(4)
        visit = visitation(bundle.bandit, DeterministicPolicy([0]))
        assert check_coverage(bundle.rating_dist, visit)
        assert check_coverage(bundle.rating_dist, assumption="uniform")

    def test_pairwise(self):
        visit = Visitation([[0.0, 1.0, 0.0]])
        assert check_coverage(PairSamplingDist.uniform(1, 3), visit)
        prob = np.zeros((1, 3, 3))
        prob[0, 0, 2] = 1.0
        assert not check_coverage(PairSamplingDist(prob), visit)
