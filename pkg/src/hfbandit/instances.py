"""Hard instances and closed-form sample-complexity thresholds."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .bandit import ContextualBandit
from .datasets import PairSamplingDist, RatingSamplingDist
from .feedback import QuadraticSkewModel, RatingModel

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class InstanceBundle:
    bandit: ContextualBandit
    model: RatingModel
    provenance: str
    rating_dist: RatingSamplingDist | None = None
    pair_dist: PairSamplingDist | None = None

    def __post_init__(self):
        if not self.provenance:
            raise ValueError("provenance tag must be nonempty")
        if self.rating_dist is not None and self.rating_dist.prob.shape != self.bandit.shape:
            raise ValueError("rating distribution does not match the bandit")
        S, A = self.bandit.shape
        if self.pair_dist is not None and self.pair_dist.prob.shape != (S, A, A):
            raise ValueError("pair distribution does not match the bandit")

    def to_dict(self) -> dict:
        doc = {"provenance": self.provenance, "bandit": self.bandit.to_dict(), "model": self.model.to_dict()}
        if self.rating_dist is not None:
            doc["rating_dist"] = self.rating_dist.prob.ravel().tolist()
        if self.pair_dist is not None:
            doc["pair_dist"] = self.pair_dist.prob.ravel().tolist()
        return doc


def hard_instance_partial(n: int, sigma: float = 1.0) -> InstanceBundle:
    """One state, A = n^2 arms; arm 0 pays 3/4 and is drawn half the time,
    every other arm pays 1/2 and shares the remaining half."""
    n = int(n)
    if n < 2:
        raise ValueError("n must be >= 2")
    A = n * n
    reward = np.full((1, A), 0.5)
    reward[0, 0] = 0.75
    d = np.full((1, A), 0.5 / (A - 1))
    d[0, 0] = 0.5
    return InstanceBundle(
        bandit=ContextualBandit(reward, 1.0),
        model=QuadraticSkewModel(sigma),
        provenance=f"partial-coverage lower bound, quadratic skew (n={n}, A={A})",
        rating_dist=RatingSamplingDist(d),
    )


def hard_instance_uniform(n: int, sigma: float = 1.0) -> InstanceBundle:
    """One state, two arms 1/2 + sigma n^(-1/4) and 1/2, uniform sampling."""
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    gap = sigma * n ** -0.25
    if gap > 0.5:
        raise ValueError(f"gap {gap} pushes the reward above 1; need sigma n^(-1/4) <= 1/2")
    if n < max(48 * sigma**4, 60):
        log.warning("n=%d is below the sample threshold max(48 sigma^4, 60)", n)
    return InstanceBundle(
        bandit=ContextualBandit([[0.5 + gap, 0.5]], 1.0),
        model=QuadraticSkewModel(sigma),
        provenance=f"uniform-coverage lower bound, quadratic skew (n={n})",
        rating_dist=RatingSamplingDist.uniform(1, 2),
        pair_dist=PairSamplingDist.uniform(1, 2),
    )


def two_action_instance(h_r1: float, h_r2: float, model: RatingModel | None = None) -> InstanceBundle:
    """One state, two arms whose biased rewards are h_r1 < h_r2."""
    model = QuadraticSkewModel(1.0) if model is None else model
    if not 0 <= h_r1 < h_r2 <= 1:
        raise ValueError("need 0 <= h_r1 < h_r2 <= 1")
    r1, r2 = model.inverse_mean_bias(h_r1), model.inverse_mean_bias(h_r2)
    return InstanceBundle(
        bandit=ContextualBandit([[r1, r2]], model.reward_bound),
        model=model,
        provenance=f"biased preference vs rating comparison (h={h_r1}, {h_r2})",
        rating_dist=RatingSamplingDist.uniform(1, 2),
        pair_dist=PairSamplingDist.uniform(1, 2),
    )


def _check_delta(delta: float) -> None:
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")


def _bernoulli_margin(gap: float) -> tuple[float, float]:
    """p = logistic(gap) and the relative margin 1 - 1/(2p).

    Uses 2p - 1 = tanh(gap / 2) to avoid cancellation at small gaps.
    """
    t = math.tanh(0.5 * gap)
    return 0.5 * (1.0 + t), t / (1.0 + t)


def n_pref(delta: float, gap: float) -> float:
    """Chernoff threshold 2 log(1/delta) / (p (1 - 1/(2p))^2), p = logistic(gap)."""
    _check_delta(delta)
    if not gap > 0:
        raise ValueError("gap must be positive")
    p, eps = _bernoulli_margin(gap)
    return 2.0 * math.log(1.0 / delta) / (p * eps**2)


def n_rate(delta: float, sigma: float, gap: float) -> float:
    """Hoeffding-style threshold sigma^2 log(1/delta) / gap^2."""
    _check_delta(delta)
    if not (sigma > 0 and gap > 0):
        raise ValueError("sigma and gap must be positive")
    return sigma**2 * math.log(1.0 / delta) / gap**2


def complexity_ratio(sigma: float, gap: float) -> float:
    """n_rate / n_pref = sigma^2 p (1 - 1/(2p))^2 / (2 gap^2)."""
    if not (sigma > 0 and 0 < gap <= 1):
        raise ValueError("need sigma > 0 and 0 < gap <= 1")
    p, eps = _bernoulli_margin(gap)
    return sigma**2 * p * eps**2 / (2.0 * gap**2)
