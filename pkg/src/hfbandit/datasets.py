"""Sampling distributions, offline datasets and concentrability coefficients."""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .bandit import PROB_ATOL, ContextualBandit, ShapeError, Visitation, _frozen
from .feedback import RatingModel, btl_prob
from .rng import as_generator

RANK_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class RatingSamplingDist:
    """Probability of drawing each (state, action) pair, shape (S, A)."""

    prob: np.ndarray

    def __init__(self, prob):
        prob = _frozen(prob)
        if prob.ndim != 2:
            raise ShapeError("rating distribution must be an (S, A) table")
        if prob.min() < 0 or abs(prob.sum() - 1.0) > PROB_ATOL:
            raise ValueError("rating distribution must be nonnegative and sum to 1")
        object.__setattr__(self, "prob", prob)

    @classmethod
    def uniform(cls, S: int, A: int) -> "RatingSamplingDist":
        return cls(np.full((S, A), 1.0 / (S * A)))


@dataclass(frozen=True, eq=False)
class PairSamplingDist:
    """Probability of comparing ``(s, a0)`` against ``(s, a1)``, shape (S, A, A)."""

    prob: np.ndarray

    def __init__(self, prob):
        prob = _frozen(prob)
        if prob.ndim != 3 or prob.shape[1] != prob.shape[2]:
            raise ShapeError("pair distribution must be an (S, A, A) array")
        if prob.min() < 0 or abs(prob.sum() - 1.0) > PROB_ATOL:
            raise ValueError("pair distribution must be nonnegative and sum to 1")
        diag = np.einsum("sii->si", prob)
        if np.any(diag != 0):
            raise ValueError("pair distribution puts mass on a0 == a1")
        object.__setattr__(self, "prob", prob)

    @classmethod
    def uniform(cls, S: int, A: int) -> "PairSamplingDist":
        if A < 2:
            raise ValueError("pairwise comparisons need at least two actions")
        prob = np.ones((S, A, A))
        prob[:, np.arange(A), np.arange(A)] = 0.0
        return cls(prob / prob.sum())

    def covariance(self) -> np.ndarray:
        """Population matrix sum d(s,a0,a1) (e0 - e1)(e0 - e1)^T over SA coordinates."""
        S, A, _ = self.prob.shape
        sym = self.prob + self.prob.transpose(0, 2, 1)
        sigma = np.zeros((S * A, S * A))
        for s in range(S):
            block = -sym[s].copy()
            block[np.diag_indices(A)] = sym[s].sum(axis=1)
            sigma[s * A:(s + 1) * A, s * A:(s + 1) * A] = block
        return sigma


def _check_n(n: int) -> int:
    n = int(n)
    if n < 1:
        raise ValueError("dataset size must be >= 1")
    return n


@dataclass(frozen=True, eq=False)
class RatingDataset:
    states: np.ndarray
    actions: np.ndarray
    ratings: np.ndarray

    def __init__(self, states, actions, ratings):
        states = _frozen(states, np.int64)
        actions = _frozen(actions, np.int64)
        ratings = _frozen(ratings)
        if not (states.shape == actions.shape == ratings.shape) or states.ndim != 1:
            raise ShapeError("states, actions and ratings must be equal-length vectors")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "ratings", ratings)

    def __len__(self) -> int:
        return self.states.size

    @property
    def samples(self) -> list[tuple[int, int, float]]:
        return list(zip(self.states.tolist(), self.actions.tolist(), self.ratings.tolist()))

    def check_range(self, S: int, A: int) -> None:
        if len(self) and (self.states.min() < 0 or self.states.max() >= S
                          or self.actions.min() < 0 or self.actions.max() >= A):
            raise ShapeError(f"dataset indices fall outside ({S}, {A})")

    def flat_index(self, A: int) -> np.ndarray:
        return self.states * A + self.actions

    def counts(self, S: int, A: int) -> np.ndarray:
        self.check_range(S, A)
        return np.bincount(self.flat_index(A), minlength=S * A).reshape(S, A)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("s,a,r\n")
        for s, a, r in zip(self.states.tolist(), self.actions.tolist(), self.ratings.tolist()):
            buf.write(f"{s},{a},{r!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "RatingDataset":
        rows = _read_rows(text, ("s", "a", "r"))
        if not rows:
            return cls([], [], [])
        s, a, r = zip(*rows)
        return cls([int(x) for x in s], [int(x) for x in a], [float(x) for x in r])


@dataclass(frozen=True, eq=False)
class PreferenceDataset:
    """Comparisons of ``(s, a0)`` vs ``(s, a1)``; label 1 means a1 preferred."""

    states: np.ndarray
    actions0: np.ndarray
    actions1: np.ndarray
    labels: np.ndarray

    def __init__(self, states, actions0, actions1, labels):
        states = _frozen(states, np.int64)
        a0 = _frozen(actions0, np.int64)
        a1 = _frozen(actions1, np.int64)
        y = _frozen(labels, np.int8)
        if not (states.shape == a0.shape == a1.shape == y.shape) or states.ndim != 1:
            raise ShapeError("preference columns must be equal-length vectors")
        if np.any(a0 == a1):
            raise ValueError("a comparison must involve two distinct actions")
        if np.any((y != 0) & (y != 1)):
            raise ValueError("labels must be 0 or 1")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "actions0", a0)
        object.__setattr__(self, "actions1", a1)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return self.states.size

    @property
    def samples(self) -> list[tuple[int, int, int, int]]:
        return list(zip(self.states.tolist(), self.actions0.tolist(),
                        self.actions1.tolist(), self.labels.tolist()))

    def check_range(self, S: int, A: int) -> None:
        if len(self) and (self.states.min() < 0 or self.states.max() >= S
                          or min(self.actions0.min(), self.actions1.min()) < 0
                          or max(self.actions0.max(), self.actions1.max()) >= A):
            raise ShapeError(f"dataset indices fall outside ({S}, {A})")

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("s,a0,a1,y\n")
        for row in zip(self.states.tolist(), self.actions0.tolist(),
                       self.actions1.tolist(), self.labels.tolist()):
            buf.write("%d,%d,%d,%d\n" % row)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "PreferenceDataset":
        rows = _read_rows(text, ("s", "a0", "a1", "y"))
        if not rows:
            return cls([], [], [], [])
        cols = list(zip(*rows))
        return cls(*[[int(x) for x in c] for c in cols])


def _read_rows(text: str, header: tuple[str, ...]) -> list[list[str]]:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if lines and lines[0].replace(" ", "").split(",") == list(header):
        lines = lines[1:]
    rows = [ln.split(",") for ln in lines]
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise ValueError(f"row {i + 1}: expected {len(header)} fields, got {len(row)}")
    return rows


def generate_rating_dataset(bandit: ContextualBandit, model: RatingModel, dist: RatingSamplingDist,
                            n: int, rng) -> RatingDataset:
    """Draw n i.i.d. pairs from ``dist`` and rate each through ``model``."""
    n = _check_n(n)
    if dist.prob.shape != bandit.shape:
        raise ShapeError(f"distribution shape {dist.prob.shape} != bandit shape {bandit.shape}")
    rng = as_generator(rng)
    S, A = bandit.shape
    flat = rng.choice(S * A, size=n, p=dist.prob.ravel())
    states, actions = np.divmod(flat, A)
    ratings = model.sample(bandit.reward.ravel()[flat], rng)
    return RatingDataset(states, actions, ratings)


def generate_preference_dataset(bandit: ContextualBandit, bias: RatingModel | None,
                                dist: PairSamplingDist, n: int, rng) -> PreferenceDataset:
    """Draw n comparisons; labels follow BTL on true or biased rewards."""
    n = _check_n(n)
    S, A = bandit.shape
    if dist.prob.shape != (S, A, A):
        raise ShapeError(f"pair distribution shape {dist.prob.shape} != {(S, A, A)}")
    rng = as_generator(rng)
    flat = rng.choice(S * A * A, size=n, p=dist.prob.ravel())
    states, rest = np.divmod(flat, A * A)
    a0, a1 = np.divmod(rest, A)
    r0 = bandit.reward[states, a0]
    r1 = bandit.reward[states, a1]
    if bias is not None:
        r0, r1 = bias.mean_bias(r0), bias.mean_bias(r1)
    p = np.atleast_1d(btl_prob(r0, r1))
    labels = (rng.random(n) < p).astype(np.int8)
    return PreferenceDataset(states, a0, a1, labels)


def concentrability_cstar(dist: RatingSamplingDist, visit: Visitation) -> float:
    """max over visited pairs of visit/d; ``inf`` when a visited pair is uncovered."""
    if dist.prob.shape != visit.mass.shape:
        raise ShapeError("distribution and visitation shapes differ")
    visited = visit.mass > 0
    d = dist.prob[visited]
    if np.any(d <= 0):
        return float("inf")
    return float(np.max(visit.mass[visited] / d))


def _sum_zero_projector(dim: int) -> np.ndarray:
    return np.eye(dim) - np.full((dim, dim), 1.0 / dim)


def concentrability_cdagger(pair_dist: PairSamplingDist, visit: Visitation) -> float:
    """Pairwise concentrability: sqrt of sup_v (w.v)^2 / v^T Sigma v over sum-zero v.

    Solved as a generalised Rayleigh quotient with the pseudo-inverse of the
    population comparison covariance; ``inf`` if the visitation direction leaves
    the range of that covariance.
    """
    S, A, _ = pair_dist.prob.shape
    if visit.mass.shape != (S, A):
        raise ShapeError("pair distribution and visitation shapes differ")
    sigma = pair_dist.covariance()
    w = _sum_zero_projector(S * A) @ visit.mass.ravel()
    wnorm = np.linalg.norm(w)
    if wnorm == 0.0:
        return 0.0
    evals, evecs = np.linalg.eigh(sigma)
    top = max(evals.max(), 0.0)
    keep = evals > RANK_RTOL * top if top > 0 else np.zeros_like(evals, dtype=bool)
    coords = evecs.T @ w
    if np.linalg.norm(coords[~keep]) > 1e-9 * wnorm:
        return float("inf")
    return float(np.sqrt(np.sum(coords[keep] ** 2 / evals[keep])))


def check_coverage(dist, visit: Visitation | None = None, assumption: str | None = None) -> bool:
    """Whether the matching coverage assumption holds.

    ``"partial"`` (rating data covers the optimal policy), ``"uniform"`` (every
    pair has positive probability) or ``"pairwise"`` (finite pairwise
    concentrability).  The default is ``"partial"`` for rating distributions
    and ``"pairwise"`` for pair distributions.
    """
    if assumption is None:
        assumption = "pairwise" if isinstance(dist, PairSamplingDist) else "partial"
    if assumption == "uniform":
        return bool(np.all(dist.prob > 0))
    if visit is None:
        raise ValueError(f"{assumption!r} coverage needs a visitation")
    if assumption == "partial":
        return bool(np.isfinite(concentrability_cstar(dist, visit)))
    if assumption == "pairwise":
        return bool(np.isfinite(concentrability_cdagger(dist, visit)))
    raise ValueError(f"unknown assumption {assumption!r}")
