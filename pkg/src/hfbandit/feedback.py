"""Human feedback models: biased, noisy ratings and (biased) BTL preferences.

A rating of a pair with true reward ``r`` is ``h(r, eps)`` with
``eps ~ N(0, sigma^2)``; ``mean_bias(r) = E[h(r, eps)]`` is the reward the
annotator has in mind.
"""
from __future__ import annotations

import abc
import math
from dataclasses import dataclass, field

import numpy as np

from .rng import as_generator

BISECTION_TOL = 1e-10
BISECTION_MAX_ITERS = 64


class RatingModel(abc.ABC):
    """Rating transformation ``h`` together with its mean ``h_bar``."""

    kind: str = "abstract"

    def __init__(self, sigma: float, reward_bound: float = 1.0, degree: int = 1):
        if not sigma > 0:
            raise ValueError("sigma must be positive")
        if not reward_bound > 0:
            raise ValueError("reward_bound must be positive")
        if int(degree) < 1:
            raise ValueError("degree must be >= 1")
        self.sigma = float(sigma)
        self.reward_bound = float(reward_bound)
        self.degree = int(degree)

    @abc.abstractmethod
    def eval(self, r, eps):
        """h(r, eps), vectorised over numpy arrays."""

    @abc.abstractmethod
    def _mean_bias(self, r):
        ...

    @property
    @abc.abstractmethod
    def variance_proxy(self) -> float:
        """Upper bound on Var_eps h(r, eps) over r in [0, R]."""

    def _check_reward(self, r) -> np.ndarray:
        arr = np.asarray(r, dtype=float)
        if np.any(~np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > self.reward_bound):
            raise ValueError(f"reward outside [0, {self.reward_bound}]")
        return arr

    def mean_bias(self, r):
        arr = self._check_reward(r)
        out = self._mean_bias(arr)
        return float(out) if np.ndim(out) == 0 else out

    def inverse_mean_bias(self, y: float) -> float:
        """Solve ``mean_bias(x) = y`` on [0, R] by bisection."""
        top = self._mean_bias(np.float64(self.reward_bound))
        if not 0.0 <= y <= top:
            raise ValueError(f"{y} is outside the range [0, {top}] of mean_bias")
        lo, hi = 0.0, self.reward_bound
        for _ in range(BISECTION_MAX_ITERS):
            mid = 0.5 * (lo + hi)
            if self._mean_bias(np.float64(mid)) < y:
                lo = mid
            else:
                hi = mid
            if hi - lo <= BISECTION_TOL * 1e-2:
                break
        return 0.5 * (lo + hi)

    def sample(self, r, rng) -> np.ndarray:
        """Draw ratings for an array of true rewards."""
        arr = self._check_reward(r)
        eps = as_generator(rng).normal(0.0, self.sigma, size=arr.shape)
        return self.eval(arr, eps)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "sigma": self.sigma, "reward_bound": self.reward_bound, "q": self.degree}

    def __repr__(self) -> str:
        return f"{type(self).__name__}(sigma={self.sigma}, reward_bound={self.reward_bound})"


class QuadraticSkewModel(RatingModel):
    """h(r, eps) = r^2 + r^2 eps |eps| on [0, 1].

    Extreme annotators push low rewards lower and high rewards higher, and
    their noise grows with the reward.  Var h(r, .) = 3 r^4 sigma^4.
    """

    kind = "quadratic_skew"

    def __init__(self, sigma: float = 1.0):
        super().__init__(sigma, reward_bound=1.0, degree=2)

    def eval(self, r, eps):
        r2 = np.square(r)
        return r2 + r2 * eps * np.abs(eps)

    def _mean_bias(self, r):
        return np.square(r)

    def inverse_mean_bias(self, y: float) -> float:
        if not 0.0 <= y <= 1.0:
            raise ValueError(f"{y} is outside the range [0, 1] of mean_bias")
        return math.sqrt(y)

    def variance_at(self, r) -> float:
        return 3.0 * np.power(r, 4) * self.sigma**4

    @property
    def variance_proxy(self) -> float:
        return 3.0 * self.sigma**4


NOISE_SHAPES = ("additive", "skew")


class TableModel(RatingModel):
    """Monotone lookup table for ``mean_bias`` plus a noise shape.

    ``noise="additive"`` gives ``h = h_bar(r) + eps`` (the classical additive
    model, identity table means no bias); ``noise="skew"`` gives
    ``h = h_bar(r) + h_bar(r) eps |eps|``.
    """

    kind = "custom_table"

    def __init__(self, xs, ys, sigma: float, noise: str = "additive", degree: int | None = None):
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
            raise ValueError("xs and ys must be matching 1-d tables of length >= 2")
        if np.any(np.diff(xs) <= 0) or xs[0] != 0.0:
            raise ValueError("xs must start at 0 and be strictly increasing")
        if noise not in NOISE_SHAPES:
            raise ValueError(f"noise must be one of {NOISE_SHAPES}")
        if degree is None:
            degree = 1 if noise == "additive" else 2
        super().__init__(sigma, reward_bound=float(xs[-1]), degree=degree)
        self.xs, self.ys, self.noise = xs, ys, noise

    def _mean_bias(self, r):
        return np.interp(r, self.xs, self.ys)

    def eval(self, r, eps):
        hb = self._mean_bias(r)
        if self.noise == "additive":
            return hb + eps
        return hb + hb * eps * np.abs(eps)

    @property
    def variance_proxy(self) -> float:
        if self.noise == "additive":
            return self.sigma**2
        return 3.0 * self.sigma**4 * float(np.max(np.square(self.ys)))

    def to_dict(self) -> dict:
        doc = super().to_dict()
        doc.update(xs=self.xs.tolist(), ys=self.ys.tolist(), noise=self.noise)
        return doc


class AdditiveNoiseModel(RatingModel):
    """Keeps another model's bias but replaces its noise with ``+ eps``."""

    kind = "additive_noise"

    def __init__(self, base: RatingModel, sigma: float):
        super().__init__(sigma, reward_bound=base.reward_bound, degree=1)
        self.base = base

    def _mean_bias(self, r):
        return self.base._mean_bias(r)

    def inverse_mean_bias(self, y: float) -> float:
        return self.base.inverse_mean_bias(y)

    def eval(self, r, eps):
        return self.base._mean_bias(r) + eps

    @property
    def variance_proxy(self) -> float:
        return self.sigma**2

    def to_dict(self) -> dict:
        doc = super().to_dict()
        doc["base"] = self.base.to_dict()
        return doc


def model_from_dict(doc: dict) -> RatingModel:
    """Build a model from its config document."""
    doc = dict(doc)
    kind = doc.pop("kind", "quadratic_skew")
    if kind == "quadratic_skew":
        unknown = set(doc) - {"sigma", "reward_bound", "q"}
        if unknown:
            raise ValueError(f"unknown model keys: {sorted(unknown)}")
        if float(doc.get("reward_bound", 1.0)) != 1.0 or int(doc.get("q", 2)) != 2:
            raise ValueError("quadratic_skew has reward_bound 1 and q 2")
        return QuadraticSkewModel(doc.get("sigma", 1.0))
    if kind == "custom_table":
        unknown = set(doc) - {"sigma", "reward_bound", "q", "xs", "ys", "noise"}
        if unknown:
            raise ValueError(f"unknown model keys: {sorted(unknown)}")
        m = TableModel(doc["xs"], doc["ys"], doc.get("sigma", 1.0), doc.get("noise", "additive"), doc.get("q"))
        if "reward_bound" in doc and float(doc["reward_bound"]) != m.reward_bound:
            raise ValueError("reward_bound must equal the last table abscissa")
        return m
    if kind == "additive_noise":
        unknown = set(doc) - {"sigma", "reward_bound", "q", "base"}
        if unknown:
            raise ValueError(f"unknown model keys: {sorted(unknown)}")
        return AdditiveNoiseModel(model_from_dict(doc["base"]), doc.get("sigma", 1.0))
    raise ValueError(f"unknown model kind {kind!r}")


def sample_rating(model: RatingModel, r, rng):
    out = model.sample(r, rng)
    return float(out) if np.ndim(out) == 0 else out


def mean_bias(model: RatingModel, r):
    return model.mean_bias(r)


def inverse_mean_bias(model: RatingModel, y: float) -> float:
    return model.inverse_mean_bias(y)


def logistic(x):
    """Numerically stable 1 / (1 + exp(-x))."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return float(out) if out.ndim == 0 else out


def btl_prob(r0, r1):
    """Probability that the second item (label 1) is preferred."""
    return logistic(np.subtract(r1, r0))


def biased_btl_prob(model: RatingModel, r0, r1):
    return btl_prob(model.mean_bias(r0), model.mean_bias(r1))


def sample_preference(p, rng):
    arr = np.asarray(p, dtype=float)
    if np.any(~(arr >= 0)) or np.any(arr > 1):
        raise ValueError("preference probability must be in [0, 1]")
    draws = (as_generator(rng).random(arr.shape) < arr).astype(np.int8)
    return int(draws) if draws.ndim == 0 else draws


@dataclass
class ConditionReport:
    monotone_ok: bool
    zero_at_zero_ok: bool
    symmetry_stat: float
    c_h1_est: float
    c_h2_est: float
    grid_spec: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "monotone_ok": self.monotone_ok,
            "zero_at_zero_ok": self.zero_at_zero_ok,
            "symmetry_stat": self.symmetry_stat,
            "c_h1_est": self.c_h1_est,
            "c_h2_est": self.c_h2_est,
            "grid_spec": self.grid_spec,
        }


def _gapped_ratio_max(num_fn, den_fn, grid: np.ndarray, min_gap: float) -> float:
    hi, lo = np.meshgrid(grid, grid, indexing="ij")
    mask = (hi - lo) >= min_gap - 1e-15
    if not mask.any():
        return float("nan")
    num = num_fn(hi[mask]) - num_fn(lo[mask])
    den = den_fn(hi[mask] - lo[mask])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(den > 0, num / den, np.inf)
    return float(np.max(ratio))


def check_conditions(model: RatingModel, grid_size: int = 101, samples_per_point: int = 2000,
                     min_gap: float = 0.05, rng=None) -> ConditionReport:
    """Empirically audit the monotonicity, symmetry and regularity conditions."""
    R = model.reward_bound
    if grid_size < 2 or samples_per_point < 1 or not 0 < min_gap < R:
        raise ValueError("need grid_size >= 2, samples_per_point >= 1, 0 < min_gap < R")
    rng = as_generator(rng)
    grid = np.linspace(0.0, R, grid_size)
    hbar = model._mean_bias(grid)
    monotone = bool(np.all(np.diff(hbar) > 0) and hbar.min() >= 0 and hbar.max() <= R)
    zero_ok = bool(abs(float(model._mean_bias(np.float64(0.0)))) <= 1e-12)

    eps = rng.normal(0.0, model.sigma, size=(grid_size, samples_per_point))
    dev = model.eval(grid[:, None], eps) - hbar[:, None]
    symmetry = float(np.max(np.abs(np.mean(np.sign(dev), axis=1))))

    c_h2 = _gapped_ratio_max(model._mean_bias, model._mean_bias, grid, min_gap)
    if monotone:
        top = min(R, float(model._mean_bias(np.float64(R))))
        inv_grid = np.linspace(0.0, top, grid_size)
        inv = np.vectorize(model.inverse_mean_bias)
        c_h1 = _gapped_ratio_max(inv, inv, inv_grid, min_gap)
    else:
        c_h1 = float("nan")
    return ConditionReport(
        monotone_ok=monotone,
        zero_at_zero_ok=zero_ok,
        symmetry_stat=symmetry,
        c_h1_est=c_h1,
        c_h2_est=c_h2,
        grid_spec={"grid_size": grid_size, "samples_per_point": samples_per_point,
                   "min_gap": min_gap, "range": [0.0, R]},
    )
