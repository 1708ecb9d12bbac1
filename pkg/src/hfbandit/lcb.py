"""Lower-confidence-bound policy learning from rating data."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bandit import DeterministicPolicy
from .datasets import RatingDataset

VARIANTS = ("standard", "chaos", "subexp")


@dataclass(frozen=True)
class PenaltySpec:
    """Count-dependent penalty ``b_m``.

    ``standard``: c_b sqrt(v_sq log(SA/delta) / m), with v_sq the learner's
    variance estimate c_V * V^2.
    ``chaos``: c_b sqrt(v_sq log^q(SA/delta) / m), for degree-q noise.
    ``subexp``: sqrt(64 sigma^4 L / m) + 8 sigma^2 L / m, L = log(SA/delta),
    tailored to the quadratic-skew rating noise.
    """

    variant: str = "standard"
    c_b: float = 1.0
    v_sq: float = 1.0
    q: int = 1
    sigma: float = 1.0
    delta: float = 0.1

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.c_b <= 0 or self.v_sq <= 0 or self.sigma <= 0:
            raise ValueError("c_b, v_sq and sigma must be positive")
        if self.q < 1:
            raise ValueError("q must be >= 1")

    @classmethod
    def standard(cls, c_b: float = 1.0, v_sq: float = 1.0, delta: float = 0.1, c_v: float = 1.0):
        return cls("standard", c_b=c_b, v_sq=c_v * v_sq, delta=delta)

    @classmethod
    def chaos(cls, c_b: float = 1.0, v_sq: float = 1.0, q: int = 2, delta: float = 0.1):
        return cls("chaos", c_b=c_b, v_sq=v_sq, q=q, delta=delta)

    @classmethod
    def subexp(cls, sigma: float = 1.0, delta: float = 0.1):
        return cls("subexp", sigma=sigma, delta=delta)

    def to_dict(self) -> dict:
        return {"variant": self.variant, "c_b": self.c_b, "v_sq": self.v_sq,
                "q": self.q, "sigma": self.sigma, "delta": self.delta}

    @classmethod
    def from_dict(cls, doc: dict) -> "PenaltySpec":
        unknown = set(doc) - {"variant", "c_b", "v_sq", "q", "sigma", "delta"}
        if unknown:
            raise ValueError(f"unknown penalty keys: {sorted(unknown)}")
        return cls(**doc)


def penalty(spec: PenaltySpec, m, S: int, A: int):
    """Penalty for a pair observed ``m`` times; ``inf`` when ``m == 0``.

    Works elementwise on arrays of counts.
    """
    m_arr = np.asarray(m, dtype=float)
    if np.any(m_arr < 0):
        raise ValueError("counts must be nonnegative")
    log_term = np.log(S * A / spec.delta)
    safe = np.where(m_arr > 0, m_arr, 1.0)
    if spec.variant == "standard":
        b = spec.c_b * np.sqrt(spec.v_sq * log_term / safe)
    elif spec.variant == "chaos":
        b = spec.c_b * np.sqrt(spec.v_sq * log_term**spec.q / safe)
    else:
        s2 = spec.sigma**2
        b = np.sqrt(64.0 * s2 * s2 * log_term / safe) + 8.0 * s2 * log_term / safe
    b = np.where(m_arr > 0, b, np.inf)
    return float(b) if b.ndim == 0 else b


def empirical_means(dataset: RatingDataset, S: int, A: int, normalize_by_total: bool = False):
    """Per-pair rating means (0 for unseen pairs) and counts.

    ``normalize_by_total`` divides the per-pair sums by the dataset size
    instead of the per-pair count, the literal reading of the pseudo-code.
    """
    dataset.check_range(S, A)
    idx = dataset.flat_index(A)
    counts = np.bincount(idx, minlength=S * A)
    sums = np.bincount(idx, weights=dataset.ratings, minlength=S * A)
    if normalize_by_total:
        means = sums / max(len(dataset), 1)
    else:
        means = np.divide(sums, counts, out=np.zeros(S * A), where=counts > 0)
    return means.reshape(S, A), counts.reshape(S, A)


def lcb_policy(dataset: RatingDataset, S: int, A: int, spec: PenaltySpec,
               normalize_by_total: bool = False):
    """Return the greedy policy on ``max(mean - b_count, 0)`` and that table."""
    means, counts = empirical_means(dataset, S, A, normalize_by_total)
    b = penalty(spec, counts, S, A)
    pess = np.where(counts > 0, np.maximum(means - np.where(counts > 0, b, 0.0), 0.0), 0.0)
    return DeterministicPolicy(np.argmax(pess, axis=1)), pess
