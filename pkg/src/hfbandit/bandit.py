"""Tabular contextual bandits, deterministic policies and suboptimality."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

PROB_ATOL = 1e-12


class ShapeError(ValueError):
    """Policy, distribution or dataset does not match the bandit shape."""


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ContextualBandit:
    """Deterministic reward table ``reward[s, a]`` in ``[0, reward_bound]``."""

    reward: np.ndarray
    reward_bound: float
    initial_dist: np.ndarray

    def __init__(self, reward, reward_bound: float = 1.0, initial_dist=None):
        reward = _frozen(reward)
        if reward.ndim != 2 or reward.size == 0:
            raise ShapeError("reward must be a non-empty (S, A) table")
        S = reward.shape[0]
        if initial_dist is None:
            initial_dist = np.full(S, 1.0 / S)
        rho = _frozen(initial_dist)
        if reward_bound <= 0:
            raise ValueError("reward_bound must be positive")
        if not np.all(np.isfinite(reward)) or reward.min() < 0 or reward.max() > reward_bound:
            raise ValueError(f"rewards must lie in [0, {reward_bound}]")
        if rho.shape != (S,):
            raise ShapeError(f"initial_dist has shape {rho.shape}, expected ({S},)")
        if rho.min() < 0 or abs(rho.sum() - 1.0) > PROB_ATOL:
            raise ValueError("initial_dist must be a probability vector")
        object.__setattr__(self, "reward", reward)
        object.__setattr__(self, "reward_bound", float(reward_bound))
        object.__setattr__(self, "initial_dist", rho)

    @property
    def num_states(self) -> int:
        return self.reward.shape[0]

    @property
    def num_actions(self) -> int:
        return self.reward.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.reward.shape

    def to_dict(self) -> dict:
        return {
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "reward_bound": self.reward_bound,
            "reward": self.reward.ravel().tolist(),
            "initial_dist": self.initial_dist.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ContextualBandit":
        expected = {"num_states", "num_actions", "reward_bound", "reward", "initial_dist"}
        extra = set(doc) - expected
        if extra:
            raise ValueError(f"unknown bandit fields: {sorted(extra)}")
        S, A = int(doc["num_states"]), int(doc["num_actions"])
        reward = np.asarray(doc["reward"], dtype=float)
        if reward.size != S * A:
            raise ShapeError(f"reward has {reward.size} entries, expected {S * A}")
        return cls(reward.reshape(S, A), doc["reward_bound"], doc.get("initial_dist"))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def loads(cls, text: str) -> "ContextualBandit":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class DeterministicPolicy:
    """``action_of[s]`` is the action taken in state ``s``."""

    action_of: np.ndarray

    def __init__(self, action_of: Sequence[int]):
        arr = _frozen(action_of, dtype=np.int64)
        if arr.ndim != 1:
            raise ShapeError("action_of must be one-dimensional")
        object.__setattr__(self, "action_of", arr)

    def __eq__(self, other) -> bool:
        return isinstance(other, DeterministicPolicy) and np.array_equal(self.action_of, other.action_of)

    def __hash__(self) -> int:
        return hash(tuple(self.action_of.tolist()))

    def __repr__(self) -> str:
        return f"DeterministicPolicy({self.action_of.tolist()})"

    def validate(self, bandit: ContextualBandit) -> None:
        if self.action_of.shape != (bandit.num_states,):
            raise ShapeError(
                f"policy covers {self.action_of.size} states, bandit has {bandit.num_states}"
            )
        if self.action_of.size and (self.action_of.min() < 0 or self.action_of.max() >= bandit.num_actions):
            raise ShapeError("policy action index out of range")


@dataclass(frozen=True, eq=False)
class Visitation:
    """State-action visitation mass, shape (S, A)."""

    mass: np.ndarray

    def __init__(self, mass):
        mass = _frozen(mass)
        if mass.ndim != 2:
            raise ShapeError("visitation mass must be an (S, A) table")
        if mass.min() < 0 or abs(mass.sum() - 1.0) > PROB_ATOL:
            raise ValueError("visitation mass must be a probability table")
        object.__setattr__(self, "mass", mass)


def policy_value(bandit: ContextualBandit, policy: DeterministicPolicy) -> float:
    """Expected reward ``sum_s rho(s) r(s, pi(s))``."""
    policy.validate(bandit)
    states = np.arange(bandit.num_states)
    return float(np.dot(bandit.initial_dist, bandit.reward[states, policy.action_of]))


def optimal_policy(bandit: ContextualBandit) -> DeterministicPolicy:
    # np.argmax returns the first maximiser, which is the lowest-index tie-break.
    return DeterministicPolicy(np.argmax(bandit.reward, axis=1))


def suboptimality(bandit: ContextualBandit, policy: DeterministicPolicy) -> float:
    policy.validate(bandit)
    states = np.arange(bandit.num_states)
    gaps = bandit.reward.max(axis=1) - bandit.reward[states, policy.action_of]
    return float(np.dot(bandit.initial_dist, gaps))


def visitation(bandit: ContextualBandit, policy: DeterministicPolicy) -> Visitation:
    policy.validate(bandit)
    mass = np.zeros(bandit.shape)
    mass[np.arange(bandit.num_states), policy.action_of] = bandit.initial_dist
    return Visitation(mass)
