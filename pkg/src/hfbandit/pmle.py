"""Pessimistic maximum likelihood for preference data.

Fit a Bradley-Terry reward on the sum-zero box ``F = {v : 1.v = 0,
|v|_inf <= R}``, build the ellipsoidal confidence set around it in the
empirical comparison-covariance seminorm, and return the policy whose
worst-case value over that set is largest.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from . import kernels
from .bandit import DeterministicPolicy, ShapeError
from .datasets import PreferenceDataset

MODES = ("iterative", "grid_exact")
GRID_MAX_DIM = 3
RANK_RTOL = 1e-10


class PessimismSolverError(RuntimeError):
    """The inner minimisation did not certify its value."""

    def __init__(self, message: str, lower: float, upper: float):
        super().__init__(f"{message} (bounds [{lower!r}, {upper!r}])")
        self.lower = lower
        self.upper = upper


class EnumerationCapError(ValueError):
    """Too many deterministic policies to enumerate."""


@dataclass(frozen=True)
class OptimizerConfig:
    max_iters: int = 50_000
    step_size: float | None = None  # None: 4 / lambda_max(Sigma_hat)
    tolerance: float = 1e-8
    mode: str = "iterative"
    value_tolerance: float = 1e-7
    grid_resolution: int = 2001

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.max_iters < 1 or self.tolerance <= 0 or self.value_tolerance <= 0:
            raise ValueError("max_iters, tolerance and value_tolerance must be positive")
        if self.step_size is not None and self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.grid_resolution < 3:
            raise ValueError("grid_resolution must be >= 3")

    def to_dict(self) -> dict:
        return {"max_iters": self.max_iters, "step_size": self.step_size, "tolerance": self.tolerance,
                "mode": self.mode, "value_tolerance": self.value_tolerance,
                "grid_resolution": self.grid_resolution}

    @classmethod
    def from_dict(cls, doc: dict) -> "OptimizerConfig":
        unknown = set(doc) - set(cls().to_dict())
        if unknown:
            raise ValueError(f"unknown optimizer keys: {sorted(unknown)}")
        return cls(**doc)


@dataclass(frozen=True, eq=False)
class RewardEstimate:
    values: np.ndarray  # flat, length S*A
    shape: tuple[int, int]
    diagnostics: dict = field(default_factory=dict)

    @property
    def table(self) -> np.ndarray:
        return self.values.reshape(self.shape)


@dataclass(frozen=True, eq=False)
class EmpiricalCovariance:
    matrix: np.ndarray


@dataclass(frozen=True, eq=False)
class ConfidenceSet:
    center: RewardEstimate
    covariance: EmpiricalCovariance
    radius: float
    reward_bound: float

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")

    def seminorm(self, f) -> float:
        d = np.asarray(f, dtype=float).ravel() - self.center.values
        return math.sqrt(max(float(d @ self.covariance.matrix @ d), 0.0))

    def contains(self, f, tol: float = 1e-9) -> bool:
        f = np.asarray(f, dtype=float).ravel()
        R = self.reward_bound
        return bool(abs(f.sum()) <= tol * max(1, f.size) and np.all(np.abs(f) <= R + tol)
                    and self.seminorm(f) <= self.radius + tol)


def _aggregate(dataset: PreferenceDataset, A: int):
    i0 = dataset.states * A + dataset.actions0
    i1 = dataset.states * A + dataset.actions1
    keys, inv = np.unique(np.stack([i0, i1], axis=1), axis=0, return_inverse=True)
    inv = inv.ravel()
    totals = np.bincount(inv, minlength=len(keys)).astype(float)
    wins = np.bincount(inv, weights=dataset.labels.astype(float), minlength=len(keys))
    return keys[:, 0].copy(), keys[:, 1].copy(), wins, totals


def log_likelihood(values, dataset: PreferenceDataset, A: int) -> float:
    """Mean log-likelihood of the labels under the logistic link."""
    f = np.asarray(values, dtype=float).ravel()
    i0, i1, wins, totals = _aggregate(dataset, A)
    d = f[i1] - f[i0]
    ll = -(wins * np.logaddexp(0.0, -d) + (totals - wins) * np.logaddexp(0.0, d)).sum()
    return float(ll / totals.sum())


def empirical_covariance(dataset: PreferenceDataset, S: int, A: int) -> EmpiricalCovariance:
    """(1/n) sum_i (e_{s,a0} - e_{s,a1})(e_{s,a0} - e_{s,a1})^T."""
    if len(dataset) == 0:
        raise ValueError("empty preference dataset")
    dataset.check_range(S, A)
    dim = S * A
    i0 = dataset.states * A + dataset.actions0
    i1 = dataset.states * A + dataset.actions1
    m = np.zeros((dim, dim))
    np.add.at(m, (i0, i0), 1.0)
    np.add.at(m, (i1, i1), 1.0)
    np.add.at(m, (i0, i1), -1.0)
    np.add.at(m, (i1, i0), -1.0)
    return EmpiricalCovariance(m / len(dataset))


def sum_zero_box_grid(dim: int, R: float, resolution: int) -> np.ndarray:
    """Grid points of {v : 1.v = 0, |v|_inf <= R} for dim <= 3."""
    if dim > GRID_MAX_DIM:
        raise ValueError(f"grid_exact supports at most {GRID_MAX_DIM} coordinates, got {dim}")
    if dim == 1:
        return np.zeros((1, 1))
    ticks = np.linspace(-R, R, resolution)
    if dim == 2:
        return np.stack([ticks, -ticks], axis=1)
    x, y = np.meshgrid(ticks, ticks, indexing="ij")
    z = -(x + y)
    keep = np.abs(z) <= R + 1e-12
    return np.stack([x[keep], y[keep], z[keep]], axis=1)


def mle_fit(dataset: PreferenceDataset, S: int, A: int, R: float,
            cfg: OptimizerConfig = OptimizerConfig(), record: bool = False) -> RewardEstimate:
    """Constrained Bradley-Terry maximum likelihood estimate over F."""
    if len(dataset) == 0:
        raise ValueError("empty preference dataset")
    dataset.check_range(S, A)
    dim = S * A
    if cfg.mode == "grid_exact":
        pts = sum_zero_box_grid(dim, R, cfg.grid_resolution)
        i0, i1, wins, totals = _aggregate(dataset, A)
        d = pts[:, i1] - pts[:, i0]
        ll = -(wins * np.logaddexp(0.0, -d) + (totals - wins) * np.logaddexp(0.0, d)).sum(axis=1)
        best = int(np.argmax(ll))
        return RewardEstimate(pts[best].copy(), (S, A),
                              {"mode": "grid_exact", "grid_points": len(pts), "iterations": 0})
    i0, i1, wins, totals = _aggregate(dataset, A)
    step = cfg.step_size
    if step is None:
        lmax = float(np.linalg.eigvalsh(empirical_covariance(dataset, S, A).matrix)[-1])
        step = 4.0 / lmax
    f, iters, gnorm, trace = kernels.mle_pga(i0, i1, wins, totals, dim, float(R), float(step),
                                             int(cfg.max_iters), float(cfg.tolerance), record)
    diag = {"mode": "iterative", "backend": kernels.BACKEND, "iterations": iters,
            "grad_map_norm": gnorm, "step_size": step, "converged": gnorm < cfg.tolerance}
    if record:
        diag["trace"] = trace
    return RewardEstimate(np.asarray(f), (S, A), diag)


def pmle_gamma(R: float, S: int, A: int) -> float:
    """Lower bound on the logistic curvature over F: 1 / (2 + e^x + e^-x), x = R sqrt(SA)."""
    if R <= 0:
        raise ValueError("R must be positive")
    x = R * math.sqrt(S * A)
    if x > 700:
        return math.exp(-x)
    return 1.0 / (2.0 + math.exp(x) + math.exp(-x))


def pmle_radius(gamma: float, S: int, A: int, delta: float, n: int, c_b_prime: float = 1.0) -> float:
    """Confidence radius c_b' sqrt((SA + log(1/delta)) / (gamma^2 n))."""
    if n < 1 or not 0 < delta < 1 or gamma <= 0:
        raise ValueError("need n >= 1, 0 < delta < 1 and gamma > 0")
    return c_b_prime * math.sqrt((S * A + math.log(1.0 / delta)) / (gamma**2 * n))


def confidence_set(dataset: PreferenceDataset, S: int, A: int, R: float, delta: float,
                   c_b_prime: float = 1.0, cfg: OptimizerConfig = OptimizerConfig()) -> ConfidenceSet:
    center = mle_fit(dataset, S, A, R, cfg)
    cov = empirical_covariance(dataset, S, A)
    radius = pmle_radius(pmle_gamma(R, S, A), S, A, delta, len(dataset), c_b_prime)
    return ConfidenceSet(center, cov, radius, float(R))


@dataclass
class InnerSolution:
    value: float
    lower: float
    upper: float
    point: np.ndarray
    method: str
    iterations: int = 0


class _PessimismProblem:
    """Spectral data of a confidence set reused across candidate policies."""

    def __init__(self, confset: ConfidenceSet):
        self.c = confset.center.values
        self.sigma = confset.covariance.matrix
        self.b = float(confset.radius)
        self.R = float(confset.reward_bound)
        self.dim = self.c.size
        evals, evecs = np.linalg.eigh(self.sigma)
        self.top = max(float(evals[-1]), 0.0)
        self.keep = evals > RANK_RTOL * self.top if self.top > 0 else np.zeros(self.dim, dtype=bool)
        self.evals, self.evecs = evals, evecs
        self.rank = int(self.keep.sum())

    def resid(self, f) -> float:
        d = f - self.c
        return float(d @ self.sigma @ d) - self.b * self.b

    def retract(self, f) -> np.ndarray:
        d = f - self.c
        norm = math.sqrt(max(float(d @ self.sigma @ d), 0.0))
        if norm <= self.b:
            return f
        return self.c + (self.b / norm) * d

    def lp_corner(self, w) -> np.ndarray:
        """argmin w.f over F: +R on the smallest weights, -R on the largest."""
        order = np.argsort(w, kind="stable")
        f = np.zeros(self.dim)
        k = self.dim // 2
        f[order[:k]] = self.R
        f[order[self.dim - k:]] = -self.R
        return f

    def solve_null_lp(self, w) -> InnerSolution:
        """Zero radius: minimise over F intersected with c + null(Sigma)."""
        basis = self.evecs[:, self.keep]
        a_eq = np.vstack([np.ones((1, self.dim)), basis.T])
        b_eq = np.concatenate([[0.0], basis.T @ self.c])
        res = linprog(w, A_eq=a_eq, b_eq=b_eq, bounds=[(-self.R, self.R)] * self.dim, method="highs")
        if not res.success:
            val = float(w @ self.c)
            return InnerSolution(val, val, val, self.c.copy(), "center")
        val = min(float(res.fun), float(w @ self.c))
        return InnerSolution(val, val, val, np.asarray(res.x), "null_lp")

    def closed_form(self, w_perp) -> np.ndarray | None:
        """Minimiser when only the ellipsoid binds, or None."""
        coords = self.evecs.T @ w_perp
        if np.linalg.norm(coords[~self.keep]) > 1e-12 * max(np.linalg.norm(w_perp), 1e-300):
            return None
        scaled = coords[self.keep] / self.evals[self.keep]
        q = float(coords[self.keep] @ scaled)
        if q <= 0:
            return None
        u = -(self.b / math.sqrt(q)) * (self.evecs[:, self.keep] @ scaled)
        f = self.c + u
        if np.max(np.abs(f)) <= self.R * (1 + 1e-12):
            return f
        return None

    def solve_iterative(self, w, cfg: OptimizerConfig) -> InnerSolution:
        w = np.asarray(w, dtype=float)
        at_center = float(w @ self.c)
        if self.dim == 1:
            return InnerSolution(at_center, at_center, at_center, self.c.copy(), "trivial")
        w_perp = w - w.mean()
        scale = max(1.0, self.R * float(np.abs(w).sum()))
        if np.linalg.norm(w_perp) <= 1e-15 * max(1.0, np.abs(w).max()):
            return InnerSolution(at_center, at_center, at_center, self.c.copy(), "constant")
        if self.b == 0.0:
            if self.rank >= self.dim - 1:
                return InnerSolution(at_center, at_center, at_center, self.c.copy(), "singleton")
            return self.solve_null_lp(w)
        f = self.closed_form(w_perp)
        if f is not None:
            val = float(w @ f)
            return InnerSolution(val, val, val, f, "closed_form")

        corner = self.lp_corner(w)
        if self.resid(corner) <= 0.0:
            val = float(w @ corner)
            return InnerSolution(val, val, val, corner, "box_corner")

        inner_tol = 1e-3 * cfg.value_tolerance
        iters_total = 0

        def inner(lam, x0):
            nonlocal iters_total
            x, it, _ = kernels.box_qp(w, self.c, self.sigma, lam, self.R, x0,
                                      2.0 * lam * self.top, cfg.max_iters, inner_tol)
            iters_total += it
            return x

        def dual(lam, x):
            return float(w @ x) + lam * self.resid(x)

        lam_hi = float(np.linalg.norm(w_perp)) / (2.0 * self.b * math.sqrt(self.top))
        x_hi = inner(lam_hi, self.c)
        while self.resid(x_hi) > 0.0 and lam_hi < 1e15:
            lam_hi *= 10.0
            x_hi = inner(lam_hi, x_hi)
        lam_lo = lam_hi / 10.0
        x_lo = inner(lam_lo, x_hi)
        while self.resid(x_lo) <= 0.0 and lam_lo > 1e-15:
            lam_hi, x_hi = lam_lo, x_lo
            lam_lo /= 10.0
            x_lo = inner(lam_lo, x_lo)

        lower = max(dual(lam_lo, x_lo), dual(lam_hi, x_hi))
        feasible = self.retract(x_hi)
        upper = min(float(w @ feasible), at_center)
        for _ in range(200):
            if upper - lower <= cfg.value_tolerance * scale or lam_hi / lam_lo < 1 + 1e-13:
                break
            lam = math.sqrt(lam_lo * lam_hi)
            x = inner(lam, x_hi)
            lower = max(lower, dual(lam, x))
            if self.resid(x) > 0.0:
                lam_lo = lam
            else:
                lam_hi, x_hi = lam, x
                cand = self.retract(x)
                if float(w @ cand) < upper:
                    upper, feasible = float(w @ cand), cand
        lower = min(lower, upper)
        if upper - lower > max(cfg.value_tolerance * scale, 1e-9):
            raise PessimismSolverError("pessimistic value did not converge", lower, upper)
        return InnerSolution(upper, lower, upper, feasible, "dual_bisection", iters_total)

    def solve_grid(self, w, cfg: OptimizerConfig) -> InnerSolution:
        w = np.asarray(w, dtype=float)
        pts = sum_zero_box_grid(self.dim, self.R, cfg.grid_resolution)
        d = pts - self.c
        q = np.einsum("ij,jk,ik->i", d, self.sigma, d)
        feasible = pts[q <= self.b * self.b + 1e-12]
        cand = np.vstack([feasible, self.c[None, :]])
        vals = cand @ w
        best = int(np.argmin(vals))
        return InnerSolution(float(vals[best]), float(vals[best]), float(vals[best]),
                             cand[best].copy(), "grid_exact", len(pts))

    def solve(self, w, cfg: OptimizerConfig) -> InnerSolution:
        if cfg.mode == "grid_exact":
            return self.solve_grid(w, cfg)
        return self.solve_iterative(w, cfg)


def _policy_weights(action_of, rho, A: int) -> np.ndarray:
    S = len(rho)
    w = np.zeros((S, A))
    w[np.arange(S), np.asarray(action_of)] = rho
    return w.ravel()


def solve_pessimistic(policy: DeterministicPolicy, confset: ConfidenceSet, rho,
                      cfg: OptimizerConfig = OptimizerConfig()) -> InnerSolution:
    """Worst-case value of ``policy`` over the confidence set, with bounds."""
    S, A = confset.center.shape
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (S,) or policy.action_of.shape != (S,):
        raise ShapeError("policy / rho do not match the confidence set shape")
    if policy.action_of.min() < 0 or policy.action_of.max() >= A:
        raise ShapeError("policy action index out of range")
    return _PessimismProblem(confset).solve(_policy_weights(policy.action_of, rho, A), cfg)


def pessimistic_value(policy: DeterministicPolicy, confset: ConfidenceSet, rho,
                      cfg: OptimizerConfig = OptimizerConfig()) -> float:
    """min over f in the confidence set of E_rho[f(s, pi(s))]."""
    return solve_pessimistic(policy, confset, rho, cfg).value


@dataclass
class PMLEResult:
    policy: DeterministicPolicy
    value: float
    confset: ConfidenceSet
    exact: bool
    diagnostics: dict


def pmle_fit(dataset: PreferenceDataset, bandit_shape, delta: float, c_b_prime: float = 1.0,
             cfg: OptimizerConfig = OptimizerConfig(), search: str = "exact",
             enumeration_cap: int = 10**6) -> PMLEResult:
    """Pessimistic MLE with full diagnostics.

    ``bandit_shape`` is ``(S, A, R, rho)``.  ``search="exact"`` enumerates all
    A^S deterministic policies; ``search="coordinate_ascent"`` improves one
    state at a time and is not guaranteed optimal.  Ties go to the
    lexicographically smallest action assignment.
    """
    S, A, R, rho = bandit_shape
    rho = np.asarray(rho, dtype=float)
    confset = confidence_set(dataset, S, A, R, delta, c_b_prime, cfg)
    problem = _PessimismProblem(confset)
    tie_tol = 1e-9 * max(1.0, R)
    cache: dict[tuple, float] = {}

    def value(actions: tuple) -> float:
        if actions not in cache:
            cache[actions] = problem.solve(_policy_weights(actions, rho, A), cfg).value
        return cache[actions]

    if search == "exact":
        if A**S > enumeration_cap:
            raise EnumerationCapError(
                f"{A}^{S} policies exceed the enumeration cap {enumeration_cap}; "
                "request search='coordinate_ascent' explicitly")
        best, best_val = None, -math.inf
        for actions in itertools.product(range(A), repeat=S):
            v = value(actions)
            if v > best_val + tie_tol:
                best, best_val = actions, v
        exact = True
    elif search == "coordinate_ascent":
        best = tuple(int(a) for a in np.argmax(confset.center.table, axis=1))
        best_val = value(best)
        for _ in range(100):
            changed = False
            for s in range(S):
                for a in range(A):
                    if a == best[s]:
                        continue
                    cand = best[:s] + (a,) + best[s + 1:]
                    v = value(cand)
                    if v > best_val + tie_tol:
                        best, best_val, changed = cand, v, True
            if not changed:
                break
        exact = False
    else:
        raise ValueError(f"unknown search {search!r}")
    diag = dict(confset.center.diagnostics)
    diag.update(radius=confset.radius, search=search, exact=exact, policies_evaluated=len(cache))
    return PMLEResult(DeterministicPolicy(best), best_val, confset, exact, diag)


def pmle_policy(dataset: PreferenceDataset, bandit_shape, delta: float, c_b_prime: float = 1.0,
                cfg: OptimizerConfig = OptimizerConfig(), search: str = "exact",
                enumeration_cap: int = 10**6) -> DeterministicPolicy:
    return pmle_fit(dataset, bandit_shape, delta, c_b_prime, cfg, search, enumeration_cap).policy
