"""Monte Carlo experiments: suboptimality curves, rate fits, sample complexity."""
from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .bandit import ContextualBandit, DeterministicPolicy, optimal_policy, suboptimality
from .datasets import (PairSamplingDist, RatingSamplingDist, generate_preference_dataset,
                       generate_rating_dataset)
from .feedback import QuadraticSkewModel, model_from_dict
from .instances import InstanceBundle, hard_instance_partial, hard_instance_uniform, two_action_instance
from .lcb import PenaltySpec, lcb_policy
from .pmle import OptimizerConfig, pmle_fit
from .rng import cell_seed, cell_stream, stream_from_seed

log = logging.getLogger(__name__)

INSTANCE_NAMES = ("hard_instance_partial", "hard_instance_uniform", "two_action_instance", "custom")
ALGORITHM_NAMES = ("lcb", "pmle", "rating_mean")
CSV_HEADER = "n,trial,subopt,seed"


class CellError(RuntimeError):
    """An algorithm failed inside one (n, trial) cell."""

    def __init__(self, n: int, trial: int, cause: BaseException):
        super().__init__(f"cell (n={n}, trial={trial}) failed: {type(cause).__name__}: {cause}")
        self.n, self.trial, self.cause = n, trial, cause


@dataclass
class ExperimentConfig:
    instance: dict
    algorithm: dict
    n_grid: list[int]
    trials_per_n: int = 100
    master_seed: int = 0
    output_path: str = "results.csv"
    model: dict | None = None
    workers: int = 1

    def __post_init__(self):
        self.n_grid = [int(n) for n in self.n_grid]
        if not self.n_grid or any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ValueError("n_grid must be nonempty and strictly increasing")
        if self.n_grid[0] < 1:
            raise ValueError("dataset sizes must be >= 1")
        if int(self.trials_per_n) < 1:
            raise ValueError("trials_per_n must be >= 1")
        if self.instance.get("name") not in INSTANCE_NAMES:
            raise ValueError(f"instance name must be one of {INSTANCE_NAMES}")
        if self.algorithm.get("name") not in ALGORITHM_NAMES:
            raise ValueError(f"algorithm name must be one of {ALGORITHM_NAMES}")
        self.trials_per_n = int(self.trials_per_n)
        self.master_seed = int(self.master_seed)
        self.workers = max(1, int(self.workers))

    def to_dict(self) -> dict:
        return {"instance": self.instance, "algorithm": self.algorithm, "model": self.model,
                "n_grid": list(self.n_grid), "trials_per_n": self.trials_per_n,
                "master_seed": self.master_seed, "output_path": self.output_path,
                "workers": self.workers}


@dataclass
class ExperimentResult:
    rows: list[tuple[int, int, float, int]]
    metadata: dict
    failures: list[dict] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = [CSV_HEADER]
        lines += [f"{n},{t},{s!r},{seed}" for n, t, s, seed in self.rows]
        return "\n".join(lines) + "\n"

    def mean_curve(self) -> list[tuple[int, float]]:
        by_n: dict[int, list[float]] = {}
        for n, _, s, _ in self.rows:
            if not math.isnan(s):
                by_n.setdefault(n, []).append(s)
        return [(n, float(np.mean(v))) for n, v in sorted(by_n.items())]


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r_squared: float


# -- instances and algorithms -------------------------------------------------

def _resolve_n(params: dict, n: int) -> int:
    value = params.get("n", "auto")
    return n if value in ("auto", None) else int(value)


def build_instance(instance_spec: dict, n: int, model_spec: dict | None = None) -> InstanceBundle:
    """Materialise an instance spec for dataset size ``n``."""
    key = json.dumps([instance_spec, model_spec], sort_keys=True)
    name = instance_spec.get("name")
    depends_on_n = name in ("hard_instance_partial", "hard_instance_uniform") and \
        instance_spec.get("params", {}).get("n", "auto") in ("auto", None)
    return _build_instance_cached(key, n if depends_on_n else -1)


@lru_cache(maxsize=16)
def _build_instance_cached(key: str, n: int) -> InstanceBundle:
    instance_spec, model_spec = json.loads(key)
    name = instance_spec["name"]
    params = dict(instance_spec.get("params", {}))
    unknown_top = set(instance_spec) - {"name", "params", "bandit", "rating_dist", "pair_dist"}
    if unknown_top:
        raise ValueError(f"unknown instance keys: {sorted(unknown_top)}")
    model = model_from_dict(model_spec) if model_spec else None
    if name in ("hard_instance_partial", "hard_instance_uniform"):
        unknown = set(params) - {"n", "sigma"}
        if unknown:
            raise ValueError(f"unknown {name} params: {sorted(unknown)}")
        ctor = hard_instance_partial if name == "hard_instance_partial" else hard_instance_uniform
        bundle = ctor(_resolve_n(params, n), float(params.get("sigma", 1.0)))
    elif name == "two_action_instance":
        unknown = set(params) - {"h_r1", "h_r2"}
        if unknown:
            raise ValueError(f"unknown two_action_instance params: {sorted(unknown)}")
        return two_action_instance(float(params["h_r1"]), float(params["h_r2"]), model)
    elif name == "custom":
        bandit = ContextualBandit.from_dict(instance_spec["bandit"])
        S, A = bandit.shape
        rd = instance_spec.get("rating_dist")
        pd = instance_spec.get("pair_dist")
        return InstanceBundle(
            bandit=bandit,
            model=model or QuadraticSkewModel(1.0),
            provenance="custom",
            rating_dist=RatingSamplingDist(np.reshape(rd, (S, A))) if rd is not None else None,
            pair_dist=PairSamplingDist(np.reshape(pd, (S, A, A))) if pd is not None else None,
        )
    else:
        raise ValueError(f"unknown instance {name!r}")
    if model is not None:
        bundle = InstanceBundle(bundle.bandit, model, bundle.provenance, bundle.rating_dist, bundle.pair_dist)
    return bundle


def penalty_from_spec(algorithm_spec: dict, bundle: InstanceBundle) -> PenaltySpec:
    doc = dict(algorithm_spec.get("penalty", {}))
    c_v = float(algorithm_spec.get("c_v", 1.0))
    variant = doc.get("variant", "standard")
    if variant in ("standard", "chaos") and "v_sq" not in doc:
        doc["v_sq"] = c_v * bundle.model.variance_proxy
    if variant == "subexp" and "sigma" not in doc:
        doc["sigma"] = bundle.model.sigma
    return PenaltySpec.from_dict(doc)


_ALGO_KEYS = {
    "lcb": {"name", "penalty", "c_v", "normalize_by_total"},
    "pmle": {"name", "delta", "c_b_prime", "biased", "optimizer", "search", "enumeration_cap"},
    "rating_mean": {"name", "noise_sigma"},
}


def validate_algorithm(spec: dict) -> None:
    name = spec.get("name")
    if name not in _ALGO_KEYS:
        raise ValueError(f"algorithm name must be one of {ALGORITHM_NAMES}")
    unknown = set(spec) - _ALGO_KEYS[name]
    if unknown:
        raise ValueError(f"unknown {name} keys: {sorted(unknown)}")


def run_algorithm(bundle: InstanceBundle, algorithm_spec: dict, n: int, rng) -> tuple[DeterministicPolicy, dict]:
    """Draw a dataset of size ``n`` and return the learned policy.

    For ``rating_mean``, ``n`` is the number of ratings per state-action pair,
    each rating being the biased reward plus N(0, noise_sigma^2).
    """
    validate_algorithm(algorithm_spec)
    name = algorithm_spec["name"]
    bandit = bundle.bandit
    S, A = bandit.shape
    if name == "lcb":
        if bundle.rating_dist is None:
            raise ValueError("instance has no rating distribution")
        data = generate_rating_dataset(bandit, bundle.model, bundle.rating_dist, n, rng)
        spec = penalty_from_spec(algorithm_spec, bundle)
        policy, _ = lcb_policy(data, S, A, spec, bool(algorithm_spec.get("normalize_by_total", False)))
        return policy, {}
    if name == "pmle":
        if bundle.pair_dist is None:
            raise ValueError("instance has no pair distribution")
        bias = bundle.model if algorithm_spec.get("biased", False) else None
        data = generate_preference_dataset(bandit, bias, bundle.pair_dist, n, rng)
        cfg = OptimizerConfig.from_dict(algorithm_spec.get("optimizer", {}))
        res = pmle_fit(data, (S, A, bandit.reward_bound, bandit.initial_dist),
                       float(algorithm_spec.get("delta", 0.1)),
                       float(algorithm_spec.get("c_b_prime", 1.0)), cfg,
                       algorithm_spec.get("search", "exact"),
                       int(algorithm_spec.get("enumeration_cap", 10**6)))
        diag = {k: res.diagnostics[k] for k in ("iterations", "grad_map_norm", "mode", "exact")
                if k in res.diagnostics}
        return res.policy, diag
    sigma = float(algorithm_spec.get("noise_sigma", 1.0))
    hbar = np.asarray(bundle.model.mean_bias(bandit.reward), dtype=float)
    noise = rng.normal(0.0, sigma, size=(n, S, A))
    means = hbar + noise.mean(axis=0)
    return DeterministicPolicy(np.argmax(means, axis=1)), {}


def run_trial(config: ExperimentConfig, n: int, trial: int) -> float:
    """Suboptimality of one (n, trial) cell; bit-identical on reruns."""
    validate_algorithm(config.algorithm)
    return _run_cell(config, n, trial)[0]


def _run_cell(config: ExperimentConfig, n: int, trial: int) -> tuple[float, int, dict]:
    seed = cell_seed(config.master_seed, n, trial)
    try:
        bundle = build_instance(config.instance, n, config.model)
        policy, diag = run_algorithm(bundle, config.algorithm, n, stream_from_seed(seed))
        return suboptimality(bundle.bandit, policy), seed, diag
    except Exception as exc:  # noqa: BLE001 - tagged and re-raised per cell
        raise CellError(n, trial, exc) from exc


def _run_block(config_doc: dict, n: int, trials: list[int]):
    config = ExperimentConfig(**config_doc)
    out = []
    for t in trials:
        seed = cell_seed(config.master_seed, n, t)
        try:
            sub, seed, diag = _run_cell(config, n, t)
            out.append((n, t, sub, seed, diag, None))
        except CellError as exc:
            out.append((n, t, float("nan"), seed, {}, str(exc)))
    return out


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run every (n, trial) cell; rows come back ordered by (n, trial)."""
    validate_algorithm(config.algorithm)
    start = time.perf_counter()
    doc = config.to_dict()
    blocks = []
    chunk = max(1, math.ceil(config.trials_per_n / config.workers))
    for n in config.n_grid:
        trials = list(range(config.trials_per_n))
        blocks += [(n, trials[i:i + chunk]) for i in range(0, len(trials), chunk)]
    cells = []
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            for part in pool.map(_run_block, [doc] * len(blocks), *zip(*blocks)):
                cells += part
    else:
        for n, trials in blocks:
            cells += _run_block(doc, n, trials)
    cells.sort(key=lambda c: (c[0], c[1]))
    rows = [(n, t, s, seed) for n, t, s, seed, _, _ in cells]
    failures = [{"n": n, "trial": t, "error": err} for n, t, _, _, _, err in cells if err]
    diagnostics = [{"n": n, "trial": t, **d} for n, t, _, _, d, _ in cells if d]
    meta = {
        "config": doc,
        "code_version": __version__,
        "kernel_backend": kernels.BACKEND,
        "rows": len(rows),
        "failures": failures,
    }
    if diagnostics:
        meta["optimizer_diagnostics"] = diagnostics
    meta_timing = {"wall_time_s": time.perf_counter() - start}
    result = ExperimentResult(rows, meta, failures)
    result.metadata["timing"] = meta_timing
    return result


def output_paths(output_path: str) -> dict[str, Path]:
    base = Path(output_path)
    stem = base.with_suffix("") if base.suffix == ".csv" else base
    return {
        "csv": stem.with_suffix(".csv"),
        "meta": Path(f"{stem}.meta.json"),
        "plot": Path(f"{stem}.gp"),
        "timing": Path(f"{stem}.timing.json"),
    }


def gnuplot_script(csv_path: Path, title: str = "mean suboptimality") -> str:
    return "\n".join([
        "# mean suboptimality against dataset size (log-log)",
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set logscale xy",
        "set xlabel 'n'",
        "set ylabel 'mean suboptimality'",
        f"set title '{title}'",
        f"plot '{csv_path.name}' using 1:3 smooth unique with linespoints title 'mean over trials'",
        "",
    ])


def write_result(result: ExperimentResult, output_path: str) -> dict[str, Path]:
    """Persist CSV, metadata sidecar, gnuplot script and timing file.

    Everything except the timing file is a pure function of the config.
    """
    paths = output_paths(output_path)
    paths["csv"].parent.mkdir(parents=True, exist_ok=True)
    paths["csv"].write_text(result.to_csv())
    meta = {k: v for k, v in result.metadata.items() if k != "timing"}
    paths["meta"].write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    paths["plot"].write_text(gnuplot_script(paths["csv"]))
    paths["timing"].write_text(json.dumps(result.metadata.get("timing", {}), indent=2) + "\n")
    return paths


# -- analysis -----------------------------------------------------------------

def loglog_slope(curve) -> SlopeFit:
    """Least-squares line through (log n, log mean)."""
    pts = [(float(n), float(m)) for n, m in curve]
    if len(pts) < 2:
        raise ValueError("need at least two points")
    bad = [(n, m) for n, m in pts if not (n > 0 and m > 0)]
    if bad:
        raise ValueError(f"cannot take logs of nonpositive points: {bad}")
    x = np.log([n for n, _ in pts])
    y = np.log([m for _, m in pts])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    # a flat curve (up to rounding) is fitted perfectly by a zero slope
    flat = ss_tot <= 1e-24 * len(y) * max(1.0, float(np.max(np.abs(y)))) ** 2
    r2 = 1.0 if flat else max(0.0, min(1.0, 1.0 - ss_res / ss_tot))
    if flat:
        slope = 0.0
    return SlopeFit(float(slope), float(intercept), r2)


def failure_rate(bundle: InstanceBundle, algorithm_spec: dict, n: int, trials: int,
                 master_seed: int) -> float:
    """Fraction of trials whose learned policy is not optimal."""
    fails = 0
    for t in range(trials):
        policy, _ = run_algorithm(bundle, algorithm_spec, n, cell_stream(master_seed, n, t))
        if suboptimality(bundle.bandit, policy) > 0.0:
            fails += 1
    return fails / trials


def empirical_sample_complexity(bundle: InstanceBundle, algorithm_spec: dict, delta: float,
                                n_lo: int, n_hi: int, trials: int, master_seed: int = 0) -> int:
    """Smallest n whose empirical failure rate is <= delta.

    Doubling from ``n_lo`` brackets the threshold, bisection locates it.  The
    failure rate is assumed nonincreasing in n; a post-check at twice the
    answer logs a warning when that looks violated.
    """
    if not 1 <= n_lo < n_hi:
        raise ValueError("need 1 <= n_lo < n_hi")
    if 3.0 * math.sqrt(delta * (1 - delta) / trials) >= delta / 2:
        raise ValueError(f"{trials} trials are too few to resolve a failure rate of {delta}")
    cache: dict[int, float] = {}

    def rate(n: int) -> float:
        if n not in cache:
            cache[n] = failure_rate(bundle, algorithm_spec, n, trials, master_seed)
        return cache[n]

    if rate(n_lo) <= delta:
        found = n_lo
    else:
        lo, hi = n_lo, n_lo
        while True:
            hi = min(2 * hi, n_hi)
            if rate(hi) <= delta:
                break
            if hi == n_hi:
                raise ValueError(f"threshold not bracketed by [{n_lo}, {n_hi}]")
            lo = hi
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if rate(mid) <= delta:
                hi = mid
            else:
                lo = mid
        found = hi
    post = rate(2 * found)
    if post > delta + 3.0 * math.sqrt(delta * (1 - delta) / trials):
        log.warning("failure rate %.4f at 2n=%d exceeds delta; monotonicity looks violated", post, 2 * found)
    return found


def count_concentration_threshold(prob, delta: float) -> float:
    """n above which all counts sit in [d n / 2, 3 d n / 2] w.p. 1 - delta."""
    p = np.asarray(prob, dtype=float).ravel()
    k = p.size
    return 8.0 * k * math.log(2.0 * k / delta) / float(p[p > 0].min())


def count_concentration_check(dist: RatingSamplingDist, n: int, delta: float, replications: int,
                              master_seed: int = 0, lower: float = 0.5, upper: float = 1.5) -> float:
    """Empirical frequency that lower*d*n <= count <= upper*d*n for every pair."""
    if n < 1 or replications < 1:
        raise ValueError("need n >= 1 and replications >= 1")
    if n <= count_concentration_threshold(dist.prob, delta):
        log.warning("n=%d is below the count-concentration threshold", n)
    p = dist.prob.ravel()
    counts = cell_stream(master_seed, n).multinomial(n, p, size=replications)
    ok = (counts >= lower * p * n) & (counts <= upper * p * n)
    return float(np.mean(np.all(ok, axis=1)))


def optimal_action_table(bandit: ContextualBandit) -> np.ndarray:
    return optimal_policy(bandit).action_of
