"""Run configuration documents.

A document is a JSON object with top-level keys ``instance``, ``model``,
``algorithm``, ``experiment`` and ``output``.  Unknown keys anywhere we
understand the schema are errors rather than silently ignored.

Overrides are ``dotted.key=value`` strings applied in order, so the last
one for a key wins.  Values are parsed as JSON when possible and kept as
strings otherwise.
"""
from __future__ import annotations

import copy
import json
import os
from pathlib import Path

from .harness import ExperimentConfig, validate_algorithm

TOP_KEYS = ("instance", "model", "algorithm", "experiment", "output")
EXPERIMENT_KEYS = ("n_grid", "trials_per_n", "master_seed", "workers")
OUTPUT_KEYS = ("path",)
SEED_ENV = "HFBANDIT_SEED"


class ConfigError(ValueError):
    pass


def default_document() -> dict:
    return {
        "instance": {"name": "hard_instance_uniform", "params": {"sigma": 1.0}},
        "model": None,
        "algorithm": {"name": "lcb", "penalty": {"variant": "subexp", "delta": 0.1}},
        "experiment": {"n_grid": [64, 256, 1024], "trials_per_n": 100, "master_seed": 0, "workers": 1},
        "output": {"path": "results.csv"},
    }


def load_document(path: str | os.PathLike | None) -> dict:
    """Read a config file over the defaults; missing sections keep defaults."""
    doc = default_document()
    if path is None:
        return doc
    text = Path(path).read_text()  # OSError propagates to the caller
    try:
        user = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(user, dict):
        raise ConfigError(f"{path}: top level must be an object")
    check_keys(user)
    for key, value in user.items():
        if key in ("experiment", "output") and isinstance(value, dict):
            doc[key].update(value)
        else:
            doc[key] = value
    return doc


def check_keys(doc: dict) -> None:
    unknown = set(doc) - set(TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    for section, allowed in (("experiment", EXPERIMENT_KEYS), ("output", OUTPUT_KEYS)):
        value = doc.get(section)
        if value is None:
            continue
        if not isinstance(value, dict):
            raise ConfigError(f"{section} must be an object")
        bad = set(value) - set(allowed)
        if bad:
            raise ConfigError(f"unknown {section} keys: {sorted(bad)}")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(doc: dict, overrides: list[str]) -> dict:
    """Apply ``a.b.c=value`` overrides in order; later ones win."""
    out = copy.deepcopy(doc)
    for item in overrides or []:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not key=value")
        parts = key.split(".")
        if parts[0] not in TOP_KEYS:
            raise ConfigError(f"unknown top-level key in override {item!r}")
        node = out
        for p in parts[:-1]:
            if node.get(p) is None:
                node[p] = {}
            node = node[p]
            if not isinstance(node, dict):
                raise ConfigError(f"override {item!r} descends into a non-object")
        node[parts[-1]] = _parse_value(raw)
    check_keys(out)
    return out


def resolve_seed(flag: int | None, doc: dict) -> int:
    """flag > $HFBANDIT_SEED > config > 0."""
    if flag is not None:
        return int(flag)
    env = os.environ.get(SEED_ENV)
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV}={env!r} is not an integer") from exc
    seed = (doc.get("experiment") or {}).get("master_seed")
    return 0 if seed is None else int(seed)


def to_experiment_config(doc: dict, seed: int | None = None) -> ExperimentConfig:
    check_keys(doc)
    exp = doc.get("experiment") or {}
    try:
        validate_algorithm(doc["algorithm"])
        return ExperimentConfig(
            instance=doc["instance"],
            algorithm=doc["algorithm"],
            model=doc.get("model"),
            n_grid=exp["n_grid"],
            trials_per_n=exp.get("trials_per_n", 100),
            master_seed=resolve_seed(seed, doc),
            output_path=(doc.get("output") or {}).get("path", "results.csv"),
            workers=exp.get("workers", 1),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid experiment config: {exc}") from exc


def from_experiment_config(cfg: ExperimentConfig) -> dict:
    """Inverse of :func:`to_experiment_config` (with the seed baked in)."""
    return {
        "instance": cfg.instance,
        "model": cfg.model,
        "algorithm": cfg.algorithm,
        "experiment": {"n_grid": list(cfg.n_grid), "trials_per_n": cfg.trials_per_n,
                       "master_seed": cfg.master_seed, "workers": cfg.workers},
        "output": {"path": cfg.output_path},
    }
