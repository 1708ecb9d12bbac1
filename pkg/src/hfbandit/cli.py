"""Command-line interface.

Exit codes: 0 success, 2 usage, 3 config error, 4 file I/O error,
5 runtime error or an experiment with failed cells.
"""
from __future__ import annotations

import argparse
import itertools
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bandit import suboptimality
from .config import ConfigError, apply_overrides, load_document, resolve_seed, to_experiment_config
from .datasets import PreferenceDataset, RatingDataset, generate_preference_dataset, generate_rating_dataset
from .feedback import QuadraticSkewModel, check_conditions, model_from_dict
from .harness import build_instance, penalty_from_spec, run_experiment, write_result
from .instances import complexity_ratio, n_pref, n_rate
from .lcb import lcb_policy
from .pmle import OptimizerConfig, pmle_fit
from .rng import cell_stream

EXIT_USAGE, EXIT_CONFIG, EXIT_IO, EXIT_RUNTIME = 2, 3, 4, 5


def _add_config_args(p: argparse.ArgumentParser, seed: bool = True) -> None:
    p.add_argument("--config", help="JSON config document")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted override, e.g. experiment.trials_per_n=10; last one wins")
    if seed:
        p.add_argument("--seed", type=int, help="master seed (beats $HFBANDIT_SEED and the config)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hfbandit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("gen", help="draw a rating or preference dataset")
    _add_config_args(p)
    p.add_argument("--kind", choices=("rating", "preference"), required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--biased", action="store_true", help="preference labels use biased rewards")
    p.add_argument("--out", required=True)

    for name, what in (("lcb", "rating"), ("pmle", "preference")):
        p = sub.add_parser(name, help=f"fit {name.upper()} on a {what} dataset and report the policy")
        _add_config_args(p, seed=False)
        p.add_argument("--data", required=True, help=f"{what} CSV")
        p.add_argument("--n", type=int, help="instance size when the instance is sized by n (default: dataset size)")

    p = sub.add_parser("exp", help="run a Monte Carlo experiment")
    _add_config_args(p)
    p.add_argument("--out", help="result CSV path (overrides output.path)")

    p = sub.add_parser("bounds", help="print sample-complexity thresholds")
    p.add_argument("--delta", type=float, nargs="+", default=[0.1])
    p.add_argument("--sigma", type=float, nargs="+", default=[1.0])
    p.add_argument("--gap", type=float, nargs="+", default=[0.5])

    p = sub.add_parser("check", help="check a rating model against the bias conditions")
    _add_config_args(p)
    p.add_argument("--grid", type=int, default=101)
    p.add_argument("--samples", type=int, default=2000)

    p = sub.add_parser("instance", help="write an instance bundle as JSON")
    _add_config_args(p, seed=False)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--out", required=True)
    return parser


def _document(args) -> dict:
    return apply_overrides(load_document(args.config), args.overrides)


def _bundle(doc: dict, n: int):
    try:
        return build_instance(doc["instance"], n, doc.get("model"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid instance: {exc}") from exc


def _fmt_table(a) -> str:
    return np.array2string(np.asarray(a), precision=6, suppress_small=True)


def cmd_gen(args, out) -> int:
    doc = _document(args)
    seed = resolve_seed(args.seed, doc)
    bundle = _bundle(doc, args.n)
    rng = cell_stream(seed, args.n, 0)
    if args.kind == "rating":
        if bundle.rating_dist is None:
            raise ConfigError("instance has no rating distribution")
        data = generate_rating_dataset(bundle.bandit, bundle.model, bundle.rating_dist, args.n, rng)
    else:
        if bundle.pair_dist is None:
            raise ConfigError("instance has no pair distribution")
        bias = bundle.model if args.biased else None
        data = generate_preference_dataset(bundle.bandit, bias, bundle.pair_dist, args.n, rng)
    Path(args.out).write_text(data.to_csv())
    print(f"wrote {len(data)} {args.kind} samples to {args.out}", file=out)
    return 0


def cmd_lcb(args, out) -> int:
    doc = _document(args)
    data = RatingDataset.from_csv(Path(args.data).read_text())
    bundle = _bundle(doc, args.n or len(data))
    algo = doc["algorithm"] if doc["algorithm"].get("name") == "lcb" else {"name": "lcb"}
    S, A = bundle.bandit.shape
    policy, pess = lcb_policy(data, S, A, penalty_from_spec(algo, bundle),
                              bool(algo.get("normalize_by_total", False)))
    print(f"policy: {policy.action_of.tolist()}", file=out)
    print(f"pessimistic rewards:\n{_fmt_table(pess)}", file=out)
    print(f"suboptimality: {suboptimality(bundle.bandit, policy)!r}", file=out)
    return 0


def cmd_pmle(args, out) -> int:
    doc = _document(args)
    data = PreferenceDataset.from_csv(Path(args.data).read_text())
    bundle = _bundle(doc, args.n or len(data))
    algo = doc["algorithm"] if doc["algorithm"].get("name") == "pmle" else {"name": "pmle"}
    b = bundle.bandit
    S, A = b.shape
    res = pmle_fit(data, (S, A, b.reward_bound, b.initial_dist), float(algo.get("delta", 0.1)),
                   float(algo.get("c_b_prime", 1.0)), OptimizerConfig.from_dict(algo.get("optimizer", {})),
                   algo.get("search", "exact"), int(algo.get("enumeration_cap", 10**6)))
    print(f"policy: {res.policy.action_of.tolist()}", file=out)
    print(f"pessimistic value: {res.value!r}", file=out)
    print(f"confidence radius: {res.confset.radius!r}", file=out)
    print(f"mle rewards:\n{_fmt_table(res.confset.center.table)}", file=out)
    print(f"suboptimality: {suboptimality(b, res.policy)!r}", file=out)
    return 0


def cmd_exp(args, out) -> int:
    doc = _document(args)
    if args.out:
        doc["output"]["path"] = args.out
    cfg = to_experiment_config(doc, args.seed)
    result = run_experiment(cfg)
    paths = write_result(result, cfg.output_path)
    for n, mean in result.mean_curve():
        print(f"n={n} mean_subopt={mean:.6g}", file=out)
    print(f"wrote {paths['csv']}", file=out)
    if result.failures:
        for f in result.failures:
            print(f"failed cell: {f['error']}", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


def cmd_bounds(args, out) -> int:
    for delta, sigma, gap in itertools.product(args.delta, args.sigma, args.gap):
        nr, npf = n_rate(delta, sigma, gap), n_pref(delta, gap)
        ratio = complexity_ratio(sigma, gap)
        print(f"delta={delta:g} sigma={sigma:g} gap={gap:g}: "
              f"n_rate = {nr:.3f}, n_pref = {npf:.3f}, ratio = {ratio:.6f}", file=out)
    return 0


def cmd_check(args, out) -> int:
    doc = _document(args)
    model = model_from_dict(doc["model"]) if doc.get("model") else QuadraticSkewModel(1.0)
    seed = resolve_seed(args.seed, doc)
    report = check_conditions(model, args.grid, args.samples, rng=cell_stream(seed, 0, 0))
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True), file=out)
    return 0


def cmd_instance(args, out) -> int:
    doc = _document(args)
    bundle = _bundle(doc, args.n)
    Path(args.out).write_text(json.dumps(bundle.to_dict(), indent=2) + "\n")
    print(f"wrote {bundle.provenance} to {args.out}", file=out)
    return 0


COMMANDS = {"gen": cmd_gen, "lcb": cmd_lcb, "pmle": cmd_pmle, "exp": cmd_exp,
            "bounds": cmd_bounds, "check": cmd_check, "instance": cmd_instance}


def main(argv: list[str] | None = None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args, out)
    except ConfigError as exc:
        print(f"hfbandit: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"hfbandit: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # noqa: BLE001 - categorized exit status
        print(f"hfbandit: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
