"""Command-line entry point for the whole pipeline.

Exit codes: 0 success, 1 validation/usage error, 2 constraint violation,
3 numeric failure.  All randomness is controlled by --seed; stdout is
byte-identical for identical inputs, flags, and seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .allocator import Allocation, AllocationEntry, render_allocation_json, render_allocation_table, soma_allocate
from .evalharness import ExperimentConfig, HarnessError, render_report_table, report_to_json, run_experiment
from .features import ScoreSample, load_samples, save_samples
from .mnemonic import CacheLoadError, MnemonicCenter, MnemonicEntry, load as load_cache, persist as persist_cache, scenario_key
from .network import Hyperparams, NumericError, TrainedScorer, gradient_check, init_params
from .registry import (
    ConstraintViolation,
    Dataset,
    Metrics,
    Model,
    PerformanceRecord,
    Scenario,
    ValidationError,
    lint_registry,
    load_registry,
    register_entity,
    save_registry,
)
from .scoring import MissingPerformanceError, attention_score_fn, table_score_fn
from .synth import SynthConfig, generate_synthetic
from .training import train_scorer

DEFAULT_CACHE = "./smap-cache.jsonl"


class CliUsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors routed to the validation exit code."""

    def error(self, message):  # noqa: A003 -- argparse API
        raise CliUsageError(message)


def _add_hyper_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--heads", type=int, default=None, help="attention heads (default 8)")
    parser.add_argument("--blocks", type=int, default=None, help="attention blocks (default 1)")
    parser.add_argument("--head-dim", type=int, default=None, help="per-head dimension (default 8)")
    parser.add_argument("--batch-size", type=int, default=None, help="training batch size (default 64)")
    parser.add_argument("--lr", type=float, default=None, help="Adam learning rate (default 0.025)")
    parser.add_argument("--epochs", type=int, default=None, help="training epochs (default 100)")


def _hyper_from(args: argparse.Namespace, config: dict, seed: int) -> Hyperparams:
    def pick(flag, key, default):
        if flag is not None:
            return flag
        return config.get(key, default)

    return Hyperparams(
        heads=int(pick(args.heads, "heads", 8)),
        blocks=int(pick(args.blocks, "blocks", 1)),
        head_dim=int(pick(args.head_dim, "head_dim", 8)),
        batch_size=int(pick(args.batch_size, "batch_size", 64)),
        learning_rate=float(pick(args.lr, "lr", 0.025)),
        epochs=int(pick(args.epochs, "epochs", 100)),
        seed=seed,
    )


def _load_config_file(path: str | None) -> dict:
    """key=value text, one pair per line; '#' starts a comment."""
    if path is None:
        return {}
    known = {
        "trials", "seed", "sigma", "n_scenarios", "n_models", "scenario_types", "k",
        "heads", "blocks", "head_dim", "batch_size", "lr", "epochs",
    }
    values: dict[str, object] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, _, value = (part.strip() for part in line.partition("="))
            if key not in known:
                raise ValidationError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = float(value) if key in ("lr", "sigma") else int(value)
    return values


def _entity_from_json(kind: str, doc: dict):
    if kind == "scenario":
        return Scenario(doc["id"], doc["scenario_type"], dict(doc.get("constraints", {})))
    if kind == "dataset":
        return Dataset(doc["id"], tuple(doc["dataset_type"]), dict(doc.get("features", {})))
    if kind == "model":
        return Model(doc["id"], tuple(doc["model_type"]), dict(doc.get("features", {})), dict(doc.get("requirements", {})))
    if kind == "performance":
        metrics = doc.get("metrics", {})
        return PerformanceRecord(
            doc["scenario_id"], doc["dataset_id"], doc["model_id"],
            Metrics(metrics.get("mae"), metrics.get("rmse"), metrics.get("mape")),
        )
    raise ValidationError(f"unknown entity kind {kind!r}")


# --- subcommand handlers ----------------------------------------------------------

def _cmd_registry(args) -> int:
    if args.registry_cmd == "add":
        registry = load_registry(args.registry) if os.path.exists(args.registry) else None
        if registry is None:
            from .registry import Registry

            registry = Registry()
        if args.file:
            with open(args.file, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        else:
            doc = json.load(sys.stdin)
        registry = register_entity(registry, _entity_from_json(args.kind, doc))
        save_registry(registry, args.registry)
        print(f"registered {args.kind} (revision {registry.revision})", file=sys.stderr)
        return 0

    registry = load_registry(args.registry)
    if args.registry_cmd == "list":
        print(f"scenarios ({len(registry.scenarios)}): " + ", ".join(sorted(registry.scenarios)))
        print(f"datasets ({len(registry.datasets)}): " + ", ".join(sorted(registry.datasets)))
        print(f"models ({len(registry.models)}): " + ", ".join(sorted(registry.models)))
        print(f"performance records: {len(registry.performance)}")
        print(f"revision: {registry.revision}")
        return 0
    if args.registry_cmd == "validate":
        warnings = lint_registry(registry)
        for warning in warnings:
            print(f"warning: {warning}")
        print(f"registry valid (revision {registry.revision}, {len(warnings)} warning(s))")
        return 0
    raise CliUsageError(f"unknown registry subcommand {args.registry_cmd!r}")


def _cmd_train(args) -> int:
    samples = load_samples(args.data)
    gated = [s for s in samples if not s.gate]
    usable = [s for s in samples if s.gate]
    if gated:
        print(f"excluding {len(gated)} gated-out sample(s) from training", file=sys.stderr)
    if not usable:
        raise ValidationError("no trainable samples: every row is gated out")
    if args.val:
        train, val = usable, [s for s in load_samples(args.val) if s.gate]
    else:
        rng = np.random.default_rng(args.seed)
        order = rng.permutation(len(usable))
        n_val = len(usable) // 10
        val = [usable[i] for i in order[:n_val]]
        train = [usable[i] for i in order[n_val:]]
    hyper = _hyper_from(args, {}, seed=args.seed)
    trained, log = train_scorer(train, val, hyper)
    trained.save(args.out)
    if log.train_loss:
        print(
            f"trained {len(train)} samples, {hyper.epochs} epochs; "
            f"best epoch {log.best_epoch} "
            f"(train mse {log.train_loss[-1]:.6f}"
            + (f", val mse {min(log.val_loss):.6f})" if log.val_loss else ")"),
            file=sys.stderr,
        )
    print(f"wrote scorer params to {args.out}", file=sys.stderr)
    return 0


def _cmd_allocate(args) -> int:
    registry = load_registry(args.registry)
    if (args.params is None) == (args.scores is None):
        raise CliUsageError("allocate needs exactly one of --params or --scores")
    if args.params:
        trained = TrainedScorer.load(args.params)
        score_fn = attention_score_fn(registry.performance, trained.params, trained.stats)
    else:
        with open(args.scores, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        if doc.get("format") != "smap-score-table":
            raise ValidationError(f"{args.scores!r} is not a score table file")
        score_fn = table_score_fn(doc["scores"])

    center = load_cache(args.cache)
    scenarios = list(registry.scenarios.values())
    cached_entries: list[AllocationEntry] = []
    misses: list[Scenario] = []
    for scenario in scenarios:
        result = center.lookup(scenario_key(scenario), registry.revision)
        if result.hit:
            entry = result.entry
            cached_entries.append(AllocationEntry(scenario.id, entry.dataset_id, entry.model_id, entry.score))
        else:
            misses.append(scenario)

    computed = soma_allocate(
        misses, list(registry.datasets.values()), list(registry.models.values()), score_fn,
        search_datasets=args.search_datasets,
    ) if misses else Allocation()

    for entry in computed.entries:
        center.store(
            MnemonicEntry.create(
                scenario_key=scenario_key(registry.scenarios[entry.scenario_id]),
                dataset_id=entry.dataset_id,
                model_id=entry.model_id,
                score=entry.score,
                registry_revision=registry.revision,
            )
        )
    if computed.entries:
        persist_cache(center, args.cache)

    merged = Allocation(entries=cached_entries + computed.entries, unassigned=computed.unassigned)
    print(f"cache-hit: {len(cached_entries)}/{len(scenarios)}", file=sys.stderr)
    if args.format == "json":
        print(render_allocation_json(merged))
    else:
        print(render_allocation_table(merged, registry))
    return 2 if merged.unassigned else 0


def _cmd_evaluate(args) -> int:
    config_file = _load_config_file(args.config)

    def pick(flag, key, default):
        if flag is not None:
            return flag
        return config_file.get(key, default)

    seed = int(pick(args.seed, "seed", 0))
    hyper = _hyper_from(args, config_file, seed=seed)
    if args.lr is None and "lr" not in config_file:
        hyper = replace(hyper, learning_rate=0.005)
    config = ExperimentConfig(
        trials=int(pick(args.trials, "trials", 10)),
        hyper=hyper,
        synth=SynthConfig(
            n_scenarios=int(pick(args.n_scenarios, "n_scenarios", 36)),
            n_models_per_scenario=int(pick(args.n_models, "n_models", 20)),
            n_scenario_types=int(pick(args.scenario_types, "scenario_types", 6)),
            noise_sigma=float(pick(args.sigma, "sigma", 0.05)),
        ),
        master_seed=seed,
        top_k=int(pick(args.k, "k", 5)),
        records_csv=args.records,
        registry_path=args.registry if args.records else None,
    )
    report = run_experiment(config)
    if args.format == "json":
        print(report_to_json(report))
    else:
        print(render_report_table(report))
    print(f"runtime: {report.runtime_seconds:.2f}s over {config.trials} trial(s)", file=sys.stderr)
    return 0


def _cmd_synth(args) -> int:
    config = SynthConfig(
        n_scenarios=args.n_scenarios,
        n_models_per_scenario=args.n_models,
        n_scenario_types=args.scenario_types,
        noise_sigma=args.sigma,
    )
    samples, registry = generate_synthetic(config, args.seed)
    save_samples(args.out, samples)
    if args.registry_out:
        save_registry(registry, args.registry_out)
    print(f"wrote {len(samples)} labeled records to {args.out}", file=sys.stderr)
    return 0


def _cmd_cache(args) -> int:
    if args.cache_cmd == "show":
        center = load_cache(args.cache)
        for entry in center:
            print(json.dumps(
                {
                    "scenario_key": entry.scenario_key,
                    "dataset_id": entry.dataset_id,
                    "model_id": entry.model_id,
                    "score": entry.score,
                    "registry_revision": entry.registry_revision,
                    "stored_at": entry.stored_at,
                },
                ensure_ascii=False,
            ))
        print(f"{len(center)} cached assignment(s)", file=sys.stderr)
        return 0
    if args.cache_cmd == "clear":
        try:
            os.unlink(args.cache)
        except FileNotFoundError:
            pass
        print("cache cleared", file=sys.stderr)
        return 0
    raise CliUsageError(f"unknown cache subcommand {args.cache_cmd!r}")


def _cmd_gradcheck(args) -> int:
    hyper = Hyperparams(heads=2, blocks=1, head_dim=2, head_hidden=16)
    worst = 0.0
    for i in range(args.samples):
        rng = np.random.default_rng(args.seed + i)
        params = init_params(hyper, seed=args.seed + i)
        sample = ScoreSample(
            scenario_id="gc", dataset_id="gc", model_id="gc",
            features=rng.normal(0.0, 1.0, size=8),
            gate=True,
            label=float(rng.uniform(0.0, 1.0)),
        )
        error = gradient_check(params, sample, epsilon=args.epsilon)
        worst = max(worst, error)
        print(f"sample {i}: max relative error {error:.3e}")
    print(f"overall max relative error: {worst:.3e}")
    if worst >= args.tol:
        raise NumericError(f"gradient check failed: {worst:.3e} >= tolerance {args.tol:.1e}")
    return 0


# --- parser and dispatch ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="smap", description="Scenario-to-model assignment pipeline")
    parser.add_argument("--version", action="version", version=f"smap {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_reg = sub.add_parser("registry", help="inspect or mutate a registry file")
    reg_sub = p_reg.add_subparsers(dest="registry_cmd", required=True)
    p_add = reg_sub.add_parser("add", help="register one entity from JSON")
    p_add.add_argument("--registry", required=True)
    p_add.add_argument("--kind", required=True, choices=("scenario", "dataset", "model", "performance"))
    p_add.add_argument("--file", default=None, help="entity JSON file (default: stdin)")
    p_add.add_argument("--format", choices=("table", "json"), default="table")
    for name in ("list", "validate"):
        p = reg_sub.add_parser(name)
        p.add_argument("--registry", required=True)
        p.add_argument("--format", choices=("table", "json"), default="table")

    p_train = sub.add_parser("train", help="train the score network from a labeled CSV")
    p_train.add_argument("--data", required=True, help="labeled sample CSV")
    p_train.add_argument("--val", default=None, help="optional validation CSV (default: 10%% holdout)")
    p_train.add_argument("--out", required=True, help="output params file")
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--format", choices=("table", "json"), default="table")
    _add_hyper_flags(p_train)

    p_alloc = sub.add_parser("allocate", help="assign the best model per scenario")
    p_alloc.add_argument("--registry", required=True)
    p_alloc.add_argument("--params", default=None, help="trained scorer params file")
    p_alloc.add_argument("--scores", default=None, help="explicit score table JSON")
    p_alloc.add_argument("--cache", default=DEFAULT_CACHE)
    p_alloc.add_argument("--seed", type=int, default=0)
    p_alloc.add_argument("--format", choices=("table", "json"), default="table")
    p_alloc.add_argument("--search-datasets", action="store_true", help="score every type-matching dataset")

    p_eval = sub.add_parser("evaluate", help="run the repeated-trial benchmark")
    p_eval.add_argument("--config", default=None, help="key=value config file; flags override")
    p_eval.add_argument("--trials", type=int, default=None)
    p_eval.add_argument("--seed", type=int, default=None)
    p_eval.add_argument("--sigma", type=float, default=None)
    p_eval.add_argument("--n-scenarios", type=int, default=None)
    p_eval.add_argument("--n-models", type=int, default=None)
    p_eval.add_argument("--scenario-types", type=int, default=None)
    p_eval.add_argument("--k", type=int, default=None)
    p_eval.add_argument("--records", default=None, help="labeled CSV to evaluate instead of synthetic data")
    p_eval.add_argument("--registry", default=None, help="registry for --records")
    p_eval.add_argument("--format", choices=("table", "json"), default="table")
    _add_hyper_flags(p_eval)
    for action in p_eval._actions:
        if action.dest == "lr":
            action.help = "Adam learning rate (default 0.005 for the benchmark)"

    p_synth = sub.add_parser("synth", help="emit synthetic labeled records")
    p_synth.add_argument("--out", required=True, help="output CSV")
    p_synth.add_argument("--registry-out", default=None, help="also write the matching registry JSON")
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--n-scenarios", type=int, default=36)
    p_synth.add_argument("--n-models", type=int, default=20)
    p_synth.add_argument("--scenario-types", type=int, default=6)
    p_synth.add_argument("--sigma", type=float, default=0.05)
    p_synth.add_argument("--format", choices=("table", "json"), default="table")

    p_cache = sub.add_parser("cache", help="inspect or clear the assignment cache")
    cache_sub = p_cache.add_subparsers(dest="cache_cmd", required=True)
    for name in ("show", "clear"):
        p = cache_sub.add_parser(name)
        p.add_argument("--cache", default=DEFAULT_CACHE)
        p.add_argument("--format", choices=("table", "json"), default="table")

    p_grad = sub.add_parser("gradcheck", help="compare analytic gradients to finite differences")
    p_grad.add_argument("--seed", type=int, default=0)
    p_grad.add_argument("--epsilon", type=float, default=1e-5)
    p_grad.add_argument("--samples", type=int, default=5)
    p_grad.add_argument("--tol", type=float, default=1e-4)
    p_grad.add_argument("--format", choices=("table", "json"), default="table")

    return parser


_HANDLERS = {
    "registry": _cmd_registry,
    "train": _cmd_train,
    "allocate": _cmd_allocate,
    "evaluate": _cmd_evaluate,
    "synth": _cmd_synth,
    "cache": _cmd_cache,
    "gradcheck": _cmd_gradcheck,
}


def _emit_error(exc: Exception, fmt: str) -> None:
    print(f"error: {exc}", file=sys.stderr)
    if fmt == "json":
        payload = {"error": {"type": type(exc).__name__, "message": str(exc)}}
        if isinstance(exc, ValidationError) and exc.field:
            payload["error"]["field"] = exc.field
        print(json.dumps(payload, ensure_ascii=False), file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    fmt = "table"
    try:
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:  # --help / --version
            return int(exc.code or 0)
        fmt = getattr(args, "format", "table")
        return _HANDLERS[args.command](args)
    except (CliUsageError, ValidationError, CacheLoadError, MissingPerformanceError,
            ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        _emit_error(exc, fmt)
        return 1
    except ConstraintViolation as exc:
        _emit_error(exc, fmt)
        return 2
    except (NumericError, HarnessError) as exc:
        _emit_error(exc, fmt)
        return 3


if __name__ == "__main__":
    sys.exit(main())
