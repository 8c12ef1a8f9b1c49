"""Reference scorers for the evaluation harness: Slope One and biased MF.

Both see only (scenario context key, model id, label) triples, never model
features or performance metrics.
"""

from __future__ import annotations

import json
import math
import os
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .network import NumericError

Rating = tuple[str, str, float]  # (scenario context key, model id, label)


def _mean_ratings(samples: Iterable[Rating]) -> dict[str, dict[str, float]]:
    """Per-context mean label per model (duplicates are averaged)."""
    sums: dict[str, dict[str, list[float]]] = defaultdict(lambda: defaultdict(list))
    for context, model_id, label in samples:
        sums[context][model_id].append(float(label))
    return {c: {m: sum(v) / len(v) for m, v in models.items()} for c, models in sums.items()}


@dataclass
class SlopeOneModel:
    """Pairwise rating-deviation model.

    Deviations are stored once per unordered pair; ``deviation(a, b)`` returns
    the negated view for the reversed order, so antisymmetry is exact.
    """

    ratings: dict[str, dict[str, float]] = field(default_factory=dict)
    deviations: dict[tuple[str, str], float] = field(default_factory=dict)
    counts: dict[tuple[str, str], int] = field(default_factory=dict)
    global_mean: float = 0.5

    def deviation(self, model_a: str, model_b: str) -> float:
        if model_a <= model_b:
            return self.deviations.get((model_a, model_b), 0.0)
        return -self.deviations.get((model_b, model_a), 0.0)

    def count(self, model_a: str, model_b: str) -> int:
        pair = (model_a, model_b) if model_a <= model_b else (model_b, model_a)
        return self.counts.get(pair, 0)


def slope_one_fit(samples: Iterable[Rating]) -> SlopeOneModel:
    """Build the deviation table over all co-rated model pairs."""
    ratings = _mean_ratings(samples)
    sums: dict[tuple[str, str], float] = defaultdict(float)
    counts: dict[tuple[str, str], int] = defaultdict(int)
    for per_context in ratings.values():
        models = sorted(per_context)
        for i, a in enumerate(models):
            for b in models[i + 1 :]:
                sums[(a, b)] += per_context[a] - per_context[b]
                counts[(a, b)] += 1
    deviations = {pair: sums[pair] / counts[pair] for pair in sums}
    labels = [label for per_context in ratings.values() for label in per_context.values()]
    global_mean = sum(labels) / len(labels) if labels else 0.5
    return SlopeOneModel(ratings=ratings, deviations=deviations, counts=dict(counts), global_mean=global_mean)


def slope_one_predict(model: SlopeOneModel, scenario_key: str, model_id: str) -> float:
    """Count-weighted average of (co-rated item rating + deviation).

    Falls back to the global mean when the context has no co-rated items.
    """
    rated = model.ratings.get(scenario_key, {})
    numerator = 0.0
    weight = 0
    for other_id, rating in rated.items():
        if other_id == model_id:
            continue
        c = model.count(model_id, other_id)
        if c == 0:
            continue
        numerator += c * (rating + model.deviation(model_id, other_id))
        weight += c
    if weight == 0:
        return min(max(model.global_mean, 0.0), 1.0)
    return min(max(numerator / weight, 0.0), 1.0)


@dataclass
class MFModel:
    """Biased matrix factorization over (context, model) ratings."""

    context_index: dict[str, int]
    model_index: dict[str, int]
    context_factors: np.ndarray   # (n_contexts, rank)
    model_factors: np.ndarray     # (n_models, rank)
    context_bias: np.ndarray
    model_bias: np.ndarray
    global_mean: float


def mf_fit(
    samples: Sequence[Rating],
    rank: int = 8,
    lr: float = 0.01,
    epochs: int = 500,
    seed: int = 0,
    reg: float = 0.02,
) -> MFModel:
    """SGD on squared error of (mean + context bias + model bias + u.v).

    Context factors start from a seeded normal draw and model factors from
    zero, so an untrained model predicts exactly the global mean.
    """
    if rank < 1 or lr <= 0 or epochs < 0:
        raise ValueError("rank and lr must be positive, epochs >= 0")
    triples = [(c, m, float(r)) for c, m, r in samples]
    contexts = sorted({c for c, _, _ in triples})
    models = sorted({m for _, m, _ in triples})
    context_index = {c: i for i, c in enumerate(contexts)}
    model_index = {m: i for i, m in enumerate(models)}
    global_mean = sum(r for _, _, r in triples) / len(triples) if triples else 0.5

    rng = np.random.default_rng(seed)
    p = rng.normal(0.0, 0.1, size=(len(contexts), rank))
    q = np.zeros((len(models), rank))
    bc = np.zeros(len(contexts))
    bm = np.zeros(len(models))

    indexed = [(context_index[c], model_index[m], r) for c, m, r in triples]
    for epoch in range(epochs):
        order = rng.permutation(len(indexed))
        total = 0.0
        for idx in order:
            ci, mi, r = indexed[idx]
            pred = global_mean + bc[ci] + bm[mi] + p[ci] @ q[mi]
            err = r - pred
            total += err * err
            bc[ci] += lr * (err - reg * bc[ci])
            bm[mi] += lr * (err - reg * bm[mi])
            p_row = p[ci].copy()
            p[ci] += lr * (err * q[mi] - reg * p_row)
            q[mi] += lr * (err * p_row - reg * q[mi])
        if indexed and not math.isfinite(total):
            raise NumericError(f"non-finite matrix-factorization loss at epoch {epoch}")
    return MFModel(context_index, model_index, p, q, bc, bm, global_mean)


def mf_predict(model: MFModel, scenario_key: str, model_id: str) -> float:
    """Bias-plus-latent prediction, clamped to [0, 1]; cold sides contribute 0."""
    pred = model.global_mean
    ci = model.context_index.get(scenario_key)
    mi = model.model_index.get(model_id)
    if ci is not None:
        pred += model.context_bias[ci]
    if mi is not None:
        pred += model.model_bias[mi]
    if ci is not None and mi is not None:
        pred += float(model.context_factors[ci] @ model.model_factors[mi])
    return min(max(pred, 0.0), 1.0)


# --- serialization ---------------------------------------------------------------

def save_baseline(model: SlopeOneModel | MFModel, path: str | os.PathLike) -> None:
    if isinstance(model, SlopeOneModel):
        doc = {
            "format": "smap-baseline",
            "kind": "slope_one",
            "ratings": model.ratings,
            "deviations": [[a, b, v] for (a, b), v in sorted(model.deviations.items())],
            "counts": [[a, b, c] for (a, b), c in sorted(model.counts.items())],
            "global_mean": model.global_mean,
        }
    elif isinstance(model, MFModel):
        doc = {
            "format": "smap-baseline",
            "kind": "mf",
            "contexts": sorted(model.context_index, key=model.context_index.get),
            "models": sorted(model.model_index, key=model.model_index.get),
            "context_factors": model.context_factors.tolist(),
            "model_factors": model.model_factors.tolist(),
            "context_bias": model.context_bias.tolist(),
            "model_bias": model.model_bias.tolist(),
            "global_mean": model.global_mean,
        }
    else:
        raise TypeError(f"cannot serialize baseline of type {type(model).__name__}")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, ensure_ascii=False)
        fh.write("\n")


def load_baseline(path: str | os.PathLike) -> SlopeOneModel | MFModel:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != "smap-baseline":
        raise ValueError(f"{os.fspath(path)!r} is not a baseline model file")
    if doc["kind"] == "slope_one":
        return SlopeOneModel(
            ratings={c: dict(m) for c, m in doc["ratings"].items()},
            deviations={(a, b): v for a, b, v in doc["deviations"]},
            counts={(a, b): c for a, b, c in doc["counts"]},
            global_mean=doc["global_mean"],
        )
    if doc["kind"] == "mf":
        return MFModel(
            context_index={c: i for i, c in enumerate(doc["contexts"])},
            model_index={m: i for i, m in enumerate(doc["models"])},
            context_factors=np.array(doc["context_factors"], dtype=np.float64).reshape(len(doc["contexts"]), -1),
            model_factors=np.array(doc["model_factors"], dtype=np.float64).reshape(len(doc["models"]), -1),
            context_bias=np.array(doc["context_bias"], dtype=np.float64),
            model_bias=np.array(doc["model_bias"], dtype=np.float64),
            global_mean=doc["global_mean"],
        )
    raise ValueError(f"unknown baseline kind {doc['kind']!r}")
