"""Constraint-gated scoring of (scenario, dataset, model) triples.

Every score provider used by the allocator goes through the same gate: when
a model's requirements are not met by the scenario's constraints the score
is exactly 0.0 and the result is flagged as gated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

from .features import FeatureStats, build_raw_slots, normalize_features
from .mnemonic import scenario_key
from .network import ScorerParams, forward_score
from .registry import Dataset, Model, PerformanceRecord, Scenario, ValidationError, match_constraints

__all__ = [
    "TripleScore",
    "ScoreFn",
    "MissingPerformanceError",
    "score_triple",
    "attention_score_fn",
    "table_score_fn",
    "baseline_score_fn",
    "CountingScoreFn",
]


class MissingPerformanceError(LookupError):
    """The scorer never imputes performance; the record must exist."""


@dataclass(frozen=True)
class TripleScore:
    score: float
    gated: bool


ScoreFn = Callable[[Scenario, Dataset, Model], TripleScore]


def score_triple(
    scenario: Scenario,
    dataset: Dataset,
    model: Model,
    performance: PerformanceRecord | None,
    params: ScorerParams,
    stats: FeatureStats,
) -> TripleScore:
    """Gate on constraint matching, then run the full scoring pipeline.

    A failed gate returns exactly 0.0 without touching the network.
    """
    if not match_constraints(scenario.constraints, model.requirements):
        return TripleScore(0.0, gated=True)
    if performance is None:
        raise MissingPerformanceError(
            f"no performance record for ({scenario.id!r}, {dataset.id!r}, {model.id!r})"
        )
    if performance.key() != (scenario.id, dataset.id, model.id):
        raise ValidationError(
            f"performance record {performance.key()!r} does not reference "
            f"({scenario.id!r}, {dataset.id!r}, {model.id!r})"
        )
    raw = build_raw_slots(model, performance.metrics)
    normalized = normalize_features(raw, stats)
    return TripleScore(forward_score(normalized, params), gated=False)


def attention_score_fn(
    performance: Mapping[tuple[str, str, str], PerformanceRecord],
    params: ScorerParams,
    stats: FeatureStats,
) -> ScoreFn:
    """Score function backed by the trained network plus a performance index."""

    def fn(scenario: Scenario, dataset: Dataset, model: Model) -> TripleScore:
        record = performance.get((scenario.id, dataset.id, model.id))
        return score_triple(scenario, dataset, model, record, params, stats)

    return fn


def table_score_fn(table: Mapping[str, Mapping[str, float]]) -> ScoreFn:
    """Score function reading a fixed (scenario id -> model id -> score) table."""

    def fn(scenario: Scenario, dataset: Dataset, model: Model) -> TripleScore:
        if not match_constraints(scenario.constraints, model.requirements):
            return TripleScore(0.0, gated=True)
        row = table.get(scenario.id)
        if row is None or model.id not in row:
            raise ValidationError(f"score table has no entry for ({scenario.id!r}, {model.id!r})")
        return TripleScore(float(row[model.id]), gated=False)

    return fn


def baseline_score_fn(predict: Callable[[str, str], float]) -> ScoreFn:
    """Adapt a (scenario context key, model id) predictor to the score protocol."""

    def fn(scenario: Scenario, dataset: Dataset, model: Model) -> TripleScore:
        if not match_constraints(scenario.constraints, model.requirements):
            return TripleScore(0.0, gated=True)
        return TripleScore(max(float(predict(scenario_key(scenario), model.id)), 0.0), gated=False)

    return fn


class CountingScoreFn:
    """Wrapper that counts invocations; used to verify cache short-circuiting."""

    def __init__(self, inner: ScoreFn):
        self.inner = inner
        self.calls = 0

    def __call__(self, scenario: Scenario, dataset: Dataset, model: Model) -> TripleScore:
        self.calls += 1
        return self.inner(scenario, dataset, model)
