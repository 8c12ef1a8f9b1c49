"""Greedy utility-maximizing assignment of one model per scenario.

The loop repeatedly picks the highest-scoring feasible (scenario, dataset,
model) triple among the still-unassigned scenarios and appends it to the
allocation; with one assignment per scenario this equals an independent
per-scenario argmax.  Gated candidates (unmet model requirements) are never
assigned: their utility is identically zero and the gate marks them
unsuitable.  Scenarios with no feasible candidate are reported with the
violated constraint instead of aborting the batch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .registry import (
    Dataset,
    DatasetConstraintViolation,
    Model,
    ModelConstraintViolation,
    Registry,
    Scenario,
    select_candidate_models,
    select_suitable_dataset,
)
from .scoring import ScoreFn

__all__ = [
    "AllocationEntry",
    "UnassignedScenario",
    "Allocation",
    "RankedCandidate",
    "TopKResult",
    "soma_allocate",
    "soma_topk",
    "allocation_to_json",
    "render_allocation_table",
]


@dataclass(frozen=True)
class AllocationEntry:
    scenario_id: str
    dataset_id: str
    model_id: str
    score: float


@dataclass(frozen=True)
class UnassignedScenario:
    scenario_id: str
    reason: str


@dataclass
class Allocation:
    """Append-only assignment set: at most one entry per scenario."""

    entries: list[AllocationEntry] = field(default_factory=list)
    unassigned: list[UnassignedScenario] = field(default_factory=list)

    def total_score(self) -> float:
        return sum(e.score for e in self.entries)

    def by_scenario(self) -> dict[str, AllocationEntry]:
        return {e.scenario_id: e for e in self.entries}


@dataclass(frozen=True)
class RankedCandidate:
    model_id: str
    dataset_id: str
    score: float


@dataclass
class TopKResult:
    rankings: dict[str, list[RankedCandidate]] = field(default_factory=dict)
    unassigned: list[UnassignedScenario] = field(default_factory=list)


def _candidate_scores(
    scenario: Scenario,
    datasets: Sequence[Dataset],
    models: Sequence[Model],
    score_fn: ScoreFn,
    search_datasets: bool,
) -> list[RankedCandidate] | UnassignedScenario:
    """All non-gated scored candidates for one scenario, or the violation."""
    try:
        if search_datasets:
            matching = sorted(
                (d for d in datasets if scenario.scenario_type in d.dataset_type), key=lambda d: d.id
            )
            if not matching:
                raise DatasetConstraintViolation(
                    f"no dataset serves scenario type {scenario.scenario_type!r} (scenario {scenario.id!r})"
                )
        else:
            matching = [select_suitable_dataset(scenario, datasets)]
        candidates = select_candidate_models(scenario, models)
    except (DatasetConstraintViolation, ModelConstraintViolation) as exc:
        return UnassignedScenario(scenario.id, str(exc))

    scored = []
    all_gated = True
    for model in candidates:
        for dataset in matching:
            result = score_fn(scenario, dataset, model)
            if result.gated:
                continue
            all_gated = False
            scored.append(RankedCandidate(model.id, dataset.id, result.score))
    if not scored:
        if all_gated:
            return UnassignedScenario(scenario.id, "all candidate models gated by unmet requirements")
        return UnassignedScenario(scenario.id, "no scorable candidate")
    return scored


def soma_allocate(
    scenarios: Iterable[Scenario],
    datasets: Sequence[Dataset],
    models: Sequence[Model],
    score_fn: ScoreFn,
    search_datasets: bool = False,
) -> Allocation:
    """Greedy maximum-score assignment of one model (and dataset) per scenario.

    Ties break on scenario id, then model id, then dataset id.  By default
    the dataset is fixed per scenario by download-count selection; with
    ``search_datasets`` every type-matching dataset is scored and the best
    one is kept.
    """
    scenario_list = sorted(scenarios, key=lambda s: s.id)
    allocation = Allocation()
    pending: dict[str, list[RankedCandidate]] = {}
    scenario_by_id = {}
    for scenario in scenario_list:
        result = _candidate_scores(scenario, datasets, models, score_fn, search_datasets)
        if isinstance(result, UnassignedScenario):
            allocation.unassigned.append(result)
        else:
            pending[scenario.id] = result
            scenario_by_id[scenario.id] = scenario

    while pending:
        best_sid, best = min(
            (
                (sid, min(cands, key=lambda c: (-c.score, c.model_id, c.dataset_id)))
                for sid, cands in pending.items()
            ),
            key=lambda item: (-item[1].score, item[0], item[1].model_id, item[1].dataset_id),
        )
        allocation.entries.append(AllocationEntry(best_sid, best.dataset_id, best.model_id, best.score))
        del pending[best_sid]

    _revalidate(allocation, scenario_by_id, datasets, models)
    return allocation


def _revalidate(
    allocation: Allocation,
    scenario_by_id: dict[str, Scenario],
    datasets: Sequence[Dataset],
    models: Sequence[Model],
) -> None:
    """Re-check the assignment constraints on every produced entry."""
    dataset_by_id = {d.id: d for d in datasets}
    model_by_id = {m.id: m for m in models}
    seen: set[str] = set()
    for entry in allocation.entries:
        scenario = scenario_by_id[entry.scenario_id]
        if entry.scenario_id in seen:
            raise RuntimeError(f"internal: scenario {entry.scenario_id!r} assigned twice")
        seen.add(entry.scenario_id)
        if scenario.scenario_type not in dataset_by_id[entry.dataset_id].dataset_type:
            raise RuntimeError(f"internal: dataset constraint violated for {entry.scenario_id!r}")
        if scenario.scenario_type not in model_by_id[entry.model_id].model_type:
            raise RuntimeError(f"internal: model constraint violated for {entry.scenario_id!r}")
        if entry.score < 0:
            raise RuntimeError(f"internal: negative score for {entry.scenario_id!r}")


def soma_topk(
    scenarios: Iterable[Scenario],
    datasets: Sequence[Dataset],
    models: Sequence[Model],
    score_fn: ScoreFn,
    k: int,
    search_datasets: bool = False,
) -> TopKResult:
    """Per-scenario ranked list of at most k models, best dataset per model."""
    if k < 1:
        raise ValueError("k must be >= 1")
    result = TopKResult()
    for scenario in sorted(scenarios, key=lambda s: s.id):
        scored = _candidate_scores(scenario, datasets, models, score_fn, search_datasets)
        if isinstance(scored, UnassignedScenario):
            result.unassigned.append(scored)
            continue
        best_per_model: dict[str, RankedCandidate] = {}
        for candidate in scored:
            current = best_per_model.get(candidate.model_id)
            if current is None or (-candidate.score, candidate.dataset_id) < (-current.score, current.dataset_id):
                best_per_model[candidate.model_id] = candidate
        ranked = sorted(best_per_model.values(), key=lambda c: (-c.score, c.model_id))
        result.rankings[scenario.id] = ranked[:k]
    return result


# --- rendering -------------------------------------------------------------------

def allocation_to_json(allocation: Allocation) -> dict:
    return {
        "entries": [
            {"scenario_id": e.scenario_id, "dataset_id": e.dataset_id, "model_id": e.model_id, "score": e.score}
            for e in sorted(allocation.entries, key=lambda e: e.scenario_id)
        ],
        "unassigned": [
            {"scenario_id": u.scenario_id, "reason": u.reason}
            for u in sorted(allocation.unassigned, key=lambda u: u.scenario_id)
        ],
    }


def render_allocation_table(allocation: Allocation, registry: Registry | None = None) -> str:
    """Aligned text table with one row per assigned scenario."""
    header = ["Scenario", "Dataset", "Model", "Citations", "Stars", "MAE", "RMSE", "MAPE", "Score"]
    rows = [header]
    for entry in sorted(allocation.entries, key=lambda e: e.scenario_id):
        citations = stars = mae = rmse = mape = "-"
        scenario_label = entry.scenario_id
        if registry is not None:
            scenario = registry.scenarios.get(entry.scenario_id)
            if scenario is not None:
                scenario_label = scenario.scenario_type
            model = registry.models.get(entry.model_id)
            if model is not None:
                citations, stars = str(model.citations), str(model.github_stars)
            record = registry.performance_for(entry.scenario_id, entry.dataset_id, entry.model_id)
            if record is not None:
                m = record.metrics
                mae = f"{m.mae:.2f}" if m.mae is not None else "-"
                rmse = f"{m.rmse:.2f}" if m.rmse is not None else "-"
                mape = f"{100.0 * m.mape:.2f}%" if m.mape is not None else "-"
        rows.append(
            [scenario_label, entry.dataset_id, entry.model_id, citations, stars, mae, rmse, mape, f"{entry.score:.4f}"]
        )
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip() for row in rows]
    for u in sorted(allocation.unassigned, key=lambda u: u.scenario_id):
        lines.append(f"unassigned: {u.scenario_id} ({u.reason})")
    return "\n".join(lines)


def render_allocation_json(allocation: Allocation) -> str:
    return json.dumps(allocation_to_json(allocation), indent=2, ensure_ascii=False)
