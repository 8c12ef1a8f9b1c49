"""Entity registry: scenarios, datasets, models, and performance records.

Registries are immutable snapshots; every mutation returns a new snapshot
with a bumped revision counter.  Concurrent readers are safe, writers must
be serialized externally (single-writer contract).
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from datetime import date
from typing import Iterable, Mapping

__all__ = [
    "ValidationError",
    "UnknownReferenceError",
    "ConstraintViolation",
    "DatasetConstraintViolation",
    "ModelConstraintViolation",
    "Scenario",
    "Dataset",
    "Model",
    "Metrics",
    "PerformanceRecord",
    "Registry",
    "register_entity",
    "match_constraints",
    "select_suitable_dataset",
    "select_candidate_models",
    "lint_registry",
    "load_registry",
    "save_registry",
]


class ValidationError(ValueError):
    """An entity violates one of its invariants."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class UnknownReferenceError(ValidationError):
    """A performance record references an id that is not in the registry."""


class ConstraintViolation(Exception):
    """A scenario cannot be served within the assignment constraints."""


class DatasetConstraintViolation(ConstraintViolation):
    """No registered dataset serves the scenario's type."""


class ModelConstraintViolation(ConstraintViolation):
    """No registered model serves the scenario's type."""


def _require_str_map(value: Mapping[str, str], owner: str, field_name: str) -> None:
    for k, v in value.items():
        if not isinstance(k, str) or not k:
            raise ValidationError(f"{owner}: {field_name} keys must be nonempty strings", field=field_name)
        if not isinstance(v, str):
            raise ValidationError(f"{owner}: {field_name} values must be strings", field=field_name)


def _as_tags(value: str | Iterable[str]) -> tuple[str, ...]:
    if isinstance(value, str):
        return (value,)
    return tuple(value)


@dataclass(frozen=True)
class Scenario:
    """A typed task context with key-value constraints."""

    id: str
    scenario_type: str
    constraints: dict[str, str] = field(default_factory=dict)

    def validate(self) -> None:
        if not self.id or not isinstance(self.id, str):
            raise ValidationError("scenario id must be a nonempty string", field="id")
        if not self.scenario_type or not isinstance(self.scenario_type, str):
            raise ValidationError(f"scenario {self.id!r}: scenario_type must be nonempty", field="scenario_type")
        _require_str_map(self.constraints, f"scenario {self.id!r}", "constraints")


@dataclass(frozen=True)
class Dataset:
    """A typed data collection; ``dataset_type`` lists the scenario types it serves.

    ``features`` must contain at least ``downloads`` (nonnegative int),
    ``collection_time`` (ISO-8601 date range, ``start/end`` with ``..`` for an
    open end) and ``location``.
    """

    id: str
    dataset_type: tuple[str, ...]
    features: dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "dataset_type", _as_tags(self.dataset_type))

    @property
    def downloads(self) -> int:
        return int(self.features["downloads"])  # type: ignore[arg-type]

    @property
    def collection_time(self) -> str:
        return str(self.features["collection_time"])

    def collection_end(self) -> date:
        """End date of the collection range; open-ended ranges sort last."""
        return _parse_date_range(self.collection_time)[1]

    def validate(self) -> None:
        if not self.id or not isinstance(self.id, str):
            raise ValidationError("dataset id must be a nonempty string", field="id")
        if not self.dataset_type or any(not t for t in self.dataset_type):
            raise ValidationError(f"dataset {self.id!r}: dataset_type must be a nonempty tag list", field="dataset_type")
        for key in ("downloads", "collection_time", "location"):
            if key not in self.features:
                raise ValidationError(f"dataset {self.id!r}: features must contain {key!r}", field=key)
        downloads = self.features["downloads"]
        if not isinstance(downloads, int) or isinstance(downloads, bool) or downloads < 0:
            raise ValidationError(f"dataset {self.id!r}: downloads must be a nonnegative integer", field="downloads")
        _parse_date_range(self.collection_time)  # raises ValidationError on bad format


def _parse_date_range(text: str) -> tuple[date, date]:
    parts = str(text).split("/")
    if len(parts) not in (1, 2):
        raise ValidationError(f"bad collection_time {text!r}: expected 'start/end'", field="collection_time")
    try:
        start = date.fromisoformat(parts[0])
        if len(parts) == 1:
            return start, start
        if parts[1] in ("", ".."):
            return start, date.max
        return start, date.fromisoformat(parts[1])
    except ValueError as exc:
        raise ValidationError(f"bad collection_time {text!r}: {exc}", field="collection_time") from exc


@dataclass(frozen=True)
class Model:
    """A candidate model; ``model_type`` lists the scenario types it serves."""

    id: str
    model_type: tuple[str, ...]
    features: dict[str, object] = field(default_factory=dict)
    requirements: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "model_type", _as_tags(self.model_type))

    @property
    def citations(self) -> int:
        return int(self.features["citations"])  # type: ignore[arg-type]

    @property
    def github_stars(self) -> int:
        return int(self.features["github_stars"])  # type: ignore[arg-type]

    def validate(self) -> None:
        if not self.id or not isinstance(self.id, str):
            raise ValidationError("model id must be a nonempty string", field="id")
        if not self.model_type or any(not t for t in self.model_type):
            raise ValidationError(f"model {self.id!r}: model_type must be a nonempty tag list", field="model_type")
        for key in ("citations", "github_stars"):
            if key not in self.features:
                raise ValidationError(f"model {self.id!r}: features must contain {key!r}", field=key)
            value = self.features[key]
            if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                raise ValidationError(f"model {self.id!r}: {key} must be a nonnegative integer", field=key)
        _require_str_map(self.requirements, f"model {self.id!r}", "requirements")


@dataclass(frozen=True)
class Metrics:
    """Fixed (mae, rmse, mape) error triple; ``None`` marks an absent metric."""

    mae: float | None = None
    rmse: float | None = None
    mape: float | None = None

    def mask(self) -> tuple[int, int, int]:
        return (int(self.mae is not None), int(self.rmse is not None), int(self.mape is not None))


@dataclass(frozen=True)
class PerformanceRecord:
    """Measured errors of one model on one dataset for one scenario."""

    scenario_id: str
    dataset_id: str
    model_id: str
    metrics: Metrics

    def key(self) -> tuple[str, str, str]:
        return (self.scenario_id, self.dataset_id, self.model_id)

    def validate(self) -> None:
        owner = f"performance ({self.scenario_id!r}, {self.dataset_id!r}, {self.model_id!r})"
        for name in ("scenario_id", "dataset_id", "model_id"):
            if not getattr(self, name):
                raise ValidationError(f"{owner}: {name} must be nonempty", field=name)
        for name in ("mae", "rmse", "mape"):
            value = getattr(self.metrics, name)
            if value is None:
                continue
            if not math.isfinite(value) or value < 0:
                raise ValidationError(f"{owner}: {name} must be finite and >= 0", field=name)
        if self.metrics.mape is not None and self.metrics.mape > 1.0:
            raise ValidationError(f"{owner}: mape must be a fraction in [0, 1]", field="mape")


Entity = Scenario | Dataset | Model | PerformanceRecord


@dataclass(frozen=True)
class Registry:
    """Immutable snapshot of all registered entities plus a revision counter."""

    scenarios: dict[str, Scenario] = field(default_factory=dict)
    datasets: dict[str, Dataset] = field(default_factory=dict)
    models: dict[str, Model] = field(default_factory=dict)
    performance: dict[tuple[str, str, str], PerformanceRecord] = field(default_factory=dict)
    revision: int = 0

    def register(self, entity: Entity) -> "Registry":
        return register_entity(self, entity)

    def performance_for(self, scenario_id: str, dataset_id: str, model_id: str) -> PerformanceRecord | None:
        return self.performance.get((scenario_id, dataset_id, model_id))

    @classmethod
    def from_entities(
        cls,
        scenarios: Iterable[Scenario] = (),
        datasets: Iterable[Dataset] = (),
        models: Iterable[Model] = (),
        performance: Iterable[PerformanceRecord] = (),
        revision: int = 0,
    ) -> "Registry":
        registry = cls(revision=revision)
        for entity in (*scenarios, *datasets, *models, *performance):
            registry = register_entity(registry, entity)
        return Registry(
            scenarios=registry.scenarios,
            datasets=registry.datasets,
            models=registry.models,
            performance=registry.performance,
            revision=revision,
        )


def register_entity(registry: Registry, entity: Entity) -> Registry:
    """Validate and store one entity, returning a new snapshot with revision + 1.

    A duplicate id replaces the prior version.  Performance records must
    reference already-registered ids.
    """
    entity.validate()
    scenarios, datasets = dict(registry.scenarios), dict(registry.datasets)
    models, performance = dict(registry.models), dict(registry.performance)
    if isinstance(entity, Scenario):
        scenarios[entity.id] = entity
    elif isinstance(entity, Dataset):
        datasets[entity.id] = entity
    elif isinstance(entity, Model):
        models[entity.id] = entity
    elif isinstance(entity, PerformanceRecord):
        if entity.scenario_id not in scenarios:
            raise UnknownReferenceError(f"performance references unknown scenario {entity.scenario_id!r}", field="scenario_id")
        if entity.dataset_id not in datasets:
            raise UnknownReferenceError(f"performance references unknown dataset {entity.dataset_id!r}", field="dataset_id")
        if entity.model_id not in models:
            raise UnknownReferenceError(f"performance references unknown model {entity.model_id!r}", field="model_id")
        performance[entity.key()] = entity
    else:
        raise ValidationError(f"cannot register object of type {type(entity).__name__}")
    return Registry(
        scenarios=scenarios,
        datasets=datasets,
        models=models,
        performance=performance,
        revision=registry.revision + 1,
    )


def match_constraints(scenario_constraints: Mapping[str, str], model_requirements: Mapping[str, str]) -> bool:
    """True iff every requirement appears among the constraints with an equal value.

    Values are compared case-sensitively after trimming whitespace; an empty
    requirement map matches vacuously.
    """
    for key, required in model_requirements.items():
        if key not in scenario_constraints:
            return False
        if scenario_constraints[key].strip() != required.strip():
            return False
    return True


def select_suitable_dataset(scenario: Scenario, dataset_set: Iterable[Dataset]) -> Dataset:
    """The type-matching dataset with the most downloads.

    Ties break on the most recent collection end date, then the smallest id.
    """
    matching = [d for d in dataset_set if scenario.scenario_type in d.dataset_type]
    if not matching:
        raise DatasetConstraintViolation(
            f"no dataset serves scenario type {scenario.scenario_type!r} (scenario {scenario.id!r})"
        )
    return min(matching, key=lambda d: (-d.downloads, -d.collection_end().toordinal(), d.id))


def select_candidate_models(scenario: Scenario, model_set: Iterable[Model]) -> list[Model]:
    """All type-matching models, in id order."""
    matching = sorted((m for m in model_set if scenario.scenario_type in m.model_type), key=lambda m: m.id)
    if not matching:
        raise ModelConstraintViolation(
            f"no model serves scenario type {scenario.scenario_type!r} (scenario {scenario.id!r})"
        )
    return matching


def lint_registry(registry: Registry) -> list[str]:
    """Non-fatal consistency warnings (currently: rmse below mae)."""
    warnings = []
    for record in registry.performance.values():
        m = record.metrics
        if m.mae is not None and m.rmse is not None and m.rmse < m.mae:
            warnings.append(
                f"performance ({record.scenario_id!r}, {record.dataset_id!r}, {record.model_id!r}): "
                f"rmse {m.rmse} is below mae {m.mae}"
            )
    return warnings


# --- JSON document persistence -------------------------------------------------

def _scenario_to_json(s: Scenario) -> dict:
    return {"id": s.id, "scenario_type": s.scenario_type, "constraints": dict(s.constraints)}


def _dataset_to_json(d: Dataset) -> dict:
    return {"id": d.id, "dataset_type": list(d.dataset_type), "features": dict(d.features)}


def _model_to_json(m: Model) -> dict:
    return {
        "id": m.id,
        "model_type": list(m.model_type),
        "features": dict(m.features),
        "requirements": dict(m.requirements),
    }


def _performance_to_json(p: PerformanceRecord) -> dict:
    return {
        "scenario_id": p.scenario_id,
        "dataset_id": p.dataset_id,
        "model_id": p.model_id,
        "metrics": {"mae": p.metrics.mae, "rmse": p.metrics.rmse, "mape": p.metrics.mape},
    }


def registry_to_json(registry: Registry) -> dict:
    return {
        "scenarios": [_scenario_to_json(s) for s in registry.scenarios.values()],
        "datasets": [_dataset_to_json(d) for d in registry.datasets.values()],
        "models": [_model_to_json(m) for m in registry.models.values()],
        "performance": [_performance_to_json(p) for p in registry.performance.values()],
        "revision": registry.revision,
    }


def registry_from_json(doc: Mapping) -> Registry:
    scenarios = [Scenario(e["id"], e["scenario_type"], dict(e.get("constraints", {}))) for e in doc.get("scenarios", [])]
    datasets = [Dataset(e["id"], tuple(e["dataset_type"]), dict(e.get("features", {}))) for e in doc.get("datasets", [])]
    models = [
        Model(e["id"], tuple(e["model_type"]), dict(e.get("features", {})), dict(e.get("requirements", {})))
        for e in doc.get("models", [])
    ]
    performance = [
        PerformanceRecord(
            e["scenario_id"],
            e["dataset_id"],
            e["model_id"],
            Metrics(e["metrics"].get("mae"), e["metrics"].get("rmse"), e["metrics"].get("mape")),
        )
        for e in doc.get("performance", [])
    ]
    return Registry.from_entities(scenarios, datasets, models, performance, revision=int(doc.get("revision", 0)))


def save_registry(registry: Registry, path: str | os.PathLike) -> None:
    """Write the registry as a single JSON document (atomically)."""
    payload = json.dumps(registry_to_json(registry), indent=2, ensure_ascii=False) + "\n"
    _atomic_write_text(path, payload)


def load_registry(path: str | os.PathLike) -> Registry:
    with open(path, "r", encoding="utf-8") as fh:
        return registry_from_json(json.load(fh))


def _atomic_write_text(path: str | os.PathLike, text: str) -> None:
    directory = os.path.dirname(os.fspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
