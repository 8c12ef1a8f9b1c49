"""Seeded synthetic benchmark: planted-utility labels plus a registry fixture.

Models are shared by every scenario of the same type, so collaborative
baselines see cross-scenario co-ratings.  Each record's planted utility is a
fixed linear rule over standardized metric and popularity features plus
Gaussian noise; labels are the per-scenario inverse-rank normalization of
that utility, so the label argmax is the planted ground-truth best model.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .features import ScoreSample
from .registry import Dataset, Metrics, Model, PerformanceRecord, Registry, Scenario

# Weights over (-z(mae), -z(rmse), -z(mape), z(log1p citations), z(log1p stars)).
PLANTED_WEIGHTS = (0.35, 0.15, 0.10, 0.25, 0.15)


@dataclass(frozen=True)
class SynthConfig:
    n_scenarios: int = 36
    n_models_per_scenario: int = 20
    n_scenario_types: int = 6
    noise_sigma: float = 0.05
    planted_weights: tuple[float, float, float, float, float] = PLANTED_WEIGHTS

    def __post_init__(self):
        if self.n_scenarios < 1 or self.n_models_per_scenario < 1 or self.n_scenario_types < 1:
            raise ValueError("scenario, model, and type counts must all be >= 1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


def _zscore(column: np.ndarray) -> np.ndarray:
    std = column.std()
    if std == 0.0:
        return np.zeros_like(column)
    return (column - column.mean()) / std


def generate_synthetic(config: SynthConfig, seed: int) -> tuple[list[ScoreSample], Registry]:
    """Deterministic records and matching registry for a given (config, seed)."""
    rng = np.random.default_rng(seed)
    types = [f"synthetic scenario type {i}" for i in range(config.n_scenario_types)]

    datasets = []
    for i, tag in enumerate(types):
        downloads = int(rng.lognormal(8.0, 1.0))
        datasets.append(
            Dataset(
                id=f"d{i}",
                dataset_type=(tag,),
                features={"downloads": downloads, "collection_time": "2020-01-01/2024-12-31", "location": "synthetic"},
            )
        )

    models: list[Model] = []
    base_mae: dict[str, float] = {}
    base_mape: dict[str, float] = {}
    models_by_type: dict[str, list[Model]] = {}
    for i, tag in enumerate(types):
        pool = []
        for j in range(config.n_models_per_scenario):
            citations = int(rng.lognormal(5.0, 1.5))
            stars = int(rng.lognormal(4.0, 1.5))
            model = Model(
                id=f"m{i}-{j:03d}",
                model_type=(tag,),
                features={"citations": citations, "github_stars": stars},
            )
            base_mae[model.id] = float(rng.lognormal(2.3, 0.5))
            base_mape[model.id] = float(rng.uniform(0.03, 0.4))
            pool.append(model)
        models_by_type[tag] = pool
        models.extend(pool)

    scenarios = []
    for i in range(config.n_scenarios):
        tag = types[i % config.n_scenario_types]
        scenarios.append(Scenario(id=f"s{i:03d}", scenario_type=tag, constraints={}))

    triples: list[tuple[Scenario, Dataset, Model, Metrics]] = []
    for scenario in scenarios:
        type_idx = types.index(scenario.scenario_type)
        dataset = datasets[type_idx]
        for model in models_by_type[scenario.scenario_type]:
            mae = base_mae[model.id] * float(np.exp(rng.normal(0.0, 0.15)))
            rmse = mae * float(rng.uniform(1.1, 1.9))
            mape = float(np.clip(base_mape[model.id] * np.exp(rng.normal(0.0, 0.2)), 1e-4, 0.999))
            triples.append((scenario, dataset, model, Metrics(mae=mae, rmse=rmse, mape=mape)))

    mae_col = np.array([t[3].mae for t in triples])
    rmse_col = np.array([t[3].rmse for t in triples])
    mape_col = np.array([t[3].mape for t in triples])
    cit_col = np.log1p(np.array([float(t[2].citations) for t in triples]))
    star_col = np.log1p(np.array([float(t[2].github_stars) for t in triples]))
    w = np.array(config.planted_weights, dtype=np.float64)
    signal = np.stack([-_zscore(mae_col), -_zscore(rmse_col), -_zscore(mape_col), _zscore(cit_col), _zscore(star_col)])
    utility = w @ signal + rng.normal(0.0, config.noise_sigma, size=len(triples))

    # Inverse-rank labels per scenario: the best model gets 1.0, the worst 1/n.
    labels = np.empty(len(triples))
    by_scenario: dict[str, list[int]] = {}
    for idx, (scenario, _, _, _) in enumerate(triples):
        by_scenario.setdefault(scenario.id, []).append(idx)
    for indices in by_scenario.values():
        ordered = sorted(indices, key=lambda i: (-utility[i], triples[i][2].id))
        n = len(ordered)
        for rank, idx in enumerate(ordered, start=1):
            labels[idx] = (n - rank + 1) / n

    samples = []
    performance = []
    for idx, (scenario, dataset, model, metrics) in enumerate(triples):
        performance.append(PerformanceRecord(scenario.id, dataset.id, model.id, metrics))
        samples.append(
            ScoreSample(
                scenario_id=scenario.id,
                dataset_id=dataset.id,
                model_id=model.id,
                features=np.array(
                    [
                        float(model.citations),
                        float(model.github_stars),
                        metrics.mae,
                        metrics.rmse,
                        metrics.mape,
                        1.0,
                        1.0,
                        1.0,
                    ]
                ),
                gate=True,
                label=float(labels[idx]),
            )
        )

    registry = Registry.from_entities(scenarios, datasets, models, performance)
    return samples, registry


def ground_truth_best(samples: Sequence[ScoreSample]) -> dict[str, str]:
    """Label-argmax model per scenario (ties break on the smaller model id)."""
    best: dict[str, tuple[float, str]] = {}
    for s in samples:
        key = (-s.label, s.model_id)
        if s.scenario_id not in best or key < best[s.scenario_id]:
            best[s.scenario_id] = key
    return {sid: model_id for sid, (_, model_id) in best.items()}
