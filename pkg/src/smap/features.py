"""Fixed feature slots, normalization statistics, and labeled-sample CSV io."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .registry import Metrics, Model

FEATURE_SLOTS = ("citations", "github_stars", "mae", "rmse", "mape", "mae_mask", "rmse_mask", "mape_mask")
N_FEATURES = len(FEATURE_SLOTS)

# Heavy-tailed count features go through log1p before z-scoring; everything
# else (metric values and presence masks) is z-scored as-is.
SLOT_TRANSFORMS = tuple("log1p" if s in ("citations", "github_stars") else "identity" for s in FEATURE_SLOTS)

CSV_HEADER = ("scenario_id", "dataset_id", "model_id") + FEATURE_SLOTS + ("gate", "label")


@dataclass
class ScoreSample:
    """One labeled (scenario, dataset, model) observation.

    ``features`` holds the raw slot values in ``FEATURE_SLOTS`` order;
    masked-off metric slots carry 0.  ``label`` is a ground-truth score in
    [0, 1]; ``gate`` is the constraint-match indicator.
    """

    scenario_id: str
    dataset_id: str
    model_id: str
    features: np.ndarray
    gate: bool
    label: float

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.shape != (N_FEATURES,):
            raise ValueError(f"expected {N_FEATURES} feature slots, got shape {self.features.shape}")
        if not 0.0 <= self.label <= 1.0:
            raise ValueError(f"label must lie in [0, 1], got {self.label}")


@dataclass(frozen=True)
class FeatureStats:
    """Per-slot transform flag plus mean/std fitted on the training split only."""

    means: np.ndarray
    stds: np.ndarray
    transforms: tuple[str, ...] = field(default=SLOT_TRANSFORMS)

    def __post_init__(self):
        object.__setattr__(self, "means", np.asarray(self.means, dtype=np.float64))
        object.__setattr__(self, "stds", np.asarray(self.stds, dtype=np.float64))
        n = len(self.transforms)
        if self.means.shape != (n,) or self.stds.shape != (n,):
            raise ValueError("stats must cover exactly one mean/std per feature slot")
        if np.any(self.stds < 0):
            raise ValueError("stds must be nonnegative")


def _apply_transforms(raw: np.ndarray, transforms: Sequence[str]) -> np.ndarray:
    out = np.array(raw, dtype=np.float64)
    for i, t in enumerate(transforms):
        if t == "log1p":
            out[..., i] = np.log1p(out[..., i])
        elif t != "identity":
            raise ValueError(f"unknown transform {t!r}")
    return out


def fit_feature_stats(training_samples: Sequence[ScoreSample]) -> FeatureStats:
    """Per-slot mean and population std over the training samples."""
    if not training_samples:
        raise ValueError("at least one training sample is required to fit feature stats")
    raw = np.stack([s.features for s in training_samples])
    transformed = _apply_transforms(raw, SLOT_TRANSFORMS)
    return FeatureStats(means=transformed.mean(axis=0), stds=transformed.std(axis=0), transforms=SLOT_TRANSFORMS)


def normalize_features(raw_slots: np.ndarray, stats: FeatureStats) -> np.ndarray:
    """Transform then z-score each slot; zero-variance slots map to 0."""
    raw = np.asarray(raw_slots, dtype=np.float64)
    transformed = _apply_transforms(raw, stats.transforms)
    centered = transformed - stats.means
    safe = np.where(stats.stds > 0.0, stats.stds, 1.0)
    return np.where(stats.stds > 0.0, centered / safe, 0.0)


def build_raw_slots(model: Model, metrics: Metrics) -> np.ndarray:
    """Raw slot vector for one (model, performance) pair; absent metrics carry 0."""
    mae_m, rmse_m, mape_m = metrics.mask()
    return np.array(
        [
            float(model.citations),
            float(model.github_stars),
            float(metrics.mae) if mae_m else 0.0,
            float(metrics.rmse) if rmse_m else 0.0,
            float(metrics.mape) if mape_m else 0.0,
            float(mae_m),
            float(rmse_m),
            float(mape_m),
        ]
    )


def save_samples(path: str | os.PathLike, samples: Iterable[ScoreSample]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for s in samples:
            writer.writerow(
                [s.scenario_id, s.dataset_id, s.model_id]
                + [repr(float(v)) for v in s.features]
                + [int(s.gate), repr(float(s.label))]
            )


def load_samples(path: str | os.PathLike) -> list[ScoreSample]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise ValueError(f"bad sample CSV header in {os.fspath(path)!r}: expected {','.join(CSV_HEADER)}")
        samples = []
        for row in reader:
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise ValueError(f"bad sample CSV row (expected {len(CSV_HEADER)} columns): {row!r}")
            features = np.array([float(v) for v in row[3 : 3 + N_FEATURES]])
            samples.append(
                ScoreSample(
                    scenario_id=row[0],
                    dataset_id=row[1],
                    model_id=row[2],
                    features=features,
                    gate=_parse_bool(row[3 + N_FEATURES]),
                    label=float(row[4 + N_FEATURES]),
                )
            )
        return samples


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes"):
        return True
    if lowered in ("0", "false", "no"):
        return False
    raise ValueError(f"bad boolean value {text!r}")
