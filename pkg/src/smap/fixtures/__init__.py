"""Bundled demo fixture: six traffic scenarios, their candidate models, and
a reference score table whose per-scenario maxima are the known-good picks."""

from __future__ import annotations

import json
from importlib import resources

from ..registry import Registry, registry_from_json


def _load_json(name: str):
    with resources.files(__package__).joinpath(name).open("r", encoding="utf-8") as fh:
        return json.load(fh)


def traffic_registry() -> Registry:
    return registry_from_json(_load_json("traffic_registry.json"))


def traffic_score_table() -> dict[str, dict[str, float]]:
    return _load_json("traffic_scores.json")["scores"]


# The allocation the fixture is built to produce: model and dataset per scenario.
EXPECTED_TRAFFIC_ALLOCATION = {
    "s_speed": ("METR_LA", "MTGNN"),
    "s_road_flow": ("PEMSD4", "STGCN"),
    "s_bus": ("Bus Transaction Dataset", "ST-GCN"),
    "s_ride_hailing": ("TaxiNYC", "DCRNN"),
    "s_subway": ("Subway Transaction Dataset", "DCRNN"),
    "s_taxi": ("TaxiNYC", "DCRNN"),
}
