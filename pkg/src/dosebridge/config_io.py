"""Declarative trial configuration files (TOML).

One document can carry the dose grid, the animal study, trial conduct
settings and simulation scenarios; field names mirror the domain types.
"""

from __future__ import annotations

import os

try:
    import tomllib  # Python 3.11+
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .animal_prior import AnimalStudy
from .dose_model import DoseGrid, Scenario
from .trial_engine import TrialConfig


def load_document(path: str | os.PathLike) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def grid_from(doc: dict) -> DoseGrid:
    g = doc["grid"]
    return DoseGrid(doses=tuple(g["doses"]), d_ref=float(g["d_ref"]), gamma=float(g["gamma"]))


def study_from(doc: dict) -> AnimalStudy:
    s = doc["animal_study"]
    return AnimalStudy(
        species_factor=float(s["species_factor"]),
        arms=tuple((float(a[0]), int(a[1]), int(a[2])) for a in s["arms"]),
    )


def scenarios_from(doc: dict) -> list[Scenario]:
    return [
        Scenario(
            name=str(s["name"]),
            true_risks=tuple(float(r) for r in s["true_risks"]),
            mtd_index=int(s["mtd_index"]),
        )
        for s in doc.get("scenarios", [])
    ]


def trial_config_from(doc: dict, grid: DoseGrid | None = None) -> TrialConfig:
    grid = grid if grid is not None else grid_from(doc)
    t = doc.get("trial", {})
    weight_policy = t.get("weight_policy", "dynamic")
    if not isinstance(weight_policy, str):
        weight_policy = float(weight_policy)
    return TrialConfig(
        grid=grid,
        cohort_size=int(t.get("cohort_size", 3)),
        max_cohorts=int(t.get("max_cohorts", 7)),
        start_dose=float(t["start_dose"]) if "start_dose" in t else None,
        u01=float(t.get("u01", 0.6)),
        lambda_mode=str(t.get("lambda_mode", "sd_ratio")),
        weight_policy=weight_policy,
        run_in=bool(t.get("run_in", False)),
        overdose_cut=float(t.get("overdose_cut", 0.33)),
        feasibility_bound=float(t.get("feasibility_bound", 0.25)),
        underdose_cut=float(t.get("underdose_cut", 0.16)),
        prior_spread_inflation=float(t.get("prior_spread_inflation", 2.0)),
        seed=int(t.get("seed", 0)),
        n_nodes=int(t.get("n_nodes", 201)),
        lambda_sims=int(t.get("lambda_sims", 5000)),
    )
