"""Operating-characteristics study: procedures A-E over the true-toxicity scenarios.

Procedures:
    A - dynamic decision-theoretic weights, no run-in
    B - dynamic decision-theoretic weights with a run-in period
    C - fixed mixture weight 0.5
    D - informative prior only (weight 1)
    E - weakly-informative prior only (weight 0)

Replicates are seeded by a counter scheme derived from the master seed, so
results are bit-identical regardless of worker count or chunking.
"""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .animal_prior import BvnParams, weakly_informative_prior
from .dose_model import Scenario
from .inference import MixtureWorkspace, QuadratureSettings
from .trial_engine import STATUS_COMPLETED, DoseEscalationTrial, TrialConfig

@dataclass(frozen=True)
class ProcedureSpec:
    """One analysis policy compared in the simulation study."""

    id: str
    weight_policy: str | float
    run_in: bool
    lambda_mode: str = "sd_ratio"

    def apply(self, config: TrialConfig) -> TrialConfig:
        return replace(
            config,
            weight_policy=self.weight_policy,
            run_in=self.run_in,
            lambda_mode=self.lambda_mode,
        )


def procedure(proc_id: str, lambda_mode: str = "sd_ratio") -> ProcedureSpec:
    table = {
        "A": ("dynamic", False),
        "B": ("dynamic", True),
        "C": (0.5, False),
        "D": (1.0, False),
        "E": (0.0, False),
    }
    if proc_id not in table:
        raise ValueError(f"unknown procedure {proc_id!r}")
    policy, run_in = table[proc_id]
    return ProcedureSpec(id=proc_id, weight_policy=policy, run_in=run_in, lambda_mode=lambda_mode)


@dataclass(frozen=True)
class TrialRecord:
    """Outcome of one simulated trial."""

    replicate: int
    stopped_early: bool
    mtd_index: int | None
    patients_per_dose: tuple[int, ...]
    n_cohorts: int


def _replicate_seeds(master_seed: int, scenario_idx: int, proc_id: str, replicate: int):
    base = [int(master_seed) & 0xFFFFFFFFFFFF, scenario_idx, ord(proc_id), replicate]
    outcome_rng = np.random.default_rng(base + [1])
    lam_seed = int(np.random.SeedSequence(base + [2]).generate_state(1)[0])
    return outcome_rng, lam_seed


def simulate_trial(
    scenario: Scenario,
    proc: ProcedureSpec,
    config: TrialConfig,
    informative: BvnParams,
    weak: BvnParams,
    master_seed: int,
    scenario_idx: int,
    replicate: int,
    *,
    workspace: MixtureWorkspace | None = None,
) -> TrialRecord:
    """Run one simulated trial; outcomes are coin flips at the scenario's risks."""
    outcome_rng, lam_seed = _replicate_seeds(master_seed, scenario_idx, proc.id, replicate)
    cfg = replace(proc.apply(config), seed=lam_seed)
    trial = DoseEscalationTrial(cfg, informative, weak, workspace=workspace)
    risks = np.asarray(scenario.true_risks)
    while trial.status == "enrolling":
        rec = trial.recommend_next()
        outcomes = (outcome_rng.random(cfg.cohort_size) < risks[rec]).astype(int)
        trial.record_cohort(rec, tuple(outcomes))
    mtd = trial.select_mtd() if trial.status == STATUS_COMPLETED else None
    return TrialRecord(
        replicate=replicate,
        stopped_early=mtd is None,
        mtd_index=mtd,
        patients_per_dose=tuple(int(x) for x in trial.patients_per_dose()),
        n_cohorts=trial.n_cohorts,
    )


@dataclass
class CellAggregate:
    """Sufficient statistics of one scenario x procedure cell."""

    n_replicates: int
    n_no_selection: int
    selections: np.ndarray      # counts per dose
    patients: np.ndarray        # summed patients per dose

    @classmethod
    def empty(cls, n_doses: int) -> "CellAggregate":
        return cls(0, 0, np.zeros(n_doses, dtype=np.int64), np.zeros(n_doses, dtype=np.int64))

    def add(self, rec: TrialRecord) -> None:
        self.n_replicates += 1
        if rec.mtd_index is None:
            self.n_no_selection += 1
        else:
            self.selections[rec.mtd_index] += 1
        self.patients += np.asarray(rec.patients_per_dose)

    def merge(self, other: "CellAggregate") -> None:
        self.n_replicates += other.n_replicates
        self.n_no_selection += other.n_no_selection
        self.selections += other.selections
        self.patients += other.patients

    @property
    def pct_stopped_early(self) -> float:
        return 100.0 * self.n_no_selection / self.n_replicates

    @property
    def pct_selecting(self) -> np.ndarray:
        return 100.0 * self.selections / self.n_replicates

    @property
    def mean_patients(self) -> np.ndarray:
        return self.patients / self.n_replicates


@dataclass
class OperatingCharacteristics:
    """Study results: one cell per scenario x procedure."""

    doses: tuple[float, ...]
    scenario_names: tuple[str, ...]
    procedure_ids: tuple[str, ...]
    cells: dict[tuple[str, str], CellAggregate]
    elapsed_seconds: float = 0.0

    def cell(self, scenario_name: str, proc_id: str) -> CellAggregate:
        return self.cells[(scenario_name, proc_id)]

    def pcs(self, scenario: Scenario, proc_id: str) -> float:
        """Percentage of trials selecting the scenario's true MTD."""
        return float(self.cell(scenario.name, proc_id).pct_selecting[scenario.mtd_index])


def _run_cell_chunk(args) -> tuple[str, str, CellAggregate]:
    (scenario, proc, config, informative, weak, master_seed, scenario_idx, rep_lo, rep_hi) = args
    settings = QuadratureSettings(n_nodes=config.n_nodes)
    k = config.prior_spread_inflation
    workspace = MixtureWorkspace(
        informative.inflated(k),
        weak,
        config.grid,
        settings,
        overdose_cut=config.overdose_cut,
        underdose_cut=config.underdose_cut,
    )
    agg = CellAggregate.empty(config.grid.n_doses)
    for rep in range(rep_lo, rep_hi):
        agg.add(
            simulate_trial(
                scenario, proc, config, informative, weak,
                master_seed, scenario_idx, rep, workspace=workspace,
            )
        )
    return scenario.name, proc.id, agg


def run_study(
    scenarios: list[Scenario],
    procedures: list[ProcedureSpec],
    config: TrialConfig,
    informative: BvnParams,
    *,
    weak: BvnParams | None = None,
    n_replicates: int = 1000,
    master_seed: int = 0,
    n_workers: int | None = None,
    chunk_size: int = 250,
) -> OperatingCharacteristics:
    """Full factorial study; deterministic for a fixed master seed.

    Parallelised over replicate chunks with a process pool; each worker keeps
    its own quadrature workspace, and aggregation is order-independent sums.
    """
    if n_replicates < 1:
        raise ValueError("n_replicates must be at least 1")
    weak = weak if weak is not None else weakly_informative_prior(config.grid)
    tasks = []
    for s_idx, scenario in enumerate(scenarios):
        if len(scenario.true_risks) != config.grid.n_doses:
            raise ValueError(f"{scenario.name} risks do not match the dose grid")
        for proc in procedures:
            for lo in range(0, n_replicates, chunk_size):
                hi = min(lo + chunk_size, n_replicates)
                tasks.append((scenario, proc, config, informative, weak, master_seed, s_idx, lo, hi))

    cells = {
        (s.name, p.id): CellAggregate.empty(config.grid.n_doses)
        for s in scenarios
        for p in procedures
    }
    t0 = time.time()
    if n_workers is None:
        n_workers = os.cpu_count() or 1
    if n_workers <= 1:
        results = map(_run_cell_chunk, tasks)
        for name, pid, agg in results:
            cells[(name, pid)].merge(agg)
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            for name, pid, agg in pool.map(_run_cell_chunk, tasks, chunksize=1):
                cells[(name, pid)].merge(agg)
    return OperatingCharacteristics(
        doses=config.grid.doses,
        scenario_names=tuple(s.name for s in scenarios),
        procedure_ids=tuple(p.id for p in procedures),
        cells=cells,
        elapsed_seconds=time.time() - t0,
    )


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def write_reports(oc: OperatingCharacteristics, out_dir: str | os.PathLike) -> dict[str, str]:
    """Emit oc.csv (selection percentages), alloc.csv (mean patients) and plot data."""
    os.makedirs(out_dir, exist_ok=True)
    oc_path = os.path.join(out_dir, "oc.csv")
    alloc_path = os.path.join(out_dir, "alloc.csv")
    plot_path = os.path.join(out_dir, "plotdata.json")

    dose_cols = [f"pct_select_{d:g}" for d in oc.doses]
    with open(oc_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario", "procedure", "n_replicates", "pct_stopped_early", *dose_cols])
        for name in oc.scenario_names:
            for pid in oc.procedure_ids:
                cell = oc.cell(name, pid)
                w.writerow(
                    [name, pid, cell.n_replicates, f"{cell.pct_stopped_early:.2f}"]
                    + [f"{x:.2f}" for x in cell.pct_selecting]
                )

    alloc_cols = [f"mean_patients_{d:g}" for d in oc.doses]
    with open(alloc_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario", "procedure", "n_replicates", *alloc_cols])
        for name in oc.scenario_names:
            for pid in oc.procedure_ids:
                cell = oc.cell(name, pid)
                w.writerow([name, pid, cell.n_replicates] + [f"{x:.4f}" for x in cell.mean_patients])

    plot = {
        "doses": list(oc.doses),
        "procedures": list(oc.procedure_ids),
        "elapsed_seconds": oc.elapsed_seconds,
        "panels": [
            {
                "scenario": name,
                "cells": {
                    pid: {
                        "pct_stopped_early": oc.cell(name, pid).pct_stopped_early,
                        "pct_selecting": list(oc.cell(name, pid).pct_selecting),
                        "mean_patients": list(oc.cell(name, pid).mean_patients),
                    }
                    for pid in oc.procedure_ids
                },
            }
            for name in oc.scenario_names
        ],
    }
    with open(plot_path, "w", encoding="utf-8") as fh:
        json.dump(plot, fh, indent=2)
        fh.write("\n")
    return {"oc": oc_path, "alloc": alloc_path, "plot": plot_path}


def load_oc_csv(path: str | os.PathLike) -> list[dict]:
    """Read oc.csv back into dict rows with numeric fields parsed."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            parsed: dict = {"scenario": row["scenario"], "procedure": row["procedure"]}
            parsed["n_replicates"] = int(row["n_replicates"])
            parsed["pct_stopped_early"] = float(row["pct_stopped_early"])
            parsed["pct_selecting"] = [
                float(v) for k, v in row.items() if k.startswith("pct_select_")
            ]
            rows.append(parsed)
    return rows
