"""Core domain types for dose grids, toxicity risks and the logistic dose-toxicity curve.

The dose-toxicity relationship is the two-parameter logistic model on the
log-dose scale,

    logit(p) = theta1 + exp(theta2) * log(dose / d_ref),

where ``theta1`` is the log-odds of a dose-limiting toxicity (DLT) at the
reference dose and ``exp(theta2)`` is the slope.  The exponential link keeps
the slope positive, so DLT risk is strictly increasing in dose for every
parameter value.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logit


@dataclass(frozen=True)
class DoseGrid:
    """Ordered candidate doses with the reference dose and target DLT risk.

    ``d_ref`` anchors the intercept of the dose-toxicity model and need not be
    a member of the grid.  ``gamma`` is the DLT risk that defines the maximum
    tolerated dose (MTD).
    """

    doses: tuple[float, ...]
    d_ref: float
    gamma: float

    def __post_init__(self) -> None:
        doses = tuple(float(d) for d in self.doses)
        object.__setattr__(self, "doses", doses)
        if len(doses) == 0:
            raise ValueError("dose grid is empty")
        if any(d <= 0 for d in doses):
            raise ValueError("all doses must be positive")
        if any(b <= a for a, b in zip(doses, doses[1:])):
            raise ValueError("doses must be strictly increasing")
        if self.d_ref <= 0:
            raise ValueError("d_ref must be positive")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")

    @property
    def n_doses(self) -> int:
        return len(self.doses)

    def index_of(self, dose: float) -> int:
        """Grid index of ``dose``; raises if the value is not on the grid."""
        arr = np.asarray(self.doses)
        hits = np.nonzero(np.isclose(arr, dose, rtol=1e-9))[0]
        if hits.size == 0:
            raise ValueError(f"dose {dose} is not on the grid {self.doses}")
        return int(hits[0])


@dataclass(frozen=True)
class ThetaPoint:
    """A single parameter value of the dose-toxicity model."""

    theta1: float
    theta2: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.theta1) and np.isfinite(self.theta2)):
            raise ValueError("theta components must be finite")


@dataclass(frozen=True)
class Scenario:
    """A true dose-toxicity configuration used to simulate trials."""

    name: str
    true_risks: tuple[float, ...]
    mtd_index: int

    def __post_init__(self) -> None:
        risks = tuple(float(r) for r in self.true_risks)
        object.__setattr__(self, "true_risks", risks)
        if any(not 0.0 <= r <= 1.0 for r in risks):
            raise ValueError("scenario risks must lie in [0, 1]")
        if any(b < a for a, b in zip(risks, risks[1:])):
            raise ValueError("scenario risks must be non-decreasing in dose")
        if not 0 <= self.mtd_index < len(risks):
            raise ValueError("mtd_index out of range")


@dataclass(frozen=True)
class CohortOutcome:
    """Observed DLT outcomes of one cohort, with the frozen per-patient predictions.

    Within a cohort everyone receives the same dose, so the same outcome is
    predicted for every patient; ``predictions`` is stored per patient anyway
    to keep the prediction/observation bookkeeping explicit.
    """

    dose_index: int
    outcomes: tuple[int, ...]
    predictions: tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        if len(self.outcomes) == 0:
            raise ValueError("cohort must contain at least one patient")
        if any(y not in (0, 1) for y in self.outcomes):
            raise ValueError("outcomes must be 0/1")
        if self.predictions:
            if len(self.predictions) != len(self.outcomes):
                raise ValueError("predictions must match outcomes in length")
            if len(set(self.predictions)) > 1:
                raise ValueError("all patients at one dose share the same prediction")

    @property
    def n_patients(self) -> int:
        return len(self.outcomes)

    @property
    def n_dlt(self) -> int:
        return int(sum(self.outcomes))


def dlt_risk(theta: ThetaPoint | tuple[float, float], dose, d_ref: float):
    """DLT probability at ``dose`` under the two-parameter logistic model.

    Accepts a scalar or array ``dose``; the computation stays on the log-odds
    scale until the final ``expit`` so extreme doses do not underflow.
    """
    t1, t2 = (theta.theta1, theta.theta2) if isinstance(theta, ThetaPoint) else theta
    dose = np.asarray(dose, dtype=float)
    if np.any(dose <= 0):
        raise ValueError("dose must be positive")
    if d_ref <= 0:
        raise ValueError("d_ref must be positive")
    z = t1 + np.exp(t2) * np.log(dose / d_ref)
    out = expit(z)
    return float(out) if out.ndim == 0 else out


def latent_logodds(theta1, theta2, dose, d_ref: float):
    """The linear predictor logit(p) = theta1 + exp(theta2) log(dose/d_ref).

    Vectorised over any broadcastable combination of arguments.
    """
    return theta1 + np.exp(theta2) * np.log(np.asarray(dose, dtype=float) / d_ref)


# Dose grid of the worked example: nine doses in mg/m^2 with the target DLT
# risk 0.25 and the reference dose 28 mg/m^2.
REFERENCE_DOSES = (2.0, 4.0, 8.0, 16.0, 22.0, 28.0, 40.0, 54.0, 70.0)


def reference_grid(d_ref: float = 28.0, gamma: float = 0.25) -> DoseGrid:
    """The nine-dose grid used throughout the examples and the simulation study."""
    return DoseGrid(doses=REFERENCE_DOSES, d_ref=d_ref, gamma=gamma)


_SCENARIO_RISKS = (
    ("1", (0.11, 0.25, 0.35, 0.41, 0.47, 0.52, 0.58, 0.63, 0.70), 1),
    ("2", (0.08, 0.16, 0.25, 0.35, 0.42, 0.45, 0.53, 0.60, 0.70), 2),
    ("3", (0.02, 0.05, 0.14, 0.25, 0.35, 0.42, 0.51, 0.60, 0.68), 3),
    ("4", (0.03, 0.05, 0.10, 0.16, 0.25, 0.32, 0.40, 0.48, 0.55), 4),
    ("5", (0.001, 0.005, 0.03, 0.10, 0.16, 0.25, 0.38, 0.50, 0.60), 5),
    ("6", (0.01, 0.02, 0.05, 0.08, 0.11, 0.14, 0.25, 0.37, 0.47), 6),
    ("7", (0.35, 0.42, 0.60, 0.75, 0.82, 0.88, 0.91, 0.94, 0.97), 0),
    ("8", (0.001, 0.005, 0.01, 0.02, 0.04, 0.05, 0.10, 0.16, 0.25), 8),
)


def scenario_table() -> list[Scenario]:
    """The eight true-toxicity scenarios of the operating-characteristics study.

    The MTD of each scenario is the dose whose true risk is closest to the
    target 0.25 (scenario 7 is over-toxic everywhere, so its MTD is the lowest
    dose).
    """
    return [
        Scenario(name=f"scenario_{name}", true_risks=risks, mtd_index=mtd)
        for name, risks, mtd in _SCENARIO_RISKS
    ]


__all__ = [
    "DoseGrid",
    "ThetaPoint",
    "Scenario",
    "CohortOutcome",
    "dlt_risk",
    "latent_logodds",
    "expit",
    "logit",
    "REFERENCE_DOSES",
    "reference_grid",
    "scenario_table",
]
