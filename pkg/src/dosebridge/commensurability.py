"""Decision-theoretic weighting of the animal-informed prior component.

After each cohort the agreement between the frozen animal-based outcome
predictions and the observed human DLTs is scored with a utility table; the
average predictive utility over the interesting dose range (kappa) is
discounted by a time-dependent power (lambda) to give the mixture weight
w = kappa ** lambda used to analyse the accumulated data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .dose_model import CohortOutcome


@dataclass(frozen=True)
class UtilityTable:
    """Utilities u[observed, predicted] for binary DLT predictions.

    Correct predictions score 1; predicting no-DLT when a DLT occurs scores 0
    (the safety-relevant miss); predicting a DLT that does not occur scores
    ``u01`` in (0, 1), a milder penalty for over-caution.
    """

    u01: float = 0.6
    u00: float = 1.0
    u10: float = 0.0
    u11: float = 1.0

    def __post_init__(self) -> None:
        for name in ("u00", "u01", "u10", "u11"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not 0.0 < self.u01 < 1.0:
            raise ValueError("u01 must lie strictly between 0 and 1")

    def of(self, observed: int, predicted: int) -> float:
        return (
            (self.u00, self.u01),
            (self.u10, self.u11),
        )[observed][predicted]

    @property
    def prediction_threshold(self) -> float:
        """DLT probability above which predicting a DLT is optimal.

        With the standard scheme (u00 = u11 = 1, u10 = 0) this reduces to
        (1 - u01) / (2 - u01).
        """
        num = self.u00 - self.u01
        den = (self.u00 - self.u01) + (self.u11 - self.u10)
        return num / den


def optimal_prediction(prob_dlt: float, u: UtilityTable) -> int:
    """Utility-maximising binary prediction for a patient's DLT outcome.

    Ties break toward 0: the cautious no-DLT prediction is kept at exact
    indifference.
    """
    eu_no = u.u00 * (1.0 - prob_dlt) + u.u10 * prob_dlt
    eu_yes = u.u01 * (1.0 - prob_dlt) + u.u11 * prob_dlt
    return 1 if eu_yes > eu_no else 0


def predictions_for_grid(prob_dlt_per_dose: Sequence[float], u: UtilityTable) -> tuple[int, ...]:
    """Frozen per-dose predictions from the animal-prior predictive means."""
    return tuple(optimal_prediction(float(p), u) for p in prob_dlt_per_dose)


@dataclass(frozen=True)
class PredictionRecord:
    """Per-dose tallies n[observed, predicted] accumulated over cohorts."""

    counts: dict[int, tuple[int, int, int, int]]  # dose_index -> (n00, n01, n10, n11)

    @classmethod
    def from_history(cls, history: Iterable[CohortOutcome]) -> "PredictionRecord":
        counts: dict[int, list[int]] = {}
        for cohort in history:
            cell = counts.setdefault(cohort.dose_index, [0, 0, 0, 0])
            for y, s in zip(cohort.outcomes, cohort.predictions):
                # layout: (obs=0,pred=0), (obs=0,pred=1), (obs=1,pred=0), (obs=1,pred=1)
                cell[2 * y + s] += 1
        return cls(counts={i: tuple(c) for i, c in counts.items()})

    def administered(self) -> tuple[int, ...]:
        return tuple(sorted(self.counts))

    def patients_at(self, dose_index: int) -> int:
        return sum(self.counts.get(dose_index, (0, 0, 0, 0)))


def per_dose_utility(record: PredictionRecord, dose_index: int, u: UtilityTable) -> float:
    """Average utility of the frozen predictions for all patients at one dose."""
    cell = record.counts.get(dose_index)
    if cell is None or sum(cell) == 0:
        raise ValueError(f"no patients treated at dose index {dose_index}")
    n00, n01, n10, n11 = cell
    total = u.u00 * n00 + u.u01 * n01 + u.u10 * n10 + u.u11 * n11
    return total / (n00 + n01 + n10 + n11)


def interesting_doses(administered: Iterable[int], current_mtd_index: int) -> tuple[int, ...]:
    """Administered doses no more than one level below the current MTD estimate.

    The current estimate is the dose given to the latest cohort; tried doses
    above it are always included.
    """
    return tuple(sorted(i for i in set(administered) if i >= current_mtd_index - 1))


def kappa(record: PredictionRecord, interesting: Sequence[int], u: UtilityTable) -> float:
    """Commensurability: mean per-dose predictive utility over the interesting set."""
    if not interesting:
        raise ValueError("the interesting dose set is empty")
    return float(np.mean([per_dose_utility(record, i, u) for i in interesting]))


def lambda_info_time(n_so_far: int, n_max: int) -> float:
    """Information-time discount exponent sqrt(n_max / n_so_far)."""
    if not 0 < n_so_far <= n_max:
        raise ValueError("need 0 < n_so_far <= n_max")
    return math.sqrt(n_max / n_so_far)


def _per_patient_sd(prob_dlt: float, prediction: int, u: UtilityTable) -> float:
    spread = (u.u11 - u.u01) if prediction == 1 else (u.u00 - u.u10)
    return abs(spread) * math.sqrt(prob_dlt * (1.0 - prob_dlt))


def lambda_sd_ratio(
    prob_dlt: float,
    prediction: int,
    u: UtilityTable,
    cohort_size: int,
    n_remaining_cohorts: int,
    rng: np.random.Generator,
    *,
    n_sims: int = 5000,
) -> float:
    """Noise-ratio discount exponent for the current cohort's dose.

    Numerator: analytic sd of the mean utility over the current cohort's
    patients (two-point utility per patient given the frozen prediction).
    Denominator: empirical sd of the mean utility over all patients in the
    remaining cohorts, simulated ``n_sims`` times assuming every one of them
    receives the current dose at the same DLT probability.  Clamped below at
    1; the final cohort returns exactly 1 (the two averages coincide).
    """
    if cohort_size < 1 or n_remaining_cohorts < 1:
        raise ValueError("cohort_size and n_remaining_cohorts must be positive")
    if n_remaining_cohorts == 1:
        return 1.0
    if prob_dlt <= 0.0 or prob_dlt >= 1.0:
        return 1.0
    numerator = _per_patient_sd(prob_dlt, prediction, u) / math.sqrt(cohort_size)
    m_future = n_remaining_cohorts * cohort_size
    u_dlt = u.u11 if prediction == 1 else u.u10
    u_no = u.u01 if prediction == 1 else u.u00
    k = rng.binomial(m_future, prob_dlt, size=n_sims)
    c_future = (k * u_dlt + (m_future - k) * u_no) / m_future
    denominator = float(np.std(c_future, ddof=1))
    if denominator == 0.0:
        return 1.0
    return max(1.0, numerator / denominator)


def dynamic_weight(kappa_value: float, lambda_value: float) -> float:
    """Mixture weight w = kappa ** lambda."""
    if not 0.0 <= kappa_value <= 1.0:
        raise ValueError("kappa must lie in [0, 1]")
    if lambda_value < 1.0:
        raise ValueError("lambda must be at least 1")
    return kappa_value ** lambda_value


def has_discrepancy(cohort: CohortOutcome) -> bool:
    """True when any observed outcome disagrees with its frozen prediction."""
    return any(y != s for y, s in zip(cohort.outcomes, cohort.predictions))


@dataclass(frozen=True)
class WeightPoint:
    """One cohort's entry in the weight trajectory."""

    cohort: int
    kappa: float | None
    lam: float | None
    weight: float
    run_in: bool
    posterior_weight: float

    def as_dict(self) -> dict:
        return {
            "cohort": self.cohort,
            "kappa": self.kappa,
            "lambda": self.lam,
            "weight": self.weight,
            "run_in": self.run_in,
            "posterior_weight": self.posterior_weight,
        }
