"""Sequential dose-escalation trial engine.

Drives one trial: freezes animal-based outcome predictions, records cohorts,
re-weights the prior mixture after each cohort, recommends the next dose
under overdose control with a two-fold escalation cap, stops early when even
the lowest dose looks too toxic, and selects the MTD at completion.  Every
piece of state round-trips losslessly through a versioned session document.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .animal_prior import BvnParams, weakly_informative_prior
from .commensurability import (
    PredictionRecord,
    UtilityTable,
    WeightPoint,
    dynamic_weight,
    has_discrepancy,
    interesting_doses,
    kappa,
    lambda_info_time,
    lambda_sd_ratio,
    predictions_for_grid,
)
from .dose_model import CohortOutcome, DoseGrid, expit, latent_logodds
from .inference import (
    MixtureBelief,
    MixtureWorkspace,
    QuadratureSettings,
    counts_from_history,
    mixture_modal_theta,
    mixture_prob_below,
    mixture_prob_over,
    summarize,
)

SESSION_FORMAT = "dosebridge.session"
SESSION_VERSION = 1

STATUS_ENROLLING = "enrolling"
STATUS_STOPPED_EARLY = "stopped_early"
STATUS_COMPLETED = "completed"

STOP = -1  # recommendation sentinel


class TrialStateError(RuntimeError):
    """Operation not allowed in the trial's current status."""


class ProtocolViolationError(ValueError):
    """Recorded dose does not match the standing recommendation."""


class SessionFormatError(ValueError):
    """Session document is unreadable or has an unsupported schema."""


@dataclass(frozen=True)
class TrialConfig:
    """Static design parameters of one escalation trial."""

    grid: DoseGrid
    cohort_size: int = 3
    max_cohorts: int = 7
    start_dose: float | None = None
    u01: float = 0.6
    lambda_mode: str = "sd_ratio"          # "sd_ratio" | "info_time"
    weight_policy: str | float = "dynamic"  # "dynamic" or a fixed weight in [0, 1]
    run_in: bool = False
    overdose_cut: float = 0.33
    feasibility_bound: float = 0.25
    underdose_cut: float = 0.16
    # The fitted component's location is itself an estimate; giving it a
    # location hyperprior with matched covariance doubles the effective
    # spread.  The weak component is specified directly and is not inflated.
    prior_spread_inflation: float = 2.0
    seed: int = 0
    n_nodes: int = 201
    lambda_sims: int = 5000

    def __post_init__(self) -> None:
        if self.cohort_size < 1:
            raise ValueError("cohort_size must be positive")
        if self.max_cohorts < 1:
            raise ValueError("max_cohorts must be positive")
        if self.lambda_mode not in ("sd_ratio", "info_time"):
            raise ValueError("lambda_mode must be 'sd_ratio' or 'info_time'")
        if isinstance(self.weight_policy, str):
            if self.weight_policy != "dynamic":
                raise ValueError("weight_policy must be 'dynamic' or a number in [0, 1]")
        elif not 0.0 <= float(self.weight_policy) <= 1.0:
            raise ValueError("fixed weight must lie in [0, 1]")
        if self.start_dose is not None:
            self.grid.index_of(self.start_dose)  # must be a grid dose
        if self.run_in and isinstance(self.weight_policy, (int, float)):
            raise ValueError("the run-in variant applies to dynamic weighting only")

    @property
    def utilities(self) -> UtilityTable:
        return UtilityTable(u01=self.u01)

    @property
    def max_patients(self) -> int:
        return self.cohort_size * self.max_cohorts

    @property
    def dynamic(self) -> bool:
        return self.weight_policy == "dynamic"


def default_start_dose_index(prob_safe: np.ndarray) -> int:
    """Lowest grid dose whose prior Pr(risk < 0.1) is at least 0.8."""
    eligible = np.nonzero(prob_safe >= 0.8)[0]
    if eligible.size == 0:
        raise ValueError("no dose satisfies the starting-dose safety screen")
    return int(eligible[0])


class DoseEscalationTrial:
    """Stateful driver for one trial; see module docstring for the loop."""

    def __init__(
        self,
        config: TrialConfig,
        informative_prior: BvnParams,
        weak_prior: BvnParams | None = None,
        *,
        workspace: MixtureWorkspace | None = None,
    ):
        self.config = config
        self.informative_prior = informative_prior
        self.weak_prior = weak_prior if weak_prior is not None else weakly_informative_prior(config.grid)
        k = config.prior_spread_inflation
        if workspace is not None:
            # shared across simulated trials with identical priors; its
            # posterior cache is keyed by data counts only
            self.workspace = workspace
        else:
            settings = QuadratureSettings(n_nodes=config.n_nodes)
            self.workspace = MixtureWorkspace(
                self.informative_prior.inflated(k),
                self.weak_prior,
                config.grid,
                settings,
                overdose_cut=config.overdose_cut,
                underdose_cut=config.underdose_cut,
            )
        animal_only = self.workspace.posterior(1.0, ())
        self.prior_predictive = tuple(float(x) for x in animal_only.post_informative.mean_risk)
        self.predictions = predictions_for_grid(self.prior_predictive, config.utilities)
        self._animal_only_prior = animal_only

        self.history: list[CohortOutcome] = []
        self.trace: list[WeightPoint] = []
        self.status = STATUS_ENROLLING
        self.runin_triggered_at: int | None = None
        self.belief: MixtureBelief = self.workspace.posterior(self._initial_weight(), ())
        self._last_recommendation: int | None = None

    # -- weights ------------------------------------------------------------

    def _initial_weight(self) -> float:
        if not self.config.dynamic:
            return float(self.config.weight_policy)
        return 0.0 if self.config.run_in else 1.0

    def _in_run_in(self) -> bool:
        return self.config.run_in and self.runin_triggered_at is None

    def _modal_dlt_prob(self, dose_index: int, cohort_number: int) -> float:
        """Posterior-modal DLT probability at a dose, for the noise-ratio lambda.

        The first cohort uses the animal-data prior alone; later cohorts use
        the mixture posterior that produced the standing recommendation.
        """
        belief = self._animal_only_prior if cohort_number == 1 else self.belief
        theta = mixture_modal_theta(belief)
        z = latent_logodds(theta[0], theta[1], self.config.grid.doses[dose_index], self.config.grid.d_ref)
        return float(expit(z))

    def _cohort_rng(self, cohort_number: int) -> np.random.Generator:
        return np.random.default_rng([int(self.config.seed) & 0xFFFFFFFF, 0x6C, cohort_number])

    def _weight_for(self, cohort_number: int, dose_index: int) -> tuple[float, float | None, float | None, bool]:
        """(weight, kappa, lambda, run_in_flag) for analysing cohorts 1..h."""
        cfg = self.config
        record = PredictionRecord.from_history(self.history)
        interesting = interesting_doses(record.administered(), dose_index)
        kap = kappa(record, interesting, cfg.utilities)
        if not cfg.dynamic:
            return float(cfg.weight_policy), kap, None, False
        if self._in_run_in():
            return 0.0, kap, None, True
        if cfg.lambda_mode == "info_time":
            lam = lambda_info_time(cohort_number * cfg.cohort_size, cfg.max_patients)
        else:
            lam = lambda_sd_ratio(
                self._modal_dlt_prob(dose_index, cohort_number),
                self.predictions[dose_index],
                cfg.utilities,
                cfg.cohort_size,
                cfg.max_cohorts - cohort_number + 1,
                self._cohort_rng(cohort_number),
                n_sims=cfg.lambda_sims,
            )
        return dynamic_weight(kap, lam), kap, lam, False

    # -- trial operations ---------------------------------------------------

    def recommend_next(self) -> int:
        """Grid index of the next cohort's dose, or ``STOP``.

        The candidate set is every dose whose posterior overdose probability
        is within the feasibility bound; the recommendation is the highest
        candidate, capped at a two-fold increase over the most recent dose.
        """
        if self.status != STATUS_ENROLLING:
            raise TrialStateError(f"cannot recommend on a {self.status} trial")
        if not self.history:
            return self._start_dose_index()
        prob_over = mixture_prob_over(self.belief)
        candidates = np.nonzero(prob_over <= self.config.feasibility_bound)[0]
        if candidates.size == 0:
            return STOP
        last_value = self.config.grid.doses[self.history[-1].dose_index]
        doses = np.asarray(self.config.grid.doses)
        capped = candidates[doses[candidates] <= 2.0 * last_value]
        return int(capped[-1])

    def _start_dose_index(self) -> int:
        if self.config.start_dose is not None:
            return self.config.grid.index_of(self.config.start_dose)
        prob_safe = mixture_prob_below(self._animal_only_prior, 0.1)
        return default_start_dose_index(prob_safe)

    def record_cohort(
        self,
        dose_index: int,
        outcomes,
        *,
        allow_deviation: bool = False,
    ) -> WeightPoint:
        """Record one cohort's outcomes and refresh the posterior and weights.

        ``allow_deviation`` permits recording a dose other than the standing
        recommendation (retrospective replays, protocol deviations); by
        default a mismatch raises.
        """
        if self.status != STATUS_ENROLLING:
            raise TrialStateError(f"cannot record on a {self.status} trial")
        outcomes = tuple(int(y) for y in outcomes)
        if len(outcomes) != self.config.cohort_size:
            raise ValueError(f"expected {self.config.cohort_size} outcomes, got {len(outcomes)}")
        if not allow_deviation:
            expected = self._last_recommendation
            if expected is None:
                expected = self.recommend_next()
            if expected == STOP or dose_index != expected:
                raise ProtocolViolationError(
                    f"dose index {dose_index} does not match the recommendation {expected}"
                )
        cohort_number = len(self.history) + 1
        cohort = CohortOutcome(
            dose_index=dose_index,
            outcomes=outcomes,
            predictions=(self.predictions[dose_index],) * len(outcomes),
        )
        self.history.append(cohort)

        weight, kap, lam, run_in_flag = self._weight_for(cohort_number, dose_index)
        if self._in_run_in() and has_discrepancy(cohort):
            self.runin_triggered_at = cohort_number
        self.belief = self.workspace.posterior(weight, counts_from_history(self.history))
        point = WeightPoint(
            cohort=cohort_number,
            kappa=kap,
            lam=lam,
            weight=weight,
            run_in=run_in_flag,
            posterior_weight=float(self.belief.posterior_weight),
        )
        self.trace.append(point)

        prob_over = mixture_prob_over(self.belief)
        if prob_over[0] > self.config.feasibility_bound:
            self.status = STATUS_STOPPED_EARLY
            self._last_recommendation = None
        elif cohort_number >= self.config.max_cohorts:
            self.status = STATUS_COMPLETED
            self._last_recommendation = None
        else:
            self._last_recommendation = self.recommend_next()
            if self._last_recommendation == STOP:
                self.status = STATUS_STOPPED_EARLY
                self._last_recommendation = None
        return point

    def select_mtd(self) -> int | None:
        """Administered, currently-safe dose with posterior median closest to target.

        Returns None for trials stopped early (and for the rare completed
        trial whose administered doses all fail the safety criterion).
        """
        if self.status == STATUS_ENROLLING:
            raise TrialStateError("the trial is still enrolling")
        if self.status == STATUS_STOPPED_EARLY:
            return None
        prob_over = mixture_prob_over(self.belief)
        administered = sorted({c.dose_index for c in self.history})
        safe = [i for i in administered if prob_over[i] <= self.config.feasibility_bound]
        if not safe:
            return None
        medians = [self._median(i) for i in safe]
        gaps = [abs(m - self.config.grid.gamma) for m in medians]
        return int(safe[int(np.argmin(gaps))])

    def _median(self, dose_index: int) -> float:
        from .inference import mixture_median

        return mixture_median(self.belief, dose_index)

    def summary(self):
        return summarize(self.belief, self.config.grid)

    @property
    def n_cohorts(self) -> int:
        return len(self.history)

    def patients_per_dose(self) -> np.ndarray:
        out = np.zeros(self.config.grid.n_doses, dtype=int)
        for c in self.history:
            out[c.dose_index] += c.n_patients
        return out

    # -- persistence ----------------------------------------------------------

    def snapshot(self) -> dict:
        cfg = self.config
        return {
            "format": SESSION_FORMAT,
            "version": SESSION_VERSION,
            "config": {
                "doses": list(cfg.grid.doses),
                "d_ref": cfg.grid.d_ref,
                "gamma": cfg.grid.gamma,
                "cohort_size": cfg.cohort_size,
                "max_cohorts": cfg.max_cohorts,
                "start_dose": cfg.start_dose,
                "u01": cfg.u01,
                "lambda_mode": cfg.lambda_mode,
                "weight_policy": cfg.weight_policy,
                "run_in": cfg.run_in,
                "overdose_cut": cfg.overdose_cut,
                "feasibility_bound": cfg.feasibility_bound,
                "underdose_cut": cfg.underdose_cut,
                "prior_spread_inflation": cfg.prior_spread_inflation,
                "seed": cfg.seed,
                "n_nodes": cfg.n_nodes,
                "lambda_sims": cfg.lambda_sims,
            },
            "informative_prior": _bvn_dict(self.informative_prior),
            "weak_prior": _bvn_dict(self.weak_prior),
            "history": [
                {
                    "dose_index": c.dose_index,
                    "outcomes": list(c.outcomes),
                    "predictions": list(c.predictions),
                }
                for c in self.history
            ],
            "trace": [p.as_dict() for p in self.trace],
            "status": self.status,
            "runin_triggered_at": self.runin_triggered_at,
            "last_recommendation": self._last_recommendation,
        }

    def save(self, path: str | os.PathLike) -> None:
        """Atomic write of the session document (write temp file, then rename)."""
        payload = json.dumps(self.snapshot(), indent=2)
        directory = os.path.dirname(os.path.abspath(path)) or "."
        fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(payload)
                fh.write("\n")
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    @classmethod
    def from_snapshot(cls, doc: dict) -> "DoseEscalationTrial":
        if doc.get("format") != SESSION_FORMAT:
            raise SessionFormatError("not a session document")
        if doc.get("version") != SESSION_VERSION:
            raise SessionFormatError(f"unsupported session version {doc.get('version')!r}")
        c = doc["config"]
        grid = DoseGrid(doses=tuple(c["doses"]), d_ref=c["d_ref"], gamma=c["gamma"])
        wp = c["weight_policy"]
        config = TrialConfig(
            grid=grid,
            cohort_size=c["cohort_size"],
            max_cohorts=c["max_cohorts"],
            start_dose=c["start_dose"],
            u01=c["u01"],
            lambda_mode=c["lambda_mode"],
            weight_policy=wp if isinstance(wp, str) else float(wp),
            run_in=c["run_in"],
            overdose_cut=c["overdose_cut"],
            feasibility_bound=c["feasibility_bound"],
            underdose_cut=c["underdose_cut"],
            prior_spread_inflation=c["prior_spread_inflation"],
            seed=c["seed"],
            n_nodes=c["n_nodes"],
            lambda_sims=c["lambda_sims"],
        )
        trial = cls(config, _bvn_from(doc["informative_prior"]), _bvn_from(doc["weak_prior"]))
        for entry in doc["history"]:
            trial.history.append(
                CohortOutcome(
                    dose_index=entry["dose_index"],
                    outcomes=tuple(entry["outcomes"]),
                    predictions=tuple(entry["predictions"]),
                )
            )
        trial.trace = [
            WeightPoint(
                cohort=p["cohort"],
                kappa=p["kappa"],
                lam=p["lambda"],
                weight=p["weight"],
                run_in=p["run_in"],
                posterior_weight=p["posterior_weight"],
            )
            for p in doc["trace"]
        ]
        trial.status = doc["status"]
        trial.runin_triggered_at = doc["runin_triggered_at"]
        trial._last_recommendation = doc["last_recommendation"]
        if trial.history:
            weight = trial.trace[-1].weight
            trial.belief = trial.workspace.posterior(weight, counts_from_history(trial.history))
        return trial

    @classmethod
    def load(cls, path: str | os.PathLike) -> "DoseEscalationTrial":
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise SessionFormatError(f"corrupt session file {path}: {exc}") from exc
        return cls.from_snapshot(doc)


def _bvn_dict(p: BvnParams) -> dict:
    return {"mu1": p.mu1, "mu2": p.mu2, "s11": p.s11, "s12": p.s12, "s22": p.s22}


def _bvn_from(d: dict) -> BvnParams:
    return BvnParams(d["mu1"], d["mu2"], d["s11"], d["s12"], d["s22"])


def state_hash(trial: DoseEscalationTrial) -> str:
    """Stable content hash of the full session state."""
    import hashlib

    payload = json.dumps(trial.snapshot(), sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()
