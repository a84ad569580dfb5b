"""HTTP service for live trial conduct.

File-backed sessions (one versioned JSON document per trial, atomic
write-rename, advisory lock per session) expose the escalation loop to the
browser UI and scripted clients.  All statistics in responses come from the
trial engine; the UI never recomputes them.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeout

from fastapi import FastAPI, HTTPException, Query
from filelock import FileLock
from pydantic import BaseModel, Field

from . import animal_prior as ap
from .dose_model import DoseGrid
from .inference import mixture_prob_below
from .trial_engine import (
    STATUS_ENROLLING,
    STOP,
    DoseEscalationTrial,
    ProtocolViolationError,
    TrialConfig,
    state_hash,
)

ENVELOPE_FORMAT = "dosebridge.session-envelope"
ENVELOPE_VERSION = 1


class GridBody(BaseModel):
    doses: list[float]
    d_ref: float
    gamma: float = 0.25


class StudyBody(BaseModel):
    species_factor: float
    arms: list[tuple[float, int, int]]


class PriorBody(BaseModel):
    mu1: float
    mu2: float
    s11: float
    s12: float
    s22: float


class TrialSettingsBody(BaseModel):
    cohort_size: int = 3
    max_cohorts: int = 7
    start_dose: float | None = None
    u01: float = 0.6
    lambda_mode: str = "sd_ratio"
    weight_policy: str | float = "dynamic"
    run_in: bool = False
    overdose_cut: float = 0.33
    feasibility_bound: float = 0.25
    underdose_cut: float = 0.16
    prior_spread_inflation: float = 2.0
    seed: int = 0
    n_nodes: int = 201
    lambda_sims: int = 5000


class CreateTrialBody(BaseModel):
    grid: GridBody
    trial: TrialSettingsBody = Field(default_factory=TrialSettingsBody)
    animal_study: StudyBody | None = None
    prior: PriorBody | None = None
    idempotency_key: str | None = None


class CohortBody(BaseModel):
    dose: float
    outcomes: list[int]
    idempotency_key: str | None = None


def _unprocessable(msg: str, loc: tuple = ("body",)) -> HTTPException:
    return HTTPException(status_code=422, detail=[{"loc": list(loc), "msg": msg}])


class SessionStore:
    """One JSON envelope per session on disk; advisory lock per session."""

    def __init__(self, root: str | os.PathLike):
        self.root = str(root)
        os.makedirs(self.root, exist_ok=True)
        os.makedirs(os.path.join(self.root, "prior-cache"), exist_ok=True)
        self._live: dict[str, tuple[int, DoseEscalationTrial]] = {}

    def _path(self, session_id: str) -> str:
        if not session_id.replace("-", "").isalnum():
            raise HTTPException(status_code=404, detail="unknown session")
        return os.path.join(self.root, f"{session_id}.json")

    def lock(self, session_id: str) -> FileLock:
        return FileLock(self._path(session_id) + ".lock")

    def exists(self, session_id: str) -> bool:
        return os.path.exists(self._path(session_id))

    def read(self, session_id: str) -> dict:
        path = self._path(session_id)
        if not os.path.exists(path):
            raise HTTPException(status_code=404, detail="unknown session")
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)

    def write(self, session_id: str, envelope: dict) -> None:
        path = self._path(session_id)
        payload = json.dumps(envelope, indent=2)
        fd, tmp = tempfile.mkstemp(dir=self.root, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(payload)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        self._live.pop(session_id, None)

    def trial(self, session_id: str) -> DoseEscalationTrial:
        """Trial object for the stored session, cached by file mtime."""
        path = self._path(session_id)
        if not os.path.exists(path):
            raise HTTPException(status_code=404, detail="unknown session")
        mtime = os.stat(path).st_mtime_ns
        hit = self._live.get(session_id)
        if hit is not None and hit[0] == mtime:
            return hit[1]
        envelope = self.read(session_id)
        trial = DoseEscalationTrial.from_snapshot(envelope["session"])
        if len(self._live) > 16:
            self._live.clear()
        self._live[session_id] = (mtime, trial)
        return trial

    # idempotent creation registry
    def lookup_creation(self, key: str) -> str | None:
        reg = os.path.join(self.root, "create-keys.json")
        if not os.path.exists(reg):
            return None
        with open(reg, encoding="utf-8") as fh:
            return json.load(fh).get(key)

    def remember_creation(self, key: str, session_id: str) -> None:
        reg = os.path.join(self.root, "create-keys.json")
        data = {}
        if os.path.exists(reg):
            with open(reg, encoding="utf-8") as fh:
                data = json.load(fh)
        data[key] = session_id
        with open(reg + ".tmp", "w", encoding="utf-8") as fh:
            json.dump(data, fh)
        os.replace(reg + ".tmp", reg)

    def creation_lock(self) -> FileLock:
        return FileLock(os.path.join(self.root, "create-keys.json.lock"))


def _study_hash(study: ap.AnimalStudy, grid: DoseGrid) -> str:
    payload = json.dumps(
        {"factor": study.species_factor, "arms": study.arms, "doses": grid.doses, "d_ref": grid.d_ref},
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:24]


def create_app(sessions_dir: str | os.PathLike = "sessions", *, fit_timeout_s: float = 300.0) -> FastAPI:
    app = FastAPI(title="dosebridge", version="0.1.0")
    store = SessionStore(sessions_dir)
    fit_pool = ThreadPoolExecutor(max_workers=1)

    def fit_prior_cached(study: ap.AnimalStudy, grid: DoseGrid) -> tuple[ap.BvnParams, float]:
        digest = _study_hash(study, grid)
        cache_path = os.path.join(store.root, "prior-cache", f"{digest}.json")
        if os.path.exists(cache_path):
            params, _d_ref, delta = ap.load_prior_record(cache_path)
            return params, delta if delta is not None else float("nan")
        future = fit_pool.submit(ap.fit_animal_prior, study, grid)
        try:
            fit = future.result(timeout=fit_timeout_s)
        except FutureTimeout:
            raise HTTPException(status_code=504, detail="prior fit exceeded the configured timeout")
        ap.save_prior_record(cache_path, fit.params, grid.d_ref, fit.delta)
        return fit.params, fit.delta

    def trial_payload(trial: DoseEscalationTrial) -> dict:
        summary = trial.summary()
        rec: int | None
        stop = False
        if trial.status == STATUS_ENROLLING:
            nxt = trial.recommend_next()
            rec, stop = (None, True) if nxt == STOP else (int(nxt), False)
        else:
            rec = None
        return {
            "status": trial.status,
            "n_cohorts": trial.n_cohorts,
            "doses": list(trial.config.grid.doses),
            "summary": summary.as_dict(),
            "predictions": list(trial.predictions),
            "prior_predictive": list(trial.prior_predictive),
            "recommendation": {
                "dose_index": rec,
                "dose": None if rec is None else trial.config.grid.doses[rec],
                "stop": stop or trial.status == "stopped_early",
            },
            "mtd": _mtd_field(trial),
            "patients_per_dose": [int(x) for x in trial.patients_per_dose()],
            "state_hash": state_hash(trial),
        }

    def _mtd_field(trial: DoseEscalationTrial) -> dict | None:
        if trial.status == STATUS_ENROLLING:
            return None
        idx = trial.select_mtd()
        return {
            "dose_index": idx,
            "dose": None if idx is None else trial.config.grid.doses[idx],
        }

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "time": time.time()}

    @app.post("/trials", status_code=201)
    def create_trial(body: CreateTrialBody) -> dict:
        if body.idempotency_key:
            with store.creation_lock():
                existing = store.lookup_creation(body.idempotency_key)
            if existing and store.exists(existing):
                trial = store.trial(existing)
                return {"session_id": existing, "replayed": True, **trial_payload(trial)}
        try:
            grid = DoseGrid(doses=tuple(body.grid.doses), d_ref=body.grid.d_ref, gamma=body.grid.gamma)
        except ValueError as exc:
            raise _unprocessable(str(exc), ("body", "grid"))
        t = body.trial
        try:
            config = TrialConfig(
                grid=grid,
                cohort_size=t.cohort_size,
                max_cohorts=t.max_cohorts,
                start_dose=t.start_dose,
                u01=t.u01,
                lambda_mode=t.lambda_mode,
                weight_policy=t.weight_policy if isinstance(t.weight_policy, str) else float(t.weight_policy),
                run_in=t.run_in,
                overdose_cut=t.overdose_cut,
                feasibility_bound=t.feasibility_bound,
                underdose_cut=t.underdose_cut,
                prior_spread_inflation=t.prior_spread_inflation,
                seed=t.seed,
                n_nodes=t.n_nodes,
                lambda_sims=t.lambda_sims,
            )
        except ValueError as exc:
            raise _unprocessable(str(exc), ("body", "trial"))

        fit_delta = None
        marginal_percentiles = None
        if body.prior is not None:
            try:
                prior = ap.BvnParams(body.prior.mu1, body.prior.mu2, body.prior.s11, body.prior.s12, body.prior.s22)
            except ValueError as exc:
                raise _unprocessable(str(exc), ("body", "prior"))
        elif body.animal_study is not None:
            if not body.animal_study.arms:
                raise _unprocessable("animal study needs at least two arms", ("body", "animal_study", "arms"))
            try:
                study = ap.AnimalStudy(
                    species_factor=body.animal_study.species_factor,
                    arms=tuple(body.animal_study.arms),
                )
            except ValueError as exc:
                raise _unprocessable(str(exc), ("body", "animal_study"))
            prior, fit_delta = fit_prior_cached(study, grid)
            pseudo = ap.beta_pseudo_priors(study)
            if len(pseudo) == 2:
                marginal_percentiles = {
                    "levels": [0.025, 0.5, 0.975],
                    "values": [
                        [ap.marginal_percentile(d, k, pseudo, grid.d_ref) for k in (0.025, 0.5, 0.975)]
                        for d in grid.doses
                    ],
                }
        else:
            raise _unprocessable("either animal_study or prior is required")

        trial = DoseEscalationTrial(config, prior)
        session_id = uuid.uuid4().hex
        envelope = {
            "format": ENVELOPE_FORMAT,
            "version": ENVELOPE_VERSION,
            "created": time.time(),
            "updated": time.time(),
            "session": trial.snapshot(),
            "audit": [{"at": time.time(), "action": "create"}],
            "cohort_keys": {},
        }
        with store.lock(session_id):
            store.write(session_id, envelope)
        if body.idempotency_key:
            with store.creation_lock():
                store.remember_creation(body.idempotency_key, session_id)
        prior_only = trial.workspace.posterior(1.0, ())
        payload = {
            "session_id": session_id,
            "replayed": False,
            "prior": {
                "mu1": prior.mu1, "mu2": prior.mu2,
                "s11": prior.s11, "s12": prior.s12, "s22": prior.s22,
                "fit_delta": fit_delta,
            },
            "prior_safety": {
                "prob_risk_below_0.1": [float(x) for x in mixture_prob_below(prior_only, 0.1)],
            },
            "marginal_percentiles": marginal_percentiles,
            **trial_payload(trial),
        }
        return payload

    @app.get("/trials/{session_id}")
    def get_trial(session_id: str) -> dict:
        trial = store.trial(session_id)
        return {"session_id": session_id, **trial_payload(trial)}

    @app.get("/trials/{session_id}/trace")
    def get_trace(session_id: str) -> dict:
        trial = store.trial(session_id)
        return {
            "session_id": session_id,
            "trace": [p.as_dict() for p in trial.trace],
            "doses_given": [trial.config.grid.doses[c.dose_index] for c in trial.history],
        }

    @app.post("/trials/{session_id}/cohorts")
    def post_cohort(session_id: str, body: CohortBody) -> dict:
        with store.lock(session_id):
            envelope = store.read(session_id)
            if body.idempotency_key and body.idempotency_key in envelope["cohort_keys"]:
                return envelope["cohort_keys"][body.idempotency_key]
            trial = DoseEscalationTrial.from_snapshot(envelope["session"])
            if trial.status != STATUS_ENROLLING:
                raise HTTPException(status_code=410, detail=f"trial is {trial.status}")
            if len(body.outcomes) != trial.config.cohort_size:
                raise _unprocessable(
                    f"expected {trial.config.cohort_size} outcomes", ("body", "outcomes")
                )
            if any(y not in (0, 1) for y in body.outcomes):
                raise _unprocessable("outcomes must be 0 or 1", ("body", "outcomes"))
            try:
                dose_index = trial.config.grid.index_of(body.dose)
            except ValueError as exc:
                raise _unprocessable(str(exc), ("body", "dose"))
            try:
                point = trial.record_cohort(dose_index, tuple(body.outcomes))
            except ProtocolViolationError as exc:
                raise HTTPException(status_code=409, detail=str(exc))
            envelope["session"] = trial.snapshot()
            envelope["updated"] = time.time()
            envelope["audit"].append(
                {"at": time.time(), "action": "record_cohort", "dose": body.dose,
                 "outcomes": list(body.outcomes)}
            )
            response = {
                "session_id": session_id,
                "trace_point": point.as_dict(),
                **trial_payload(trial),
            }
            if body.idempotency_key:
                envelope["cohort_keys"][body.idempotency_key] = response
            store.write(session_id, envelope)
        return response

    @app.get("/trials/{session_id}/whatif")
    def whatif(
        session_id: str,
        dose: float = Query(...),
        dlts: int = Query(..., ge=0),
        patients: int | None = Query(None, ge=0),
    ) -> dict:
        trial = store.trial(session_id)
        if trial.status != STATUS_ENROLLING:
            raise HTTPException(status_code=410, detail=f"trial is {trial.status}")
        clone = DoseEscalationTrial.from_snapshot(trial.snapshot())
        n = trial.config.cohort_size if patients is None else patients
        if n == 0:
            return {"session_id": session_id, "non_binding": True, "hypothetical": False,
                    **trial_payload(clone)}
        if n != trial.config.cohort_size:
            raise _unprocessable(f"patients must be 0 or {trial.config.cohort_size}", ("query", "patients"))
        if dlts > n:
            raise _unprocessable("dlts cannot exceed patients", ("query", "dlts"))
        try:
            dose_index = trial.config.grid.index_of(dose)
        except ValueError as exc:
            raise _unprocessable(str(exc), ("query", "dose"))
        outcomes = (1,) * dlts + (0,) * (n - dlts)
        point = clone.record_cohort(dose_index, outcomes, allow_deviation=True)
        return {
            "session_id": session_id,
            "non_binding": True,
            "hypothetical": True,
            "trace_point": point.as_dict(),
            **trial_payload(clone),
        }

    return app


def main() -> None:  # pragma: no cover
    import argparse

    import uvicorn

    parser = argparse.ArgumentParser(description="Run the dosebridge trial-conduct service")
    parser.add_argument("--sessions", default="sessions")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8710)
    args = parser.parse_args()
    uvicorn.run(create_app(args.sessions), host=args.host, port=args.port)


if __name__ == "__main__":  # pragma: no cover
    main()
