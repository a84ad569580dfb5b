from __future__ import annotations

import json
from dataclasses import replace

import numpy as np
import pytest

from dosebridge.inference import mixture_prob_over
from dosebridge.trial_engine import (
    STOP,
    DoseEscalationTrial,
    ProtocolViolationError,
    SessionFormatError,
    TrialStateError,
    state_hash,
)

EXAMPLE_UNDER = [(1, (1, 0, 0)), (0, (0, 0, 0)), (1, (0, 0, 0)), (2, (1, 1, 1))]
EXAMPLE_OVER = [(1, (0, 0, 0)), (2, (0, 0, 0)), (3, (0, 0, 0)), (4, (0, 0, 0)), (5, (0, 0, 0))]


def make_trial(example_config, reference_prior, **overrides):
    cfg = replace(example_config, **overrides) if overrides else example_config
    return DoseEscalationTrial(cfg, reference_prior)


def test_frozen_predictions_and_start_dose(example_config, reference_prior):
    trial = make_trial(example_config, reference_prior)
    assert trial.predictions == (0, 0, 0, 0, 1, 1, 1, 1, 1)
    assert trial.recommend_next() == 1  # 4 mg/m^2 configured


def test_default_start_dose_rule(example_config, reference_prior):
    trial = make_trial(example_config, reference_prior, start_dose=None)
    # the lowest dose with prior Pr(risk < 0.1) >= 0.8
    assert trial.recommend_next() == 0


def test_prior_only_compliance_boundary(example_config, reference_prior):
    trial = make_trial(example_config, reference_prior)
    prob_over = mixture_prob_over(trial.belief)
    compliant = [d for d, po in zip(trial.config.grid.doses, prob_over) if po <= 0.25]
    assert max(compliant) == 16.0


def test_under_prediction_example_weight_waypoints(example_config, reference_prior):
    trial = make_trial(example_config, reference_prior)
    for dose, outcomes in EXAMPLE_UNDER:
        trial.record_cohort(dose, outcomes, allow_deviation=True)
    w = [p.weight for p in trial.trace]
    assert w[0] == pytest.approx(0.26, abs=0.05)
    assert w[2] == pytest.approx(0.77, abs=0.05)
    assert w[3] == pytest.approx(0.08, abs=0.05)
    kappas = [p.kappa for p in trial.trace]
    assert kappas[0] == pytest.approx(2.0 / 3.0)
    assert kappas[3] == pytest.approx(5.0 / 12.0)


def test_over_prediction_example_weights_and_path(example_config, reference_prior):
    trial = make_trial(example_config, reference_prior)
    recs = []
    for dose, outcomes in EXAMPLE_OVER:
        recs.append(trial.recommend_next())
        trial.record_cohort(dose, outcomes, allow_deviation=True)
    # the engine's own recommendations retrace the recorded escalation
    assert recs == [1, 2, 3, 4, 5]
    w = [p.weight for p in trial.trace]
    assert w[3] == pytest.approx(0.533, abs=0.07)
    assert w[4] == pytest.approx(0.250, abs=0.07)
    assert trial.recommend_next() == 7  # 54 next, within the two-fold cap from 28


def test_all_correct_predictions_keep_full_weight(example_config, reference_prior):
    trial = make_trial(example_config, reference_prior)
    for dose in (1, 2, 3):
        trial.record_cohort(dose, (0, 0, 0), allow_deviation=True)
    assert all(p.weight == 1.0 for p in trial.trace)
    assert all(p.kappa == 1.0 for p in trial.trace)


def test_two_fold_cap_binds_escalation(example_config, reference_prior):
    # three clean cohorts open the compliant set up to 22+, but a deviation
    # down to 2 mg/m^2 caps the next recommendation at 4 (= 2 x 2)
    trial = make_trial(example_config, reference_prior)
    for dose in (1, 2, 3):
        trial.record_cohort(dose, (0, 0, 0), allow_deviation=True)
    trial.record_cohort(0, (0, 0, 0), allow_deviation=True)
    prob_over = mixture_prob_over(trial.belief)
    unconstrained = max(i for i, po in enumerate(prob_over) if po <= 0.25)
    assert unconstrained >= 4
    assert trial.recommend_next() == 1  # capped at 4 = 2 x 2


def test_cap_never_exceeded_and_safety_downward_closed(example_config, reference_prior):
    rng = np.random.default_rng(3)
    risks = np.asarray((0.02, 0.05, 0.14, 0.25, 0.35, 0.42, 0.51, 0.60, 0.68))
    for rep in range(5):
        trial = make_trial(example_config, reference_prior, max_cohorts=7, seed=rep)
        last_value = None
        while trial.status == "enrolling":
            rec = trial.recommend_next()
            if rec == STOP:
                break
            value = trial.config.grid.doses[rec]
            if last_value is not None:
                assert value <= 2.0 * last_value + 1e-9
            prob_over = mixture_prob_over(trial.belief)
            assert np.all(np.diff(prob_over) >= -1e-9)  # monotone overdose risk
            outcomes = tuple((rng.random(3) < risks[rec]).astype(int))
            trial.record_cohort(rec, outcomes)
            last_value = value


def test_no_dlt_trial_runs_all_cohorts(example_config, reference_prior):
    trial = make_trial(example_config, reference_prior, max_cohorts=7)
    while trial.status == "enrolling":
        rec = trial.recommend_next()
        trial.record_cohort(rec, (0, 0, 0))
    assert trial.status == "completed"
    assert trial.n_cohorts == 7


def test_stop_on_toxic_lowest_dose(example_config, reference_prior):
    trial = make_trial(example_config, reference_prior)
    trial.record_cohort(1, (1, 1, 1), allow_deviation=True)
    assert trial.status == "stopped_early"
    assert trial.select_mtd() is None
    with pytest.raises(TrialStateError):
        trial.record_cohort(0, (0, 0, 0), allow_deviation=True)
    with pytest.raises(TrialStateError):
        trial.recommend_next()


def test_select_mtd_rules(example_config, reference_prior):
    trial = make_trial(example_config, reference_prior, max_cohorts=3)
    with pytest.raises(TrialStateError):
        trial.select_mtd()
    for _ in range(3):
        trial.record_cohort(trial.recommend_next(), (0, 0, 1))
    assert trial.status == "completed"
    mtd = trial.select_mtd()
    administered = {c.dose_index for c in trial.history}
    assert mtd in administered


def test_protocol_violation_raises(example_config, reference_prior):
    trial = make_trial(example_config, reference_prior)
    with pytest.raises(ProtocolViolationError):
        trial.record_cohort(5, (0, 0, 0))
    with pytest.raises(ValueError):
        trial.record_cohort(1, (0, 0))


def test_replay_determinism(example_config, reference_prior):
    def run():
        t = make_trial(example_config, reference_prior)
        for dose, outcomes in EXAMPLE_UNDER:
            t.record_cohort(dose, outcomes, allow_deviation=True)
        return t

    a, b = run(), run()
    assert [p.as_dict() for p in a.trace] == [p.as_dict() for p in b.trace]
    assert a.recommend_next() == b.recommend_next()
    assert state_hash(a) == state_hash(b)


def test_save_load_round_trip(tmp_path, example_config, reference_prior):
    trial = make_trial(example_config, reference_prior)
    for dose, outcomes in EXAMPLE_UNDER[:2]:
        trial.record_cohort(dose, outcomes, allow_deviation=True)
    path = tmp_path / "session.json"
    trial.save(path)
    loaded = DoseEscalationTrial.load(path)
    assert state_hash(loaded) == state_hash(trial)
    assert loaded.recommend_next() == trial.recommend_next()
    # continuing both in lockstep keeps them identical
    nxt = trial.recommend_next()
    trial.record_cohort(nxt, (0, 1, 0))
    loaded.record_cohort(nxt, (0, 1, 0))
    assert state_hash(loaded) == state_hash(trial)


def test_truncated_session_file_errors(tmp_path, example_config, reference_prior):
    trial = make_trial(example_config, reference_prior)
    path = tmp_path / "session.json"
    trial.save(path)
    payload = path.read_text()
    path.write_text(payload[: len(payload) // 2])
    with pytest.raises(SessionFormatError):
        DoseEscalationTrial.load(path)


def test_unsupported_session_version(tmp_path, example_config, reference_prior):
    trial = make_trial(example_config, reference_prior)
    path = tmp_path / "session.json"
    trial.save(path)
    doc = json.loads(path.read_text())
    doc["version"] = 999
    path.write_text(json.dumps(doc))
    with pytest.raises(SessionFormatError):
        DoseEscalationTrial.load(path)


def test_run_in_gate(example_config, reference_prior):
    trial = make_trial(example_config, reference_prior, run_in=True)
    # clean cohorts at predicted-no-DLT doses: no discrepancy, weight stays 0
    trial.record_cohort(1, (0, 0, 0), allow_deviation=True)
    trial.record_cohort(2, (0, 0, 0), allow_deviation=True)
    assert [p.weight for p in trial.trace] == [0.0, 0.0]
    assert all(p.run_in for p in trial.trace)
    # first discrepancy opens the gate from the next cohort onward
    trial.record_cohort(3, (1, 0, 0), allow_deviation=True)
    assert trial.trace[-1].weight == 0.0
    assert trial.runin_triggered_at == 3
    trial.record_cohort(2, (0, 0, 0), allow_deviation=True)
    assert not trial.trace[-1].run_in
    assert trial.trace[-1].weight > 0.0


def test_run_in_never_triggered_stays_weak(example_config, reference_prior):
    trial = make_trial(example_config, reference_prior, run_in=True, max_cohorts=4)
    while trial.status == "enrolling":
        rec = trial.recommend_next()
        outcomes = (1, 0, 0) if trial.predictions[rec] == 1 else (0, 0, 0)
        # outcomes equal to predictions at every dose: gate never opens
        outcomes = (trial.predictions[rec],) * 3
        trial.record_cohort(rec, outcomes)
    assert all(p.weight == 0.0 for p in trial.trace)


def test_run_in_requires_dynamic_policy(example_config):
    with pytest.raises(ValueError):
        replace(example_config, weight_policy=0.5, run_in=True)


def test_information_time_lambda_mode(example_config, reference_prior):
    trial = make_trial(example_config, reference_prior, lambda_mode="info_time", max_cohorts=7)
    point = trial.record_cohort(1, (1, 0, 0), allow_deviation=True)
    assert point.lam == pytest.approx(np.sqrt(7.0))
    assert point.weight == pytest.approx((2.0 / 3.0) ** np.sqrt(7.0), abs=1e-12)


def test_fixed_weight_policies(example_config, reference_prior):
    for w in (0.5, 1.0, 0.0):
        trial = make_trial(example_config, reference_prior, weight_policy=w)
        point = trial.record_cohort(1, (1, 0, 0), allow_deviation=True)
        assert point.weight == w
        assert point.lam is None
        assert point.kappa == pytest.approx(2.0 / 3.0)
