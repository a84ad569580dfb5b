from __future__ import annotations

import json
from pathlib import Path

import pytest

from dosebridge.animal_prior import save_prior_record
from dosebridge.cli import main

DEMO_CONFIG = Path(__file__).resolve().parent.parent / "demos" / "dog_trial.toml"


@pytest.fixture()
def prior_record(tmp_path, reference_prior):
    path = tmp_path / "prior.json"
    save_prior_record(path, reference_prior, 28.0, 0.15)
    return path


def test_init_recommend_record_status_mtd(tmp_path, prior_record, capsys):
    session = tmp_path / "trial.json"
    assert main(["init", "--config", str(DEMO_CONFIG), "--session", str(session),
                 "--prior", str(prior_record)]) == 0
    out = capsys.readouterr().out
    assert "first cohort dose: 4" in out

    assert main(["recommend", "--session", str(session)]) == 0
    assert "4 mg/m^2" in capsys.readouterr().out

    assert main(["record", "--session", str(session), "--dose", "4", "--outcomes", "1,0,0"]) == 0
    out = capsys.readouterr().out
    assert "cohort 1 recorded" in out and "weight=0.2" in out

    assert main(["status", "--session", str(session)]) == 0
    out = capsys.readouterr().out
    assert "status: enrolling; cohorts: 1/11" in out

    assert main(["mtd", "--session", str(session)]) == 1  # still enrolling
    # the session file round-trips as JSON
    doc = json.loads(session.read_text())
    assert doc["format"] == "dosebridge.session"


def test_record_rejects_off_protocol_dose(tmp_path, prior_record, capsys):
    session = tmp_path / "trial.json"
    main(["init", "--config", str(DEMO_CONFIG), "--session", str(session),
          "--prior", str(prior_record)])
    capsys.readouterr()
    with pytest.raises(Exception):
        main(["record", "--session", str(session), "--dose", "54", "--outcomes", "0,0,0"])
    # --force records the deviation
    assert main(["record", "--session", str(session), "--dose", "8",
                 "--outcomes", "0,0,0", "--force"]) == 0


def test_simulate_cli_writes_reports(tmp_path, prior_record, capsys):
    out_dir = tmp_path / "reports"
    assert main([
        "simulate", "--scenarios", str(DEMO_CONFIG), "--procedures", "D,E",
        "--reps", "4", "--seed", "9", "--out", str(out_dir),
        "--prior", str(prior_record), "--max-cohorts", "5", "--workers", "1",
    ]) == 0
    assert (out_dir / "oc.csv").exists()
    assert (out_dir / "alloc.csv").exists()
    assert (out_dir / "plotdata.json").exists()
    text = capsys.readouterr().out
    assert "PCS" in text
