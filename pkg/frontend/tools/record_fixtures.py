"""Record service-response fixtures for the UI contract tests.

Drives the real conduct service in process and freezes the exact JSON bodies
the UI consumes. Regenerate after any service change:

    cd frontend && python3 tools/record_fixtures.py
"""

import json
import pathlib
import tempfile

from fastapi.testclient import TestClient

from dosebridge.service import create_app

OUT = pathlib.Path(__file__).resolve().parent.parent / "tests" / "fixtures"

CREATE_BODY = {
    "grid": {"doses": [2, 4, 8, 16, 22, 28, 40, 54, 70], "d_ref": 28.0, "gamma": 0.25},
    "trial": {"cohort_size": 3, "max_cohorts": 11, "start_dose": 4.0, "u01": 0.6, "seed": 7},
    "prior": {"mu1": -0.524, "mu2": 0.147, "s11": 0.151, "s12": -0.008, "s22": 0.001},
}


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as sessions:
        client = TestClient(create_app(sessions))
        created = client.post("/trials", json=CREATE_BODY).json()
        sid = created["session_id"]

        cohort1 = client.post(
            f"/trials/{sid}/cohorts", json={"dose": 4.0, "outcomes": [1, 0, 0]}
        ).json()
        whatif = client.get(
            f"/trials/{sid}/whatif", params={"dose": 4.0, "dlts": 3}
        ).json()
        state = client.get(f"/trials/{sid}").json()
        trace = client.get(f"/trials/{sid}/trace").json()

        stop_sid = client.post("/trials", json=CREATE_BODY).json()["session_id"]
        stopped = client.post(
            f"/trials/{stop_sid}/cohorts", json={"dose": 4.0, "outcomes": [1, 1, 1]}
        ).json()

        for name, doc in [
            ("created", created),
            ("cohort1", cohort1),
            ("whatif", whatif),
            ("state", state),
            ("trace", trace),
            ("stopped", stopped),
        ]:
            (OUT / f"{name}.json").write_text(json.dumps(doc, indent=2) + "\n")
            print(f"wrote {name}.json")


if __name__ == "__main__":
    main()
