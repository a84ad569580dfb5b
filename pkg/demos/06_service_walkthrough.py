"""Drive the HTTP conduct service end to end, in process.

Creates a trial from the frozen dog prior, records two cohorts, explores a
what-if, and shows that exploration never mutates the session.  The same
requests work against a real server started with `dosebridge serve`.
"""

import tempfile

from fastapi.testclient import TestClient

from dosebridge.service import create_app

with tempfile.TemporaryDirectory() as sessions:
    client = TestClient(create_app(sessions))

    created = client.post("/trials", json={
        "grid": {"doses": [2, 4, 8, 16, 22, 28, 40, 54, 70], "d_ref": 28.0, "gamma": 0.25},
        "trial": {"cohort_size": 3, "max_cohorts": 11, "start_dose": 4.0, "u01": 0.6, "seed": 7},
        "prior": {"mu1": -0.524, "mu2": 0.147, "s11": 0.151, "s12": -0.008, "s22": 0.001},
        "idempotency_key": "demo-1",
    }).json()
    sid = created["session_id"]
    print(f"session {sid}")
    print(f"first recommendation: {created['recommendation']['dose']} mg/m^2")
    print(f"predictions: {created['predictions']}")

    r1 = client.post(f"/trials/{sid}/cohorts",
                     json={"dose": 4.0, "outcomes": [1, 0, 0]}).json()
    tp = r1["trace_point"]
    print(f"\ncohort 1 at 4 mg/m^2, one DLT: weight {tp['weight']:.3f} "
          f"(kappa {tp['kappa']:.3f}, lambda {tp['lambda']:.3f})")
    print(f"next recommendation: {r1['recommendation']['dose']} mg/m^2")

    before = client.get(f"/trials/{sid}").json()["state_hash"]
    wi = client.get(f"/trials/{sid}/whatif", params={"dose": 4.0, "dlts": 3}).json()
    print(f"\nwhat-if (3/3 DLTs at 4): would stop = {wi['recommendation']['stop']}, "
          f"weight would drop to {wi['trace_point']['weight']:.3f}")
    after = client.get(f"/trials/{sid}").json()["state_hash"]
    print(f"state hash unchanged by what-if: {before == after}")

    r2 = client.post(f"/trials/{sid}/cohorts",
                     json={"dose": r1["recommendation"]["dose"], "outcomes": [0, 0, 0]}).json()
    print(f"\ncohort 2 clean: weight back up to {r2['trace_point']['weight']:.3f}; "
          f"next dose {r2['recommendation']['dose']} mg/m^2")

    trace = client.get(f"/trials/{sid}/trace").json()
    print(f"trace so far: {[(p['cohort'], round(p['weight'], 3)) for p in trace['trace']]}")
