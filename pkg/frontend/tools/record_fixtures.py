#!/usr/bin/env python3
"""Record service responses as JSON fixtures for the frontend tests.

Runs a small scripted study against the real backend (in-process via
the FastAPI test client) and snapshots every payload the UI consumes.
Regenerate with:  python3 tools/record_fixtures.py
"""

import json
import sys
import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from qboost.service import create_app

ACR_CSV = (
    "observer_id,stimulus_id,rating\n"
    "o1,a,5\no1,b,3\no1,c,3\n"
    "o2,a,4\no2,b,4\no2,c,2\n"
)

OUT_DIR = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def dump(name: str, payload) -> None:
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    path = OUT_DIR / f"{name}.json"
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(f"wrote {path.relative_to(OUT_DIR.parent.parent)}")


def main() -> int:
    with tempfile.TemporaryDirectory() as tmp:
        client = TestClient(create_app(tmp))
        created = client.post(
            "/studies",
            json={
                "acr_csv": ACR_CSV,
                "config": {
                    "n_pc": 2,
                    "n_itr": 2,
                    "model": "case3",
                    "seed": 5,
                    "fit_options": {"restarts": 1, "seed": 5},
                },
            },
        )
        created.raise_for_status()
        dump("create", created.json())
        study = created.json()["study_id"]

        batch = client.get(f"/studies/{study}/batch", params={"annotator": "ann1"})
        dump("batch_fresh", batch.json())

        pair = batch.json()["pairs"][0]
        accepted = client.post(
            f"/studies/{study}/responses",
            json={
                "i": pair["i"],
                "j": pair["j"],
                "choice": "first",
                "annotator": "ann1",
            },
        )
        dump("response_accepted", accepted.json())

        duplicate = client.post(
            f"/studies/{study}/responses",
            json={
                "i": pair["i"],
                "j": pair["j"],
                "choice": "second",
                "annotator": "ann1",
            },
        )
        assert duplicate.status_code == 409
        dump("response_conflict", {"status": 409, "body": duplicate.json()})

        partial = client.get(
            f"/studies/{study}/batch", params={"annotator": "ann1"}
        )
        dump("batch_partially_answered", partial.json())

        estimate = client.get(f"/studies/{study}/estimate")
        dump("estimate", estimate.json())

        # complete the batch, advance twice to exhaust the budget
        for entry in partial.json()["pairs"]:
            if not entry["answered"]:
                client.post(
                    f"/studies/{study}/responses",
                    json={
                        "i": entry["i"],
                        "j": entry["j"],
                        "choice": "second",
                        "annotator": "ann1",
                    },
                )
        advanced = client.post(f"/studies/{study}/advance")
        dump("advance", advanced.json())
        dump(
            "batch_second_iteration",
            client.get(
                f"/studies/{study}/batch", params={"annotator": "ann1"}
            ).json(),
        )
        client.post(f"/studies/{study}/advance")

        exhausted = client.post(f"/studies/{study}/advance")
        assert exhausted.status_code == 423
        dump("advance_exhausted", {"status": 423, "body": exhausted.json()})
        late_response = client.post(
            f"/studies/{study}/responses",
            json={"i": "a", "j": "b", "choice": "first", "annotator": "ann1"},
        )
        assert late_response.status_code == 423
        dump("response_exhausted", {"status": 423, "body": late_response.json()})
        dump("batch_complete", client.get(f"/studies/{study}/batch").json())
        dump("history", client.get(f"/studies/{study}/history").json())
    return 0


if __name__ == "__main__":
    sys.exit(main())
