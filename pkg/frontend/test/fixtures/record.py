"""Record real service payloads for the UI test suite.

Trains a small model on the planted-signal table, drives the live service
through a create/next/answer/conflict/exhaustion walk, and writes every
response body verbatim into this directory. Rerun after changing the wire
format:

    python3 frontend/test/fixtures/record.py

The UI tests never talk to the network; they render these files.
"""

from __future__ import annotations

import json
import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from eddi import checkpoint
from eddi.data import ingest_csv, write_raw_csv
from eddi.datasets import planted_signal
from eddi.model import PartialVae, TrainConfig, tabular_preset, train
from eddi.service import build_app

HERE = Path(__file__).resolve().parent


def _dump(name: str, payload: dict) -> None:
    (HERE / name).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(f"wrote {name}")


def main() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        schema, rows = planted_signal(n_rows=80, seed=0)
        data = root / "planted.csv"
        write_raw_csv(data, schema, rows)
        train_ds, _ = ingest_csv(data, schema, test_fraction=0.10, seed=0)
        config, decoder_hidden = tabular_preset("pnp")
        model = PartialVae.build(train_ds.schema, config, decoder_hidden=decoder_hidden, seed=1)
        model, _ = train(model, train_ds.rows, TrainConfig(iterations=40, batch_size=40, seed=1))
        model_dir = root / "models"
        model_dir.mkdir()
        checkpoint.save(model, model_dir / "planted.pvae")

        app = build_app(model_dir=model_dir)
        with TestClient(app) as client:
            _dump("models.json", client.get("/v1/models").json())

            sid = client.post(
                "/v1/sessions", json={"model_id": "planted", "seed": 5}
            ).json()["session_id"]
            fresh = client.get(f"/v1/sessions/{sid}").json()
            fresh["session_id"] = "recorded-session"
            _dump("session_fresh.json", fresh)
            _dump("next_step0.json", client.get(f"/v1/sessions/{sid}/next").json())

            first = client.get(f"/v1/sessions/{sid}/next").json()["recommended"]
            answer = client.post(
                f"/v1/sessions/{sid}/answers",
                json={"variable": first, "value": 0.5, "version": 0},
            )
            _dump("answer_ok.json", answer.json())
            _dump("next_step1.json", client.get(f"/v1/sessions/{sid}/next").json())
            after = client.get(f"/v1/sessions/{sid}").json()
            after["session_id"] = "recorded-session"
            _dump("session_after_answer.json", after)

            stale = client.post(
                f"/v1/sessions/{sid}/answers",
                json={"variable": "noise_1", "value": 0.5, "version": 0},
            )
            assert stale.status_code == 409, stale.text
            _dump("error_conflict.json", stale.json())

            bad = client.post(
                f"/v1/sessions/{sid}/answers",
                json={"variable": "noise_1", "value": 7.5, "version": 1},
            )
            assert bad.status_code == 400, bad.text
            _dump("error_out_of_range.json", bad.json())

            view = client.get(f"/v1/sessions/{sid}").json()
            version = view["version"]
            for name in list(view["available"]):
                client.post(
                    f"/v1/sessions/{sid}/answers",
                    json={"variable": name, "value": 0.5, "version": version},
                )
                version += 1
            done = client.get(f"/v1/sessions/{sid}").json()
            assert done["status"] == "exhausted", done["status"]
            done["session_id"] = "recorded-session"
            _dump("session_exhausted.json", done)


if __name__ == "__main__":
    main()
