"""Scripted walk through the live annotation service.

Spins the HTTP app up in-process, uploads a dataset, opens a session, and
plays the human: fetch the next item, look at the model's suggestion,
submit the (oracle) label, watch the budget gauge move.  The same API
drives the browser UI.
"""

import json

from fastapi.testclient import TestClient

from annotriage import synth_gaussian
from annotriage.core import label_to_json
from annotriage.service import create_app

dataset = synth_gaussian(n=30, seed=9)
lines = []
for item in dataset.items:
    lines.append(
        json.dumps(
            {
                "id": item.id,
                "features": item.features.tolist(),
                "label": label_to_json(dataset.oracle.reveal(item.id)),
                "text": item.display_payload,
            }
        )
    )

client = TestClient(create_app())
dataset_id = client.post("/datasets", content="\n".join(lines)).json()["dataset_id"]
print(f"uploaded dataset {dataset_id} with {len(dataset.items)} items")

session = client.post(
    "/sessions",
    json={
        "dataset_id": dataset_id,
        "config": {"method": "sant", "budget_fraction": 0.4, "warmup_count": 4, "seed": 3},
    },
).json()
sid = session["session_id"]
print(f"opened session {sid}, budget {session['budget']}")

labeled = 0
while True:
    nxt = client.get(f"/sessions/{sid}/next").json()
    if nxt["item"] is None:
        print(f"\nno more items to label (status={nxt['status']})")
        break
    item = nxt["item"]
    top = item["suggestion"][0]
    truth = dataset.oracle.reveal(item["item_id"])
    if labeled < 5:
        print(
            f"  {item['item_id']} ({item['phase']}): text={item['text']!r} "
            f"suggested class {top['class']} at {top['prob']:.2f}; truth={truth}"
        )
    ack = client.post(
        f"/sessions/{sid}/labels",
        json={"item_id": item["item_id"], "label": label_to_json(truth)},
    ).json()
    labeled += 1
    if labeled == 5:
        print("  ...")

metrics = client.get(f"/sessions/{sid}/metrics").json()
print(f"submitted {labeled} labels; final budget {metrics['budget']}")
print(f"counts: {metrics['counts']}")
print(f"overall quality: {metrics['quality_overall']:.4f}")
