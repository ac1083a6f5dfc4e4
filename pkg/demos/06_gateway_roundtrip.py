"""
STOW-RS in, WADO-RS out: the gateway round trip
===============================================

Starts the HTTP gateway in-process on an ephemeral port, uploads three
DICOM parts in one multipart/related POST (a plausible image, a truncated
file, and a gate-rejected blank), then walks the queue API and retrieves
the generated structured report.
"""

import http.client
import json
import tempfile
import threading
from pathlib import Path

import numpy as np

from cxrtriage import dicom
from cxrtriage.gateway import GatewayApp, GatewayConfig, make_server
from cxrtriage.modelfile import make_demo_model
from cxrtriage.multipart import build_related

work = Path(tempfile.mkdtemp(prefix="gwdemo-"))
config = GatewayConfig(listen="127.0.0.1:0", ood_threshold=0.51,
                       storage_dir=str(work / "store"))
app = GatewayApp(config,
                 classifier=make_demo_model("demo-cxr-3class"),
                 ood_model=make_demo_model("demo-ood-2class"))
server = make_server(app)
port = server.server_address[1]
threading.Thread(target=server.serve_forever, daemon=True).start()
print(f"gateway on 127.0.0.1:{port}, storage under {work}")


def fetch(method, path, body=None, headers=None):
    conn = http.client.HTTPConnection("127.0.0.1", port, timeout=10)
    conn.request(method, path, body=body, headers=headers or {})
    resp = conn.getresponse()
    data = resp.read()
    conn.close()
    return resp.status, data


def synthetic_dicom(blank=False):
    n = 160
    if blank:
        arr = np.zeros((n, n), dtype=np.uint8)
    else:
        y, x = np.mgrid[0:n, 0:n] / (n - 1)
        img = 0.15 + 0.5 * np.exp(-((x - 0.35) ** 2 + (y - 0.5) ** 2) / 0.02)
        img += 0.5 * np.exp(-((x - 0.65) ** 2 + (y - 0.5) ** 2) / 0.02)
        arr = (np.clip(img, 0, 1) * 255).astype(np.uint8)
    grid = dicom.ImageGrid(n, n, 8, "MONOCHROME2", arr)
    return dicom.serialize_part10(dicom.image_to_object(grid))


chest = synthetic_dicom()
blank = synthetic_dicom(blank=True)
content_type, body = build_related([chest, chest[:150], blank])
status, data = fetch("POST", "/studies", body, {"Content-Type": content_type})
outcome = json.loads(data)
print(f"\nSTOW-RS -> {status}")
print(json.dumps(outcome, indent=1))

# Queue listing, then retrieve the SR for the accepted study.
status, data = fetch("GET", "/predictions")
listing = json.loads(data)
print(f"\nqueue holds {listing['total']} records "
      f"({[r['status'] for r in listing['records']]})")

accepted = outcome["accepted"][0]
record = next(r for r in listing["records"]
              if r["sop_instance_uid"] == accepted["sop"])
status, sr_bytes = fetch(
    "GET", f"/studies/{record['study_uid']}/instances/{accepted['sr_sop']}")
sr = dicom.parse_part10(sr_bytes)
print(f"\nWADO-RS SR -> {status}, modality {sr.require(dicom.MODALITY).text()}")
print("SR text lines:", dicom.sr_text_lines(sr))

# Reviewer override through the queue API.
fetch("POST", f"/predictions/{accepted['sop']}/review",
      json.dumps({"action": "confirmed", "note": "demo"}).encode(),
      {"Content-Type": "application/json"})
status, data = fetch("GET", f"/predictions/{accepted['sop']}")
print("\nreview state now:", json.loads(data)["review"])

server.shutdown()
server.server_close()
