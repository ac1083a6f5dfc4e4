from __future__ import annotations

import sys
import threading
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make oracles importable

from cxrtriage.dicom import ImageGrid
from cxrtriage.gateway import GatewayApp, GatewayConfig, make_server
from cxrtriage.modelfile import make_demo_model

TESTDATA = Path(__file__).parent.parent / "testdata"


@pytest.fixture(scope="session")
def testdata() -> Path:
    return TESTDATA


@pytest.fixture(scope="session")
def cxr_model():
    return make_demo_model("demo-cxr-3class")


@pytest.fixture(scope="session")
def ood_model():
    return make_demo_model("demo-ood-2class")


def chest_image(n: int = 160, maxval: int = 255) -> ImageGrid:
    """Synthetic chest-like blob: two bright ovals on a dark field."""
    y, x = np.mgrid[0:n, 0:n] / (n - 1)
    img = 0.15 + 0.5 * np.exp(-((x - 0.35) ** 2 + (y - 0.5) ** 2) / 0.02)
    img += 0.5 * np.exp(-((x - 0.65) ** 2 + (y - 0.5) ** 2) / 0.02)
    arr = (np.clip(img, 0, 1) * maxval).astype(np.uint16 if maxval > 255 else np.uint8)
    return ImageGrid(n, n, 16 if maxval > 255 else 8, "MONOCHROME2", arr)


def blank_image(n: int = 160) -> ImageGrid:
    return ImageGrid(n, n, 8, "MONOCHROME2", np.zeros((n, n), dtype=np.uint8))


def noise_image(n: int = 160, seed: int = 7) -> ImageGrid:
    rng = np.random.default_rng(seed)
    return ImageGrid(n, n, 8, "MONOCHROME2",
                     rng.integers(0, 256, size=(n, n)).astype(np.uint8))


class RunningGateway:
    """A live gateway on an ephemeral port, torn down at fixture exit."""

    def __init__(self, app: GatewayApp):
        self.app = app
        self.server = make_server(app)
        self.port = self.server.server_address[1]
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def gateway_factory(tmp_path, cxr_model, ood_model):
    """Start gateways with chosen thresholds; storage under tmp_path."""
    running: list[RunningGateway] = []

    def start(threshold: float = 0.5, storage_name: str = "store",
              max_request_bytes: int = 64 * 1024 * 1024,
              auth_token: str = "") -> RunningGateway:
        config = GatewayConfig(
            listen="127.0.0.1:0",
            ood_threshold=threshold,
            storage_dir=str(tmp_path / storage_name),
            max_request_bytes=max_request_bytes,
            auth_token=auth_token,
        )
        gw = RunningGateway(GatewayApp(config, classifier=cxr_model, ood_model=ood_model))
        running.append(gw)
        return gw

    yield start
    for gw in running:
        gw.close()
