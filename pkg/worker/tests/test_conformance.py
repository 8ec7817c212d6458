"""Drive the mccd client library against a live worker over real HTTP.

Requires the repo-root mccd package to be installed alongside this one; the
point is to confirm the worker speaks the exact wire dialect the client expects.
"""

import contextlib
import socket
import threading
import time
from pathlib import Path

import numpy as np
import pytest
import uvicorn

from mccd.denoise import DenoiseRequest, RemoteDenoiser
from mccd.errors import WorkerError
from mccd.latents import LatentGrid, latent_from_bytes, latent_to_bytes

from mccd_worker import WorkerConfig, create_app

GOLDEN = Path(__file__).resolve().parents[2] / "tests" / "fixtures" / "golden"


def free_port():
    with contextlib.closing(socket.socket()) as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


@contextlib.contextmanager
def live_worker(model):
    port = free_port()
    config = uvicorn.Config(
        create_app(WorkerConfig(model=model, port=port)),
        host="127.0.0.1",
        port=port,
        log_level="error",
    )
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.monotonic() + 10.0
    while not server.started:
        if time.monotonic() > deadline:
            raise RuntimeError("worker did not start")
        time.sleep(0.01)
    try:
        yield f"http://127.0.0.1:{port}"
    finally:
        server.should_exit = True
        thread.join(timeout=5.0)


@pytest.fixture(scope="module")
def echo_endpoint():
    with live_worker("echo") as endpoint:
        yield endpoint


@pytest.fixture(scope="module")
def attention_endpoint():
    with live_worker("mini-attention") as endpoint:
        yield endpoint


def test_client_conformance(echo_endpoint, attention_endpoint):
    start = time.perf_counter()
    failed = None
    try:
        echo = RemoteDenoiser(endpoint=echo_endpoint, retries=0)
        assert echo.health() == {"ok": True, "model": "echo"}

        # An echo round trip through the real client must preserve bytes exactly.
        golden_blob = (GOLDEN / "ramp_2x3x4.lat").read_bytes()
        grid = latent_from_bytes(golden_blob)
        request = DenoiseRequest(
            session_id="conf:c",
            prompt="a ramp",
            latent=grid,
            timestep=20,
            total_steps=20,
        )
        assert latent_to_bytes(echo.step(request)) == golden_blob

        # Decode returns a PNG sized 8x the latent grid.
        rng = np.random.default_rng(5)
        image_grid = LatentGrid(data=rng.normal(size=(4, 8, 8)))
        png = echo.decode(image_grid)
        assert png.startswith(b"\x89PNG\r\n\x1a\n")

        # The attention model enforces its channel count; the client surfaces
        # the worker's 422 as a WorkerError rather than hiding it.
        attention = RemoteDenoiser(endpoint=attention_endpoint, retries=0)
        assert attention.health() == {"ok": True, "model": "mini-attention"}
        narrow = LatentGrid(data=rng.normal(size=(2, 8, 8)))
        with pytest.raises(WorkerError, match="channels"):
            attention.step(
                DenoiseRequest(
                    session_id="conf:o0",
                    prompt="a fox",
                    latent=narrow,
                    timestep=10,
                    total_steps=20,
                )
            )

        # And a well-formed request against the real model round-trips shape.
        wide = LatentGrid(data=rng.normal(size=(4, 16, 16)))
        out = attention.step(
            DenoiseRequest(
                session_id="conf:b",
                prompt="a fox",
                latent=wide,
                timestep=10,
                total_steps=20,
            )
        )
        assert out.data.shape == (4, 16, 16)
        assert np.isfinite(out.data).all()
    except AssertionError as err:
        failed = err
    elapsed = time.perf_counter() - start
    label = "client drives live worker end to end"
    if failed is None:
        print(f"[{label}] PASS ({elapsed:.1f}s)")
    else:
        print(f"[{label}] FAIL ({elapsed:.1f}s)")
        raise failed
