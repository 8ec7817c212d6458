"""HTTP surface: exactly /v1/denoise_step, /v1/decode, /v1/health.

Error contract: 400 for anything wrong with the request body (bad JSON,
missing fields, undecodable latent blob, out-of-range step indices), 422
when the latent parses but the model cannot work with its dims, 500 when
the model itself fails. Every error body is ``{"error": str}``.
"""

from __future__ import annotations

import base64
import binascii
import threading
from collections import OrderedDict
from dataclasses import dataclass

from fastapi import FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import latfmt
from .backends import AttentionDenoiser, EchoBackend, ShapeMismatch


@dataclass(frozen=True)
class WorkerConfig:
    model: str = "mini-attention"
    device: str = "cpu"
    port: int = 7860
    max_sessions: int = 32
    seed: int = 0
    deterministic: bool = True
    checkpoint: str | None = None

    def __post_init__(self) -> None:
        if self.max_sessions < 1:
            raise ValueError(f"max_sessions must be >= 1, got {self.max_sessions}")
        if not 0 < self.port < 65536:
            raise ValueError(f"port must be in (0, 65536), got {self.port}")


def build_backend(config: WorkerConfig):
    if config.model == "echo":
        return EchoBackend()
    return AttentionDenoiser(
        model_id=config.model,
        seed=config.seed,
        deterministic=config.deterministic,
        checkpoint=config.checkpoint,
    )


class _SessionLocks:
    """Per-session locks so one session's requests run in order.

    Bounded: past ``limit`` sessions the least recently used lock is
    dropped, which only costs serialization for a session that comes back.
    """

    def __init__(self, limit: int):
        self._limit = limit
        self._locks: OrderedDict[str, threading.Lock] = OrderedDict()
        self._registry = threading.Lock()

    def get(self, session_id: str) -> threading.Lock:
        with self._registry:
            lock = self._locks.get(session_id)
            if lock is None:
                lock = self._locks[session_id] = threading.Lock()
            self._locks.move_to_end(session_id)
            while len(self._locks) > self._limit:
                self._locks.popitem(last=False)
            return lock


class StepBody(BaseModel):
    session_id: str
    prompt: str
    timestep: int
    total_steps: int
    guidance_scale: float
    latent_b64: str


class DecodeBody(BaseModel):
    latent_b64: str
    width: int
    height: int


def _parse_latent(b64: str):
    try:
        blob = base64.b64decode(b64.encode("ascii"), validate=True)
    except (binascii.Error, UnicodeEncodeError) as err:
        raise latfmt.WireFormatError(f"latent_b64 is not valid base64: {err}") from err
    return latfmt.decode(blob)


def create_app(config: WorkerConfig | None = None, backend=None) -> FastAPI:
    config = config if config is not None else WorkerConfig()
    app = FastAPI(title="mccd-worker", docs_url=None, redoc_url=None)
    app.state.backend = backend if backend is not None else build_backend(config)
    app.state.config = config
    locks = _SessionLocks(config.max_sessions)

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request: Request, exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        where = ".".join(str(part) for part in first.get("loc", ()) if part != "body")
        what = first.get("msg", "invalid body")
        detail = f"{where}: {what}" if where else what
        return JSONResponse(status_code=400, content={"error": f"malformed body: {detail}"})

    @app.get("/v1/health")
    def health():
        return {"ok": True, "model": app.state.backend.model_id}

    @app.post("/v1/denoise_step")
    def denoise_step(body: StepBody):
        if body.total_steps < 1 or not 1 <= body.timestep <= body.total_steps:
            return JSONResponse(
                status_code=400,
                content={
                    "error": (
                        f"malformed body: timestep {body.timestep} outside "
                        f"[1, {body.total_steps}]"
                    )
                },
            )
        try:
            latent = _parse_latent(body.latent_b64)
        except latfmt.WireFormatError as err:
            return JSONResponse(status_code=400, content={"error": f"malformed body: {err}"})
        with locks.get(body.session_id):
            try:
                result = app.state.backend.step(
                    body.session_id,
                    body.prompt,
                    body.timestep,
                    body.total_steps,
                    body.guidance_scale,
                    latent,
                )
            except ShapeMismatch as err:
                return JSONResponse(status_code=422, content={"error": str(err)})
            except Exception as err:
                return JSONResponse(
                    status_code=500, content={"error": f"model failure: {err}"}
                )
        blob = latfmt.encode(result)
        return {"latent_b64": base64.b64encode(blob).decode("ascii")}

    @app.post("/v1/decode")
    def decode(body: DecodeBody):
        if body.width < 1 or body.height < 1:
            return JSONResponse(
                status_code=400,
                content={"error": "malformed body: width and height must be >= 1"},
            )
        try:
            latent = _parse_latent(body.latent_b64)
        except latfmt.WireFormatError as err:
            return JSONResponse(status_code=400, content={"error": f"malformed body: {err}"})
        try:
            png = app.state.backend.decode(latent, body.width, body.height)
        except ShapeMismatch as err:
            return JSONResponse(status_code=422, content={"error": str(err)})
        except Exception as err:
            return JSONResponse(status_code=500, content={"error": f"model failure: {err}"})
        return Response(content=png, media_type="image/png")

    return app
