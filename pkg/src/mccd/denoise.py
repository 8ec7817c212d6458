"""Per-prompt denoising step behind a uniform backend interface.

Two backends ship with the package. The toy backend is a pure function that
contracts the latent toward a smooth target field derived from a hash of the
prompt, so the whole pipeline can run and be tested bit-for-bit without any
model. The remote backend speaks a small HTTP protocol to a worker process
that owns the actual model.
"""

from __future__ import annotations

import math
import random
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import lru_cache
from hashlib import blake2b

import numpy as np
import requests

from .errors import (
    LatentFormatError,
    ProtocolViolationError,
    TransportError,
    WorkerError,
)
from .latents import LatentGrid, latent_from_b64, latent_to_b64

DEFAULT_GUIDANCE_SCALE = 7.0
DEFAULT_STEPS = 20

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"

# Pixels per latent cell when asking a worker to decode.
DECODE_UPSCALE = 8


@dataclass(frozen=True)
class DenoiseRequest:
    """One z_t -> z_{t-1} step for a single prompt.

    ``timestep`` counts down from ``total_steps`` to 1. ``session_id`` lets a
    worker cache prompt encodings across steps; correctness never depends on
    it.
    """

    session_id: str
    prompt: str
    latent: LatentGrid
    timestep: int
    total_steps: int
    guidance_scale: float = DEFAULT_GUIDANCE_SCALE

    def __post_init__(self) -> None:
        if self.total_steps < 1:
            raise ValueError(f"total_steps must be >= 1, got {self.total_steps}")
        if not 1 <= self.timestep <= self.total_steps:
            raise ValueError(
                f"timestep must lie in [1, {self.total_steps}], got {self.timestep}"
            )
        if not self.guidance_scale > 0:
            raise ValueError(
                f"guidance_scale must be positive, got {self.guidance_scale}"
            )


class DenoiserBackend(ABC):
    """A thing that can advance a latent by one denoising step.

    ``decode`` is an optional capability; backends without one inherit the
    default that raises ``NotImplementedError``.
    """

    @abstractmethod
    def step(self, req: DenoiseRequest) -> LatentGrid:
        """Return z_{t-1} with the same dims as the request latent."""

    def decode(self, latent: LatentGrid) -> bytes:
        raise NotImplementedError(f"{type(self).__name__} cannot decode latents")


@lru_cache(maxsize=256)
def toy_target(prompt: str, shape: tuple[int, int, int]) -> np.ndarray:
    """The field ``toy_step`` contracts toward, as a read-only array.

    Built per channel from a DC offset plus three low-frequency sinusoids
    whose amplitudes, integer frequencies, and phases are drawn from an RNG
    seeded with a 64-bit hash of the prompt. Distinct prompts therefore get
    visibly different targets, and the same prompt always gets the same one.

    Exposed so tests can check the fixed point and the contraction limit.
    """
    seed = int.from_bytes(blake2b(prompt.encode("utf-8"), digest_size=8).digest(), "big")
    rng = random.Random(seed)
    channels, height, width = shape
    ys = (np.arange(height, dtype=np.float64) + 0.5) / height
    xs = (np.arange(width, dtype=np.float64) + 0.5) / width
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    target = np.empty(shape, dtype=np.float64)
    for c in range(channels):
        plane = np.full((height, width), rng.uniform(-0.75, 0.75))
        for _ in range(3):
            amplitude = rng.uniform(0.2, 0.5)
            fx = rng.randint(0, 3)
            fy = rng.randint(0, 3)
            phase = rng.uniform(0.0, 2.0 * math.pi)
            if fx == 0 and fy == 0:
                # keep every sinusoid spatially varying; drawn after the RNG
                # calls so the adjustment never shifts the stream
                fx = 1
            plane = plane + amplitude * np.sin(2.0 * math.pi * (fx * xx + fy * yy) + phase)
        target[c] = plane
    target.setflags(write=False)
    return target


def toy_beta(timestep: int, total_steps: int) -> float:
    """Contraction rate, timestep/total_steps mapped linearly onto [0.05, 0.5]."""
    return 0.05 + 0.45 * (timestep / total_steps)


def toy_step(req: DenoiseRequest) -> LatentGrid:
    """z_{t-1} = (1 - beta_t) z_t + beta_t * target(prompt).

    Pure and deterministic: the output depends only on the request. Since
    0 < beta_t < 1, every cell moves strictly toward the target without
    overshooting, so repeated stepping converges there.
    """
    beta = toy_beta(req.timestep, req.total_steps)
    target = toy_target(req.prompt, req.latent.shape)
    z = req.latent.data
    return LatentGrid(z + beta * (target - z))


class ToyDenoiser(DenoiserBackend):
    """Deterministic model-free backend; see ``toy_step``."""

    def step(self, req: DenoiseRequest) -> LatentGrid:
        return toy_step(req)


def _parse_step_response(resp: requests.Response, req: DenoiseRequest) -> LatentGrid:
    try:
        payload = resp.json()
    except ValueError:
        raise ProtocolViolationError(
            f"denoiser response is not JSON (HTTP {resp.status_code})"
        ) from None
    if not isinstance(payload, dict):
        raise ProtocolViolationError("denoiser response is not a JSON object")
    if "error" in payload:
        raise WorkerError(f"worker reported (HTTP {resp.status_code}): {payload['error']}")
    if resp.status_code != 200:
        raise ProtocolViolationError(
            f"denoiser answered HTTP {resp.status_code} without an error field"
        )
    if "latent_b64" not in payload or not isinstance(payload["latent_b64"], str):
        raise ProtocolViolationError("denoiser response carries no latent_b64 string")
    try:
        latent = latent_from_b64(payload["latent_b64"])
    except LatentFormatError as err:
        raise ProtocolViolationError(f"denoiser returned a malformed latent: {err}") from err
    if latent.shape != req.latent.shape:
        raise ProtocolViolationError(
            f"denoiser returned shape {latent.shape}, expected {req.latent.shape}"
        )
    return latent


def remote_step(
    req: DenoiseRequest,
    endpoint: str,
    *,
    session: requests.Session | None = None,
    timeout: float = 120.0,
    retries: int = 2,
    backoff: float = 0.5,
) -> LatentGrid:
    """POST one step to a worker and parse the latent it returns.

    Only transport failures are retried; an HTTP response, whatever its
    status, is final. A body with an ``error`` field is the worker speaking
    and comes back as ``WorkerError``; shape or format trouble in an
    otherwise well-formed reply is a ``ProtocolViolationError``.
    """
    body = {
        "session_id": req.session_id,
        "prompt": req.prompt,
        "timestep": req.timestep,
        "total_steps": req.total_steps,
        "guidance_scale": req.guidance_scale,
        "latent_b64": latent_to_b64(req.latent),
    }
    url = endpoint.rstrip("/") + "/v1/denoise_step"
    http = session if session is not None else requests
    last: Exception | None = None
    for attempt in range(retries + 1):
        try:
            resp = http.post(url, json=body, timeout=timeout)
        except (requests.ConnectionError, requests.Timeout) as err:
            last = err
            if attempt < retries:
                time.sleep(backoff * 2**attempt)
            continue
        return _parse_step_response(resp, req)
    raise TransportError(
        f"denoiser endpoint unreachable after {retries + 1} attempts: {last}"
    )


@dataclass
class RemoteDenoiser(DenoiserBackend):
    """Client for a worker process speaking the denoise wire protocol."""

    endpoint: str
    timeout: float = 120.0
    retries: int = 2
    backoff: float = 0.5
    session: requests.Session = field(default_factory=requests.Session, repr=False)

    def step(self, req: DenoiseRequest) -> LatentGrid:
        return remote_step(
            req,
            self.endpoint,
            session=self.session,
            timeout=self.timeout,
            retries=self.retries,
            backoff=self.backoff,
        )

    def decode(self, latent: LatentGrid) -> bytes:
        body = {
            "latent_b64": latent_to_b64(latent),
            "width": DECODE_UPSCALE * latent.width,
            "height": DECODE_UPSCALE * latent.height,
        }
        url = self.endpoint.rstrip("/") + "/v1/decode"
        try:
            resp = self.session.post(url, json=body, timeout=self.timeout)
        except (requests.ConnectionError, requests.Timeout) as err:
            raise TransportError(f"decode endpoint unreachable: {err}") from err
        if resp.headers.get("content-type", "").startswith("application/json"):
            payload = resp.json()
            if isinstance(payload, dict) and "error" in payload:
                raise WorkerError(
                    f"worker reported (HTTP {resp.status_code}): {payload['error']}"
                )
            raise ProtocolViolationError("decode endpoint answered JSON without an error field")
        if not resp.content.startswith(_PNG_SIGNATURE):
            raise ProtocolViolationError("decode endpoint did not return a PNG")
        return resp.content

    def health(self) -> dict:
        url = self.endpoint.rstrip("/") + "/v1/health"
        try:
            resp = self.session.get(url, timeout=self.timeout)
        except (requests.ConnectionError, requests.Timeout) as err:
            raise TransportError(f"health endpoint unreachable: {err}") from err
        try:
            payload = resp.json()
        except ValueError:
            raise ProtocolViolationError("health endpoint did not return JSON") from None
        if (
            not isinstance(payload, dict)
            or payload.get("ok") is not True
            or not isinstance(payload.get("model"), str)
        ):
            raise ProtocolViolationError(f"malformed health response: {payload!r}")
        return payload
