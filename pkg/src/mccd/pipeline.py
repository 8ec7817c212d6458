"""End-to-end generation: parse the prompt, denoise per branch, composite.

Each timestep denoises the shared latent once per branch (the complex
prompt, every object prompt, the background prompt), then composites the
branch outputs into a single z_{t-1} that feeds all branches at the next
step. With the scripted chat backend and the toy denoiser the whole run is
deterministic down to the byte.
"""

from __future__ import annotations

import dataclasses
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from hashlib import blake2b
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .agents import (
    ChatBackend,
    HttpChatClient,
    MockScripted,
    Trace,
    orchestrate,
)
from .denoise import (
    DEFAULT_GUIDANCE_SCALE,
    DEFAULT_STEPS,
    DenoiseRequest,
    DenoiserBackend,
    RemoteDenoiser,
    ToyDenoiser,
)
from .errors import ConfigError, MccdError
from .fusion import FusionConfig, hcd_step
from .latents import LatentGrid, read_latent, write_latent
from .scene import SceneElements, parse_scene, serialize_scene

DEFAULT_GRID = (4, 64, 64)

# Keys accepted in a JSON config file; everything here mirrors a CLI flag
# or a FusionConfig field and merges UNDER explicit flags.
CONFIG_FILE_KEYS = frozenset(
    {
        "steps",
        "guidance",
        "seed",
        "grid",
        "llm",
        "denoiser",
        "max_parallel",
        "dump_steps",
        "fusion",
    }
)


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a run needs besides the prompt itself.

    ``llm`` is ``mock:PATH`` or ``http:URL``; ``denoiser`` is ``toy`` or
    ``remote:URL``. Defaults follow the reference setting: 20 steps,
    guidance 7.0, one 4x64x64 latent.
    """

    steps: int = DEFAULT_STEPS
    guidance_scale: float = DEFAULT_GUIDANCE_SCALE
    grid: tuple[int, int, int] = DEFAULT_GRID
    seed: int = 0
    fusion: FusionConfig = field(default_factory=FusionConfig)
    llm: str = ""
    denoiser: str = "toy"
    max_parallel: int = 4
    dump_steps: bool = False

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if not self.guidance_scale > 0:
            raise ConfigError(f"guidance must be positive, got {self.guidance_scale}")
        grid = tuple(self.grid)
        if len(grid) != 3 or any(not isinstance(d, int) or d < 1 for d in grid):
            raise ConfigError(f"grid must be three positive integers, got {self.grid!r}")
        object.__setattr__(self, "grid", grid)
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.max_parallel < 1:
            raise ConfigError(f"max_parallel must be >= 1, got {self.max_parallel}")


@dataclass
class RunArtifacts:
    """What a finished run hands back (and what lands in --out)."""

    scene: SceneElements
    final_latent: LatentGrid
    trace: Trace
    per_step_latents: list[tuple[int, LatentGrid]] | None = None
    image: bytes | None = None
    denoise_calls: int = 0


def build_chat_backend(spec: str) -> ChatBackend:
    """Turn an ``llm`` spec string into a backend instance."""
    if not spec:
        raise ConfigError("no llm backend configured; pass mock:PATH or http:URL")
    kind, _, rest = spec.partition(":")
    if kind == "mock" and rest:
        return MockScripted.from_path(rest)
    if kind == "http" and rest:
        # accept both http:URL and a bare http://host URL
        endpoint = spec if rest.startswith("//") else rest
        return HttpChatClient(endpoint)
    raise ConfigError(f"unrecognized llm backend {spec!r}; expected mock:PATH or http:URL")


def build_denoiser(spec: str) -> DenoiserBackend:
    """Turn a ``denoiser`` spec string into a backend instance."""
    if spec == "toy":
        return ToyDenoiser()
    kind, _, rest = spec.partition(":")
    if kind == "remote" and rest:
        return RemoteDenoiser(rest)
    raise ConfigError(
        f"unrecognized denoiser backend {spec!r}; expected toy or remote:URL"
    )


def init_latent(seed: int, grid: Sequence[int]) -> LatentGrid:
    """Standard normal initial latent from a counter-based generator."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    return LatentGrid(rng.standard_normal(tuple(grid)))


def _run_branches(
    backend: DenoiserBackend, reqs: list[DenoiseRequest], max_parallel: int
) -> list[LatentGrid]:
    if max_parallel <= 1 or len(reqs) <= 1:
        return [backend.step(req) for req in reqs]
    with ThreadPoolExecutor(max_workers=min(max_parallel, len(reqs))) as pool:
        return list(pool.map(backend.step, reqs))


def generate(
    prompt: str,
    cfg: PipelineConfig,
    *,
    chat_backend: ChatBackend | None = None,
    denoiser: DenoiserBackend | None = None,
    out_dir: str | Path | None = None,
) -> RunArtifacts:
    """Run the full pipeline; persist artifacts under out_dir when given.

    On failure whatever exists so far (the trace, the error itself) is
    still written under out_dir before the error propagates.
    """
    chat = chat_backend if chat_backend is not None else build_chat_backend(cfg.llm)
    den = denoiser if denoiser is not None else build_denoiser(cfg.denoiser)
    out = Path(out_dir) if out_dir is not None else None
    trace = Trace()

    try:
        scene = orchestrate(prompt, chat, trace=trace)
        artifacts = _denoise_loop(scene, cfg, den, trace)
    except MccdError as err:
        if out is not None:
            persist_failure(out, err, trace)
        raise

    try:
        artifacts.image = den.decode(artifacts.final_latent)
    except (NotImplementedError, MccdError):
        artifacts.image = None

    if out is not None:
        persist_artifacts(out, artifacts, cfg, prompt)
    return artifacts


def _denoise_loop(
    scene: SceneElements,
    cfg: PipelineConfig,
    den: DenoiserBackend,
    trace: Trace,
) -> RunArtifacts:
    run_id = blake2b(
        f"{cfg.seed}:{scene.complex_prompt}".encode("utf-8"), digest_size=6
    ).hexdigest()
    branches = [(f"{run_id}:c", scene.complex_prompt)]
    branches += [
        (f"{run_id}:o{i}", obj.prompt_text) for i, obj in enumerate(scene.objects)
    ]
    branches.append((f"{run_id}:b", scene.background))
    boxes = [obj.box for obj in scene.objects]

    z = init_latent(cfg.seed, cfg.grid)
    kept: list[tuple[int, LatentGrid]] | None = [] if cfg.dump_steps else None
    calls = 0
    for t in range(cfg.steps, 0, -1):
        reqs = [
            DenoiseRequest(
                session_id=sid,
                prompt=text,
                latent=z,
                timestep=t,
                total_steps=cfg.steps,
                guidance_scale=cfg.guidance_scale,
            )
            for sid, text in branches
        ]
        outs = _run_branches(den, reqs, cfg.max_parallel)
        calls += len(reqs)
        complex_out = outs[0]
        object_outs = outs[1:-1]
        background_out = outs[-1]
        z = hcd_step(
            complex_out, list(zip(object_outs, boxes)), background_out, cfg.fusion
        )
        if kept is not None:
            kept.append((t, z))
    return RunArtifacts(
        scene=scene,
        final_latent=z,
        trace=trace,
        per_step_latents=kept,
        denoise_calls=calls,
    )


def parse_only(
    prompt: str,
    cfg: PipelineConfig,
    *,
    chat_backend: ChatBackend | None = None,
    trace: Trace | None = None,
) -> SceneElements:
    """Just the parsing half: prompt in, validated scene out."""
    chat = chat_backend if chat_backend is not None else build_chat_backend(cfg.llm)
    return orchestrate(prompt, chat, trace=trace)


def fuse_only(
    layout_path: str | Path,
    complex_path: str | Path,
    background_path: str | Path,
    object_paths: Mapping[str, str | Path],
    cfg: PipelineConfig | None = None,
) -> LatentGrid:
    """Just the compositing half: one pass over latents already on disk.

    Object latents are matched to scene objects by exact name; a missing or
    unexpected name is a usage error, not a fusion error.
    """
    cfg = cfg if cfg is not None else PipelineConfig()
    scene = parse_scene(_read_file(layout_path), allow_empty_objects=True)
    complex_latent = read_latent(complex_path)
    background = read_latent(background_path)

    names = [obj.name for obj in scene.objects]
    missing = [name for name in names if name not in object_paths]
    extra = [name for name in object_paths if name not in set(names)]
    if missing or extra:
        parts = []
        if missing:
            parts.append("missing latents for " + ", ".join(repr(n) for n in missing))
        if extra:
            parts.append("no scene object named " + ", ".join(repr(n) for n in extra))
        raise ConfigError("; ".join(parts))

    objects = [
        (read_latent(object_paths[obj.name]), obj.box) for obj in scene.objects
    ]
    return hcd_step(complex_latent, objects, background, cfg.fusion)


def _read_file(path: str | Path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err}") from err


def persist_artifacts(
    out_dir: Path, artifacts: RunArtifacts, cfg: PipelineConfig, prompt: str
) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "scene.json").write_bytes(serialize_scene(artifacts.scene))
    write_latent(artifacts.final_latent, out_dir / "final_latent.lat")
    artifacts.trace.write(out_dir / "trace.jsonl")
    summary = {
        "prompt": prompt,
        "steps": cfg.steps,
        "guidance_scale": cfg.guidance_scale,
        "grid": list(cfg.grid),
        "seed": cfg.seed,
        "llm": cfg.llm,
        "denoiser": cfg.denoiser,
        "fusion": dataclasses.asdict(cfg.fusion),
        "denoise_calls": artifacts.denoise_calls,
    }
    (out_dir / "config.json").write_text(
        json.dumps(summary, indent=2) + "\n", encoding="utf-8"
    )
    if artifacts.image is not None:
        (out_dir / "image.png").write_bytes(artifacts.image)
    if artifacts.per_step_latents is not None:
        step_dir = out_dir / "steps"
        step_dir.mkdir(exist_ok=True)
        for t, latent in artifacts.per_step_latents:
            write_latent(latent, step_dir / f"step_{t:03d}.lat")


def persist_failure(out_dir: Path, err: MccdError, trace: Trace) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    report = {
        "error_type": type(err).__name__,
        "message": str(err),
        "exit_code": err.exit_code,
    }
    (out_dir / "failure.json").write_text(
        json.dumps(report, indent=2) + "\n", encoding="utf-8"
    )
    trace.write(out_dir / "trace.jsonl")


def load_config_file(path: str | Path) -> dict:
    """Read a JSON config file, rejecting keys outside the documented set."""
    raw = _read_file(path)
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, ValueError) as err:
        raise ConfigError(f"config file {path} is not valid JSON: {err}") from err
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    unknown = sorted(set(doc) - CONFIG_FILE_KEYS)
    if unknown:
        raise ConfigError(
            f"config file {path} has unknown keys: {', '.join(unknown)}"
        )
    return doc


def make_pipeline_config(settings: Mapping[str, object]) -> PipelineConfig:
    """Build a PipelineConfig from merged file/flag settings."""
    values = dict(settings)
    fusion = values.pop("fusion", None)
    guidance = values.pop("guidance", None)
    kwargs: dict[str, object] = {}
    if fusion is not None:
        if not isinstance(fusion, Mapping):
            raise ConfigError("fusion settings must be a JSON object")
        known = {f.name for f in dataclasses.fields(FusionConfig)}
        unknown = sorted(set(fusion) - known)
        if unknown:
            raise ConfigError(f"unknown fusion settings: {', '.join(unknown)}")
        try:
            kwargs["fusion"] = FusionConfig(**fusion)
        except (TypeError, ValueError) as err:
            raise ConfigError(f"bad fusion settings: {err}") from err
    if guidance is not None:
        kwargs["guidance_scale"] = guidance
    if "grid" in values:
        grid = values.pop("grid")
        if not isinstance(grid, (list, tuple)):
            raise ConfigError(f"grid must be a list of three integers, got {grid!r}")
        kwargs["grid"] = tuple(grid)
    kwargs.update(values)
    try:
        return PipelineConfig(**kwargs)
    except TypeError as err:
        raise ConfigError(f"bad configuration: {err}") from err
