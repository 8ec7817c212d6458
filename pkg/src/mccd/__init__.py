"""Training-free compositional image generation.

Two halves: a multi-agent protocol that parses a complex prompt into a
structured scene (objects, boxes, depths, relations), and a numeric
compositing core that fuses per-branch denoising latents into one
coherent latent every step.
"""

from .denoise import (
    DenoiseRequest,
    DenoiserBackend,
    RemoteDenoiser,
    ToyDenoiser,
    remote_step,
    toy_step,
)
from .errors import (
    EXIT_BACKEND,
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_VALIDATION,
    ConfigError,
    MccdError,
)
from .fusion import FusionConfig, hcd_step
from .latents import LatentGrid, latent_from_b64, latent_from_bytes, latent_to_b64, latent_to_bytes
from .pipeline import PipelineConfig, RunArtifacts, fuse_only, generate, parse_only
from .scene import (
    BoundingBox,
    Relation,
    RelationKind,
    SceneElements,
    SceneObject,
    ValidationReport,
    parse_scene,
    serialize_scene,
    validate_scene,
)

__version__ = "0.1.0"

__all__ = [
    "BoundingBox",
    "ConfigError",
    "DenoiseRequest",
    "DenoiserBackend",
    "EXIT_BACKEND",
    "EXIT_CONFIG",
    "EXIT_OK",
    "EXIT_VALIDATION",
    "FusionConfig",
    "LatentGrid",
    "MccdError",
    "PipelineConfig",
    "Relation",
    "RelationKind",
    "RemoteDenoiser",
    "RunArtifacts",
    "SceneElements",
    "SceneObject",
    "ToyDenoiser",
    "ValidationReport",
    "fuse_only",
    "generate",
    "hcd_step",
    "latent_from_b64",
    "latent_from_bytes",
    "latent_to_b64",
    "latent_to_bytes",
    "parse_only",
    "parse_scene",
    "remote_step",
    "serialize_scene",
    "toy_step",
    "validate_scene",
    "__version__",
]
