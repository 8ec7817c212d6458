"""HTTP worker serving the latent denoising wire protocol."""

from .app import WorkerConfig, create_app
from .backends import AttentionDenoiser, EchoBackend

__version__ = "0.1.0"

__all__ = ["AttentionDenoiser", "EchoBackend", "WorkerConfig", "create_app", "__version__"]
