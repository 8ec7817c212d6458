"""Denoising backends the worker can serve.

``EchoBackend`` is the protocol-conformance stub: byte-exact identity on
latent payloads. ``AttentionDenoiser`` is a genuine (if small) latent
denoiser: a seeded torch U-Net whose cross-attention treats the latent as
the query and the encoded prompt as key and value, stepped with a DDIM-like
update under classifier-free guidance. It runs anywhere on CPU and can load
trained weights from a checkpoint; without one it uses its seeded
initialization, which is enough to exercise every protocol and caching path
with real tensor math.
"""

from __future__ import annotations

import io
import math
import threading
from collections import OrderedDict
from hashlib import blake2b

import numpy as np
import torch
from PIL import Image
from torch import nn

LATENT_CHANNELS = 4
PIXELS_PER_CELL = 8


class ShapeMismatch(Exception):
    """Latent dims the loaded model cannot work with (HTTP 422)."""


class ModelFailure(Exception):
    """The model itself failed (HTTP 500)."""


class EchoBackend:
    """Identity stub for protocol conformance tests."""

    model_id = "echo"

    def step(
        self,
        session_id: str,
        prompt: str,
        timestep: int,
        total_steps: int,
        guidance_scale: float,
        latent: np.ndarray,
    ) -> np.ndarray:
        return latent

    def decode(self, latent: np.ndarray, width: int, height: int) -> bytes:
        if latent.shape[0] != LATENT_CHANNELS:
            raise ShapeMismatch(
                f"decode needs {LATENT_CHANNELS} channels, got {latent.shape[0]}"
            )
        # first three channels as RGB, normalized per image
        rgb = latent[:3]
        span = float(rgb.max() - rgb.min())
        unit = (rgb - float(rgb.min())) / (span if span > 0 else 1.0)
        pixels = (unit * 255.0).astype(np.uint8).transpose(1, 2, 0)
        image = Image.fromarray(pixels, "RGB").resize((width, height), Image.NEAREST)
        buf = io.BytesIO()
        image.save(buf, format="PNG")
        return buf.getvalue()


def _timestep_embedding(fraction: float, dim: int) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(1000.0) * torch.arange(half, dtype=torch.float32) / half)
    angles = fraction * 1000.0 * freqs
    return torch.cat([torch.sin(angles), torch.cos(angles)])


class _ResBlock(nn.Module):
    def __init__(self, width: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(4, width)
        self.conv1 = nn.Conv2d(width, width, 3, padding=1)
        self.norm2 = nn.GroupNorm(4, width)
        self.conv2 = nn.Conv2d(width, width, 3, padding=1)
        self.time = nn.Linear(width, width)

    def forward(self, x: torch.Tensor, t_emb: torch.Tensor) -> torch.Tensor:
        h = self.conv1(torch.nn.functional.silu(self.norm1(x)))
        h = h + self.time(t_emb)[None, :, None, None]
        h = self.conv2(torch.nn.functional.silu(self.norm2(h)))
        return x + h


class _CrossAttention(nn.Module):
    """One attention layer: latent cells query the prompt tokens."""

    def __init__(self, width: int, text_dim: int):
        super().__init__()
        self.norm = nn.GroupNorm(4, width)
        self.to_q = nn.Conv2d(width, width, 1)
        self.to_k = nn.Linear(text_dim, width)
        self.to_v = nn.Linear(text_dim, width)
        self.proj = nn.Conv2d(width, width, 1)
        self.scale = width**-0.5

    def forward(self, x: torch.Tensor, text: torch.Tensor) -> torch.Tensor:
        _, c, h, w = x.shape
        q = self.to_q(self.norm(x)).flatten(2).transpose(1, 2)  # (1, HW, C)
        k = self.to_k(text)[None]  # (1, T, C)
        v = self.to_v(text)[None]
        attn = torch.softmax(q @ k.transpose(1, 2) * self.scale, dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(1, c, h, w)
        return x + self.proj(out)


class _MiniUNet(nn.Module):
    def __init__(self, channels: int, width: int, text_dim: int):
        super().__init__()
        self.inp = nn.Conv2d(channels, width, 3, padding=1)
        self.time_mlp = nn.Sequential(
            nn.Linear(width, width), nn.SiLU(), nn.Linear(width, width)
        )
        self.block1 = _ResBlock(width)
        self.attn1 = _CrossAttention(width, text_dim)
        self.down = nn.Conv2d(width, width, 3, stride=2, padding=1)
        self.mid = _ResBlock(width)
        self.attn_mid = _CrossAttention(width, text_dim)
        self.up = nn.ConvTranspose2d(width, width, 4, stride=2, padding=1)
        self.block2 = _ResBlock(width)
        self.out = nn.Conv2d(width, channels, 3, padding=1)
        self.width = width

    def forward(
        self, z: torch.Tensor, fraction: float, text: torch.Tensor
    ) -> torch.Tensor:
        t_emb = self.time_mlp(_timestep_embedding(fraction, self.width))
        h = self.inp(z)
        h = self.attn1(self.block1(h, t_emb), text)
        skip = h
        h = self.down(h)
        h = self.attn_mid(self.mid(h, t_emb), text)
        h = self.up(h)[..., : skip.shape[-2], : skip.shape[-1]]
        h = self.block2(h + skip, t_emb)
        return self.out(h)


class _Decoder(nn.Module):
    """x8 upsampling latent-to-RGB decoder."""

    def __init__(self, channels: int, width: int = 16):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(channels, width, 3, padding=1),
            nn.SiLU(),
            nn.ConvTranspose2d(width, width, 4, stride=2, padding=1),
            nn.SiLU(),
            nn.ConvTranspose2d(width, width, 4, stride=2, padding=1),
            nn.SiLU(),
            nn.ConvTranspose2d(width, width, 4, stride=2, padding=1),
            nn.SiLU(),
            nn.Conv2d(width, 3, 3, padding=1),
        )

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.net(z))


class _TextHasher:
    """Deterministic stand-in for a text encoder.

    Words map to rows of a fixed random embedding table through a hash, so
    equal prompts always encode identically and different prompts rarely
    collide. No tokenizer download, no vocabulary file.
    """

    def __init__(self, text_dim: int, generator: torch.Generator, vocab: int = 4096):
        self.vocab = vocab
        self.table = torch.randn(vocab, text_dim, generator=generator) * text_dim**-0.5

    def encode(self, prompt: str, max_tokens: int = 16) -> torch.Tensor:
        words = prompt.lower().split()[:max_tokens] or [""]
        ids = [
            int.from_bytes(blake2b(w.encode("utf-8"), digest_size=4).digest(), "big")
            % self.vocab
            for w in words
        ]
        return self.table[ids]


class AttentionDenoiser:
    """Small cross-attention U-Net stepped DDIM-style with guidance.

    The schedule is a plain linear signal-rate ramp, singularities avoided
    by construction. ``deterministic=True`` keeps the update noise-free so
    identical requests produce identical latents.
    """

    ALPHA_MAX = 0.999
    ALPHA_MIN = 0.05

    def __init__(
        self,
        model_id: str = "mini-attention",
        channels: int = LATENT_CHANNELS,
        width: int = 32,
        text_dim: int = 64,
        seed: int = 0,
        deterministic: bool = True,
        checkpoint: str | None = None,
        prompt_cache_size: int = 32,
    ):
        self.model_id = model_id
        self.channels = channels
        self.deterministic = deterministic
        generator = torch.Generator().manual_seed(seed)
        self.unet = _MiniUNet(channels, width, text_dim)
        self.decoder = _Decoder(channels)
        self.hasher = _TextHasher(text_dim, generator)
        for module in (self.unet, self.decoder):
            for param in module.parameters():
                with torch.no_grad():
                    param.copy_(torch.randn(param.shape, generator=generator) * 0.05)
            module.eval()
        if checkpoint is not None:
            state = torch.load(checkpoint, map_location="cpu", weights_only=True)
            self.unet.load_state_dict(state["unet"])
            self.decoder.load_state_dict(state["decoder"])
        self._cache_size = prompt_cache_size
        self._caches: OrderedDict[str, OrderedDict[str, torch.Tensor]] = OrderedDict()
        self._cache_lock = threading.Lock()
        self._uncond = self.hasher.encode("")

    # -- prompt cache, keyed session -> prompt ------------------------------

    def _encoded(self, session_id: str, prompt: str) -> torch.Tensor:
        with self._cache_lock:
            cache = self._caches.get(session_id)
            if cache is None:
                cache = self._caches[session_id] = OrderedDict()
                self._caches.move_to_end(session_id)
                while len(self._caches) > self._cache_size:
                    self._caches.popitem(last=False)
            if prompt in cache:
                cache.move_to_end(prompt)
                return cache[prompt]
        encoded = self.hasher.encode(prompt)
        with self._cache_lock:
            cache = self._caches.setdefault(session_id, OrderedDict())
            cache[prompt] = encoded
            while len(cache) > self._cache_size:
                cache.popitem(last=False)
        return encoded

    def cached_prompts(self, session_id: str) -> list[str]:
        with self._cache_lock:
            return list(self._caches.get(session_id, ()))

    # -- schedule ------------------------------------------------------------

    def _alpha_bar(self, timestep: int, total_steps: int) -> float:
        fraction = timestep / total_steps
        return self.ALPHA_MAX + (self.ALPHA_MIN - self.ALPHA_MAX) * fraction

    def step(
        self,
        session_id: str,
        prompt: str,
        timestep: int,
        total_steps: int,
        guidance_scale: float,
        latent: np.ndarray,
    ) -> np.ndarray:
        if latent.shape[0] != self.channels:
            raise ShapeMismatch(
                f"model works in {self.channels} channels, got {latent.shape[0]}"
            )
        text = self._encoded(session_id, prompt)
        z = torch.from_numpy(np.ascontiguousarray(latent, dtype=np.float32))[None]
        fraction = timestep / total_steps
        with torch.no_grad():
            eps_cond = self.unet(z, fraction, text)
            eps_uncond = self.unet(z, fraction, self._uncond)
            eps = eps_uncond + guidance_scale * (eps_cond - eps_uncond)

            a_t = self._alpha_bar(timestep, total_steps)
            a_prev = self._alpha_bar(timestep - 1, total_steps)
            z0 = (z - math.sqrt(1.0 - a_t) * eps) / math.sqrt(a_t)
            out = math.sqrt(a_prev) * z0 + math.sqrt(1.0 - a_prev) * eps
            if not self.deterministic:
                sigma = 0.1 * math.sqrt(1.0 - a_prev)
                out = out + sigma * torch.randn(out.shape)
        result = out[0].numpy()
        if not np.all(np.isfinite(result)):
            raise ModelFailure("denoising step produced NaN or Inf")
        return result

    def decode(self, latent: np.ndarray, width: int, height: int) -> bytes:
        if latent.shape[0] != self.channels:
            raise ShapeMismatch(
                f"decoder works in {self.channels} channels, got {latent.shape[0]}"
            )
        z = torch.from_numpy(np.ascontiguousarray(latent, dtype=np.float32))[None]
        with torch.no_grad():
            rgb = self.decoder(z)[0]
        pixels = (rgb.clamp(0, 1).numpy() * 255.0).astype(np.uint8).transpose(1, 2, 0)
        image = Image.fromarray(pixels, "RGB")
        if image.size != (width, height):
            image = image.resize((width, height), Image.BILINEAR)
        buf = io.BytesIO()
        image.save(buf, format="PNG")
        return buf.getvalue()
