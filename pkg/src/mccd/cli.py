"""Command-line surface: generate, parse, fuse."""

from __future__ import annotations

import functools
import sys

import click

from . import __version__
from .errors import EXIT_CONFIG, MccdError
from .latents import write_latent
from .pipeline import (
    PipelineConfig,
    fuse_only,
    generate,
    load_config_file,
    make_pipeline_config,
    parse_only,
)
from .scene import serialize_scene

# bad flags and bad config files are the same failure class
click.UsageError.exit_code = EXIT_CONFIG


def guarded(fn):
    """Map pipeline errors onto the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except MccdError as err:
            click.echo(f"error: {err}", err=True)
            sys.exit(err.exit_code)

    return wrapper


def merged_config(config_path, **flags) -> PipelineConfig:
    """File settings first, explicit flags on top."""
    settings = load_config_file(config_path) if config_path else {}
    for key, value in flags.items():
        if value is not None:
            settings[key] = value
    return make_pipeline_config(settings)


@click.group()
@click.version_option(version=__version__, prog_name="mccd")
def main() -> None:
    """Compose complex scenes by parsing a prompt into objects, layout and
    relations, then fusing per-prompt denoising branches into one latent."""


@main.command("generate")
@click.option("--prompt", required=True, help="Scene description to render.")
@click.option("--steps", type=click.IntRange(min=1), default=None, help="Denoising steps (default 20).")
@click.option("--guidance", type=float, default=None, help="Guidance scale (default 7.0).")
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None, help="Initial-latent seed.")
@click.option("--llm", default=None, help="Chat backend: mock:PATH or http:URL.")
@click.option("--denoiser", default=None, help="Denoiser backend: toy or remote:URL.")
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Artifact directory.")
@click.option("--dump-steps", is_flag=True, default=False, help="Keep every intermediate latent.")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="JSON config file merged under explicit flags.")
@guarded
def generate_cmd(prompt, steps, guidance, seed, llm, denoiser, out, dump_steps, config_path):
    """Run the full pipeline and write artifacts to --out."""
    cfg = merged_config(
        config_path,
        steps=steps,
        guidance=guidance,
        seed=seed,
        llm=llm,
        denoiser=denoiser,
        dump_steps=True if dump_steps else None,
    )
    artifacts = generate(prompt, cfg, out_dir=out)
    click.echo(
        f"composited {len(artifacts.scene.objects)} objects over "
        f"{cfg.steps} steps ({artifacts.denoise_calls} denoiser calls); "
        f"artifacts in {out}"
    )


@main.command("parse")
@click.option("--prompt", required=True, help="Scene description to parse.")
@click.option("--llm", default=None, help="Chat backend: mock:PATH or http:URL.")
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Write scene JSON here instead of stdout.")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="JSON config file merged under explicit flags.")
@guarded
def parse_cmd(prompt, llm, out, config_path):
    """Parse a prompt into scene elements and emit the canonical JSON."""
    cfg = merged_config(config_path, llm=llm)
    scene = parse_only(prompt, cfg)
    blob = serialize_scene(scene)
    if out:
        with open(out, "wb") as fh:
            fh.write(blob)
        click.echo(f"wrote {out}")
    else:
        click.echo(blob.decode("utf-8"), nl=False)


@main.command("fuse")
@click.option("--layout", "layout_path", required=True, type=click.Path(dir_okay=False),
              help="Scene JSON naming objects, boxes and depths.")
@click.option("--complex", "complex_path", required=True, type=click.Path(dir_okay=False),
              help="Latent file for the full-scene prompt branch.")
@click.option("--background", "background_path", required=True, type=click.Path(dir_okay=False),
              help="Latent file for the background branch.")
@click.option("--object", "object_specs", multiple=True, metavar="NAME=FILE",
              help="Latent file for one named object; repeatable.")
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Where to write the fused latent.")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="JSON config file merged under explicit flags.")
@guarded
def fuse_cmd(layout_path, complex_path, background_path, object_specs, out, config_path):
    """Run one compositing pass over latents already on disk."""
    object_paths = {}
    for spec in object_specs:
        name, sep, path = spec.partition("=")
        if not sep or not name or not path:
            raise click.UsageError(f"--object takes NAME=FILE, got {spec!r}")
        object_paths[name] = path
    cfg = merged_config(config_path)
    fused = fuse_only(layout_path, complex_path, background_path, object_paths, cfg)
    write_latent(fused, out)
    click.echo(f"wrote {out}")


if __name__ == "__main__":
    main()
