"""Exception hierarchy and the stable exit-code contract.

Every failure the package raises on purpose derives from :class:`MccdError`
and carries the exit code the CLI maps it to:

* 2 -- validation failures: scene content, latent format, grid shapes,
  and orchestration runs that end without a valid scene.
* 3 -- backend failures: transport errors, worker-reported errors, and a
  language model emitting protocol-breaking output.
* 4 -- configuration errors: bad backend specs, malformed config files,
  unusable flag values.
"""

from __future__ import annotations

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_BACKEND = 3
EXIT_CONFIG = 4


class MccdError(Exception):
    """Base class for all deliberate failures."""

    exit_code = EXIT_VALIDATION


class ConfigError(MccdError):
    """Configuration cannot be acted on (unknown backend spec, bad file, bad value)."""

    exit_code = EXIT_CONFIG


# -- scene / format validation (exit 2) --------------------------------------


class SceneError(MccdError):
    """Scene data failed to parse or validate."""


class MalformedSceneError(SceneError):
    """Input text is not a JSON object even after the repair pass."""


class SchemaViolationError(SceneError):
    """Structurally readable JSON whose content breaks the scene schema.

    Carries the full validation report so callers can show every violation,
    not just the first.
    """

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class LatentFormatError(SceneError):
    """A latent blob does not conform to the MCCDLAT1 layout.

    ``offset`` is the byte offset at which decoding failed.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class ChannelMismatchError(MccdError):
    """Latent grids that must share a channel count do not."""


class DimensionMismatchError(MccdError):
    """Latent grids or boxes that must share spatial dimensions do not."""


# -- orchestration (exit 2: the run ended without a valid scene) --------------


class OrchestrationError(MccdError):
    """Agent orchestration finished without producing a valid scene."""


class IntegrationError(OrchestrationError):
    """Agent outputs could not be integrated into a scene."""


class MaxCyclesExhaustedError(OrchestrationError):
    """Backward cycle budget spent and the scene still fails validation."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class StepBudgetExhaustedError(OrchestrationError):
    """The conductor was asked to select an agent with no steps remaining."""


# -- backends (exit 3) ---------------------------------------------------------


class BackendError(MccdError):
    """A backend (chat endpoint, denoiser, fixture) failed."""

    exit_code = EXIT_BACKEND


class TransportError(BackendError):
    """HTTP transport failed after retries, or the endpoint returned garbage."""


class ProtocolViolationError(BackendError):
    """A remote peer answered with a payload that violates the wire protocol."""


class WorkerError(BackendError):
    """The denoiser worker reported an error of its own."""


class FixtureError(BackendError):
    """A scripted mock backend has no reply for the requested key."""


class UnrecognizedSelectionError(BackendError):
    """The conductor reply named no remaining agent, twice in a row."""


class EmptyOutputError(BackendError):
    """An agent returned an empty reply."""


class EvaluatorOutputError(BackendError):
    """The evaluator reply stayed unparseable after repair and one re-ask."""


class ReflectionOutputError(BackendError):
    """A reflection reply stayed unparseable after repair and one re-ask."""
