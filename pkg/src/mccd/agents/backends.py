"""Chat backends: the scripted mock and the HTTP chat-completions client.

Backends expose one call: ``complete(system, user, tag="")``. The tag
names the protocol slot being exercised ("conductor", "evaluator", a
role key, or "reflect.<role key>"); the mock keys its fixture on it and
HTTP backends ignore it.
"""

from __future__ import annotations

import json
import logging
import os
import time
from abc import ABC, abstractmethod
from collections import Counter
from pathlib import Path
from threading import Lock
from typing import Mapping

import requests

from ..errors import ConfigError, FixtureError, TransportError

logger = logging.getLogger(__name__)

API_KEY_ENV = "MCCD_API_KEY"


class ChatBackend(ABC):
    """A system+user completion call against some language model."""

    @abstractmethod
    def complete(self, system: str, user: str, *, tag: str = "") -> str:
        raise NotImplementedError


class MockScripted(ChatBackend):
    """Deterministic backend replaying a fixture of scripted replies.

    The fixture maps ``"<tag>:<turn>"`` to the reply text, where turn
    counts calls per tag from 0. A missing key raises FixtureError so a
    test scenario that drifts off its script fails loudly instead of
    improvising.
    """

    def __init__(self, fixture: Mapping[str, str]):
        fixture = dict(fixture)
        version = fixture.pop("_version", 1)
        if version != 1:
            raise ConfigError(f"unsupported fixture version {version!r}")
        bad = [k for k, v in fixture.items() if not isinstance(v, str)]
        if bad:
            raise ConfigError(f"fixture replies must be strings: {bad[:3]}")
        self._fixture = fixture
        self._turns: Counter[str] = Counter()
        self._lock = Lock()

    @classmethod
    def from_path(cls, path: str | Path) -> "MockScripted":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as err:
            raise ConfigError(f"cannot read fixture {path}: {err}") from None
        except json.JSONDecodeError as err:
            raise ConfigError(f"fixture {path} is not valid JSON: {err}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"fixture {path} must be a JSON object")
        return cls(doc)

    def complete(self, system: str, user: str, *, tag: str = "") -> str:
        with self._lock:
            turn = self._turns[tag]
            self._turns[tag] += 1
        key = f"{tag}:{turn}"
        try:
            return self._fixture[key]
        except KeyError:
            raise FixtureError(f"mock fixture has no reply for {key!r}") from None


class HttpChatClient(ChatBackend):
    """Chat-completions client for an OpenAI-style endpoint.

    The API key comes from the environment (MCCD_API_KEY) and is sent
    only as a request header; it is never logged or echoed in errors.
    """

    def __init__(
        self,
        endpoint: str,
        *,
        model: str = "gpt-4o-mini",
        temperature: float = 0.0,
        timeout: float = 60.0,
        retries: int = 2,
        backoff: float = 0.5,
        session: requests.Session | None = None,
    ):
        self.endpoint = endpoint
        self.model = model
        self.temperature = temperature
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self._session = session or requests.Session()

    def complete(self, system: str, user: str, *, tag: str = "") -> str:
        body = {
            "model": self.model,
            "temperature": self.temperature,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        }
        headers = {}
        api_key = os.environ.get(API_KEY_ENV)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"

        last_exc: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff * (2 ** (attempt - 1)))
            try:
                response = self._session.post(
                    self.endpoint, json=body, headers=headers, timeout=self.timeout
                )
            except (requests.ConnectionError, requests.Timeout) as err:
                logger.warning("chat endpoint attempt %d failed: %s", attempt + 1, err)
                last_exc = err
                continue
            if response.status_code >= 500:
                logger.warning(
                    "chat endpoint attempt %d returned %d", attempt + 1, response.status_code
                )
                last_exc = TransportError(
                    f"chat endpoint returned {response.status_code}"
                )
                continue
            return self._extract(response)
        raise TransportError(
            f"chat endpoint unreachable after {self.retries + 1} attempts: {last_exc}"
        )

    @staticmethod
    def _extract(response: requests.Response) -> str:
        if response.status_code != 200:
            raise TransportError(f"chat endpoint returned {response.status_code}")
        try:
            doc = response.json()
            content = doc["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError):
            raise TransportError("chat endpoint returned a malformed completion") from None
        if not isinstance(content, str):
            raise TransportError("chat completion content is not text")
        return content
