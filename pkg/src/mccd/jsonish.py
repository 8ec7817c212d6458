"""Tolerant loading of JSON objects out of language-model replies.

Strict JSON is attempted first. If that fails, one repair pass runs: take
the outermost brace-delimited block and normalize single quotes to double
quotes. Model output drifts in predictable ways (leading prose, trailing
notes, python-style quoting) and the repair pass absorbs exactly that
class of drift; anything beyond it is treated as unparseable.
"""

from __future__ import annotations

import json
from typing import Any


def extract_braced(text: str) -> str | None:
    """Return the outermost balanced ``{...}`` block, or None if there is none.

    Double-quoted strings are skipped so braces inside values do not
    unbalance the scan.
    """
    start = text.find("{")
    if start < 0:
        return None
    depth = 0
    in_string = False
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return text[start : i + 1]
    return None


def normalize_quotes(text: str) -> str:
    """Swap every single quote for a double quote.

    Deliberately blunt: it targets python-style dict dumps, and text with
    apostrophes inside values will not survive it. Callers only reach for
    this after strict parsing has already failed.
    """
    return text.replace("'", '"')


def loads_object(text: str) -> dict[str, Any]:
    """Parse a JSON object from model output, repairing once if needed.

    Raises ValueError when no object can be recovered.
    """
    try:
        obj = json.loads(text)
    except json.JSONDecodeError:
        block = extract_braced(text)
        if block is None:
            raise ValueError("no brace-delimited block found") from None
        try:
            obj = json.loads(block)
        except json.JSONDecodeError:
            try:
                obj = json.loads(normalize_quotes(block))
            except json.JSONDecodeError as err:
                raise ValueError(f"unparseable after repair: {err}") from None
    if not isinstance(obj, dict):
        raise ValueError(f"expected a JSON object, got {type(obj).__name__}")
    return obj
