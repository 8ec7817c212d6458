"""Parsers for the structured pieces of agent replies.

Agents answer in loosely specified shapes: brace-delimited mappings,
triple sets, JSON objects. Each parser accepts the canonical shape, a
strict-JSON equivalent, and survives the usual drift (prose around the
payload, python quoting). Verdict parsing is the strictest since the
backward protocol hangs off it.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from ..jsonish import extract_braced, loads_object

_ARTICLES = ("the ", "a ", "an ")

_LAYOUT_ENTRY = re.compile(r"([^:;{}\[\]]+?)\s*:\s*\[([^\]]*)\]")
_TRIPLE = re.compile(r"\(([^()]*)\)")


def normalize_name(name: str) -> str:
    """Canonical key for matching object names across agents.

    Lowercase, outer punctuation and quotes stripped, whitespace
    collapsed, one leading article dropped, any #k disambiguation suffix
    removed.
    """
    text = name.split("#", 1)[0]
    text = text.strip().strip("\"'`.,:;").strip().lower()
    text = re.sub(r"\s+", " ", text)
    for article in _ARTICLES:
        if text.startswith(article):
            text = text[len(article):]
            break
    return text


def parse_kv_pairs(text: str) -> list[tuple[str, str]]:
    """Name-to-description pairs from a brace-delimited mapping.

    Accepts strict JSON objects and the informal
    ``{name: description; name: description}`` shape (semicolons
    separate entries so descriptions may contain commas). An entry
    without a colon is a bare name with empty description. Returns pairs
    in input order; an empty mapping is an empty list.
    """
    try:
        doc = loads_object(text)
        return [(str(k), "" if v is None else str(v)) for k, v in doc.items()]
    except ValueError:
        pass
    block = extract_braced(text)
    inner = (block or text).strip()
    if inner.startswith("{") and inner.endswith("}"):
        inner = inner[1:-1]
    sep = ";" if ";" in inner else ","
    pairs: list[tuple[str, str]] = []
    for item in inner.split(sep):
        item = item.strip()
        if not item:
            continue
        name, colon, value = item.partition(":")
        if not colon:
            pairs.append((item.strip().strip("\"'"), ""))
        else:
            pairs.append((name.strip().strip("\"'"), value.strip().strip("\"'")))
    return pairs


def parse_layout_entries(text: str) -> list[tuple[str, float, float, float, float, int]]:
    """(name, x, y, w, h, depth) rows from a layout reply.

    Accepts ``{name: [x, y, w, h, d], ...}`` informally or as strict
    JSON. Raises ValueError for an entry whose vector is not five
    numbers with an integral depth; box values are NOT range-checked
    here, that is scene validation's job.
    """
    rows: list[tuple[str, float, float, float, float, int]] = []
    try:
        doc = loads_object(text)
        for name, vec in doc.items():
            rows.append((str(name), *_layout_vector(str(name), vec)))
        return rows
    except ValueError as err:
        if "layout entry" in str(err):
            raise
        rows.clear()
    for match in _LAYOUT_ENTRY.finditer(text):
        name = match.group(1).strip().strip("\"'")
        parts = [p.strip() for p in match.group(2).split(",") if p.strip()]
        try:
            vec = [float(p) for p in parts]
        except ValueError:
            raise ValueError(
                f"layout entry for {name!r} has non-numeric values: {match.group(2)!r}"
            ) from None
        rows.append((name, *_layout_vector(name, vec)))
    return rows


def _layout_vector(name: str, vec) -> tuple[float, float, float, float, int]:
    if not isinstance(vec, list) or len(vec) != 5:
        raise ValueError(
            f"layout entry for {name!r} must be [x, y, w, h, d], got {vec!r}"
        )
    values = []
    for v in vec:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ValueError(f"layout entry for {name!r} has a non-numeric value: {v!r}")
        values.append(float(v))
    depth = values[4]
    if not depth.is_integer():
        raise ValueError(f"layout entry for {name!r} has non-integer depth {depth}")
    return values[0], values[1], values[2], values[3], int(depth)


def parse_relation_triples(text: str) -> list[tuple[str, str, str]]:
    """(subject, predicate, object) triples from a relation reply.

    Accepts the ``{(a, verb, b), (c, verb, d)}`` shape and JSON lists of
    three-element lists. Fragments that are not triples are skipped:
    relation extraction is advisory and validation catches bad
    references downstream.
    """
    triples: list[tuple[str, str, str]] = []
    try:
        doc = json.loads(text)
    except json.JSONDecodeError:
        doc = None
    if isinstance(doc, list):
        for item in doc:
            if (
                isinstance(item, list)
                and len(item) == 3
                and all(isinstance(p, str) for p in item)
            ):
                triples.append((item[0].strip(), item[1].strip(), item[2].strip()))
        return triples
    for match in _TRIPLE.finditer(text):
        parts = [p.strip().strip("\"'") for p in match.group(1).split(",")]
        if len(parts) == 3 and all(parts):
            triples.append((parts[0], parts[1], parts[2]))
    return triples


@dataclass(frozen=True)
class Verdict:
    """Parsed judgment: result is 'right' or 'wrong', the rest free text."""

    result: str
    problem: str = ""
    suggestion: str = ""


def parse_verdict(text: str) -> Verdict:
    """Parse an evaluator or reflection reply.

    Expects a JSON object with Result / Problem / Modification Suggestion
    keys (case-insensitive, null allowed for the latter two). Raises
    ValueError when no such object can be recovered.
    """
    doc = loads_object(text)
    by_key = {str(k).strip().lower(): v for k, v in doc.items()}
    raw_result = by_key.get("result")
    if not isinstance(raw_result, str):
        raise ValueError(f"verdict has no usable Result field: {text[:80]!r}")
    lowered = raw_result.strip().lower()
    if "wrong" in lowered:
        result = "wrong"
    elif "right" in lowered:
        result = "right"
    else:
        raise ValueError(f"verdict Result is neither right nor wrong: {raw_result!r}")

    def text_of(*keys: str) -> str:
        for key in keys:
            value = by_key.get(key)
            if isinstance(value, str):
                return value.strip()
        return ""

    return Verdict(
        result=result,
        problem=text_of("problem"),
        suggestion=text_of("modification suggestion", "suggestion", "modification"),
    )
