"""Shared helpers for the text formats: shortest round-trip floats, strict parsing."""

from __future__ import annotations

import json
import math


class FormatError(ValueError):
    """Raised when a data file violates its declared format."""


def fmt_float(x) -> str:
    """Render a float with the shortest decimal form that round-trips exactly."""
    return repr(float(x))


def parse_float(token: str, line_no: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise FormatError(f"line {line_no}: not a number: {token!r}") from None
    if not math.isfinite(value):
        raise FormatError(f"line {line_no}: non-finite value: {token!r}")
    return value


def dump_json(obj) -> str:
    """Serialize compactly and deterministically (keys keep construction order)."""
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def parse_json_line(line: str, line_no: int) -> dict:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise FormatError(f"line {line_no}: invalid JSON: {exc.msg}") from None
    if not isinstance(record, dict):
        raise FormatError(f"line {line_no}: expected a JSON object")
    return record
