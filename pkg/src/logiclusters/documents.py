"""JSON document plumbing shared by all artifact formats.

Every artifact is a JSON object whose first two keys are ``format`` (a
string naming the artifact kind) and ``version`` (an integer).  Writers
emit keys in a fixed order, two-space indentation and a trailing newline,
so identical inputs always yield identical bytes.  Floats are written with
``repr`` precision; infinity is spelled as the string ``"inf"``.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any

from .errors import ParseError

VERSION = 1


def dumps(kind: str, body: dict[str, Any]) -> str:
    doc = {"format": kind, "version": VERSION}
    doc.update(body)
    return json.dumps(doc, indent=2, allow_nan=False, ensure_ascii=True) + "\n"


def loads(text: str, kind: str) -> dict[str, Any]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, f"line {exc.lineno} column {exc.colno}") from None
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object", "line 1")
    if doc.get("format") != kind:
        raise ParseError(f"expected format {kind!r}, got {doc.get('format')!r}", "format")
    if doc.get("version") != VERSION:
        raise ParseError(f"unsupported version {doc.get('version')!r}", "version")
    return doc


def read(path: str | Path, kind: str) -> dict[str, Any]:
    return loads(Path(path).read_text(encoding="utf-8"), kind)


def write(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def field(obj: Any, key: str, where: str, types: type | tuple[type, ...], optional: bool = False):
    """Fetch ``obj[key]`` checking its JSON type; errors carry the field path."""
    if not isinstance(obj, dict):
        raise ParseError("expected an object", where)
    if key not in obj:
        if optional:
            return None
        raise ParseError("missing field", f"{where}.{key}")
    value = obj[key]
    # bool is an int subclass; never accept it where a number is wanted
    if isinstance(value, bool) and bool not in _as_tuple(types):
        raise ParseError(f"expected {_names(types)}, got boolean", f"{where}.{key}")
    if not isinstance(value, types):
        raise ParseError(f"expected {_names(types)}, got {type(value).__name__}", f"{where}.{key}")
    return value


def number(obj: Any, key: str, where: str, optional: bool = False) -> float | None:
    value = field(obj, key, where, (int, float, str), optional)
    if value is None:
        return None
    if isinstance(value, str):
        if value != "inf":
            raise ParseError(f"expected a number or 'inf', got {value!r}", f"{where}.{key}")
        return math.inf
    return float(value)


def encode_float(value: float) -> float | str:
    return "inf" if math.isinf(value) else value


def _as_tuple(types):
    return types if isinstance(types, tuple) else (types,)


def _names(types) -> str:
    return " or ".join(t.__name__ for t in _as_tuple(types))
