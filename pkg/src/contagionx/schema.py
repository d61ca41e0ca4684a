"""Shipped JSON schemas for CLI outputs."""
from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

import jsonschema

KINDS = ("snapshot", "manifest", "analyze", "stress", "solve")


@lru_cache(maxsize=None)
def load_schema(kind: str) -> dict:
    if kind not in KINDS:
        raise KeyError(f"no schema named {kind!r}")
    text = resources.files("contagionx").joinpath(f"schemas/{kind}.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def validate(kind: str, obj: dict) -> None:
    """Raise ``jsonschema.ValidationError`` when ``obj`` does not match."""
    jsonschema.validate(obj, load_schema(kind), format_checker=jsonschema.FormatChecker())
