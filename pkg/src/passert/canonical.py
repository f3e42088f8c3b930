"""Canonical JSON bytes: the signing substrate for certificates.

Identical values must produce identical bytes on every platform: UTF-8,
lexicographically sorted object keys, no insignificant whitespace, and no
non-finite numbers.
"""

from __future__ import annotations

import json
import math


class CanonicalizationError(ValueError):
    """Raised for values that cannot be canonicalized deterministically."""


def _check(value: object, path: str) -> None:
    if value is None or isinstance(value, (str, bool, int)):
        return
    if isinstance(value, float):
        if not math.isfinite(value):
            raise CanonicalizationError(f"{path}: non-finite number {value!r}")
        return
    if isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            _check(item, f"{path}[{i}]")
        return
    if isinstance(value, dict):
        for key, item in value.items():
            if not isinstance(key, str):
                raise CanonicalizationError(f"{path}: non-string key {key!r}")
            _check(item, f"{path}.{key}")
        return
    raise CanonicalizationError(f"{path}: unsupported value type {type(value).__name__}")


def canonical_bytes(value: object) -> bytes:
    """Deterministic UTF-8 encoding of a JSON-compatible value."""
    _check(value, "$")
    return json.dumps(
        value, ensure_ascii=False, sort_keys=True, separators=(",", ":"), allow_nan=False
    ).encode("utf-8")


def from_canonical(data: bytes | str) -> object:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return json.loads(data)
