"""Canonical byte encodings for record values.

One encoding serves two masters: sketch hashing (keys become concatenated
bytes) and deterministic output ordering (records sort by their encoded
form).  Values are tagged so different types never collide and strings are
length-prefixed so concatenations stay injective.
"""

from __future__ import annotations

import struct

_INT = struct.Struct(">cQ")
_FLOAT = struct.Struct(">cd")
_STR = struct.Struct(">cI")


def value_bytes(value) -> bytes:
    if isinstance(value, bool):
        raise TypeError("boolean record values are not part of the model")
    if isinstance(value, int):
        return _INT.pack(b"i", value)
    if isinstance(value, float):
        return _FLOAT.pack(b"f", value)
    if isinstance(value, str):
        raw = value.encode("utf-8")
        return _STR.pack(b"s", len(raw)) + raw
    raise TypeError(f"cannot encode value of type {type(value).__name__}")


def record_bytes(record: tuple) -> bytes:
    return b"".join(value_bytes(v) for v in record)
