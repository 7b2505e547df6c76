"""Bit-exact JSON encoding of reals via hex-float strings.

Certificates must reload to identical floats, so every real is written
as ``float.hex()`` output.  Hex-float strings are unambiguous: no other
string field in the schemas starts with ``0x`` or ``-0x``.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np


def encode_reals(obj):
    """Recursively replace floats (and numpy arrays) by hex-float strings."""
    if isinstance(obj, bool):
        return obj
    if isinstance(obj, (int, str)) or obj is None:
        return obj
    if isinstance(obj, float):
        return float.hex(obj)
    if isinstance(obj, np.floating):
        return float.hex(float(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return encode_reals(obj.tolist())
    if isinstance(obj, dict):
        return {key: encode_reals(value) for key, value in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [encode_reals(value) for value in obj]
    raise TypeError(f"cannot encode {type(obj).__name__}")


def decode_reals(obj):
    """Inverse of :func:`encode_reals`."""
    if isinstance(obj, str) and (obj.startswith("0x") or obj.startswith("-0x")):
        return float.fromhex(obj)
    if isinstance(obj, dict):
        return {key: decode_reals(value) for key, value in obj.items()}
    if isinstance(obj, list):
        return [decode_reals(value) for value in obj]
    return obj


def dumps_canonical(obj) -> str:
    """Deterministic JSON text: sorted keys, no float formatting drift."""
    return json.dumps(encode_reals(obj), sort_keys=True, separators=(",", ":"))


def sha256_of(obj) -> str:
    return hashlib.sha256(dumps_canonical(obj).encode()).hexdigest()
