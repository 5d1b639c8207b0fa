"""Deterministic, platform-stable randomness.

Python's builtin ``hash`` is salted per process and ``random.Random``
state depends on call order, so every stochastic choice in this project
(subset sampling, mock corruption, QC draws) is derived from SHA-256
over explicit inputs instead.  Same inputs, same draw, on any machine.
"""

from __future__ import annotations

import hashlib
import struct


def stable_u64(*parts: str | bytes | int) -> int:
    """64-bit digest of the given parts (order- and length-sensitive)."""
    h = hashlib.sha256()
    for p in parts:
        if isinstance(p, bytes):
            b = p
        elif isinstance(p, str):
            b = p.encode("utf-8")
        elif isinstance(p, int):
            b = str(p).encode("ascii")
        else:
            raise TypeError(f"unhashable seed part type: {type(p).__name__}")
        h.update(struct.pack(">I", len(b)))
        h.update(b)
    return int.from_bytes(h.digest()[:8], "big")


def unit_float(*parts: str | bytes | int) -> float:
    """Uniform draw in [0, 1)."""
    return stable_u64(*parts) / 2.0**64


def stable_order(keys: list[str], *parts: str | bytes | int) -> list[str]:
    """Keys reordered by hash rank.  Prefixes of the result are nested:
    the first n1 keys are a subset of the first n2 keys for n1 < n2."""
    return sorted(keys, key=lambda k: (stable_u64(*parts, "rank", k), k))


def stable_index(n: int, *parts: str | bytes | int) -> int:
    """Deterministic index in [0, n)."""
    if n <= 0:
        raise ValueError("stable_index needs n >= 1")
    return stable_u64(*parts) % n
