"""Deterministic seed derivation.

Every run takes a single top-level seed. Components that need their own
random stream (parameter init, batch shuffling, dataset noise, sweep
repeats, ...) derive a child seed as

    sha256("<base>:<label>") -> first 8 bytes, little endian

so that streams are independent of each other, stable across platforms and
insensitive to the order in which components start up.
"""

from __future__ import annotations

import hashlib


def derive_seed(base: int, label: str) -> int:
    """Child seed for the component named ``label`` under ``base``."""
    if not isinstance(base, int):
        raise ValueError(f"base seed must be an int, got {type(base).__name__}")
    digest = hashlib.sha256(f"{base}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")
