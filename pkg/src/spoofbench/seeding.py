"""Stable seed derivation for reproducible per-item randomness."""

from __future__ import annotations

import hashlib


def derive_seed(global_seed: int, key: str) -> int:
    """Map (global seed, string key) to a 63-bit seed, stably across runs."""
    digest = hashlib.sha256(f"{global_seed}:{key}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1
