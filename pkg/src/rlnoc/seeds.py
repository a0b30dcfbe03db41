"""Deterministic seed derivation shared by the simulator and the harness."""

from __future__ import annotations

import hashlib


def derive_seed(master: int, *parts) -> int:
    """Split a master seed into an independent child stream, stable across
    runs and platforms: any (master, parts) label always maps to the same
    63-bit seed."""
    label = f"{master}|" + "|".join(str(p) for p in parts)
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1
