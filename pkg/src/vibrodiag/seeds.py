"""Deterministic seed derivation.

All randomness in the package flows through numpy's ``default_rng``
(PCG64). Sub-streams are derived from a master seed either by XOR with a
stable 64-bit hash of a text label (stage and restart fan-out) or by XOR
with a small integer index (per-tree streams), so any subset of the work
can be reproduced in isolation.
"""

from __future__ import annotations

import hashlib

MASK64 = (1 << 64) - 1


def stable_hash64(label: str) -> int:
    """Map a label to a fixed 64-bit integer, identical across runs and platforms."""
    digest = hashlib.blake2s(label.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def derive_seed(seed: int, label: str) -> int:
    """Derive a sub-stream seed from a master seed and a text label."""
    return (int(seed) ^ stable_hash64(label)) & MASK64


def indexed_seed(seed: int, index: int) -> int:
    """Derive the per-item stream seed for item ``index`` (e.g. one tree)."""
    return (int(seed) ^ int(index)) & MASK64
