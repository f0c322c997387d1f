"""Deterministic seed derivation.

Python's builtin hash() is salted per process, so every derived stream
goes through sha256 to stay stable across runs, platforms and workers.
"""

import hashlib
import random


def derive_seed(*parts) -> int:
    """Fold the given parts into a stable 64-bit seed."""
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def derive_rng(*parts) -> random.Random:
    """Seeded random.Random for an independent, reproducible stream."""
    return random.Random(derive_seed(*parts))
