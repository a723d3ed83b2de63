"""Deterministic seed derivation.

A run owns a single root seed; every component that needs randomness asks for
a named sub-stream so that adding or reordering consumers never shifts the
draws of another. Derivation hashes the full name path, so streams are stable
across processes and platforms.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(root_seed: int, *names: object) -> int:
    """Map (root_seed, name path) to a stable 64-bit seed."""
    parts = [str(int(root_seed))] + [str(n) for n in names]
    digest = hashlib.sha256("/".join(parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def rng_for(root_seed: int, *names: object) -> np.random.Generator:
    """Generator for the named sub-stream of a root seed."""
    return np.random.default_rng(derive_seed(root_seed, *names))
