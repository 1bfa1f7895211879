"""Deterministic RNG stream derivation.

Every random draw in the toolkit comes from a torch Generator seeded through
``derive_seed``, so independent streams (per sample, per image, per purpose)
are reproducible regardless of evaluation order or parallelism.
"""

from __future__ import annotations

import hashlib

import torch


def derive_seed(*parts: int | str) -> int:
    """Hash a tuple of tags/indices into a 63-bit seed, platform independent."""
    key = ":".join(str(p) for p in parts).encode()
    digest = hashlib.sha256(key).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFF_FFFF_FFFF_FFFF


def make_generator(*parts: int | str) -> torch.Generator:
    gen = torch.Generator()
    gen.manual_seed(derive_seed(*parts))
    return gen
