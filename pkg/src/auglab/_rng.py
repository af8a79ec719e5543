"""Seeding helpers.

All randomness flows through numpy Generators seeded by SeedSequence. Named
streams are derived from a base seed plus a stable sha256 hash of a tag
string, so adding new streams never perturbs existing ones and results are
independent of scheduling.
"""
from __future__ import annotations

import hashlib

import numpy as np
from numpy.random import Generator, PCG64, SeedSequence

RngLike = "int | SeedSequence | Generator"


def stable_hash_int(tag: str) -> int:
    """First 8 bytes of sha256(tag) as an unsigned little-endian integer."""
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little", signed=False)


def tagged_sequence(seed: int, tag: str) -> SeedSequence:
    return SeedSequence(entropy=[int(seed), stable_hash_int(tag)])


def as_seed_sequence(stream) -> SeedSequence:
    """Normalize an int / SeedSequence into a SeedSequence."""
    if isinstance(stream, SeedSequence):
        return stream
    if isinstance(stream, (int, np.integer)):
        return SeedSequence(entropy=int(stream))
    raise TypeError(f"expected int or SeedSequence, got {type(stream).__name__}")


def as_generator(stream) -> Generator:
    """Normalize an int / SeedSequence / Generator into a Generator."""
    if isinstance(stream, Generator):
        return stream
    return Generator(PCG64(as_seed_sequence(stream)))
