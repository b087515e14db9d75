"""Deterministic random streams keyed by structured labels.

Every stochastic routine in this package draws from a stream obtained here.
A stream is identified by a tuple of integers and short strings (for example
``(seed, "benchmark", cell, rep, "x", t)``), so the sequence of draws for any
cell of an experiment is a pure function of the master seed and the cell key.
Worker processes reconstructing the same key get byte-identical draws, which
is what makes parallel output independent of the worker count.
"""
from __future__ import annotations

import zlib

import numpy as np

_MASK32 = 0xFFFFFFFF


def key_word(part: int | str) -> int:
    """Map one key component to a stable 32-bit word."""
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8")) & _MASK32
    return int(part) & _MASK32


def stream(*key: int | str) -> np.random.Generator:
    """Independent counter-based generator for the given key.

    Distinct keys give statistically independent Philox streams; the same
    key always reproduces the same draws, on any platform.
    """
    if not key:
        raise ValueError("stream key must have at least one component")
    entropy = [key_word(part) for part in key]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
