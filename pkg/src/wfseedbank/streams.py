"""Reproducible noise streams.

Every (master seed, replicate index, coordinate) triple owns an independent
Philox stream: the seed is the Philox key and (coordinate, index) sit in the
high words of the 256-bit counter, so streams never overlap and any single
replicate can be regenerated without touching the others.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Stream", "stream_generator"]

_MAX_KEY = 2**128


def stream_generator(seed: int, index: int, coord: int) -> np.random.Generator:
    if not 0 <= seed < _MAX_KEY:
        raise ValueError(f"seed must be in [0, 2**128), got {seed}")
    if index < 0 or coord < 0:
        raise ValueError("stream index and coordinate must be nonnegative")
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, coord, index]))


@dataclass(frozen=True)
class Stream:
    """Identity of one replicate's noise: master seed plus replicate index."""

    seed: int
    index: int = 0

    def generator(self, coord: int = 0) -> np.random.Generator:
        return stream_generator(self.seed, self.index, coord)

    def as_dict(self) -> dict:
        return {"seed": self.seed, "index": self.index}
