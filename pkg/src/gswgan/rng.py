"""Reproducible random streams.

Every run seed is split into independent component streams. Each stream is a
Philox4x64-10 counter-based generator whose 128-bit key is ``(seed, stream)``
and whose counter starts at zero, so a stream can be replayed from the two
integers alone.
"""

import numpy as np

STREAMS = {"data": 0, "init": 1, "noise": 2, "eval": 3, "batch": 4}

_MASK64 = (1 << 64) - 1


def make_rng(seed: int, stream: str | int = 0) -> np.random.Generator:
    if isinstance(stream, str):
        try:
            stream = STREAMS[stream]
        except KeyError:
            raise ValueError(f"unknown stream {stream!r}; expected one of {sorted(STREAMS)}") from None
    key = np.array([int(seed) & _MASK64, int(stream) & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def split(seed: int) -> dict[str, np.random.Generator]:
    """All named component streams for one run seed."""
    return {name: make_rng(seed, idx) for name, idx in STREAMS.items()}
