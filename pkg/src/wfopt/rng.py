"""Counter-based uniform random streams.

Each stream is addressed by a (seed, label) pair hashed into an independent
Philox key, and the value at index i is a pure function of (seed, label, i).
Results therefore never depend on evaluation order or on how work is split
across workers, which is what makes measurements reproducible bit-for-bit.
"""

from __future__ import annotations

import hashlib

import numpy as np
from numpy.random import Generator, Philox


def _philox_key(seed: int, label: str) -> np.ndarray:
    h = hashlib.blake2b(digest_size=16)
    h.update(str(int(seed)).encode("utf-8"))
    h.update(b"\x1f")
    h.update(label.encode("utf-8"))
    return np.frombuffer(h.digest(), dtype=np.uint64)


def uniform_stream(seed: int, label: str, n: int) -> np.ndarray:
    """First ``n`` uniforms in [0, 1) of the stream addressed by (seed, label)."""
    return Generator(Philox(key=_philox_key(seed, label))).random(n)


def uniform_at(seed: int, label: str, index: int) -> float:
    """The ``index``-th value of the stream; equals ``uniform_stream(...)[index]``.

    Philox advances in blocks of four 64-bit outputs, so we advance to the
    enclosing block and draw the within-block offset.
    """
    if index < 0:
        raise ValueError("index must be nonnegative")
    bg = Philox(key=_philox_key(seed, label))
    bg.advance(index // 4)
    return float(Generator(bg).random(index % 4 + 1)[-1])
