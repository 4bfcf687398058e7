"""Counter-based random streams.

Every random number used by the simulators is a pure function of
``(master_seed, stream_index, counter, slot)``: a Philox4x32-10 block is
evaluated at counter ``(counter, slot, stream_lo, stream_hi)`` with key
``(seed_lo, seed_hi)``. Nothing is consumed sequentially, so results depend
neither on draw order nor on how replicates are spread over threads.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numba as nb
import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint32(0x9E3779B9)
_W1 = np.uint32(0xBB67AE85)
_LO = np.uint64(0xFFFFFFFF)
_SH = np.uint64(32)

# Per-step slots of the walk/tree draw layout. Slot values above 255 are
# reserved for auxiliary draws (see SUB).
SLOT_EPS = 0
SLOT_U = 1
SLOT_XI = 2
SLOT_X = 3
# Second block for a draw that needs more than two uniforms.
SUB = 1 << 16

_TWO53 = 9007199254740992.0


@nb.njit(inline="always", cache=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Philox4x32 with 10 rounds; all arguments are uint32."""
    for _ in range(10):
        p0 = np.uint64(c0) * _M0
        p1 = np.uint64(c2) * _M1
        hi0 = np.uint32(p0 >> _SH)
        lo0 = np.uint32(p0 & _LO)
        hi1 = np.uint32(p1 >> _SH)
        lo1 = np.uint32(p1 & _LO)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        k0 = np.uint32(k0 + _W0)
        k1 = np.uint32(k1 + _W1)
    return c0, c1, c2, c3


@nb.njit(inline="always", cache=True)
def _to_open_unit(a, b):
    # 53-bit double strictly inside (0, 1)
    x = np.uint64(a >> np.uint32(5)) * np.uint64(67108864) + np.uint64(b >> np.uint32(6))
    return (float(x) + 0.5) / _TWO53


@nb.njit(cache=True)
def uniform2(k0, k1, s0, s1, counter, slot):
    """Two independent uniforms on (0, 1) for one (counter, slot) address."""
    w0, w1, w2, w3 = philox4x32(
        np.uint32(counter), np.uint32(slot), s0, s1, k0, k1
    )
    return _to_open_unit(w0, w1), _to_open_unit(w2, w3)


@nb.njit(cache=True)
def uniform1(k0, k1, s0, s1, counter, slot):
    u, _ = uniform2(k0, k1, s0, s1, counter, slot)
    return u


@nb.njit(cache=True)
def uniform_index(k0, k1, s0, s1, counter, slot, m):
    """Uniform integer on {0, ..., m-1}."""
    u = uniform1(k0, k1, s0, s1, counter, slot)
    j = int(u * m)
    if j >= m:
        j = m - 1
    return j


@nb.njit(cache=True)
def fill_uniforms(k0, k1, s0, s1, slot, out):
    for i in range(out.shape[0]):
        out[i] = uniform1(k0, k1, s0, s1, i, slot)


def _split64(x: int) -> tuple[np.uint32, np.uint32]:
    x &= 0xFFFFFFFFFFFFFFFF
    return np.uint32(x & 0xFFFFFFFF), np.uint32(x >> 32)


@dataclass(frozen=True)
class RandomTape:
    """Address of one reproducible random stream.

    Identical ``(master_seed, stream_index)`` always yields identical draws.
    Replicate ``r`` of an ensemble built on a tape uses
    ``tape.stream(tape.stream_index + r)``.
    """

    master_seed: int
    stream_index: int = 0

    def __post_init__(self):
        if not (0 <= self.master_seed < 2**64):
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if not (0 <= self.stream_index < 2**64):
            raise ValueError("stream_index must be a 64-bit unsigned integer")

    @property
    def key(self) -> tuple[np.uint32, np.uint32]:
        return _split64(self.master_seed)

    @property
    def stream_words(self) -> tuple[np.uint32, np.uint32]:
        return _split64(self.stream_index)

    def words(self):
        """``(k0, k1, s0, s1)`` as passed to the kernels."""
        return (*self.key, *self.stream_words)

    def stream(self, index: int) -> "RandomTape":
        return RandomTape(self.master_seed, index % 2**64)

    def derive(self, label: str) -> "RandomTape":
        """An unrelated tape for a named sub-experiment (stream 0)."""
        h = hashlib.blake2b(digest_size=8)
        h.update(f"{self.master_seed}:{self.stream_index}:{label}".encode())
        return RandomTape(int.from_bytes(h.digest(), "little"), 0)


def uniforms(tape: RandomTape, slot: int, size: int) -> np.ndarray:
    """``size`` uniforms from counters ``0..size-1`` at ``slot``."""
    out = np.empty(size)
    fill_uniforms(*tape.words(), np.uint32(slot), out)
    return out
