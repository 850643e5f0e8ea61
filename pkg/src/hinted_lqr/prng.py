"""Counter-based Gaussian noise.

Each draw is a pure function of ``(seed, stream, index, component)``: the
underlying uniforms come from Philox4x64 keyed by ``(seed, stream)`` and
addressed by position, and the normals use Box-Muller on consecutive word
pairs. A block of draws starting at index ``t`` is therefore identical no
matter how, or in which process, earlier draws were consumed.
"""
from __future__ import annotations

import numpy as np

STREAMS = {
    "w": 1,
    "eta": 2,
    "hint": 3,
    "bhat": 4,
    "calibrate": 5,
    "test": 99,
}

_MASK64 = (1 << 64) - 1
_TWO_M53 = 2.0 ** -53


def _raw_words(key: np.ndarray, start: int, count: int) -> np.ndarray:
    # Philox emits 4 words per counter value.
    block0, offset = divmod(start, 4)
    bg = np.random.Philox(key=key, counter=block0)
    return bg.random_raw(offset + count)[offset:]


def box_muller(w0: np.ndarray, w1: np.ndarray) -> np.ndarray:
    u1 = ((w0 >> np.uint64(11)).astype(np.float64) + 1.0) * _TWO_M53  # (0, 1]
    u2 = (w1 >> np.uint64(11)).astype(np.float64) * _TWO_M53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


class GaussianStream:
    """Standard normal vectors of length ``dim`` addressed by an integer index."""

    def __init__(self, seed: int, stream: str | int, dim: int):
        if seed < 0:
            raise ValueError("seed must be non-negative")
        code = STREAMS[stream] if isinstance(stream, str) else int(stream)
        self.seed = int(seed)
        self.stream = stream
        self.dim = int(dim)
        self._key = np.array([self.seed & _MASK64, code], dtype=np.uint64)

    def block(self, start: int, count: int) -> np.ndarray:
        """Rows ``start, start+1, ..., start+count-1``; shape (count, dim)."""
        if count <= 0:
            return np.zeros((0, self.dim))
        words = _raw_words(self._key, 2 * start * self.dim, 2 * count * self.dim)
        z = box_muller(words[0::2], words[1::2])
        return z.reshape(count, self.dim)

    def at(self, index: int) -> np.ndarray:
        return self.block(index, 1)[0]

    def unit_direction(self, index: int) -> np.ndarray:
        """Uniform point on the unit sphere in R^dim."""
        z = self.at(index)
        nz = np.linalg.norm(z)
        while nz == 0.0:  # measure-zero, kept for completeness
            index += 1 << 40
            z = self.at(index)
            nz = np.linalg.norm(z)
        return z / nz
