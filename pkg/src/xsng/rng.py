"""Counter-based random numbers.

Every draw is a pure function of (stream key, counter), built on the
splitmix64 finalizer.  Substreams are derived by hashing labels into the
key, so parameter init, corpus synthesis, epoch shuffles and segment
crops each own an independent stream.  Draw i of a given stream is the
same on every platform and every run, which is what makes checkpoint
resume reproduce training bit for bit: nothing ever depends on how many
draws some other component consumed.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64 = (1 << 64) - 1
_INV_2_64 = float(2.0**-64)


def _finalize(z: np.ndarray) -> np.ndarray:
    """splitmix64 output function, vectorized over uint64 arrays."""
    with np.errstate(over="ignore"):  # wraparound is the algorithm
        z = z ^ (z >> np.uint64(30))
        z = z * _MIX1
        z = z ^ (z >> np.uint64(27))
        z = z * _MIX2
        return z ^ (z >> np.uint64(31))


def _fnv1a(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _U64
    return h


def _label_hash(label) -> int:
    # Type-prefixed so substream("1") and substream(1) differ.
    if isinstance(label, bool):
        raise TypeError("bool labels are ambiguous; use int or str")
    if isinstance(label, int):
        return _fnv1a(b"i:" + str(label).encode())
    if isinstance(label, str):
        return _fnv1a(b"s:" + label.encode())
    raise TypeError(f"unsupported substream label type: {type(label).__name__}")


class CounterRng:
    """Random stream addressed by (key, counter).

    The counter advances by exactly the number of 64-bit words a method
    consumes, so the full generator state is two integers and can be
    stored in a checkpoint verbatim.
    """

    def __init__(self, key: int, counter: int = 0):
        self.key = int(key) & _U64
        self.counter = int(counter) & _U64

    def substream(self, *labels) -> "CounterRng":
        """Derive an independent stream; does not advance this one."""
        key = np.uint64(self.key)
        for label in labels:
            key = _finalize(key ^ _finalize(np.uint64(_label_hash(label))))
        return CounterRng(int(key))

    def state(self) -> dict:
        return {"key": self.key, "counter": self.counter}

    @classmethod
    def from_state(cls, state: dict) -> "CounterRng":
        return cls(state["key"], state["counter"])

    def _words(self, n: int) -> np.ndarray:
        idx = np.arange(self.counter, self.counter + n, dtype=np.uint64)
        self.counter = (self.counter + n) & _U64
        with np.errstate(over="ignore"):
            return _finalize(np.uint64(self.key) + (idx + np.uint64(1)) * _GOLDEN)

    def uniform(self, shape=()) -> np.ndarray:
        """float64 samples in [0, 1)."""
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        u = self._words(n).astype(np.float64) * _INV_2_64
        return u.reshape(shape)

    def normal(self, shape=(), scale: float = 1.0) -> np.ndarray:
        """Standard normal via Box-Muller; consumes two words per sample."""
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        w = self._words(2 * n)
        # u1 in (0, 1] so the log is finite.
        u1 = (w[0::2].astype(np.float64) + 1.0) * _INV_2_64
        u2 = w[1::2].astype(np.float64) * _INV_2_64
        z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
        return (scale * z).reshape(shape)

    def integers(self, low: int, high: int, shape=()) -> np.ndarray:
        """Integer samples in [low, high)."""
        if high <= low:
            raise ValueError(f"empty integer range [{low}, {high})")
        u = self.uniform(shape)
        return (low + np.floor(u * (high - low))).astype(np.int64)

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self.uniform(n), kind="stable")
