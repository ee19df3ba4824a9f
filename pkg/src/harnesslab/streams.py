"""Deterministic counter-based uniform streams.

Every random draw in the simulator is a pure function of a 64-bit stream
key and a draw counter, so episode i of a batch reads exactly the same
uniforms no matter how the batch is chunked across threads. Keys are
derived by hashing (master_seed, tag, index, domain); the per-stream
generator is the SplitMix64 sequence, evaluated at arbitrary counters.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

_MASK = 0xFFFFFFFFFFFFFFFF
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_U_GAMMA = np.uint64(_GAMMA)
_U_MIX1 = np.uint64(_MIX1)
_U_MIX2 = np.uint64(_MIX2)
_U30 = np.uint64(30)
_U27 = np.uint64(27)
_U31 = np.uint64(31)
_U11 = np.uint64(11)
_TO_UNIT = float(2.0 **-53)

# Domain separators keep action draws and pool-subset draws on disjoint
# streams even when they share (master_seed, tag, index).
DOMAIN_ACTIONS = 1
DOMAIN_SUBSET = 2


def _mix64(z: int) -> int:
    """SplitMix64 finalizer on a Python int, wrapping at 64 bits."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer on a uint64 array (wrapping arithmetic)."""
    z = (z ^ (z >> _U30)) * _U_MIX1
    z = (z ^ (z >> _U27)) * _U_MIX2
    return z ^ (z >> _U31)


def uniform_at(key: int, counter: int) -> float:
    """The counter-th uniform of the stream with the given key, in [0, 1)."""
    z = (key + (counter + 1) * _GAMMA) & _MASK
    return (_mix64(z) >> 11) * _TO_UNIT


def uniforms_at(keys: np.ndarray, counters) -> np.ndarray:
    """Vectorised ``uniform_at``: keys uint64 array, counters broadcastable."""
    counters = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):  # uint64 wraparound is the point
        z = keys + (counters + np.uint64(1)) * _U_GAMMA
        return (_mix64_array(z) >> _U11).astype(np.float64) * _TO_UNIT


def stream_key(master_seed: int, tag: int, index: int, domain: int = DOMAIN_ACTIONS) -> int:
    """64-bit stream key for stream ``index`` of cell ``tag``."""
    h = _mix64(master_seed ^ (domain * 0xD6E8FEB86659FD93))
    h = _mix64(h ^ _mix64(tag))
    return _mix64(h ^ _mix64(h + (index + 1) * _GAMMA))


def stream_keys(
    master_seed: int, tag: int, indices: np.ndarray, domain: int = DOMAIN_ACTIONS
) -> np.ndarray:
    """Vectorised ``stream_key`` over an array of stream indices."""
    h = _mix64(master_seed ^ (domain * 0xD6E8FEB86659FD93))
    h = np.uint64(_mix64(h ^ _mix64(tag)))
    idx = np.asarray(indices, dtype=np.uint64)
    with np.errstate(over="ignore"):  # uint64 wraparound is the point
        inner = _mix64_array(h + (idx + np.uint64(1)) * _U_GAMMA)
        return _mix64_array(h ^ inner)


class CounterStream:
    """Sequential view of a counter-based uniform stream.

    Passing one of these around is the scalar analogue of the vectorised
    (keys, counters) arrays used by the batch engine; both read the same
    numbers for the same key.
    """

    __slots__ = ("key", "counter")

    def __init__(self, key: int, counter: int = 0):
        self.key = key & _MASK
        self.counter = counter

    def next_uniform(self) -> float:
        u = uniform_at(self.key, self.counter)
        self.counter += 1
        return u

    def __repr__(self) -> str:  # pragma: no cover
        return f"CounterStream(key={self.key:#018x}, counter={self.counter})"


def episode_stream(
    master_seed: int, tag: int, index: int, domain: int = DOMAIN_ACTIONS
) -> CounterStream:
    """Stream for episode ``index`` of the cell identified by ``tag``."""
    return CounterStream(stream_key(master_seed, tag, index, domain))


def stable_tag64(obj) -> int:
    """Stable 64-bit tag for a JSON-serialisable object.

    Key order does not matter; adding new cells to a sweep never changes
    the tag (hence the streams) of existing cells.
    """
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "big")
