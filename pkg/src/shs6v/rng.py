"""Counter-based random numbers keyed by (seed, lane, t, y, kind).

Each variate is a pure hash of its address, so environments are replayable
without storage: two code paths driven by the same (seed, t, y) see the same
uniform, which is what makes the coupling tests exact.  The mix is splitmix64
applied to the running combination of the address words.
"""

from __future__ import annotations

import numpy as np

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)
_C1 = np.uint64(0x9E3779B97F4A7C15)
_C2 = np.uint64(0xBF58476D1CE4E5B9)
_C3 = np.uint64(0x94D049BB133111EB)

# address-word kinds
KIND_FLUX = 7      # the per-(t, y) site-update uniform
KIND_INIT = 11     # initial-data sampling
KIND_REVERSED = 13  # reversed location-process updates
KIND_MISC = 17


def _mix(x):
    # uint64 wraparound is the point; silence the overflow warnings
    with np.errstate(over="ignore"):
        x = (x + _C1) & _MASK
        x ^= x >> np.uint64(30)
        x = (x * _C2) & _MASK
        x ^= x >> np.uint64(27)
        x = (x * _C3) & _MASK
        x ^= x >> np.uint64(31)
    return x


def _combine(h, w):
    return _mix(h ^ (np.uint64(w) & _MASK if np.isscalar(w) or isinstance(w, int)
                     else w.astype(np.uint64)))


class CounterRng:
    """Deterministic uniform field addressed by integer coordinates."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._h0 = _mix(np.uint64(self.seed & 0xFFFFFFFFFFFFFFFF))

    def uniform(self, t, y, kind=KIND_FLUX, lane=0):
        """U(0,1) at address (t, y, kind, lane); any argument may be an
        integer ndarray, with numpy broadcasting across addresses."""
        t = np.asarray(t, dtype=np.int64).astype(np.uint64)
        y = (np.asarray(y, dtype=np.int64) + np.int64(2**31)).astype(np.uint64)
        lane = np.asarray(lane, dtype=np.int64).astype(np.uint64)
        h = self._h0
        h = _mix(h ^ np.uint64(kind))
        h = _mix(h ^ lane)
        h = _mix(h ^ t)
        h = _mix(h ^ y)
        return ((h >> np.uint64(11)).astype(np.float64)) * (2.0 ** -53)

    def derive(self, salt: int) -> "CounterRng":
        """A stream with an independent seed, for per-replica derivation."""
        child = _mix(self._h0 ^ np.uint64(salt & 0xFFFFFFFFFFFFFFFF))
        return CounterRng(int(child))
