"""SplitMix64 random stream.

All randomness in the package goes through this generator so that traces
can be reproduced bit-for-bit by an independent implementation.  The
sequence is the standard SplitMix64::

    state  <- state + 0x9E3779B97F4A7C15          (mod 2**64)
    z      <- state
    z      <- (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z      <- (z ^ (z >> 27)) * 0x94D049BB133111EB
    output <- z ^ (z >> 31)

A double in [0, 1) is ``(output >> 11) * 2**-53``; ``uniform(a, b)`` maps it
affinely to ``a + (b - a) * u``.
"""

import numpy as np

GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    """Counter-based SplitMix64 generator.

    Parameters
    ----------
    seed : int
        Any Python integer; reduced modulo 2**64.
    """

    def __init__(self, seed=0):
        self.seed = int(seed) & _MASK
        self.counter = 0

    def next_u64(self, count):
        """Return the next ``count`` raw 64-bit outputs as a uint64 array."""
        k = np.arange(self.counter + 1, self.counter + 1 + count, dtype=np.uint64)
        self.counter += count
        with np.errstate(over="ignore"):
            states = np.uint64(self.seed) + k * np.uint64(GOLDEN_GAMMA)
            return _mix(states)

    def random(self, count):
        """``count`` doubles uniformly distributed in [0, 1)."""
        return (self.next_u64(count) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def uniform(self, low, high, count):
        return low + (high - low) * self.random(count)

    def block(self, rows, cols, low=-1.0, high=1.0):
        """A ``rows x cols`` block filled column by column from the stream."""
        return self.uniform(low, high, rows * cols).reshape(cols, rows).T.copy()
