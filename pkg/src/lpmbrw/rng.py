"""Counter-based random streams keyed by (master seed, stream id)."""

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def stable_stream_id(*parts):
    """Hash arbitrary labels into a 64-bit stream id.

    The hash is independent of Python's per-process hash randomisation, so
    the same labels give the same id in every worker.
    """
    key = "|".join(repr(p) for p in parts).encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


class RngStream:
    """A Philox stream determined entirely by ``(seed, stream_id)``.

    Distinct pairs map to distinct Philox keys through ``SeedSequence``,
    which gives statistically independent sequences. The generator itself
    carries the internal counter.
    """

    def __init__(self, seed, stream_id=0):
        self.seed = int(seed) & MASK64
        self.stream_id = int(stream_id) & MASK64
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.Philox(ss))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def child(self, *labels):
        """Return an independent stream derived from this one and ``labels``."""
        return RngStream(self.seed, stable_stream_id(self.stream_id, *labels))

    # thin pass-throughs so callers can treat a stream like a Generator
    def standard_exponential(self, size=None):
        return self.generator.standard_exponential(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.generator.normal(loc, scale, size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)


def as_generator(rng):
    """Accept an RngStream, a numpy Generator, or an int seed."""
    if isinstance(rng, RngStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None or isinstance(rng, (int, np.integer)):
        return np.random.default_rng(rng)
    raise TypeError(f"cannot build a generator from {type(rng).__name__}")
