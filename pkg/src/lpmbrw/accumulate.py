"""Shifted accumulation of log-sum-exp and signed sums over large arrays."""

import math

import numpy as np


def logsumexp(x):
    """log(sum(exp(x))) of a 1-D array; -inf for empty input."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return -math.inf
    top = float(np.max(x))
    if not math.isfinite(top):
        return top
    return top + math.log(float(np.sum(np.exp(x - top))))


class LogSumAccumulator:
    """Streaming ``log(sum(exp(x_i)))``.

    Chunks can be fed in any sizes; the running sum is kept relative to the
    largest exponent seen so far and rescaled when a larger one arrives.
    """

    def __init__(self):
        self.shift = -math.inf
        self.scaled = 0.0

    def add(self, x):
        x = np.asarray(x, dtype=float).ravel()
        if x.size == 0:
            return self
        top = float(np.max(x))
        if top == -math.inf:
            return self
        if top > self.shift:
            if self.scaled:
                self.scaled *= math.exp(self.shift - top)
            self.shift = top
        self.scaled += float(np.sum(np.exp(x - self.shift)))
        return self

    @property
    def value(self):
        if self.scaled == 0.0:
            return -math.inf
        return self.shift + math.log(self.scaled)


class SignedLogSumAccumulator:
    """Streaming ``sum(s_i * exp(x_i))`` for signs ``s_i`` in {-1, +1}.

    Positive and negative terms go into separate shifted sums that are
    differenced only once, at extraction.
    """

    def __init__(self):
        self.pos = LogSumAccumulator()
        self.neg = LogSumAccumulator()

    def add(self, log_abs, sign):
        log_abs = np.asarray(log_abs, dtype=float).ravel()
        sign = np.broadcast_to(np.asarray(sign), log_abs.shape)
        self.pos.add(log_abs[sign > 0])
        self.neg.add(log_abs[sign < 0])
        return self

    def signed_log(self):
        """Return ``(sign, log|sum|)``; sign is 0 for an exact zero."""
        lp, ln = self.pos.value, self.neg.value
        if lp == ln:
            return 0, -math.inf
        if lp > ln:
            return 1, lp + math.log1p(-math.exp(ln - lp))
        return -1, ln + math.log1p(-math.exp(lp - ln))

    @property
    def value(self):
        s, lv = self.signed_log()
        return 0.0 if s == 0 else s * math.exp(lv)
