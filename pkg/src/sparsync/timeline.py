"""Lazy per-trial output process.

One trial fixes an arrival time nu, a transmission start sigma, a message,
and a 64-bit channel key. The output at time t is pure noise outside
[sigma, sigma + n - 1] and the codeword-driven law inside; each symbol is a
pure function of (channel_key, t) through a counter-mode hash, so sparse
and out-of-order queries are consistent without materializing the window,
and the compiled and pure backends regenerate identical streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import Dmc
from .errors import RangeViolation
from .scheme import REGIME_SMALL_DELAY, SchemeParams

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)
_GAMMA = 0x9E3779B97F4A7C15
_INV_2_53 = 1.0 / 9007199254740992.0

POLICY_IMMEDIATE = "immediate"
POLICY_BLOCK_ALIGNED = "block_aligned"


def mix64(z: int) -> int:
    """SplitMix64 finalizer (scalar, Python ints)."""
    z &= 0xFFFFFFFFFFFFFFFF
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    z ^= z >> 31
    return z


def u01(key: int, t: int) -> float:
    """Uniform in [0,1) keyed by (key, t); bit-identical across backends."""
    z = mix64((key + t * _GAMMA) & 0xFFFFFFFFFFFFFFFF)
    return (z >> 11) * _INV_2_53


def u01_array(key: int, ts: np.ndarray) -> np.ndarray:
    """Vectorized :func:`u01` over an int64/uint64 array of times."""
    z = (np.uint64(key) + ts.astype(np.uint64) * np.uint64(_GAMMA)) & _MASK
    z ^= z >> np.uint64(30)
    z = (z * np.uint64(0xBF58476D1CE4E5B9)) & _MASK
    z ^= z >> np.uint64(27)
    z = (z * np.uint64(0x94D049BB133111EB)) & _MASK
    z ^= z >> np.uint64(31)
    return (z >> np.uint64(11)).astype(np.float64) * _INV_2_53


def trial_keys(root_seed: int, trial_index: int):
    """Derive (channel, decoder, codeword, nu, message) key words for one trial.

    Stateless per (root_seed, trial_index): trials can run in any order, on
    any worker, and reproduce identically.
    """
    ss = np.random.SeedSequence(entropy=(int(root_seed), int(trial_index)))
    w = ss.generate_state(5, dtype=np.uint64)
    return int(w[0]), int(w[1]), int(w[2]), int(w[3]), int(w[4])


def _scaled_int(word: int, bound: int) -> int:
    """Map a 64-bit word to {0, ..., bound-1} by multiply-shift."""
    return (word * bound) >> 64


@dataclass
class Trial:
    a_window: int
    n: int
    nu: int
    sigma: int
    message: int
    channel_key: int
    decoder_key: int
    codeword_key: int
    seed_index: int
    _cache: dict = field(default_factory=dict, repr=False)
    generated: int = 0

    @property
    def horizon(self) -> int:
        return self.a_window + self.n - 1

    def sample_at(self, t: int, W: Dmc, codeword: np.ndarray) -> int:
        """Output symbol at time t (1-based); cached and deterministic per (key, t)."""
        if not (1 <= t <= self.horizon):
            raise RangeViolation(f"time {t} outside [1, {self.horizon}]")
        hit = self._cache.get(t)
        if hit is not None:
            return hit
        u = u01(self.channel_key, t)
        if self.sigma <= t <= self.sigma + self.n - 1:
            row = W.w[int(codeword[t - self.sigma])]
        else:
            row = W.noise
        cdf = np.cumsum(row)
        sym = int(np.searchsorted(cdf, u, side="right"))
        if sym >= row.size:
            sym = row.size - 1
        self._cache[t] = sym
        self.generated += 1
        return sym


def aligned_start(nu: int, block_len: int, a_window: int) -> int:
    """Earliest multiple of block_len at or after nu, clamped into [nu, A]."""
    sigma = block_len * math.ceil(nu / block_len)
    return min(max(sigma, nu), a_window)


def new_trial(params: SchemeParams, policy: str, root_seed: int,
              trial_index: int, m_for_draw: int | None = None) -> Trial:
    """Draw (nu, message), place sigma per policy, and derive the key chain.

    nu is uniform on {1..A}; the message is uniform on {1..M} (callers with
    implicit codebooks pass ``m_for_draw=1`` since the ensemble is
    message-symmetric).
    """
    ck, dk, cwk, w3, w4 = trial_keys(root_seed, trial_index)
    a = params.a_window
    nu = 1 + _scaled_int(w3, a)
    m_count = params.m_codewords if m_for_draw is None else m_for_draw
    message = 1 + _scaled_int(w4, m_count)
    if policy == POLICY_IMMEDIATE:
        sigma = nu
    elif policy == POLICY_BLOCK_ALIGNED:
        sigma = aligned_start(nu, params.block_len, a)
    else:
        raise RangeViolation(f"unknown start policy {policy!r}")
    return Trial(
        a_window=a, n=params.n, nu=nu, sigma=sigma, message=message,
        channel_key=ck, decoder_key=dk, codeword_key=cwk, seed_index=trial_index,
    )


def default_policy(params: SchemeParams) -> str:
    return POLICY_BLOCK_ALIGNED if params.regime == REGIME_SMALL_DELAY else POLICY_IMMEDIATE


class DecoderStream:
    """Sequential uniforms for tie-breaks, implicit-collider draws, and the
    deadline fallback; consumption order is part of the decode contract."""

    def __init__(self, key: int):
        self.key = key
        self.counter = 0

    def next(self) -> float:
        self.counter += 1
        return u01(self.key, self.counter)
