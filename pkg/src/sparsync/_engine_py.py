"""Pure-Python decode engine.

Reference implementation of the three receiver procedures. The compiled
core in ``_ckernels`` mirrors this file operation for operation (same
counter-mode symbol stream, same accumulation order, same uniform
consumption), so the two backends produce bit-identical results; keep them
in lockstep when editing either.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .timeline import Trial, u01

R_INC_FLOOR = -1e4          # stands in for -inf so sliding sums stay exact
REFRESH_MASK = 0xFFFF       # exact window-sum recompute cadence
POISSON_DETERMINISTIC = 30.0  # above this rate the collider count saturates


@dataclass
class DecodeContext:
    """Everything a decoder needs, frozen per (channel, scheme, codebook)."""

    n: int
    a_window: int
    horizon: int
    block_len: int
    block_start0: int
    ladder: np.ndarray          # int64 (ell,)
    beta: np.ndarray            # float64 (ell,)
    gamma: float
    window_len: int
    regime: str
    align: str                  # "suffix" | "prefix"
    cdf: np.ndarray             # (inputs, outputs) row cdfs
    star: int
    r_inc: np.ndarray           # (outputs,) floored at R_INC_FLOOR
    i_inc: np.ndarray           # (inputs, outputs), -inf allowed
    m_codewords: int
    book_symbols: np.ndarray | None   # (M, n) int32 or None for implicit
    collider_rate: float        # implicit mode: Poisson rate per tested window
    data_labels: np.ndarray     # channel row index per data input
    own_per_trial: bool         # implicit mode draws a fresh codeword per trial


@dataclass
class DecodeResult:
    tau: int
    samples_taken: int
    decoded: int
    forced_random: bool
    tie_break: bool
    sampling_times: np.ndarray | None = None
    phase_trace: list | None = None


class _Stream:
    """Sequential decoder uniforms; consumption order is part of the contract."""

    __slots__ = ("key", "counter")

    def __init__(self, key: int):
        self.key = key
        self.counter = 0

    def next(self) -> float:
        self.counter += 1
        return u01(self.key, self.counter)


def own_codeword(ctx: DecodeContext, trial: Trial) -> np.ndarray:
    """Channel-row indices of the transmitted codeword for this trial."""
    if not ctx.own_per_trial:
        return ctx.book_symbols[trial.message - 1]
    k = ctx.data_labels.size
    cw = np.empty(ctx.n, dtype=np.int32)
    for j in range(ctx.n):
        u = u01(trial.codeword_key, j + 1)
        idx = int(u * k)
        if idx >= k:
            idx = k - 1
        cw[j] = ctx.data_labels[idx]
    return cw


def _gen_symbol(ctx: DecodeContext, trial: Trial, cw: np.ndarray, t: int) -> int:
    u = u01(trial.channel_key, t)
    if trial.sigma <= t <= trial.sigma + ctx.n - 1:
        row = int(cw[t - trial.sigma])
    else:
        row = ctx.star
    cdf = ctx.cdf[row]
    lo, hi = 0, cdf.size - 1
    while lo < hi:
        mid = (lo + hi) >> 1
        if u < cdf[mid]:
            hi = mid
        else:
            lo = mid + 1
    return lo


def _poisson(rate: float, stream: _Stream) -> int:
    if rate <= 0.0:
        return 0
    if rate > POISSON_DETERMINISTIC:
        # error is saturated here; a deterministic large count keeps the
        # uniform stream aligned across backends without looping forever
        return max(2, min(int(rate), 1000))
    limit = math.exp(-rate)
    k = 0
    p = stream.next()
    while p > limit:
        k += 1
        p *= stream.next()
    return k


def _codeword_test(ctx: DecodeContext, trial: Trial, cw_own: np.ndarray,
                   win_syms, stream: _Stream):
    """Apply the threshold test to every codeword on one window.

    Returns (accepted, decoded, tie). Implicit mode scores the transmitted
    codeword directly and draws the number of other clearing codewords;
    a decoded value of -1 means "some other message".
    """
    w = ctx.window_len
    n = ctx.n
    off = n - w if ctx.align == "suffix" else 0
    if ctx.book_symbols is not None:
        cands = []
        for m_hat in range(ctx.m_codewords):
            row = ctx.book_symbols[m_hat]
            score = 0.0
            for j in range(w):
                v = ctx.i_inc[row[off + j], win_syms[j]]
                if v == -math.inf:
                    score = -math.inf
                    break
                score += v
            if score >= ctx.gamma:
                cands.append(m_hat + 1)
        if not cands:
            return False, 0, False
        if len(cands) == 1:
            return True, cands[0], False
        u = stream.next()
        pick = int(u * len(cands))
        if pick >= len(cands):
            pick = len(cands) - 1
        return True, cands[pick], True
    # implicit codebook
    score = 0.0
    for j in range(w):
        v = ctx.i_inc[cw_own[off + j], win_syms[j]]
        if v == -math.inf:
            score = -math.inf
            break
        score += v
    own_pass = score >= ctx.gamma
    k = _poisson(ctx.collider_rate, stream)
    total = (1 if own_pass else 0) + k
    if total == 0:
        return False, 0, False
    if total == 1:
        return True, (trial.message if own_pass else -1), False
    u = stream.next()
    pick = int(u * total)
    if pick >= total:
        pick = total - 1
    decoded = trial.message if (own_pass and pick == 0) else -1
    return True, decoded, True


def _deadline(ctx: DecodeContext, trial: Trial, stream: _Stream, samples: int,
              times, trace) -> DecodeResult:
    u = stream.next()
    decoded = 1 + int(u * ctx.m_codewords)
    if decoded > ctx.m_codewords:
        decoded = ctx.m_codewords
    return DecodeResult(
        tau=ctx.horizon, samples_taken=samples, decoded=decoded,
        forced_random=True, tie_break=False,
        sampling_times=None if times is None else np.asarray(times, dtype=np.int64),
        phase_trace=trace,
    )


def decode_multiphase(ctx: DecodeContext, trial: Trial, record: bool = False) -> DecodeResult:
    """Cascade decoder (exact-location and block-aligned variants).

    Per block: confirmation phases of ladder[i] fresh samples each, tested
    against beta[i]; any failure skips to the next block boundary after the
    last examined sample. After ell-1 confirmations the final phase extends
    the block's contiguous samples one at a time and accepts the earliest
    window (length window_len, ending at or after the final phase's first
    sample) that clears beta[ell-1] and carries a clearing codeword; the
    stop time is the sample completing that window.
    """
    ladder = ctx.ladder
    ell = ladder.size
    s_total = int(ladder.sum())
    w = ctx.window_len
    t0 = ctx.block_start0
    delta = ctx.block_len
    T = ctx.horizon
    stream = _Stream(trial.decoder_key)
    cw = own_codeword(ctx, trial)
    times = [] if record else None
    trace = [] if record else None
    samples = 0
    incs = np.empty(s_total)
    syms = np.empty(s_total, dtype=np.int64)

    next_start = t0
    while next_start <= ctx.a_window:
        t = next_start
        pos = t
        filled = 0
        failed = False
        fail_pos = pos - 1
        depth = 0
        for i in range(ell - 1):
            need = int(ladder[i])
            if pos + need - 1 > T:
                failed = True
                fail_pos = pos - 1
                break
            r = 0.0
            for _ in range(need):
                sym = _gen_symbol(ctx, trial, cw, pos)
                if record:
                    times.append(pos)
                samples += 1
                incs[filled] = ctx.r_inc[sym]
                syms[filled] = sym
                filled += 1
                r += ctx.r_inc[sym]
                pos += 1
            depth = i + 1
            if r < ctx.beta[i]:
                failed = True
                fail_pos = pos - 1
                break
        if not failed:
            depth = ell
            end_max = min(t + s_total - 1, T)
            r_win = None
            slides = 0
            e = pos
            while e <= end_max:
                sym = _gen_symbol(ctx, trial, cw, e)
                if record:
                    times.append(e)
                samples += 1
                incs[filled] = ctx.r_inc[sym]
                syms[filled] = sym
                filled += 1
                if e >= t + w - 1:
                    if r_win is None:
                        r_win = float(np.sum(incs[filled - w:filled]))
                    else:
                        r_win += incs[filled - 1] - incs[filled - 1 - w]
                        slides += 1
                        if (slides & REFRESH_MASK) == 0:
                            r_win = float(np.sum(incs[filled - w:filled]))
                    if r_win >= ctx.beta[ell - 1]:
                        ok, decoded, tie = _codeword_test(
                            ctx, trial, cw, syms[filled - w:filled], stream
                        )
                        if ok:
                            if record:
                                trace.append((t, depth))
                            return DecodeResult(
                                tau=e, samples_taken=samples, decoded=decoded,
                                forced_random=False, tie_break=tie,
                                sampling_times=None if times is None else
                                np.asarray(times, dtype=np.int64),
                                phase_trace=trace,
                            )
                e += 1
            fail_pos = end_max
        if record:
            trace.append((t, depth))
        if fail_pos < t0:
            next_start = t0
        else:
            j = (fail_pos - t0) // delta + 1
            next_start = t0 + j * delta
        if next_start <= t:
            # nothing could be sampled in this block (deadline truncation)
            next_start = t + delta
    return _deadline(ctx, trial, stream, samples, times, trace)


def decode_full_sampling(ctx: DecodeContext, trial: Trial, record: bool = False) -> DecodeResult:
    """Sliding-window decoder sampling every time index.

    From t = n on, tests the last n outputs against beta[0] and, on
    success, looks for a unique clearing codeword; stops at the first
    acceptance, else declares a random message at the deadline.
    """
    n = ctx.n
    T = ctx.horizon
    stream = _Stream(trial.decoder_key)
    cw = own_codeword(ctx, trial)
    ring_inc = np.zeros(n)
    ring_sym = np.zeros(n, dtype=np.int64)
    r_run = 0.0
    slides = 0
    for e in range(1, T + 1):
        sym = _gen_symbol(ctx, trial, cw, e)
        slot = e % n
        if e > n:
            r_run -= ring_inc[slot]
        ring_inc[slot] = ctx.r_inc[sym]
        ring_sym[slot] = sym
        r_run += ctx.r_inc[sym]
        if e >= n:
            slides += 1
            if (slides & REFRESH_MASK) == 0:
                r_run = float(np.sum(ring_inc))
            if r_run >= ctx.beta[0]:
                win = np.empty(n, dtype=np.int64)
                for j in range(n):
                    win[j] = ring_sym[(e - n + 1 + j) % n]
                ok, decoded, tie = _codeword_test(ctx, trial, cw, win, stream)
                if ok:
                    return DecodeResult(
                        tau=e, samples_taken=e, decoded=decoded,
                        forced_random=False, tie_break=tie,
                        sampling_times=np.arange(1, e + 1, dtype=np.int64)
                        if record else None,
                        phase_trace=[] if record else None,
                    )
    return _deadline(
        ctx, trial, stream, T,
        list(range(1, T + 1)) if record else None, [] if record else None,
    )
