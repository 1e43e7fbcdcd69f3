"""Receiver procedures and outcome classification.

Three decoders share one contract: given a trial they return a stopping
time, the number (and optionally the list) of sampled indices, a message
estimate, and flags. ``decode`` dispatches to the compiled core when it is
available and recording is off; the pure backend is the reference
implementation and produces bit-identical results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _engine_py as _pure
from ._engine_py import DecodeContext, DecodeResult
from .channel import Dmc, information_density_increments, noise_llr_increments
from .errors import ConfigError
from .implicit import ImplicitCodebook
from .scheme import (
    Codebook,
    REGIME_FULL_SAMPLING,
    REGIME_MIN_DELAY,
    REGIME_SMALL_DELAY,
    SchemeParams,
)
from .timeline import Trial

try:  # compiled core is optional
    from . import _ckernels  # type: ignore
except ImportError:  # pragma: no cover - environment dependent
    _ckernels = None

BACKEND = "c" if _ckernels is not None else "python"


def make_context(W: Dmc, params: SchemeParams, codebook, align: str = "suffix") -> DecodeContext:
    """Freeze per-scheme decode tables; validates engine-level requirements."""
    if np.any(W.noise <= 0.0):
        raise ConfigError(
            "trial engine requires a noise row with full support "
            "(the r increments must be finite)"
        )
    r_inc = noise_llr_increments(params.p, W)
    r_inc = np.maximum(r_inc, _pure.R_INC_FLOOR)
    i_inc = information_density_increments(params.p, W)
    cdf = np.cumsum(W.w, axis=1)
    cdf[:, -1] = np.maximum(cdf[:, -1], 1.0)
    if isinstance(codebook, Codebook):
        book = np.ascontiguousarray(codebook.symbols, dtype=np.int32)
        collider = 0.0
        own_per_trial = False
        m = codebook.m_codewords
    elif isinstance(codebook, ImplicitCodebook):
        book = None
        collider = codebook.collider_rate(params.window_len, params.gamma)
        own_per_trial = True
        m = codebook.m_codewords
    else:
        raise ConfigError(f"unsupported codebook type {type(codebook)!r}")
    if align not in ("suffix", "prefix"):
        raise ConfigError("align must be 'suffix' or 'prefix'")
    return DecodeContext(
        n=params.n,
        a_window=params.a_window,
        horizon=params.a_window + params.n - 1,
        block_len=max(params.block_len, 1),
        block_start0=params.block_start0,
        ladder=np.asarray(params.ladder, dtype=np.int64),
        beta=np.asarray(params.beta, dtype=np.float64),
        gamma=float(params.gamma),
        window_len=params.window_len,
        regime=params.regime,
        align=align,
        cdf=np.ascontiguousarray(cdf),
        star=W.star,
        r_inc=np.ascontiguousarray(r_inc),
        i_inc=np.ascontiguousarray(i_inc),
        m_codewords=int(min(m, 2**62)),
        book_symbols=book,
        collider_rate=float(collider),
        data_labels=np.ascontiguousarray(W.data_inputs, dtype=np.int64),
        own_per_trial=own_per_trial,
    )


def decode(ctx: DecodeContext, trial: Trial, record: bool = False,
           backend: str | None = None) -> DecodeResult:
    """Run the decoder matching the scheme regime."""
    use = backend or ("c" if (_ckernels is not None and not record) else "python")
    if use == "c":
        if _ckernels is None:
            raise ConfigError("compiled core not available")
        tau, samples, decoded, forced, tie = _ckernels.run_trial(
            ctx.regime == REGIME_FULL_SAMPLING,
            ctx.n, ctx.a_window, ctx.horizon, ctx.block_len, ctx.block_start0,
            ctx.ladder, ctx.beta, ctx.gamma, ctx.window_len,
            1 if ctx.align == "suffix" else 0,
            ctx.cdf, ctx.star, ctx.r_inc, ctx.i_inc,
            ctx.m_codewords,
            ctx.book_symbols if ctx.book_symbols is not None else
            np.empty((0, 0), dtype=np.int32),
            ctx.collider_rate, ctx.data_labels,
            1 if ctx.own_per_trial else 0,
            trial.nu, trial.sigma, trial.message,
            trial.channel_key, trial.decoder_key, trial.codeword_key,
        )
        return DecodeResult(
            tau=int(tau), samples_taken=int(samples), decoded=int(decoded),
            forced_random=bool(forced), tie_break=bool(tie),
        )
    if ctx.regime == REGIME_FULL_SAMPLING:
        return _pure.decode_full_sampling(ctx, trial, record=record)
    return _pure.decode_multiphase(ctx, trial, record=record)


def decode_multiphase_min_delay(ctx: DecodeContext, trial: Trial, **kw) -> DecodeResult:
    if ctx.regime != REGIME_MIN_DELAY:
        raise ConfigError("context regime is not min-delay")
    return decode(ctx, trial, **kw)


def decode_full_sampling(ctx: DecodeContext, trial: Trial, **kw) -> DecodeResult:
    if ctx.regime != REGIME_FULL_SAMPLING:
        raise ConfigError("context regime is not full-sampling")
    return decode(ctx, trial, **kw)


def decode_multiphase_small_delay(ctx: DecodeContext, trial: Trial, **kw) -> DecodeResult:
    if ctx.regime != REGIME_SMALL_DELAY:
        raise ConfigError("context regime is not small-delay")
    return decode(ctx, trial, **kw)


# ---------------------------------------------------------------------------
# event classification
# ---------------------------------------------------------------------------

EVENT_NAMES = ("E_I", "E_II", "E_III", "E_IV", "E_V", "E1", "E2")


@dataclass(frozen=True)
class EventLabels:
    e_i: bool
    e_ii: bool
    e_iii: bool
    e_iv: bool
    e_v: bool
    e1: bool
    e2: bool

    def as_tuple(self):
        return (self.e_i, self.e_ii, self.e_iii, self.e_iv, self.e_v, self.e1, self.e2)


def classify_outcome(result: DecodeResult, trial: Trial, params: SchemeParams,
                     d: int, rho: float) -> EventLabels:
    """Label one trial with the five outcome events and the two error events.

    The five-event decomposition is anchored at the arrival time, except in
    the block-aligned regime where it is anchored at the transmission start;
    the operational error events are always anchored at the arrival time.
    """
    ref = trial.sigma if params.regime == REGIME_SMALL_DELAY else trial.nu
    tau = result.tau
    n = params.n
    wrong = result.decoded != trial.message
    over = result.samples_taken / tau > rho
    in_window = ref <= tau <= ref + n - 1
    e_i = tau < ref
    e_ii = in_window and wrong
    e_iii = in_window and over
    e_iv = (ref <= tau <= ref + n - 2) and not wrong
    e_v = tau > ref + n - 1
    delay = tau - trial.nu + 1
    e1 = wrong or delay > d or over
    e2 = wrong or delay != n or over
    return EventLabels(e_i, e_ii, e_iii, e_iv, e_v, e1, e2)
