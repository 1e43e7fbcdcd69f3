"""Construction and validation of achievability-scheme constants.

One ``SchemeParams`` instance freezes every number a decoder needs: the
asynchronism window, the block grid, the phase-sample ladder with its
thresholds, the codeword-test threshold, and the code size. Builders check
each constant against its admissible open interval and fail loudly with the
violated inequality.

Thresholds come in two modes. In ``rate`` mode the codeword-test threshold
is proportional to the information-part length at a fixed rate margin; in
``code_size`` mode it is tied to the codebook size as gamma = ln M +
(3/2) ln n, which is the finite-length choice used by the closed-form code
size formulas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .capacity import CapacityResult, DispersionResult
from .channel import (
    Dist,
    Dmc,
    divergence_variance,
    kl_divergence,
    mutual_information,
    output_distribution,
    q_inverse,
)
from .errors import (
    EpsilonTooSmall,
    OutOfMemory,
    RangeViolation,
    WindowCapExceeded,
)

DEFAULT_MAX_WINDOW = 1 << 26
DEFAULT_CODEBOOK_CELL_CAP = 1 << 24

REGIME_MIN_DELAY = "min_delay_multiphase"


def _operational_size(ln_m: float):
    """Integer code size for small ln M (exact semantics); above e^42 the
    real-valued ln M is the source of truth and the count is clamped to an
    operational sentinel (such a codebook is never materialized)."""
    import math as _m
    if ln_m <= 42.0:
        m_int = max(2, _m.floor(_m.exp(ln_m)))
        return m_int, _m.log(m_int)
    return 2 ** 62, float(ln_m)
REGIME_FULL_SAMPLING = "full_sampling"
REGIME_SMALL_DELAY = "small_delay_multiphase"


def joint_information_variance(P, W: Dmc) -> float:
    """V(P x W || P x PW): variance of the information density under the joint law."""
    p = P.p if isinstance(P, Dist) else np.asarray(P, dtype=float)
    rows = W.w_data if p.size == W.input_size - 1 else W.w
    pw = output_distribution(p, W).p
    joint = (p[:, None] * rows).ravel()
    ref = (p[:, None] * pw[None, :]).ravel()
    keep = ref > 0
    joint, ref = joint[keep], ref[keep]
    joint = joint / joint.sum()
    ref = ref / ref.sum()
    return divergence_variance(joint, ref)


@dataclass(frozen=True)
class SchemeParams:
    n: int
    alpha: float
    a_window: int
    p: Dist
    rho_law: str            # "over_n" | "over_sqrt_n" | "full"
    f_value: float
    delta: float
    delta1: float
    delta2: float | None
    block_len: int
    ladder: tuple
    c: tuple
    beta: tuple
    gamma: float
    m_codewords: int
    ln_m: float
    regime: str
    gamma_mode: str         # "rate" | "code_size"
    window_len: int
    d_bound: int
    # channel constants frozen at build time
    div_signal_noise: float  # D(PW || W(.|star))
    mutual_info: float       # I(P, W)
    v1: float                # Var of ln(PW/noise) under PW
    v2: float                # V(P x W || P x PW)

    @property
    def rho(self) -> float:
        if self.rho_law == "full":
            return 1.0
        if self.rho_law == "over_n":
            return self.f_value / self.n
        return self.f_value / math.sqrt(self.n)

    @property
    def num_phases(self) -> int:
        return len(self.ladder)

    @property
    def block_start0(self) -> int:
        """First block start: 1 on the plain grid, block_len on the aligned grid."""
        return self.block_len if self.regime == REGIME_SMALL_DELAY else 1


def _open_interval(name: str, value: float, lo: float, hi: float):
    if not (lo < value < hi):
        raise RangeViolation(f"{name}={value} outside open interval ({lo}, {hi})")


def _window_size(n: int, alpha: float, max_window: int) -> int:
    if n * alpha > math.log(max_window):
        fit = math.log(max_window) / n
        raise WindowCapExceeded(
            f"A=ceil(e^(n*alpha)) exceeds cap {max_window} at n={n}, "
            f"alpha={alpha}; largest alpha that fits is {fit:.6f}"
        )
    return int(math.ceil(math.exp(n * alpha)))


def _channel_constants(W: Dmc, P):
    pw = output_distribution(P, W)
    d = kl_divergence(pw, W.noise)
    i = mutual_information(P, W)
    v1 = divergence_variance(pw, W.noise)
    v2 = joint_information_variance(P, W)
    return d, i, v1, v2


def _build_ladder(n: int, f: float, delta: float, d_minus: float,
                  ladder_round: str):
    """Phase-sample ladder: first rung from f^delta, then the capped
    exponential recursion. When the recursion stalls (possible at desk
    scale where the first rung is small) the ladder jumps straight to its
    cap so it stays strictly increasing and ends at n."""
    raw = f ** delta
    if ladder_round == "floor":
        d1 = max(1, math.floor(raw))
    else:
        d1 = max(1, math.ceil(raw))
    d1 = min(d1, n)
    ladder = [d1]
    c_mid = d_minus / 2.0
    while ladder[-1] < n:
        grown = math.ceil(math.exp(c_mid * ladder[-1]))
        nxt = min(grown, n)
        if nxt <= ladder[-1]:
            nxt = n
        ladder.append(nxt)
        if len(ladder) > 64:
            raise RangeViolation("ladder failed to reach n in 64 rungs")
    return ladder


def _finish_multiphase(W, P, n, alpha, f, rho_law, delta, delta1, delta2, M,
                       gamma_mode, eps, berry_esseen, cap_result, disp_result,
                       block_len_override, ladder_round, max_window, regime):
    d_sn, i_pw, v1, v2 = _channel_constants(W, P)
    _open_interval("delta", delta, 0.0, 0.5)
    if f < 1.0:
        raise RangeViolation(f"f={f} must be >= 1")
    if rho_law == "over_n" and f > n:
        raise RangeViolation(f"f={f} exceeds n={n} (rho = f/n must be <= 1)")
    if not math.isfinite(d_sn):
        raise RangeViolation("D(PW||noise) is infinite; pick a noise row with full support")
    _open_interval("delta1", delta1, 0.0, d_sn - alpha)

    a_window = _window_size(n, alpha, max_window)
    if block_len_override is not None:
        block_len = int(block_len_override)
    else:
        block_len = math.ceil(n / f ** (1.0 - 2.0 * delta))
    if not (1 <= block_len < n):
        raise RangeViolation(f"block_len={block_len} outside [1, n)")

    ladder = _build_ladder(n, f, delta, d_sn - delta1, ladder_round)
    ell = len(ladder)
    w_info = n - block_len
    beta = [ladder[i] * (d_sn - delta1) for i in range(ell - 1)]
    beta.append(w_info * (d_sn - delta1))
    c_list = [beta[i] / (2.0 * ladder[i]) for i in range(ell)]

    window_len = n if regime == REGIME_SMALL_DELAY else w_info

    if gamma_mode == "rate":
        if M is None or M < 2:
            raise RangeViolation("rate mode requires an integer code size M >= 2")
        ln_m = math.log(M)
        rate = ln_m / n
        if delta2 is None:
            raise RangeViolation("rate mode requires delta2")
        _open_interval("delta2", delta2, 0.0, i_pw - rate)
        gamma = w_info * (i_pw - delta2)
        m_int = int(M)
    elif gamma_mode == "code_size":
        if M is None:
            if eps is None or cap_result is None or disp_result is None:
                raise RangeViolation(
                    "code_size mode needs M, or eps with capacity/dispersion results"
                )
            ln_m = _sparse_code_size(
                n, block_len, ladder, eps, berry_esseen, f, delta, delta1, v1,
                cap_result, disp_result,
            )
            m_int, ln_m = _operational_size(ln_m)
        else:
            m_int = max(2, int(M))
            ln_m = math.log(m_int)
        gamma = ln_m + 1.5 * math.log(n)
    else:
        raise RangeViolation(f"unknown gamma_mode {gamma_mode!r}")

    d_bound = n + block_len if regime == REGIME_SMALL_DELAY else n
    return SchemeParams(
        n=n, alpha=alpha, a_window=a_window, p=P if isinstance(P, Dist) else Dist(P),
        rho_law=rho_law, f_value=float(f), delta=delta, delta1=delta1, delta2=delta2,
        block_len=block_len, ladder=tuple(ladder), c=tuple(c_list), beta=tuple(beta),
        gamma=float(gamma), m_codewords=m_int, ln_m=float(ln_m), regime=regime,
        gamma_mode=gamma_mode, window_len=window_len, d_bound=d_bound,
        div_signal_noise=d_sn, mutual_info=i_pw, v1=v1, v2=v2,
    )


def _sparse_code_size(n, block_len, ladder, eps, berry_esseen, f, delta, delta1,
                      v1, cap_result: CapacityResult, disp_result: DispersionResult):
    """Finite-length code size for the sparse-sampling multiphase scheme."""
    w = n - block_len
    slack = (
        eps
        - (berry_esseen + 4.0) / math.sqrt(n)
        - f ** (-delta / 2.0)
        - v1 / (delta1 ** 2 * w)
        - (v1 / delta1 ** 2) * sum(1.0 / d for d in ladder[:-1])
    )
    v_eps = disp_result.v_eps
    if v_eps <= 1e-12:
        quant = 0.0
    else:
        if not (0.0 < slack < 1.0):
            raise EpsilonTooSmall(
                f"quantile argument {slack:.6f} outside (0,1) at n={n}; "
                "increase eps or n"
            )
        quant = math.sqrt(w * v_eps) * q_inverse(slack)
    return w * cap_result.c_alpha - 1.5 * math.log(n) - quant


def build_min_delay_params(W: Dmc, P, n: int, alpha: float, f: float,
                           delta: float, delta1: float, delta2: float | None = None,
                           M: int | None = None, gamma_mode: str = "rate",
                           eps: float | None = None, berry_esseen: float = 0.56,
                           cap_result=None, disp_result=None,
                           block_len_override: int | None = None,
                           ladder_round: str = "ceil",
                           max_window: int = DEFAULT_MAX_WINDOW) -> SchemeParams:
    """Multiphase scheme locating the codeword exactly; sampling rate f/n."""
    return _finish_multiphase(
        W, P, n, alpha, f, "over_n", delta, delta1, delta2, M, gamma_mode, eps,
        berry_esseen, cap_result, disp_result, block_len_override, ladder_round,
        max_window, REGIME_MIN_DELAY,
    )


def build_small_delay_params(W: Dmc, P, n: int, alpha: float, f: float,
                             delta: float, delta1: float, delta2: float | None = None,
                             M: int | None = None, gamma_mode: str = "rate",
                             eps: float | None = None, berry_esseen: float = 0.56,
                             cap_result=None, disp_result=None,
                             block_len_override: int | None = None,
                             ladder_round: str = "ceil",
                             max_window: int = DEFAULT_MAX_WINDOW) -> SchemeParams:
    """Multiphase scheme with block-aligned transmission and full-length
    codeword windows; tolerated delay is n + block_len."""
    return _finish_multiphase(
        W, P, n, alpha, f, "over_n", delta, delta1, delta2, M, gamma_mode, eps,
        berry_esseen, cap_result, disp_result, block_len_override, ladder_round,
        max_window, REGIME_SMALL_DELAY,
    )


def build_full_sampling_params(W: Dmc, P, n: int, alpha: float, eps: float,
                               delta1: float, berry_esseen: float = 0.56,
                               M: int | None = None,
                               cap_result: CapacityResult = None,
                               disp_result: DispersionResult = None,
                               max_window: int = DEFAULT_MAX_WINDOW) -> SchemeParams:
    """Single-phase sliding-window scheme at sampling rate 1.

    The code size follows the closed-form finite-length choice
    ln M = n C(alpha) - (3/2) ln n - sqrt(n V_eps) * Qinv(eps - (B+3)/sqrt(n)
    - v1/(n delta1^2)); when the dispersion is zero the quantile term
    vanishes and the argument check is moot.
    """
    d_sn, i_pw, v1, v2 = _channel_constants(W, P)
    if not math.isfinite(d_sn):
        raise RangeViolation("D(PW||noise) is infinite; pick a noise row with full support")
    _open_interval("delta1", delta1, 0.0, d_sn - alpha)
    a_window = _window_size(n, alpha, max_window)

    if M is None:
        if cap_result is None or disp_result is None:
            raise RangeViolation("full-sampling builder needs capacity/dispersion results")
        slack = eps - (berry_esseen + 3.0) / math.sqrt(n) - v1 / (n * delta1 ** 2)
        v_eps = disp_result.v_eps
        if v_eps <= 1e-12:
            quant = 0.0
        else:
            if not (0.0 < slack < 1.0):
                raise EpsilonTooSmall(
                    f"quantile argument {slack:.6f} outside (0,1) at n={n}"
                )
            quant = math.sqrt(n * v_eps) * q_inverse(slack)
        ln_m = n * cap_result.c_alpha - 1.5 * math.log(n) - quant
        m_int, ln_m_exact = _operational_size(ln_m)
    else:
        m_int = max(2, int(M))
        ln_m_exact = math.log(m_int)

    beta1 = n * (d_sn - delta1)
    gamma = ln_m_exact + 1.5 * math.log(n)
    return SchemeParams(
        n=n, alpha=alpha, a_window=a_window, p=P if isinstance(P, Dist) else Dist(P),
        rho_law="full", f_value=float(n), delta=0.25, delta1=delta1, delta2=None,
        block_len=0, ladder=(n,), c=(beta1 / (2.0 * n),), beta=(beta1,),
        gamma=float(gamma), m_codewords=m_int, ln_m=float(ln_m_exact),
        regime=REGIME_FULL_SAMPLING, gamma_mode="code_size", window_len=n,
        d_bound=n, div_signal_noise=d_sn, mutual_info=i_pw, v1=v1, v2=v2,
    )


def with_code_size(params: SchemeParams, m: int | None = None,
                   ln_m: float | None = None) -> SchemeParams:
    """Same scheme with a different codebook size (code_size gamma follows).

    Small sizes use exact integer semantics (ln of the floored count);
    above e^42 the real-valued ln M is kept as the source of truth and the
    integer count is an operational clamp (the codebook cannot be
    materialized there anyway).
    """
    if m is None and ln_m is None:
        raise RangeViolation("need m or ln_m")
    if ln_m is None or ln_m <= 42.0:
        m_int = max(2, int(m) if m is not None else math.floor(math.exp(ln_m)))
        ln_m_eff = math.log(m_int)
    else:
        m_int = 2 ** 62
        ln_m_eff = float(ln_m)
    gamma = ln_m_eff + 1.5 * math.log(params.n) if params.gamma_mode == "code_size" \
        else params.gamma
    return replace(params, m_codewords=m_int, ln_m=ln_m_eff, gamma=gamma)


# ---------------------------------------------------------------------------
# codebooks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Codebook:
    """Materialized random codebook over the non-idle inputs."""

    m_codewords: int
    n: int
    symbols: np.ndarray       # (M, n) channel-row indices
    composition_mode: str     # "iid" | "constant_composition"
    seed: int

    def __post_init__(self):
        s = np.asarray(self.symbols)
        s.setflags(write=False)
        object.__setattr__(self, "symbols", s)


def generate_codebook(P, n: int, M: int, mode: str = "iid", seed: int = 0,
                      input_labels=None,
                      max_cells: int = DEFAULT_CODEBOOK_CELL_CAP) -> Codebook:
    """Draw a codebook of ``M`` length-``n`` words; reproducible per seed.

    ``input_labels`` maps positions of ``P`` to channel row indices (so the
    idle row is never used). ``iid`` draws every symbol from ``P``;
    ``constant_composition`` permutes the rounded type of ``P``.
    """
    if M < 1:
        raise RangeViolation("M must be >= 1")
    if M * n > max_cells:
        raise OutOfMemory(
            f"codebook of {M} x {n} = {M * n} cells exceeds cap {max_cells}"
        )
    p = P.p if isinstance(P, Dist) else np.asarray(P, dtype=float)
    labels = np.arange(p.size) if input_labels is None else np.asarray(input_labels)
    rng = np.random.default_rng(seed)
    if mode == "iid":
        idx = rng.choice(p.size, size=(M, n), p=p)
    elif mode == "constant_composition":
        counts = np.floor(p * n).astype(int)
        # largest-remainder rounding to an exact type of size n
        rem = p * n - counts
        need = n - counts.sum()
        for j in np.argsort(-rem)[:need]:
            counts[j] += 1
        base = np.repeat(np.arange(p.size), counts)
        idx = np.stack([rng.permutation(base) for _ in range(M)])
    else:
        raise RangeViolation(f"unknown codebook mode {mode!r}")
    return Codebook(
        m_codewords=M, n=n, symbols=labels[idx].astype(np.int32),
        composition_mode=mode, seed=seed,
    )


# ---------------------------------------------------------------------------
# flat key = value config files
# ---------------------------------------------------------------------------


def parse_kv_config(text: str) -> dict:
    """Parse the flat ``key = value`` scheme-config format (\"#\" comments)."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, val = line.split("=", 1)
        out[key.strip()] = val.strip()
    return out


def format_kv_config(cfg: dict) -> str:
    return "\n".join(f"{k} = {v}" for k, v in cfg.items()) + "\n"
