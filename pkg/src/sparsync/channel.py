"""Channel model and information-measure primitives.

A channel is a finite-alphabet transition matrix with one designated idle
input (the "star" row): the transmitter emits the idle symbol whenever it is
not sending a codeword, so the receiver sees i.i.d. noise distributed as the
star row outside the codeword window.

All information quantities are in nats. Probabilities below ``TINY_PROB``
are treated as exact zeros inside logarithms, and impossible events are
reported through explicit ``+inf`` / ``-inf`` sentinels rather than NaNs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc, erfcinv

from .errors import (
    BadStarIndex,
    DomainError,
    LengthMismatch,
    RowNotStochastic,
    SupportViolation,
    UnreachableOutput,
)

TINY_PROB = 1e-300
ROW_SUM_TOL = 1e-12
PARSE_ROW_TOL = 1e-9


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Dist:
    """Probability vector over a finite alphabet."""

    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        p.setflags(write=False)
        object.__setattr__(self, "p", p)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("Dist requires a nonempty 1-d vector")
        if np.any(p < 0):
            raise ValueError("negative probability entry")
        if abs(float(p.sum()) - 1.0) > ROW_SUM_TOL:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")

    def __len__(self):
        return self.p.size

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.p > 0.0)


@dataclass(frozen=True)
class Dmc:
    """Discrete memoryless channel with an idle input.

    ``w[x, y]`` is the probability of output ``y`` given input ``x``;
    ``star`` indexes the idle row. Use :func:`validate_dmc` to construct.
    """

    w: np.ndarray
    star: int
    input_size: int = field(init=False)
    output_size: int = field(init=False)

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "input_size", w.shape[0])
        object.__setattr__(self, "output_size", w.shape[1])

    @property
    def data_inputs(self) -> np.ndarray:
        """Indices of the non-idle inputs, in row order."""
        return np.array([x for x in range(self.input_size) if x != self.star])

    @property
    def w_data(self) -> np.ndarray:
        """Transition rows of the non-idle inputs."""
        return self.w[self.data_inputs]

    @property
    def noise(self) -> np.ndarray:
        """Output law of the idle symbol."""
        return self.w[self.star]


def validate_dmc(w_matrix, star: int) -> Dmc:
    """Validate a transition matrix and designated idle row.

    Checks each row is a distribution (within ``ROW_SUM_TOL``), that every
    output is reachable from some input, and that ``star`` is a valid row
    index. Raises ``RowNotStochastic`` / ``UnreachableOutput`` /
    ``BadStarIndex``.
    """
    w = np.asarray(w_matrix, dtype=float)
    if w.ndim != 2 or w.shape[0] < 1 or w.shape[1] < 1:
        raise RowNotStochastic("transition matrix must be 2-d and nonempty")
    if np.any(w < 0):
        bad = np.argwhere(w < 0)[0]
        raise RowNotStochastic(f"negative entry at row {bad[0]}")
    sums = w.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)
    if bad.size:
        raise RowNotStochastic(f"row {bad[0]} sums to {sums[bad[0]]!r}")
    if np.any(w.max(axis=0) <= 0.0):
        y = int(np.flatnonzero(w.max(axis=0) <= 0.0)[0])
        raise UnreachableOutput(f"output {y} has zero probability under every input")
    if not (0 <= int(star) < w.shape[0]):
        raise BadStarIndex(f"star index {star} outside [0, {w.shape[0]})")
    return Dmc(w=w, star=int(star))


# ---------------------------------------------------------------------------
# information measures
# ---------------------------------------------------------------------------


def _as_vec(p) -> np.ndarray:
    return p.p if isinstance(p, Dist) else np.asarray(p, dtype=float)


def output_distribution(P, W: Dmc) -> Dist:
    """Output law induced by input distribution ``P`` through ``W``.

    ``P`` may cover the non-idle inputs only (length ``input_size - 1``,
    rows taken in data-input order) or the full input set.
    """
    p = _as_vec(P)
    if p.size == W.input_size:
        pw = p @ W.w
    elif p.size == W.input_size - 1:
        pw = p @ W.w_data
    else:
        raise LengthMismatch(
            f"input distribution of size {p.size} does not match channel with "
            f"{W.input_size} inputs"
        )
    pw = np.maximum(pw, 0.0)
    return Dist(pw / pw.sum())


def kl_divergence(P, Q) -> float:
    """Relative entropy D(P||Q) in nats; +inf when P puts mass where Q does not."""
    p, q = _as_vec(P), _as_vec(Q)
    if p.size != q.size:
        raise LengthMismatch("distribution sizes differ")
    mask = p > TINY_PROB
    if np.any(q[mask] <= TINY_PROB):
        return math.inf
    return float(np.sum(p[mask] * (np.log(p[mask]) - np.log(q[mask]))))


def divergence_variance(P, Q) -> float:
    """Variance of the log-likelihood ratio ln(P/Q) under P."""
    p, q = _as_vec(P), _as_vec(Q)
    if p.size != q.size:
        raise LengthMismatch("distribution sizes differ")
    mask = p > TINY_PROB
    if np.any(q[mask] <= TINY_PROB):
        raise SupportViolation("support(P) exceeds support(Q)")
    llr = np.log(p[mask]) - np.log(q[mask])
    d = float(np.sum(p[mask] * llr))
    return float(np.sum(p[mask] * (llr - d) ** 2))


def mutual_information(P, W: Dmc) -> float:
    """I(P, W) in nats for ``P`` over the non-idle inputs (or full input set)."""
    p = _as_vec(P)
    rows = W.w_data if p.size == W.input_size - 1 else W.w
    if p.size not in (W.input_size, W.input_size - 1):
        raise LengthMismatch("input distribution does not match channel")
    pw = output_distribution(p, W).p
    total = 0.0
    for px, row in zip(p, rows):
        if px > TINY_PROB:
            total += px * kl_divergence(row, pw)
    return max(total, 0.0)


def conditional_information_variance(P, W: Dmc) -> float:
    """V(P, W): input-averaged variance of the information density."""
    p = _as_vec(P)
    rows = W.w_data if p.size == W.input_size - 1 else W.w
    pw = output_distribution(p, W).p
    total = 0.0
    for px, row in zip(p, rows):
        if px > TINY_PROB:
            total += px * divergence_variance(row, pw)
    return total


# ---------------------------------------------------------------------------
# running log-likelihood accumulators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LlrState:
    """Running sum of per-symbol log-likelihood increments."""

    accumulated: float = 0.0
    length: int = 0


def noise_llr_increments(P, W: Dmc) -> np.ndarray:
    """Per-output increments ln(PW(y)/W(y|star)) of the signal-vs-noise statistic.

    Outputs impossible under noise map to +inf.
    """
    pw = output_distribution(P, W).p
    noise = W.noise
    out = np.full(W.output_size, math.inf)
    ok = noise > TINY_PROB
    zz = pw <= TINY_PROB
    out[ok] = np.log(np.maximum(pw[ok], TINY_PROB)) - np.log(noise[ok])
    out[ok & zz] = -math.inf
    return out


def noise_llr_step(state: LlrState, y: int, P, W: Dmc) -> LlrState:
    """Append output ``y`` to the running noise-vs-signal statistic r."""
    inc = noise_llr_increments(P, W)[y]
    return LlrState(accumulated=state.accumulated + inc, length=state.length + 1)


def information_density_increments(P, W: Dmc) -> np.ndarray:
    """Matrix of per-symbol increments ln(W(y|x)/PW(y)), -inf where W(y|x)=0.

    Rows are indexed by the full input alphabet (the star row is included so
    codeword symbols index directly).
    """
    pw = output_distribution(P, W).p
    out = np.full((W.input_size, W.output_size), -math.inf)
    ok = W.w > TINY_PROB
    logpw = np.log(np.maximum(pw, TINY_PROB))
    out[ok] = np.log(W.w[ok]) - np.broadcast_to(logpw, W.w.shape)[ok]
    return out


def information_density(x_seq, y_seq, P, W: Dmc) -> float:
    """i(x^k; y^k) = sum_k ln(W(y_k|x_k)/PW(y_k)); additive over concatenation."""
    xs = np.asarray(x_seq, dtype=int)
    ys = np.asarray(y_seq, dtype=int)
    if xs.size != ys.size:
        raise LengthMismatch(f"{xs.size} inputs vs {ys.size} outputs")
    if xs.size == 0:
        return 0.0
    inc = information_density_increments(P, W)
    vals = inc[xs, ys]
    if np.any(np.isneginf(vals)):
        return -math.inf
    return float(np.sum(vals))


# ---------------------------------------------------------------------------
# Gaussian tail
# ---------------------------------------------------------------------------


def q_function(x: float) -> float:
    """Standard Gaussian upper-tail probability Q(x)."""
    return 0.5 * erfc(x / math.sqrt(2.0))


def q_inverse(eps: float) -> float:
    """Inverse of :func:`q_function` on (0, 1).

    erfcinv seeds a Newton polish on Q itself so the pair is a two-sided
    identity to ~1e-12.
    """
    if not (0.0 < eps < 1.0):
        raise DomainError(f"q_inverse requires eps in (0,1), got {eps}")
    x = math.sqrt(2.0) * erfcinv(2.0 * eps)
    for _ in range(4):
        fx = q_function(x) - eps
        pdf = math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
        if pdf <= 0:
            break
        step = fx / pdf
        x += step
        if abs(step) < 1e-13 * max(1.0, abs(x)):
            break
    return x


# ---------------------------------------------------------------------------
# channel file format and constructors
# ---------------------------------------------------------------------------


def load_channel(path) -> Dmc:
    """Read the plain-text channel format.

    First line: ``inputs outputs star_index``; then one whitespace-separated
    row of W per input. Rows farther than 1e-9 from stochastic are rejected;
    accepted rows are renormalized exactly.
    """
    with open(path) as fh:
        tokens = fh.read().split()
    if len(tokens) < 3:
        raise RowNotStochastic("channel file too short")
    n_in, n_out, star = int(tokens[0]), int(tokens[1]), int(tokens[2])
    vals = np.array([float(t) for t in tokens[3:]], dtype=float)
    if vals.size != n_in * n_out:
        raise RowNotStochastic(
            f"expected {n_in * n_out} matrix entries, found {vals.size}"
        )
    w = vals.reshape(n_in, n_out)
    sums = w.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > PARSE_ROW_TOL)
    if bad.size:
        raise RowNotStochastic(f"row {bad[0]} sums to {sums[bad[0]]!r}")
    w = w / sums[:, None]
    return validate_dmc(w, star)


def save_channel(W: Dmc, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"{W.input_size} {W.output_size} {W.star}\n")
        for row in W.w:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def make_binary_channel(p: float, noise=(0.1, 0.9)) -> Dmc:
    """Binary-input channel (crossover ``p``) plus an idle row; star last."""
    w = np.array([[1.0 - p, p], [p, 1.0 - p], list(noise)])
    return validate_dmc(w, star=2)


def make_symmetric_channel(q: int, p: float, noise_mass: float = 0.01) -> Dmc:
    """q-ary symmetric data channel with an idle row parked on output 0.

    The idle row puts ``1 - noise_mass`` on output 0 and spreads the rest
    uniformly, so a single sampled output separates signal from idle noise
    with error probability about ``max(noise_mass, 1/q)``.
    """
    w = np.full((q + 1, q), p / (q - 1))
    idx = np.arange(q)
    w[idx, idx] = 1.0 - p
    w[q, :] = noise_mass / (q - 1)
    w[q, 0] = 1.0 - noise_mass
    return validate_dmc(w, star=q)


def make_additive_channel(level_sizes, level_logits, noise_support: int = 1,
                          noise_mass: float = 0.01) -> Dmc:
    """Cyclic additive-noise channel on Z_N with a leveled noise pmf.

    The data rows are cyclic shifts of one pmf ``mu`` over Z_N built from
    ``level_sizes`` (how many offsets share a level) and ``level_logits``
    (relative log-probabilities of one offset in each level, lattice-spaced
    logits give lattice-valued information densities). The idle row puts
    ``1 - noise_mass`` uniformly on the first ``noise_support`` outputs.

    The uniform input distribution is capacity-achieving (PW is uniform),
    which makes random-codeword statistics identical for every output
    window; the Monte Carlo engine exploits this family for implicit
    codebooks when the code size is too large to materialize.
    """
    sizes = np.asarray(level_sizes, dtype=int)
    logits = np.asarray(level_logits, dtype=float)
    if sizes.size != logits.size or np.any(sizes < 1):
        raise ValueError("level_sizes and level_logits must match, sizes >= 1")
    n = int(sizes.sum())
    per_offset = np.exp(logits - logits.max())
    mass = float(np.sum(sizes * per_offset))
    per_offset /= mass
    mu = np.repeat(per_offset, sizes)
    rows = np.empty((n + 1, n))
    for x in range(n):
        rows[x] = np.roll(mu, x)
    rows[n, :] = noise_mass / (n - noise_support)
    rows[n, :noise_support] = (1.0 - noise_mass) / noise_support
    return validate_dmc(rows, star=n)


def uniform_data_input(W: Dmc) -> Dist:
    return Dist(np.full(W.input_size - 1, 1.0 / (W.input_size - 1)))
