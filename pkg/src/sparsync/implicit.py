"""Implicit random codebooks for shift-symmetric channels.

The finite-length code-size formulas regularly produce codebooks with
e^100+ words, far beyond anything that can be materialized. For channels
whose non-idle rows are cyclic shifts of one pmf and whose input
distribution is uniform, the only codebook statistics a decoder ever
observes are exactly computable:

* the information density of a random codeword against ANY output window is
  distributed as a sum of i.i.d. increments ln(N * mu(U)), U uniform, so the
  probability that one codeword clears a threshold is the same for every
  window and every time; and
* the number of other codewords clearing the threshold in a window is
  Binomial(M-1, p_tail), sampled as Poisson when M is large.

The tail probability is computed exactly (to float precision) by an
exponentially tilted lattice convolution; the channel constructors emit
lattice-valued increments by design, and a lattice is detected, never
assumed. Trials draw a fresh transmitted codeword each time, so the
estimator targets the random-coding ensemble average, which is what the
closed-form code-size guarantees bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .channel import Dmc
from .errors import OutOfMemory

_LATTICE_TOL = 1e-9
_MAX_LATTICE_STATES = 1 << 22


def cyclic_profile(W: Dmc, tol: float = 1e-12):
    """Return the shift pmf ``mu`` if every non-idle row is a cyclic shift
    of row 0 over a square data alphabet, else None."""
    rows = W.w_data
    k, m = rows.shape
    if k != m:
        return None
    mu = rows[0]
    for x in range(1, k):
        if not np.allclose(rows[x], np.roll(mu, x), rtol=0.0, atol=tol):
            return None
    return mu


def is_uniform(p: np.ndarray, tol: float = 1e-9) -> bool:
    return bool(np.max(np.abs(p - 1.0 / p.size)) <= tol)


@dataclass(frozen=True)
class IncrementLattice:
    """Finite support of the random-codeword information-density increment.

    ``values[i]`` occurs with probability ``probs[i]``; ``miss`` is the
    probability of a -inf increment (offsets with mu = 0). Values lie on
    ``origin + step * index`` exactly within the detection tolerance.
    """

    values: np.ndarray
    probs: np.ndarray
    miss: float
    origin: float
    step: float
    index: np.ndarray


def increment_lattice(W: Dmc) -> IncrementLattice | None:
    mu = cyclic_profile(W)
    if mu is None:
        return None
    n = mu.size
    pos = mu > 0.0
    miss = float(np.sum(~pos)) / n
    vals, counts = np.unique(np.round(np.log(mu[pos] * n), 15), return_counts=True)
    probs = counts.astype(float) / n
    if vals.size == 1:
        return IncrementLattice(vals, probs, miss, float(vals[0]), 1.0,
                                np.zeros(1, dtype=np.int64))
    diffs = np.diff(vals)
    step = float(np.min(diffs))
    ratio = (vals - vals[0]) / step
    idx = np.round(ratio)
    if np.max(np.abs(ratio - idx)) > _LATTICE_TOL:
        return None
    return IncrementLattice(vals, probs, miss, float(vals[0]), step,
                            idx.astype(np.int64))


def _kappa(theta: float, z: np.ndarray, q: np.ndarray) -> float:
    m = np.max(theta * z)
    return m + math.log(float(np.sum(q * np.exp(theta * z - m))))


def log_tail_probability(lat: IncrementLattice, w: int, gamma: float) -> float:
    """ln P(sum of w i.i.d. increments >= gamma), exact lattice convolution.

    Works in an exponentially tilted measure so float64 carries the tail:
    p = sum_{s >= gamma} P_tilt(s) * exp(-theta s + w kappa(theta)); the
    log keeps rates meaningful when the notional codebook is e^hundreds.
    """
    z, q = lat.values, lat.probs
    zmax = float(z[-1])
    if gamma > w * zmax + 1e-12:
        return -math.inf
    if z.size == 1:
        return w * math.log(float(q[0]))
    mean = float(np.sum(q * z) / np.sum(q))
    theta = 0.0
    if gamma > w * mean:
        lo, hi = 0.0, 1.0
        target = gamma / w
        # kappa'(theta) is increasing; bracket then bisect
        def kprime(th):
            e = q * np.exp(th * z - np.max(th * z))
            return float(np.sum(e * z) / np.sum(e))
        while kprime(hi) < target and hi < 512:
            hi *= 2.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if kprime(mid) < target:
                lo = mid
            else:
                hi = mid
        theta = 0.5 * (lo + hi)
    kap = _kappa(theta, z, q)
    tilted = q * np.exp(theta * z - kap)

    size = int(lat.index[-1]) * w + 1
    if size > _MAX_LATTICE_STATES:
        raise OutOfMemory(f"lattice convolution needs {size} states")
    base = np.zeros(int(lat.index[-1]) + 1)
    np.add.at(base, lat.index, tilted)
    # poly^w by square-and-multiply under the tilted measure
    result = np.array([1.0])
    powp = base
    e = w
    while e:
        if e & 1:
            result = fftconvolve(result, powp)
            np.maximum(result, 0.0, out=result)
        e >>= 1
        if e:
            powp = fftconvolve(powp, powp)
            np.maximum(powp, 0.0, out=powp)
    support = lat.origin * w + lat.step * np.arange(result.size)
    keep = support >= gamma - 1e-9
    if not np.any(keep):
        return -math.inf
    logs = np.full(result.size, -math.inf)
    pos = result > 0.0
    logs[pos] = np.log(result[pos]) - theta * support[pos] + w * kap
    sel = logs[keep]
    mx = float(np.max(sel))
    if mx == -math.inf:
        return -math.inf
    return float(min(mx + math.log(np.sum(np.exp(sel - mx))), 0.0))


def tail_probability(lat: IncrementLattice, w: int, gamma: float) -> float:
    return math.exp(log_tail_probability(lat, w, gamma))


@dataclass(frozen=True)
class ImplicitCodebook:
    """Codebook too large to materialize, represented by its statistics.

    ``collider_rate(w, gamma)`` gives the expected number of non-sent
    codewords clearing gamma on any length-w window (computed in the log
    domain: the codebook may notionally hold e^hundreds of words); the
    engine draws the realized count per tested window as Poisson.
    """

    ln_m: float
    m_codewords: int          # operational integer, clamped to 2^62
    n: int
    lattice: IncrementLattice

    def collider_rate(self, w: int, gamma: float) -> float:
        log_rate = self.ln_m + log_tail_probability(self.lattice, w, gamma)
        if log_rate > 50.0:
            return math.exp(50.0)   # saturated; the engine treats it as certain
        return math.exp(log_rate)


def make_implicit_codebook(W: Dmc, P, ln_m: float, n: int) -> ImplicitCodebook:
    p = P.p if hasattr(P, "p") else np.asarray(P, dtype=float)
    lat = increment_lattice(W)
    if lat is None or not is_uniform(p):
        raise OutOfMemory(
            "code size too large to materialize and the channel/input pair is "
            "not shift-symmetric with uniform input, so no implicit codebook "
            "is available"
        )
    m_int = int(math.floor(math.exp(min(ln_m, 42.0))))
    if ln_m > 42.0:
        m_int = 2 ** 62
    return ImplicitCodebook(ln_m=float(ln_m), m_codewords=m_int, n=n, lattice=lat)
