"""Constrained capacity, dispersion, and KKT verification.

The central problem: maximize I(P, W) over input distributions P on the
non-idle inputs subject to D(PW || W(.|star)) >= alpha. The feasible set is
the complement of a convex set, so the program is nonconvex; we attack it
with many projected-gradient starts under an exact penalty, then polish
stationary points by Newton's method on the KKT system restricted to a
support set, and finally gate every reported maximizer through an
independent least-squares KKT residual.

For small alphabets (<= ~12 non-idle inputs) the binding case additionally
enumerates every support subset, which in practice makes the solver exact;
an exhaustive simplex grid search is provided as an independent oracle.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .channel import (
    Dist,
    Dmc,
    kl_divergence,
    conditional_information_variance,
    mutual_information,
    output_distribution,
)
from .errors import Infeasible, NonConvergence

_SUPPORT_EPS = 1e-9
_TINY = 1e-300


@dataclass(frozen=True)
class CapacityResult:
    alpha: float
    c_alpha: float
    p_star: Dist
    constraint_value: float
    kkt_residual: float
    active: bool
    lam: float
    mu: float


@dataclass(frozen=True)
class DispersionResult:
    v_min: float
    v_max: float
    v_eps: float
    pi_alpha_samples: list


# ---------------------------------------------------------------------------
# per-candidate quantities (vectorized over a batch of P rows)
# ---------------------------------------------------------------------------


def _channel_parts(W: Dmc):
    rows = W.w_data
    noise = W.noise
    neg_h = np.sum(np.where(rows > 0, rows * np.log(np.maximum(rows, _TINY)), 0.0), axis=1)
    log_noise = np.log(np.maximum(noise, _TINY))
    noise_ok = noise > 0
    return rows, noise, neg_h, log_noise, noise_ok


def _batch_i_d(P: np.ndarray, rows, neg_h, log_noise, noise_ok):
    """I(P) and D(PW||noise) for each row of P. Infinite D where noise support fails."""
    pw = P @ rows
    logpw = np.log(np.maximum(pw, _TINY))
    h_out = -np.sum(np.where(pw > 0, pw * logpw, 0.0), axis=1)
    i_val = P @ neg_h + h_out
    d_val = np.where(
        np.any((pw > 1e-15) & ~noise_ok, axis=1),
        math.inf,
        -h_out - pw @ log_noise,
    )
    return i_val, d_val


def _ix_gx(p: np.ndarray, rows, log_noise):
    """Per-input relative entropies I_x = D(W_x||PW) and tilts g_x = sum_y W_xy ln(PW/noise)."""
    pw = p @ rows
    logpw = np.log(np.maximum(pw, _TINY))
    logw = np.log(np.maximum(rows, _TINY))
    ix = np.sum(np.where(rows > 0, rows * (logw - logpw[None, :]), 0.0), axis=1)
    gx = rows @ (logpw - log_noise)
    return ix, gx, pw


def _project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of each row of v onto the probability simplex."""
    u = np.sort(v, axis=1)[:, ::-1]
    css = np.cumsum(u, axis=1) - 1.0
    ind = np.arange(1, v.shape[1] + 1)
    cond = u - css / ind > 0
    rho = np.count_nonzero(cond, axis=1)
    theta = css[np.arange(len(v)), rho - 1] / rho
    return np.maximum(v - theta[:, None], 0.0)


# ---------------------------------------------------------------------------
# headline quantities
# ---------------------------------------------------------------------------


def sync_capacity(W: Dmc, tol: float = 1e-10, max_iter: int = 200_000):
    """Unconstrained capacity of the non-idle channel by Blahut-Arimoto.

    Iterates until successive capacity estimates differ by < ``tol``, then
    polishes the support by Newton so the equal-slope condition I_x = C
    holds to machine precision. Returns ``(C, p_bar)``.
    """
    rows, noise, neg_h, log_noise, noise_ok = _channel_parts(W)
    k = rows.shape[0]
    r = np.full(k, 1.0 / k)
    logw = np.log(np.maximum(rows, _TINY))
    converged = False
    for _ in range(max_iter):
        pw = r @ rows
        logpw = np.log(np.maximum(pw, _TINY))
        t = np.sum(np.where(rows > 0, rows * (logw - logpw), 0.0), axis=1)
        # duality gap certifies optimality; successive-change stopping can
        # fire during slow support transients on skewed channels
        c_up = float(np.max(t))
        c_low = float(r @ t)
        if c_up - c_low < 1e-7:
            # close enough for support identification; the Newton polish
            # below finishes to machine precision and certifies optimality
            converged = True
            break
        logr = np.log(np.maximum(r, _TINY)) + t
        logr -= logr.max()
        r = np.exp(logr)
        r /= r.sum()
    if not converged:
        raise NonConvergence("Blahut-Arimoto did not converge")
    support = r > 1e-10
    p = r
    for _ in range(3 * k + 3):
        polished = _newton_unconstrained(W, support, p)
        if polished is None:
            break
        p = polished
        ix, _, _ = _ix_gx(p, rows, log_noise)
        c_val = float(p @ ix)
        # drop boundary-pinned or strictly-dominated low-mass inputs (the
        # equal-slope system is unsolvable over a too-large support when
        # the output alphabet is smaller than the input alphabet)
        dead = support & ((p < 1e-9) | ((p < 1e-6) & (ix < c_val - 1e-9)))
        if np.any(dead) and support.sum() > int(dead.sum()):
            support = support & ~dead
            continue
        resid = float(np.max(np.abs(ix[support] - c_val)))
        if resid > 1e-9 and support.sum() > 1:
            j = int(np.flatnonzero(support)[np.argmin(ix[support])])
            support = support.copy()
            support[j] = False
            continue
        # off-support slope check: add any input whose slope beats C
        worst = ix - c_val
        worst[support] = -math.inf
        j = int(np.argmax(worst))
        if worst[j] <= 1e-10:
            break
        support = support.copy()
        support[j] = True
    ix, _, _ = _ix_gx(p, rows, log_noise)
    c_val = float(p @ ix)
    if float(np.max(ix)) - c_val > 1e-8:
        raise NonConvergence("capacity certificate failed after polish")
    i_val, _ = _batch_i_d(p[None, :], rows, neg_h, log_noise, noise_ok)
    return float(i_val[0]), Dist(p)


def alpha_bar(W: Dmc) -> float:
    """Divergence between the capacity-achieving output law and idle noise."""
    _, p_bar = sync_capacity(W)
    return kl_divergence(output_distribution(p_bar, W), W.noise)


def sync_threshold(W: Dmc) -> float:
    """Largest asynchronism exponent with reliable communication: max_x D(W_x||noise)."""
    best = 0.0
    for row in W.w_data:
        best = max(best, kl_divergence(row, W.noise))
    return best


# ---------------------------------------------------------------------------
# Newton polish on KKT systems
# ---------------------------------------------------------------------------


def _newton_unconstrained(W: Dmc, support, p0, iters: int = 60):
    """Solve I_x(P) = c on the support (lambda = 0 case). Returns P or None."""
    rows = W.w_data
    s = np.flatnonzero(support)
    if s.size == 0:
        return None
    if s.size == 1:
        p = np.zeros(rows.shape[0])
        p[s[0]] = 1.0
        return p
    p = np.maximum(p0.copy(), 0.0)
    p[~support] = 0.0
    if p[s].sum() <= 0:
        p[s] = 1.0
    p /= p.sum()
    log_noise = np.log(np.maximum(W.noise, _TINY))
    m = s.size

    def residual(pv):
        ix, _, pw = _ix_gx(pv, rows, log_noise)
        f = np.concatenate([ix[s] - ix[s].mean(), [pv[s].sum() - 1.0]])
        return f, ix, pw

    f, ix, pw = residual(p)
    for _ in range(iters):
        norm = float(np.max(np.abs(f)))
        if norm < 1e-13:
            break
        ratio = rows / np.maximum(pw, _TINY)
        gram = rows @ ratio.T  # G_{xx'} = sum_y W_xy W_x'y / PW_y
        jac = np.zeros((m + 1, m + 1))
        jac[:m, :m] = -gram[np.ix_(s, s)]
        jac[:m, m] = -1.0
        jac[m, :m] = 1.0
        try:
            step = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(jac, -f, rcond=None)
        if not np.all(np.isfinite(step)):
            return None
        damp = 1.0
        ok = False
        for _ in range(45):
            cand = p.copy()
            cand[s] = p[s] + damp * step[:m]
            cand = np.maximum(cand, 0.0)
            if cand[s].sum() > 0 and np.all(cand[s] >= 0.0):
                f_new, ix_n, pw_n = residual(cand)
                if float(np.max(np.abs(f_new))) <= (1.0 - 0.25 * damp) * norm:
                    ok = True
                    break
            damp *= 0.5
        if not ok:
            break
        p, f, ix, pw = cand, f_new, ix_n, pw_n
    return p


def _newton_binding(W: Dmc, alpha: float, support, p0, lam0: float, iters: int = 80):
    """Newton on the binding KKT system over a fixed support.

    Unknowns (P_S, lam, c); equations I_x - lam g_x - c = 0 on S,
    sum P = 1, D(PW||noise) = alpha. Returns (P, lam) or None.
    """
    rows = W.w_data
    log_noise = np.log(np.maximum(W.noise, _TINY))
    s = np.flatnonzero(support)
    m = s.size
    p = np.maximum(np.asarray(p0, dtype=float).copy(), 1e-12)
    p[np.setdiff1d(np.arange(rows.shape[0]), s)] = 0.0
    if p.sum() <= 0:
        return None
    p /= p.sum()
    def fvec(pv, lam, c):
        ix, gx, pw = _ix_gx(pv, rows, log_noise)
        dval = float(np.sum(np.where(pw > 0, pw * np.log(np.maximum(pw, _TINY)), 0.0))
                     - pw @ log_noise)
        return np.concatenate([ix[s] + lam * gx[s] - c,
                               [pv[s].sum() - 1.0],
                               [dval - alpha]]), ix, gx, pw

    # least-squares init of (lam, c) on the stationarity rows
    ix0, gx0, _ = _ix_gx(p, rows, log_noise)
    a_ls = np.stack([gx0[s], -np.ones(m)], axis=1)
    sol, *_ = np.linalg.lstsq(a_ls, -ix0[s], rcond=None)
    lam, c = float(sol[0]), float(sol[1])
    f, ix, gx, pw = fvec(p, lam, c)
    for _ in range(iters):
        norm = float(np.max(np.abs(f)))
        if norm < 1e-13:
            break
        ratio = rows / np.maximum(pw, _TINY)
        gram = rows @ ratio.T
        jac = np.zeros((m + 2, m + 2))
        jac[:m, :m] = -(1.0 - lam) * gram[np.ix_(s, s)]
        jac[:m, m] = gx[s]
        jac[:m, m + 1] = -1.0
        jac[m, :m] = 1.0
        jac[m + 1, :m] = gx[s] + 1.0
        try:
            step = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(jac, -f, rcond=None)
        if not np.all(np.isfinite(step)):
            return None
        damp = 1.0
        ok = False
        for _ in range(40):
            cand = p.copy()
            cand[s] = p[s] + damp * step[:m]
            if np.all(cand[s] > 0.0):
                f_new, ix_n, gx_n, pw_n = fvec(cand, lam + damp * step[m],
                                               c + damp * step[m + 1])
                if float(np.max(np.abs(f_new))) <= (1.0 - 0.25 * damp) * norm:
                    ok = True
                    break
            damp *= 0.5
        if not ok:
            break
        p, lam, c = cand, lam + damp * step[m], c + damp * step[m + 1]
        f, ix, gx, pw = f_new, ix_n, gx_n, pw_n
        if not np.isfinite(lam):
            return None
    if float(np.max(np.abs(f))) > 1e-9 or lam < -1e-8:
        return None
    return p, max(lam, 0.0)


# ---------------------------------------------------------------------------
# KKT residual (independent verification path)
# ---------------------------------------------------------------------------


def kkt_residual(W: Dmc, alpha: float, P) -> tuple:
    """Least-squares multiplier fit and worst violation of the KKT conditions.

    Fits lambda >= 0 over the support stationarity equations, derives mu,
    and reports the max violation over support stationarity, off-support
    slope bound, and complementary slackness. Returns
    ``(residual, (lam, mu))``.
    """
    rows, noise, neg_h, log_noise, noise_ok = _channel_parts(W)
    p = P.p if isinstance(P, Dist) else np.asarray(P, dtype=float)
    i_val, d_val = _batch_i_d(p[None, :], rows, neg_h, log_noise, noise_ok)
    c_val, d_here = float(i_val[0]), float(d_val[0])
    ix, gx, _ = _ix_gx(p, rows, log_noise)
    support = p > _SUPPORT_EPS
    a = gx[support] - alpha
    b = c_val - ix[support]
    denom = float(a @ a)
    lam = max(float(a @ b) / denom, 0.0) if denom > 1e-30 else 0.0
    if math.isinf(d_here):
        lam = 0.0
    resid = float(np.max(np.abs(ix[support] - (c_val - lam * (gx[support] - alpha)))))
    off = ~support
    if np.any(off):
        viol = ix[off] - (c_val - lam * (gx[off] - alpha))
        resid = max(resid, float(np.max(np.maximum(viol, 0.0))))
    slack = 0.0 if math.isinf(d_here) else abs(lam * (d_here - alpha))
    resid = max(resid, slack)
    mu = c_val - 1.0 + lam * (alpha + 1.0)
    return resid, (lam, mu)


def pw_positivity_check(W: Dmc, P) -> bool:
    """True iff the induced output law is strictly positive everywhere."""
    pw = output_distribution(P, W).p
    return bool(np.min(pw) > 0.0)


# ---------------------------------------------------------------------------
# the constrained solver
# ---------------------------------------------------------------------------


def _multistart_candidates(W: Dmc, alpha: float, n_starts: int, seed: int,
                           pg_iters: int) -> np.ndarray:
    rows, noise, neg_h, log_noise, noise_ok = _channel_parts(W)
    k = rows.shape[0]
    rng = np.random.default_rng(seed)
    _, p_bar = sync_capacity(W)
    starts = [p_bar.p]
    # divergence-maximizing vertex and pushed mixtures reach the binding branch
    div = np.array([kl_divergence(row, noise) for row in rows])
    div = np.where(np.isfinite(div), div, np.max(div[np.isfinite(div)], initial=1.0) * 10)
    order = np.argsort(-div)
    for x in range(k):
        e = np.zeros(k)
        e[x] = 1.0
        starts.append(e)
        for theta in (0.25, 0.5, 0.75, 0.95):
            starts.append((1 - theta) * p_bar.p + theta * e)
    while len(starts) < n_starts:
        starts.append(rng.dirichlet(np.ones(k)))
    P = np.array(starts)

    kappa = 50.0
    for it in range(pg_iters):
        pw = P @ rows
        logpw = np.log(np.maximum(pw, _TINY))
        logw = np.log(np.maximum(rows, _TINY))
        ix_b = np.einsum("xy,sy->sx", rows, -logpw) + np.sum(
            np.where(rows > 0, rows * logw, 0.0), axis=1
        )
        gx_b = np.einsum("xy,sy->sx", rows, logpw - log_noise)
        _, d_b = _batch_i_d(P, rows, neg_h, log_noise, noise_ok)
        grad = ix_b.copy()
        infeas = d_b < alpha
        if np.any(infeas):
            push = 2.0 * kappa * np.maximum(alpha - d_b[infeas], 0.0)
            grad[infeas] += push[:, None] * (gx_b[infeas] + 1.0)
        step = 0.5 / math.sqrt(it + 4.0)
        P = _project_simplex(P + step * grad)
    return P


def _feasibility_polish(W: Dmc, alpha: float, p: np.ndarray) -> np.ndarray | None:
    """Mix toward the most divergent vertex until D(PW||noise) >= alpha."""
    rows, noise, neg_h, log_noise, noise_ok = _channel_parts(W)
    _, d = _batch_i_d(p[None, :], rows, neg_h, log_noise, noise_ok)
    if d[0] >= alpha:
        return p
    div = np.array([kl_divergence(row, noise) for row in rows])
    xstar = int(np.argmax(div))
    if div[xstar] < alpha:
        return None
    e = np.zeros_like(p)
    e[xstar] = 1.0
    lo, hi = 0.0, 1.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        cand = (1 - mid) * p + mid * e
        _, d = _batch_i_d(cand[None, :], rows, neg_h, log_noise, noise_ok)
        if d[0] >= alpha:
            hi = mid
        else:
            lo = mid
    return (1 - hi) * p + hi * e


def _solve_candidates(W: Dmc, alpha: float, n_starts: int = 64, seed: int = 12345,
                      pg_iters: int = 300):
    """All polished feasible stationary candidates, best first."""
    rows, noise, neg_h, log_noise, noise_ok = _channel_parts(W)
    k = rows.shape[0]
    athr = sync_threshold(W)
    if alpha >= athr:
        raise Infeasible(
            f"alpha={alpha} is not below the synchronization threshold {athr}"
        )
    abar = alpha_bar(W)
    cands = []

    c_sync, p_bar = sync_capacity(W)
    if alpha <= abar + 1e-12:
        cands.append(p_bar.p)

    P = _multistart_candidates(W, alpha, n_starts, seed, pg_iters)
    for p in P:
        p2 = _feasibility_polish(W, alpha, p)
        if p2 is None:
            continue
        support = p2 > 1e-7
        resid, (lam0, _) = kkt_residual(W, alpha, p2 / p2.sum())
        out = _newton_binding(W, alpha, support, p2, lam0)
        if out is not None:
            pn, _ = out
            _, d = _batch_i_d(pn[None, :], rows, neg_h, log_noise, noise_ok)
            if d[0] >= alpha - 1e-9:
                cands.append(pn)
        un = _newton_unconstrained(W, support, p2)
        if un is not None:
            _, d = _batch_i_d(un[None, :], rows, neg_h, log_noise, noise_ok)
            if d[0] >= alpha - 1e-9:
                cands.append(un)
        cands.append(p2)

    # small alphabets: enumerate supports exhaustively on the binding branch
    if k <= 12 and alpha > abar:
        for r in range(1, k + 1):
            for s in itertools.combinations(range(k), r):
                mask = np.zeros(k, dtype=bool)
                mask[list(s)] = True
                p0 = mask / mask.sum()
                out = _newton_binding(W, alpha, mask, p0, 1.0)
                if out is not None:
                    pn, _ = out
                    _, d = _batch_i_d(pn[None, :], rows, neg_h, log_noise, noise_ok)
                    if d[0] >= alpha - 1e-9:
                        cands.append(pn)
                un = _newton_unconstrained(W, mask, p0)
                if un is not None:
                    _, d = _batch_i_d(un[None, :], rows, neg_h, log_noise, noise_ok)
                    if d[0] >= alpha - 1e-9:
                        cands.append(un)

    if not cands:
        raise NonConvergence("no feasible candidate found")
    P = np.array(cands)
    i_val, d_val = _batch_i_d(P, rows, neg_h, log_noise, noise_ok)
    order = np.argsort(-i_val)
    return P[order], i_val[order], d_val[order]


def async_capacity(W: Dmc, alpha: float, n_starts: int = 64, seed: int = 12345) -> CapacityResult:
    """Capacity under asynchronism exponent ``alpha``.

    Multi-start projected gradient with an exact penalty, feasibility
    polish, Newton refinement, and a KKT-residual acceptance gate; only
    feasible iterates are reported.
    """
    if alpha < 0:
        raise Infeasible("alpha must be nonnegative")
    P, ivals, dvals = _solve_candidates(W, alpha, n_starts=n_starts, seed=seed)
    p = P[0]
    resid, (lam, mu) = kkt_residual(W, alpha, p)
    abar = alpha_bar(W)
    active = bool(alpha > abar + 1e-12)
    return CapacityResult(
        alpha=float(alpha),
        c_alpha=float(ivals[0]),
        p_star=Dist(p),
        constraint_value=float(dvals[0]),
        kkt_residual=float(resid),
        active=active,
        lam=float(lam),
        mu=float(mu),
    )


def dispersion(W: Dmc, alpha: float, eps: float, tie_tol: float = 1e-6,
               tv_radius: float = 1e-4, n_starts: int = 64, seed: int = 12345) -> DispersionResult:
    """Dispersion extremes over the set of constrained capacity achievers.

    Collects all multi-start maximizers within ``tie_tol`` nats of the
    optimum, deduplicates by total-variation radius, and takes V(P, W)
    extremes; ``v_eps`` follows the below/above-one-half convention.
    """
    P, ivals, dvals = _solve_candidates(W, alpha, n_starts=n_starts, seed=seed)
    best = ivals[0]
    members = []
    for p, iv in zip(P, ivals):
        if iv < best - tie_tol:
            break
        if all(0.5 * np.abs(p - q.p).sum() > tv_radius for q in members):
            members.append(Dist(p))
    vs = [conditional_information_variance(m, W) for m in members]
    v_min, v_max = float(min(vs)), float(max(vs))
    v_eps = v_min if eps < 0.5 else v_max
    return DispersionResult(v_min=v_min, v_max=v_max, v_eps=v_eps, pi_alpha_samples=members)


# ---------------------------------------------------------------------------
# exhaustive grid oracle (independent of the solver path)
# ---------------------------------------------------------------------------


class GridCache:
    """Precomputed I and D over a simplex grid for one channel."""

    def __init__(self, W: Dmc, step: float = 1e-3):
        self.W = W
        self.step = step
        rows, noise, neg_h, log_noise, noise_ok = _channel_parts(W)
        self._parts = (rows, neg_h, log_noise, noise_ok)
        self.P = _simplex_grid(rows.shape[0], int(round(1.0 / step)))
        self.I, self.D = _batch_i_d(self.P, rows, neg_h, log_noise, noise_ok)

    def refine(self, center: np.ndarray, radius: float, per_axis: int = 21):
        rows, neg_h, log_noise, noise_ok = self._parts
        k = rows.shape[0]
        axes = [np.linspace(max(c - radius, 0.0), min(c + radius, 1.0), per_axis)
                for c in center[:-1]]
        mesh = np.meshgrid(*axes, indexing="ij") if k > 1 else [np.array([1.0])]
        flat = np.stack([m.ravel() for m in mesh], axis=1) if k > 1 else np.ones((1, 0))
        last = 1.0 - flat.sum(axis=1)
        ok = last >= -1e-12
        P = np.concatenate([flat[ok], np.maximum(last[ok], 0.0)[:, None]], axis=1)
        I, D = _batch_i_d(P, rows, neg_h, log_noise, noise_ok)
        return P, I, D


def _simplex_grid(k: int, steps: int) -> np.ndarray:
    """All probability vectors on the k-simplex with denominator ``steps``."""
    if k == 1:
        return np.ones((1, 1))
    if k == 2:
        a = np.arange(steps + 1) / steps
        return np.stack([a, 1.0 - a], axis=1)
    if k == 3:
        i, j = np.meshgrid(np.arange(steps + 1), np.arange(steps + 1), indexing="ij")
        mask = i + j <= steps
        i, j = i[mask], j[mask]
        return np.stack([i, j, steps - i - j], axis=1) / steps
    raise NotImplementedError("grid oracle supports up to 3 non-idle inputs")


def grid_search_capacity(W: Dmc, alpha: float, step: float = 1e-3,
                         refine_rounds: int = 3, cache: GridCache | None = None):
    """Exhaustive feasible-grid maximum of I(P, W), then local refinement.

    Independent oracle for small alphabets: never calls the solver path.
    The refinement boxes must out-span one coarse cell because the
    divergence boundary can leave sub-cell feasible slivers. Returns
    ``(value, P)``.
    """
    if cache is None or cache.step != step:
        cache = GridCache(W, step)
    feas = cache.D >= alpha - 1e-12
    if not np.any(feas):
        raise Infeasible(f"no grid point satisfies the divergence constraint at {alpha}")
    idx = np.argmax(np.where(feas, cache.I, -math.inf))
    best_p = cache.P[idx]
    best_i = cache.I[idx]
    radius = 5.0 * step
    for _ in range(refine_rounds):
        P, I, D = cache.refine(best_p, radius, per_axis=51)
        feas = D >= alpha - 1e-12
        if np.any(feas):
            j = np.argmax(np.where(feas, I, -math.inf))
            if I[j] > best_i:
                best_i, best_p = I[j], P[j]
        radius /= 5.0
    return float(best_i), best_p
