"""Monte Carlo engine, sweeps, code-size bisection, and second-order fits.

Determinism contract: every trial's randomness derives from
(root_seed, trial_index) only, so runs are reproducible per configuration,
resumable, and order-independent; aggregation sorts by trial index
implicitly because counters are associative and trials are deterministic.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .capacity import async_capacity, dispersion
from .channel import Dmc, load_channel, uniform_data_input
from .decoders import classify_outcome, decode, make_context
from .errors import ConfigError, FitDiverged, NoFeasibleM
from .implicit import make_implicit_codebook
from .scheme import (
    DEFAULT_CODEBOOK_CELL_CAP,
    DEFAULT_MAX_WINDOW,
    REGIME_FULL_SAMPLING,
    REGIME_MIN_DELAY,
    REGIME_SMALL_DELAY,
    SchemeParams,
    build_full_sampling_params,
    build_min_delay_params,
    build_small_delay_params,
    generate_codebook,
    parse_kv_config,
    with_code_size,
)
from .timeline import default_policy, new_trial

EVENT_KEYS = ("e_i", "e_ii", "e_iii", "e_iv", "e_v", "e1", "e2")

CSV_COLUMNS = (
    "regime", "n", "alpha", "eps", "rho", "f", "trials", "root_seed",
    "m_codewords", "ln_m", "gamma", "block_len", "ladder",
    "delta", "delta1", "delta2", "d",
    "p_e_i", "p_e_i_lo", "p_e_i_hi",
    "p_e_ii", "p_e_ii_lo", "p_e_ii_hi",
    "p_e_iii", "p_e_iii_lo", "p_e_iii_hi",
    "p_e_iv", "p_e_iv_lo", "p_e_iv_hi",
    "p_e_v", "p_e_v_lo", "p_e_v_hi",
    "p_e1", "p_e1_lo", "p_e1_hi",
    "p_e2", "p_e2_lo", "p_e2_hi",
    "mean_delay", "mean_sampling_rate", "forced_random_rate",
    "e1_in_e2_violations",
    "bound_e_i", "bound_e_ii", "bound_e_iii", "bound_e_iv", "bound_e_v",
)


def wilson_interval(k: int, n: int, z: float = 1.959963984540054):
    """95% Wilson score interval for a binomial proportion."""
    if n == 0:
        return 0.0, 1.0
    if k == 0:
        phat = 0.0
    phat = k / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (phat + z2 / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z2 / (4 * n * n)) / denom
    lo = 0.0 if k == 0 else max(center - half, 0.0)
    hi = 1.0 if k == n else min(center + half, 1.0)
    return lo, hi


@dataclass
class ExperimentConfig:
    """One Monte Carlo cell; mirrors the flat key=value config format."""

    channel: str                    # path to a channel file
    regime: str                     # min_delay | full_sampling | small_delay
    n: int
    alpha: float
    eps: float = 0.1
    f: float | None = None          # sampling budget: rho = f/n (multiphase)
    delta: float = 0.25
    delta1: float = 0.2
    delta2: float | None = 0.2
    gamma_mode: str = "rate"
    m: int | None = None
    trials: int = 1000
    root_seed: int = 1
    d: int | None = None            # delay constraint; defaults per regime
    max_window: int = DEFAULT_MAX_WINDOW
    codebook_mode: str = "iid"
    codebook_seed: int = 0
    codebook_cell_cap: int = DEFAULT_CODEBOOK_CELL_CAP
    block_len_override: int | None = None
    ladder_round: str = "ceil"
    align: str = "suffix"
    all_messages: bool = False
    berry_esseen: float = 0.56
    dump_trials: str | None = None
    raw: dict = field(default_factory=dict)   # verbatim config echo

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            raw = parse_kv_config(fh.read())
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        def get(key, conv, default=None):
            if key not in raw or raw[key] == "":
                return default
            return conv(raw[key])

        try:
            cfg = cls(
                channel=raw["channel"],
                regime=raw["regime"],
                n=int(raw["n"]),
                alpha=float(raw["alpha"]),
                eps=get("eps", float, 0.1),
                f=get("f", float),
                delta=get("delta", float, 0.25),
                delta1=get("delta1", float, 0.2),
                delta2=get("delta2", float, 0.2),
                gamma_mode=get("gamma_mode", str, "rate"),
                m=get("m", int),
                trials=get("trials", int, 1000),
                root_seed=get("root_seed", int, 1),
                d=get("d", int),
                max_window=get("max_window", int, DEFAULT_MAX_WINDOW),
                codebook_mode=get("codebook_mode", str, "iid"),
                codebook_seed=get("codebook_seed", int, 0),
                codebook_cell_cap=get("codebook_cell_cap", int, DEFAULT_CODEBOOK_CELL_CAP),
                block_len_override=get("block_len_override", int),
                ladder_round=get("ladder_round", str, "ceil"),
                align=get("align", str, "suffix"),
                all_messages=get("all_messages", lambda s: s.lower() == "true", False),
                berry_esseen=get("berry_esseen", float, 0.56),
                dump_trials=get("dump_trials", str),
                raw=dict(raw),
            )
        except KeyError as exc:
            raise ConfigError(f"missing config key {exc}") from exc
        if cfg.trials < 1:
            raise ConfigError("trials must be >= 1")
        if cfg.regime not in ("min_delay", "full_sampling", "small_delay"):
            raise ConfigError(f"unknown regime {cfg.regime!r}")
        return cfg


_REGIME_MAP = {
    "min_delay": REGIME_MIN_DELAY,
    "full_sampling": REGIME_FULL_SAMPLING,
    "small_delay": REGIME_SMALL_DELAY,
}


def build_scheme(cfg: ExperimentConfig, W: Dmc, P=None) -> SchemeParams:
    """Construct the scheme a config describes (solving capacity if needed)."""
    P = uniform_data_input(W) if P is None else P
    cap = disp = None
    if cfg.gamma_mode == "code_size" and cfg.m is None:
        cap = async_capacity(W, cfg.alpha)
        disp = dispersion(W, cfg.alpha, cfg.eps)
    common = dict(
        M=cfg.m, gamma_mode=cfg.gamma_mode, eps=cfg.eps,
        berry_esseen=cfg.berry_esseen, cap_result=cap, disp_result=disp,
        max_window=cfg.max_window,
    )
    if cfg.regime == "full_sampling":
        if cap is None and cfg.m is None:
            cap = async_capacity(W, cfg.alpha)
            disp = dispersion(W, cfg.alpha, cfg.eps)
        return build_full_sampling_params(
            W, P, cfg.n, cfg.alpha, cfg.eps, cfg.delta1,
            berry_esseen=cfg.berry_esseen, M=cfg.m, cap_result=cap,
            disp_result=disp, max_window=cfg.max_window,
        )
    if cfg.f is None:
        raise ConfigError("multiphase regimes require the sampling parameter f")
    builder = build_min_delay_params if cfg.regime == "min_delay" else build_small_delay_params
    return builder(
        W, P, cfg.n, cfg.alpha, cfg.f, cfg.delta, cfg.delta1, cfg.delta2,
        block_len_override=cfg.block_len_override, ladder_round=cfg.ladder_round,
        **common,
    )


def make_codebook_for(cfg: ExperimentConfig, params: SchemeParams, W: Dmc):
    """Materialize when it fits; otherwise fall back to the implicit ensemble."""
    m, n = params.m_codewords, params.n
    if params.ln_m <= 42.0 and m * n <= cfg.codebook_cell_cap:
        return generate_codebook(params.p, n, m, cfg.codebook_mode,
                                 seed=cfg.codebook_seed, input_labels=W.data_inputs,
                                 max_cells=cfg.codebook_cell_cap)
    return make_implicit_codebook(W, params.p, params.ln_m, n)


@dataclass
class SweepRow:
    config: dict
    params: dict
    trials: int
    counts: dict
    intervals: dict
    mean_delay: float
    mean_sampling_rate: float
    forced_random_rate: float
    e1_in_e2_violations: int
    wall_time_s: float
    bounds: dict = field(default_factory=dict)

    def p_hat(self, key: str) -> float:
        return self.counts[key] / self.trials

    def to_csv_fields(self) -> list:
        c, p = self.config, self.params
        vals = [
            p["regime"], p["n"], p["alpha"], p["eps"], p["rho"], p["f"],
            self.trials, c.get("root_seed", ""), p["m_codewords"], p["ln_m"], p["gamma"],
            p["block_len"], "|".join(str(v) for v in p["ladder"]),
            p["delta"], p["delta1"], p["delta2"], p["d"],
        ]
        for key in EVENT_KEYS:
            lo, hi = self.intervals[key]
            vals += [self.counts[key] / self.trials, lo, hi]
        vals += [self.mean_delay, self.mean_sampling_rate,
                 self.forced_random_rate, self.e1_in_e2_violations]
        vals += [self.bounds.get(k, math.inf) for k in
                 ("E_I", "E_II", "E_III", "E_IV", "E_V")]
        return vals


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def run_monte_carlo(cfg: ExperimentConfig, W: Dmc | None = None,
                    params: SchemeParams | None = None, codebook=None,
                    message_override: int | None = None) -> SweepRow:
    """Run ``cfg.trials`` independent trials and aggregate one sweep row.

    The transmitted message is drawn uniformly per trial by default (the
    random-coding ensemble is message-symmetric); ``all_messages`` runs a
    per-message batch and keeps worst-case event frequencies.
    """
    t0 = time.time()
    W = load_channel(cfg.channel) if W is None else W
    params = build_scheme(cfg, W) if params is None else params
    codebook = make_codebook_for(cfg, params, W) if codebook is None else codebook
    if cfg.all_messages:
        if params.m_codewords > 64:
            raise ConfigError("all_messages mode supports at most 64 codewords")
        rows = [
            run_monte_carlo(
                _with(cfg, all_messages=False), W, params, codebook, message_override=m
            )
            for m in range(1, params.m_codewords + 1)
        ]
        worst = max(rows, key=lambda r: r.p_hat("e2"))
        counts = {k: max(r.counts[k] for r in rows) for k in EVENT_KEYS}
        return SweepRow(
            config=worst.config, params=worst.params, trials=rows[0].trials,
            counts=counts,
            intervals={k: wilson_interval(counts[k], rows[0].trials) for k in EVENT_KEYS},
            mean_delay=float(np.mean([r.mean_delay for r in rows])),
            mean_sampling_rate=float(np.mean([r.mean_sampling_rate for r in rows])),
            forced_random_rate=float(np.mean([r.forced_random_rate for r in rows])),
            e1_in_e2_violations=sum(r.e1_in_e2_violations for r in rows),
            wall_time_s=time.time() - t0,
            bounds=worst.bounds,
        )

    from .expansion import evaluate_analytic_bounds
    bound_report = evaluate_analytic_bounds(params)
    ctx = make_context(W, params, codebook, align=cfg.align)
    policy = default_policy(params)
    d = cfg.d if cfg.d is not None else params.d_bound
    rho = params.rho
    counts = {k: 0 for k in EVENT_KEYS}
    delay_sum = 0.0
    rate_sum = 0.0
    forced = 0
    violations = 0
    dump = open(cfg.dump_trials, "w") if cfg.dump_trials else None
    m_for_draw = None
    for i in range(cfg.trials):
        tr = new_trial(params, policy, cfg.root_seed, i, m_for_draw=m_for_draw)
        if message_override is not None:
            tr.message = message_override
        res = decode(ctx, tr)
        lab = classify_outcome(res, tr, params, d=d, rho=rho)
        for k, v in zip(EVENT_KEYS, lab.as_tuple()):
            counts[k] += v
        if lab.e1 and not lab.e2 and d >= params.n:
            violations += 1
        delay_sum += res.tau - tr.nu + 1
        rate_sum += res.samples_taken / res.tau
        forced += res.forced_random
        if dump:
            dump.write(json.dumps({
                "trial": i, "nu": tr.nu, "sigma": tr.sigma, "message": tr.message,
                "tau": res.tau, "samples": res.samples_taken,
                "decoded": res.decoded, "forced_random": res.forced_random,
                "events": [k for k, v in zip(EVENT_KEYS, lab.as_tuple()) if v],
            }) + "\n")
    if dump:
        dump.close()
    n_tr = cfg.trials
    return SweepRow(
        config=dict(cfg.raw) or _config_echo(cfg),
        params={
            "n": params.n, "alpha": params.alpha, "eps": cfg.eps, "rho": params.rho,
            "f": params.f_value, "m_codewords": params.m_codewords,
            "ln_m": params.ln_m, "gamma": params.gamma,
            "block_len": params.block_len, "ladder": list(params.ladder),
            "delta": params.delta, "delta1": params.delta1,
            "delta2": params.delta2 if params.delta2 is not None else "",
            "d": d, "regime": params.regime,
        },
        trials=n_tr,
        counts=counts,
        intervals={k: wilson_interval(counts[k], n_tr) for k in EVENT_KEYS},
        mean_delay=delay_sum / n_tr,
        mean_sampling_rate=rate_sum / n_tr,
        forced_random_rate=forced / n_tr,
        e1_in_e2_violations=violations,
        wall_time_s=time.time() - t0,
        bounds=bound_report.values,
    )


def _with(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    d = asdict(cfg)
    d.update(kw)
    return ExperimentConfig(**d)


def _config_echo(cfg: ExperimentConfig) -> dict:
    d = {k: v for k, v in asdict(cfg).items() if k != "raw" and v is not None}
    return {k: str(v) for k, v in d.items()}


def write_rows_csv(rows, path, metadata: dict | None = None) -> None:
    """One SweepRow per line under the fixed documented header; floats are
    shortest round-trip decimals. A sidecar .meta.json carries provenance."""
    with open(path, "w") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row.to_csv_fields()) + "\n")
    if metadata is not None:
        import sparsync
        meta = dict(metadata)
        meta.setdefault("version", getattr(sparsync, "__version__", "0"))
        with open(str(path) + ".meta.json", "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)


def sweep(grid: list, out_csv, metadata: dict | None = None,
          checkpoint: bool = True) -> list:
    """Run a list of configs in order; resumable via a sidecar checkpoint.

    Rows are written in deterministic order; a partial-failure row is
    recorded with its error and does not stop the sweep.
    """
    import os

    done_path = str(out_csv) + ".partial.jsonl"
    done: dict = {}
    if checkpoint and os.path.exists(done_path):
        with open(done_path) as fh:
            for line in fh:
                rec = json.loads(line)
                done[rec["index"]] = rec
    rows = []
    with open(done_path, "a" if checkpoint else "w") as ck:
        for idx, cfg in enumerate(grid):
            if idx in done:
                rec = done[idx]
            else:
                try:
                    row = run_monte_carlo(cfg)
                    rec = {"index": idx, "ok": True,
                           "fields": row.to_csv_fields()}
                except Exception as exc:  # partial failure: mark, keep going
                    rec = {"index": idx, "ok": False, "error": f"{type(exc).__name__}: {exc}"}
                ck.write(json.dumps(rec) + "\n")
                ck.flush()
            rows.append(rec)
    with open(out_csv, "w") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for rec in rows:
            if rec["ok"]:
                fh.write(",".join(_fmt(v) for v in rec["fields"]) + "\n")
    if metadata is not None:
        with open(str(out_csv) + ".meta.json", "w") as fh:
            json.dump(metadata, fh, indent=2, sort_keys=True)
    return rows


def read_rows_csv(path) -> list:
    """Rows of a harness CSV as dicts keyed by the documented header."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != CSV_COLUMNS:
            raise ConfigError(f"unexpected CSV header in {path}")
        out = []
        for line in fh:
            if line.strip():
                out.append(dict(zip(header, line.rstrip("\n").split(","))))
    return out


def parse_grid_file(path) -> list:
    """Cartesian sweep grid from a flat key=value file.

    Any value may be a comma-separated list; the grid is the cartesian
    product over the list-valued keys, except that ``f`` with exactly as
    many entries as ``n`` is paired with it (sampling budgets usually
    scale with blocklength).
    """
    import itertools as it

    with open(path) as fh:
        raw = parse_kv_config(fh.read())
    lists = {k: [s.strip() for s in v.split(",")] for k, v in raw.items()}
    ns = lists.get("n", [""])
    fs = lists.get("f")
    pair_f = fs is not None and len(fs) == len(ns) and len(fs) > 1
    keys = [k for k in lists if k != "f" or not pair_f]
    grid = []
    for combo in it.product(*(lists[k] for k in keys)):
        cell = dict(zip(keys, combo))
        if pair_f:
            cell["f"] = fs[ns.index(cell["n"])]
        grid.append(ExperimentConfig.from_dict(cell))
    return grid


# ---------------------------------------------------------------------------
# code-size bisection and second-order fit
# ---------------------------------------------------------------------------


@dataclass
class Probe:
    ln_m: float
    trials: int
    errors: int
    upper: float
    accepted: bool


def _error_event(cfg: ExperimentConfig) -> str:
    return "e1" if cfg.regime == "small_delay" else "e2"


def _probe_error(cfg: ExperimentConfig, W, params, eps: float, probe_seed: int,
                 chunk: int = 500, budget: int | None = None) -> Probe:
    """Adaptive probe: stop early once the Wilson interval is decisive."""
    book = make_codebook_for(cfg, params, W)
    ctx = make_context(W, params, book, align=cfg.align)
    policy = default_policy(params)
    d = cfg.d if cfg.d is not None else params.d_bound
    key = _error_event(cfg)
    budget = cfg.trials if budget is None else budget
    errors = 0
    done = 0
    while done < budget:
        batch = min(chunk, budget - done)
        for i in range(done, done + batch):
            tr = new_trial(params, policy, probe_seed, i)
            res = decode(ctx, tr)
            lab = classify_outcome(res, tr, params, d=d, rho=params.rho)
            errors += getattr(lab, key)
        done += batch
        lo, hi = wilson_interval(errors, done)
        if lo > eps:
            break             # clearly too large a codebook: reject early
        if hi <= 0.8 * eps and done >= 2 * chunk:
            break             # clearly safe: accept early
    lo, hi = wilson_interval(errors, done)
    return Probe(ln_m=params.ln_m, trials=done, errors=errors, upper=hi,
                 accepted=hi <= eps)


def bisect_max_code_size(cfg: ExperimentConfig, eps: float,
                         max_probes: int = 20, W: Dmc | None = None,
                         base_params: SchemeParams | None = None):
    """Largest ln M with empirical error (upper Wilson CI) below eps.

    This is a random-coding lower bound on the true maximum code size (the
    search runs the package's own achievability construction; no converse
    is claimed). Binary search over ln M with a trial budget per probe; assumes
    error is nondecreasing in M (checked on the recorded probes; a
    violation is reported and the monotone envelope is used). Returns
    ``(ln_m_star, probes)``.
    """
    W = load_channel(cfg.channel) if W is None else W
    params = build_scheme(cfg, W) if base_params is None else base_params
    lo_ln = math.log(2.0)
    hi_ln = max(params.n * params.mutual_info + 1.0, lo_ln + 1.0)
    probes = []

    def run_at(ln_m, idx, budget=None):
        p = with_code_size(params, ln_m=ln_m)
        pr = _probe_error(cfg, W, p, eps, probe_seed=cfg.root_seed * 1_000_003 + idx,
                          budget=budget)
        pr.ln_m = ln_m
        probes.append(pr)
        return pr

    coarse = max(cfg.trials // 6, 600)
    first = run_at(lo_ln, 0, budget=coarse)
    if not first.accepted:
        first = run_at(lo_ln, 0)
        if not first.accepted:
            raise NoFeasibleM(
                f"even M=2 fails: {first.errors}/{first.trials} errors vs eps={eps}"
            )
    best = lo_ln
    for k in range(1, max_probes):
        mid = 0.5 * (lo_ln + hi_ln)
        # coarse probes localize the boundary; full-budget probes decide it
        pr = run_at(mid, k, budget=coarse if (hi_ln - lo_ln) > 6.0 else None)
        if pr.accepted:
            lo_ln = mid
            best = max(best, mid)
        else:
            hi_ln = mid
        if hi_ln - lo_ln < 0.4:
            break
    return best, probes


def monotone_violations(probes) -> int:
    """Accepted probes sitting above a rejected one break the assumption."""
    bad = 0
    for a in probes:
        for b in probes:
            if a.accepted and not b.accepted and a.ln_m > b.ln_m:
                bad += 1
    return bad


def second_order_fit(rows, weights: bool = True):
    """Fit ln M*(n) = c n - k n^e by profiled nonlinear least squares.

    ``rows`` is a sequence of (n, ln_m) or (n, ln_m, sd) tuples; repeated n
    values are encouraged (replicated bisections stabilize the exponent).
    Returns ``(c_hat, k_hat, exponent_hat, exponent_se)``.
    """
    data = [tuple(r) for r in rows]
    if len(data) < 4:
        raise FitDiverged("need at least 4 rows")
    ns = np.array([r[0] for r in data], dtype=float)
    ys = np.array([r[1] for r in data], dtype=float)
    if weights and len(data[0]) > 2:
        sd = np.array([max(r[2], 1e-9) for r in data])
        wts = 1.0 / sd ** 2
    else:
        wts = np.ones_like(ns)
    sw = np.sqrt(wts)

    def ss_at(e):
        x1, x2 = ns * sw, -(ns ** e) * sw
        a11, a12, a22 = x1 @ x1, x1 @ x2, x2 @ x2
        det = a11 * a22 - a12 * a12
        if abs(det) < 1e-30:
            return math.inf, (0.0, 0.0)
        b1, b2 = (ys * sw) @ x1, (ys * sw) @ x2
        c = (a22 * b1 - a12 * b2) / det
        k = (a11 * b2 - a12 * b1) / det
        r = ys * sw - c * x1 - k * x2
        return float(r @ r), (float(c), float(k))

    grid = np.linspace(0.05, 1.3, 1251)
    best_e, best_ss, best_ck = None, math.inf, (0.0, 0.0)
    for e in grid:
        ss, ck = ss_at(e)
        if ss < best_ss:
            best_e, best_ss, best_ck = float(e), ss, ck
    if best_e is None or not math.isfinite(best_ss):
        raise FitDiverged("profile search failed")
    # golden refinement around the grid optimum
    lo, hi = best_e - 0.002, best_e + 0.002
    for _ in range(40):
        m1 = lo + 0.382 * (hi - lo)
        m2 = lo + 0.618 * (hi - lo)
        if ss_at(m1)[0] < ss_at(m2)[0]:
            hi = m2
        else:
            lo = m1
    best_e = 0.5 * (lo + hi)
    best_ss, (c_hat, k_hat) = ss_at(best_e)

    # exponent standard error via the profiled curvature (delta method)
    h = 0.01
    s0, _ = ss_at(best_e)
    sp, _ = ss_at(best_e + h)
    sm, _ = ss_at(best_e - h)
    curv = (sp + sm - 2 * s0) / (h * h)
    dof = max(len(data) - 3, 1)
    sigma2 = s0 / dof
    se = math.sqrt(2.0 * sigma2 / curv) if curv > 0 else math.inf
    return c_hat, k_hat, float(best_e), float(se)
