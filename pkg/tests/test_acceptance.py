"""Acceptance gate: every criterion at its stated tolerance.

Each criterion prints one [ACCEPTANCE] PASS/FAIL line (run with ``-s`` to
see them live). The phase-transition suite is tagged ``slow``; everything
else runs in the default session. The plot golden-file criterion belongs to
the standalone frontend package (its own test runner); all primary criteria
here run with no frontend built.
"""

import math
import time

import numpy as np
import pytest

from acceptance_support import (
    build_phase_transition_channel,
    phase_transition_config,
    write_reference_channel,
    EPS_TABLE,
    REPS_TABLE,
)
from oracle_decoders import oracle_decode
from test_decoders import micro_scheme

from sparsync.capacity import (
    GridCache,
    alpha_bar,
    async_capacity,
    dispersion,
    grid_search_capacity,
    sync_capacity,
    sync_threshold,
)
from sparsync.channel import (
    conditional_information_variance,
    divergence_variance,
    information_density,
    kl_divergence,
    make_binary_channel,
    mutual_information,
    output_distribution,
    q_function,
    q_inverse,
    save_channel,
    uniform_data_input,
    validate_dmc,
)
from sparsync.decoders import BACKEND, decode, make_context
from sparsync.expansion import evaluate_analytic_bounds
from sparsync.harness import (
    ExperimentConfig,
    bisect_max_code_size,
    build_scheme,
    run_monte_carlo,
    second_order_fit,
)
from sparsync.scheme import (
    REGIME_FULL_SAMPLING,
    REGIME_MIN_DELAY,
    REGIME_SMALL_DELAY,
    generate_codebook,
)
from sparsync.timeline import POLICY_BLOCK_ALIGNED, POLICY_IMMEDIATE, new_trial

pytestmark = pytest.mark.acceptance


def report(criterion: str, ok: bool, detail: str):
    print(f"[ACCEPTANCE] {criterion}: {'PASS' if ok else 'FAIL'} — {detail}")
    assert ok, f"{criterion}: {detail}"


@pytest.fixture(scope="module")
def ref_channel(tmp_path_factory):
    return write_reference_channel(tmp_path_factory.mktemp("accept") / "reference.ch")


# -------------------------------------------------------------------------
# 1. capacity solver vs exhaustive grid oracle
# -------------------------------------------------------------------------

def test_criterion_1_capacity_solver_against_grid():
    t0 = time.time()
    rng = np.random.default_rng(20260808)
    worst_gap = worst_resid = 0.0
    cases = 0
    for _ in range(50):
        n_in = int(rng.integers(2, 4))
        n_out = int(rng.integers(2, 4))
        w = rng.dirichlet(np.ones(n_out), size=n_in + 1)
        w[-1] = np.maximum(w[-1], 0.01)
        w[-1] /= w[-1].sum()
        W = validate_dmc(w, star=n_in)
        cache = GridCache(W, step=1e-3)
        athr = sync_threshold(W)
        for a in np.linspace(0.0, 0.9 * athr, 10):
            res = async_capacity(W, a)
            oracle, _ = grid_search_capacity(W, a, cache=cache)
            worst_gap = max(worst_gap, abs(res.c_alpha - oracle))
            worst_resid = max(worst_resid, res.kkt_residual)
            cases += 1
    wall = time.time() - t0
    ok = worst_gap <= 1e-4 and worst_resid <= 1e-5 and wall <= 300
    report("criterion 1 (solver vs grid oracle)", ok,
           f"{cases} cases, worst gap {worst_gap:.2e} nats, "
           f"worst KKT residual {worst_resid:.2e}, {wall:.0f}s")


# -------------------------------------------------------------------------
# 2. capacity plateau below the critical exponent
# -------------------------------------------------------------------------

def test_criterion_2_plateau():
    t0 = time.time()
    rng = np.random.default_rng(7)
    channels = [make_binary_channel(0.0, noise=(0.1, 0.9)),
                make_binary_channel(0.1, noise=(0.2, 0.8))]
    while len(channels) < 8:
        n_in = int(rng.integers(2, 4))
        n_out = int(rng.integers(2, 4))
        w = rng.dirichlet(np.ones(n_out), size=n_in + 1)
        w[-1] = np.maximum(w[-1], 0.01)
        w[-1] /= w[-1].sum()
        W = validate_dmc(w, star=n_in)
        if alpha_bar(W) > 0.05:
            channels.append(W)
    worst_plateau = 0.0
    binding_checked = 0
    for W in channels:
        abar = alpha_bar(W)
        c_sync, _ = sync_capacity(W)
        for a in (0.0, 0.25 * abar, 0.6 * abar, 0.95 * abar, abar):
            res = async_capacity(W, a)
            worst_plateau = max(worst_plateau, abs(res.c_alpha - c_sync))
        if abar + 0.1 < sync_threshold(W):
            res = async_capacity(W, abar + 0.1)
            assert res.c_alpha < c_sync - 1e-4
            binding_checked += 1
    wall = time.time() - t0
    ok = worst_plateau <= 1e-6 and binding_checked >= 3 and wall <= 60
    report("criterion 2 (plateau below alpha-bar)", ok,
           f"{len(channels)} channels, worst |C(a)-C| = {worst_plateau:.2e}, "
           f"{binding_checked} binding checks, {wall:.0f}s")


# -------------------------------------------------------------------------
# 3. decoder oracle equivalence on shared random tapes
# -------------------------------------------------------------------------

def test_criterion_3_decoder_oracle_equivalence():
    t0 = time.time()
    plan = [(REGIME_MIN_DELAY, 3400), (REGIME_FULL_SAMPLING, 3300),
            (REGIME_SMALL_DELAY, 3300)]
    mismatches = 0
    total = 0
    for regime, count in plan:
        rng = np.random.default_rng(abs(hash(("accept", regime))) % 2**32)
        policy = POLICY_BLOCK_ALIGNED if regime == REGIME_SMALL_DELAY else POLICY_IMMEDIATE
        for case in range(count):
            W, params = micro_scheme(rng, regime)
            book = generate_codebook(params.p, params.n, params.m_codewords, "iid",
                                     seed=int(rng.integers(0, 2**31)),
                                     input_labels=W.data_inputs)
            ctx = make_context(W, params, book)
            tr = new_trial(params, policy, root_seed=555_000 + case, trial_index=case)
            got = decode(ctx, tr, record=True, backend="python")
            want_tau, want_times, want_dec, want_forced = oracle_decode(W, params, book, tr)
            same = (got.tau == want_tau and got.decoded == want_dec
                    and got.forced_random == want_forced
                    and list(got.sampling_times) == want_times)
            if same and BACKEND == "c":
                fast = decode(ctx, tr, backend="c")
                same = (fast.tau, fast.samples_taken, fast.decoded) == \
                       (got.tau, got.samples_taken, got.decoded)
            mismatches += not same
            total += 1
    wall = time.time() - t0
    ok = mismatches == 0 and wall <= 120
    report("criterion 3 (decoder oracle equivalence)", ok,
           f"{total} micro instances across three decoders, "
           f"{mismatches} mismatches, {wall:.0f}s")


# -------------------------------------------------------------------------
# 4. empirical event frequencies vs analytic bounds on the reference config
# -------------------------------------------------------------------------

def test_criterion_4_error_bound_consistency(ref_channel):
    t0 = time.time()
    cfg = ExperimentConfig(
        channel=ref_channel, regime="min_delay", n=256, alpha=0.02, f=128.0,
        delta=0.25, delta1=0.2, delta2=0.648, gamma_mode="rate", m=8,
        trials=100_000, root_seed=20260808,
    )
    W = make_binary_channel(0.0, noise=(0.1, 0.9))
    params = build_scheme(cfg, W)
    rep = evaluate_analytic_bounds(params)
    row = run_monte_carlo(cfg, W=W, params=params)
    details = []
    ok = True
    for key, bound_key in (("e_i", "E_I"), ("e_ii", "E_II"), ("e_iii", "E_III"),
                           ("e_iv", "E_IV"), ("e_v", "E_V")):
        p = row.p_hat(key)
        se = math.sqrt(max(p * (1 - p), 1e-12) / row.trials)
        bound = rep.values[bound_key]
        passed = p <= bound + 3 * se
        ok = ok and passed
        tag = " (vacuous, flagged)" if bound_key in rep.flags else ""
        details.append(f"{bound_key}: {p:.4f} <= {bound:.3g}{tag}")
    wall = time.time() - t0
    ok = ok and wall <= 600 and row.e1_in_e2_violations == 0
    report("criterion 4 (bounds vs empirical, reference config)", ok,
           "; ".join(details) + f"; {wall:.0f}s")


# -------------------------------------------------------------------------
# 5. finite-length achievability at the closed-form code size
# -------------------------------------------------------------------------

def test_criterion_5_finite_length_achievability(ref_channel):
    t0 = time.time()
    cfg = ExperimentConfig(
        channel=ref_channel, regime="full_sampling", n=256, alpha=0.02, eps=0.1,
        delta1=0.3, gamma_mode="code_size", trials=100_000, root_seed=424242,
    )
    row = run_monte_carlo(cfg)
    p = row.p_hat("e2")
    se = math.sqrt(max(p * (1 - p), 1e-12) / row.trials)
    wall = time.time() - t0
    ok = p <= 0.1 + 3 * se and wall <= 600 and row.e1_in_e2_violations == 0
    report("criterion 5 (closed-form code size achievability)", ok,
           f"ln M = {row.params['ln_m']:.2f} nats, p(E2) = {p:.5f} <= 0.1 + {3*se:.1e}, "
           f"{wall:.0f}s")


# -------------------------------------------------------------------------
# 6. phase transition of the second-order term (slow)
# -------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_6_phase_transition(tmp_path_factory):
    t0 = time.time()
    path = tmp_path_factory.mktemp("pt") / "additive.ch"
    save_channel(build_phase_transition_channel(), path)
    results = {}
    for regime, want in (("a", 0.5), ("b", 0.75), ("c", 0.5)):
        rows = []
        eps = EPS_TABLE[regime]
        for n in (64, 128, 256, 512):
            for rep in range(REPS_TABLE[regime]):
                cfg = phase_transition_config(regime, n, str(path),
                                              seed=90_000 + 97 * rep)
                ln_m, probes = bisect_max_code_size(cfg, eps)
                rows.append((n, ln_m))
        c_hat, k_hat, e_hat, e_se = second_order_fit(rows, weights=False)
        results[regime] = (e_hat, e_se, rows)
        print(f"  regime ({regime}): exponent_hat = {e_hat:.3f} (se {e_se:.3f}), "
              f"target {want} +- 0.1; c_hat = {c_hat:.3f}, k_hat = {k_hat:.3f}")
    wall = time.time() - t0
    ea, eb, ec = (results[r][0] for r in ("a", "b", "c"))
    ok = (abs(ea - 0.5) <= 0.1 and abs(eb - 0.75) <= 0.1 and abs(ec - 0.5) <= 0.1
          and wall <= 7200)
    report("criterion 6 (phase transition of the second-order term)", ok,
           f"fast {ea:.3f} (0.5±0.1), slow/min-delay {eb:.3f} (0.75±0.1), "
           f"slow/small-delay {ec:.3f} (0.5±0.1); {wall:.0f}s")


# -------------------------------------------------------------------------
# 7. event algebra: E1 implies E2 whenever d >= n
# -------------------------------------------------------------------------

def test_criterion_7_event_algebra(ref_channel):
    violations = 0
    trials = 0
    for cfg in (
        ExperimentConfig(channel=ref_channel, regime="min_delay", n=64, alpha=0.05,
                         f=32.0, delta=0.25, delta1=0.2, delta2=0.2, gamma_mode="rate",
                         m=4, trials=20_000, root_seed=5, d=64),
        ExperimentConfig(channel=ref_channel, regime="full_sampling", n=64, alpha=0.05,
                         eps=0.2, delta1=0.3, gamma_mode="code_size", trials=20_000,
                         root_seed=6, d=100),
        ExperimentConfig(channel=ref_channel, regime="small_delay", n=64, alpha=0.05,
                         f=16.0, delta=0.25, delta1=0.2, delta2=0.2, gamma_mode="rate",
                         m=4, trials=20_000, root_seed=7),
    ):
        row = run_monte_carlo(cfg)
        violations += row.e1_in_e2_violations
        trials += row.trials
        assert row.p_hat("e1") <= row.p_hat("e2") + 1e-12
    report("criterion 7 (E1 within E2 when d >= n)", violations == 0,
           f"{trials} trials across three regimes, {violations} violations")


# -------------------------------------------------------------------------
# 8. information-measure worked examples
# -------------------------------------------------------------------------

def test_criterion_8_information_measures():
    t0 = time.time()
    W = make_binary_channel(0.0, noise=(0.1, 0.9))
    Wb = make_binary_channel(0.1)
    ln2, ln5 = math.log(2.0), math.log(5.0)
    hb = lambda p: -p * math.log(p) - (1 - p) * math.log(1 - p)

    pw = output_distribution([0.3, 0.7], validate_dmc(
        [[0.9, 0.1], [0.2, 0.8], [0.5, 0.5]], star=2))
    assert np.allclose(pw.p, [0.41, 0.59], atol=1e-12)
    assert kl_divergence([0.5, 0.5], [0.5, 0.5]) == 0.0
    assert kl_divergence([0.5, 0.5], [0.1, 0.9]) == pytest.approx(
        0.5 * ln5 + 0.5 * math.log(5 / 9), abs=1e-14)
    assert kl_divergence([1.0, 0.0], [0.0, 1.0]) == math.inf
    assert mutual_information([0.5, 0.5], W) == pytest.approx(ln2, abs=1e-14)
    assert mutual_information([0.5, 0.5], Wb) == pytest.approx(ln2 - hb(0.1), abs=1e-14)
    assert divergence_variance([0.5, 0.5], [0.5, 0.5]) == 0.0
    assert divergence_variance([1.0, 0.0], [0.5, 0.5]) == 0.0
    llr = np.log([2.0, 2.0 / 3.0])
    d = 0.5 * float(llr.sum())
    assert divergence_variance([0.5, 0.5], [0.25, 0.75]) == pytest.approx(
        0.5 * float(((llr - d) ** 2).sum()), abs=1e-14)
    assert conditional_information_variance([0.5, 0.5], W) == pytest.approx(0.0, abs=1e-14)
    assert information_density([], [], [0.5, 0.5], Wb) == 0.0
    assert information_density([0, 1, 0], [0, 1, 0], [0.5, 0.5], W) == pytest.approx(
        3 * ln2, abs=1e-14)
    assert information_density([0], [1], [0.5, 0.5], Wb) == pytest.approx(-ln5, abs=1e-14)
    assert q_function(0.0) == 0.5
    assert q_inverse(0.5) == pytest.approx(0.0, abs=1e-12)
    assert q_function(1.2815515655) == pytest.approx(0.10, abs=1e-9)
    worst = 0.0
    for x in np.linspace(-6.0, 6.0, 241):
        eps = q_function(x)
        floor = 0.5 * np.spacing(eps) / (math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi))
        worst = max(worst, abs(q_inverse(eps) - x) - floor)
    wall = time.time() - t0
    ok = worst <= 1e-9 and wall <= 10
    report("criterion 8 (information-measure examples)", ok,
           f"all worked examples at stated tolerances; inverse-identity slack "
           f"{worst:.2e} over [-6,6] (beyond the float64 floor); {wall:.1f}s")
