"""Trial process: keyed determinism, laziness, marginals, independence."""

import math

import numpy as np
import pytest
from scipy.stats import chi2

from sparsync.channel import make_binary_channel, uniform_data_input
from sparsync.errors import RangeViolation
from sparsync.scheme import build_min_delay_params
from sparsync.timeline import (
    POLICY_BLOCK_ALIGNED,
    POLICY_IMMEDIATE,
    Trial,
    aligned_start,
    new_trial,
    u01,
    u01_array,
)

W = make_binary_channel(0.0, noise=(0.1, 0.9))
P = uniform_data_input(W)


def tiny_params(**kw):
    defaults = dict(n=16, alpha=0.05, f=8.0, delta=0.25, delta1=0.2, delta2=0.2, M=4)
    defaults.update(kw)
    return build_min_delay_params(W, P, gamma_mode="rate", **defaults)


class TestKeyedStream:
    def test_scalar_vector_agree(self):
        ts = np.arange(1, 1000, dtype=np.int64)
        vec = u01_array(12345, ts)
        for t in (1, 7, 500, 999):
            assert vec[t - 1] == u01(12345, t)

    def test_uniformity(self):
        vals = u01_array(99, np.arange(1, 200_001, dtype=np.int64))
        assert abs(vals.mean() - 0.5) < 3 * 0.2887 / math.sqrt(vals.size)
        hist, _ = np.histogram(vals, bins=16, range=(0, 1))
        stat = float(((hist - vals.size / 16) ** 2 / (vals.size / 16)).sum())
        assert stat < chi2.isf(1e-3, df=15)


class TestTrial:
    def make_trial(self, idx=0, policy=POLICY_IMMEDIATE):
        return new_trial(tiny_params(), policy, root_seed=7, trial_index=idx)

    def test_sample_deterministic_and_cached(self):
        tr = self.make_trial()
        cw = np.zeros(tr.n, dtype=int)
        a = tr.sample_at(3, W, cw)
        gen_after_first = tr.generated
        b = tr.sample_at(3, W, cw)
        assert a == b
        assert tr.generated == gen_after_first  # cache hit generates nothing

    def test_lazy_cost_counts_distinct_queries(self):
        tr = self.make_trial()
        cw = np.zeros(tr.n, dtype=int)
        queried = [1, 5, 5, 9, 1, 2]
        for t in queried:
            tr.sample_at(t, W, cw)
        assert tr.generated == len(set(queried))

    def test_out_of_range(self):
        tr = self.make_trial()
        with pytest.raises(RangeViolation):
            tr.sample_at(0, W, np.zeros(tr.n, dtype=int))
        with pytest.raises(RangeViolation):
            tr.sample_at(tr.horizon + 1, W, np.zeros(tr.n, dtype=int))

    def test_noise_marginal_outside_window(self):
        # empirical law of the first pre-arrival output vs the idle row
        n_mc = 30_000
        count0 = 0
        used = 0
        for i in range(n_mc):
            tr = new_trial(tiny_params(), POLICY_IMMEDIATE, root_seed=11, trial_index=i)
            if tr.sigma > 1:
                used += 1
                count0 += tr.sample_at(1, W, np.zeros(tr.n, dtype=int)) == 0
        phat = count0 / used
        se = math.sqrt(0.1 * 0.9 / used)
        assert abs(phat - 0.1) <= 3.5 * se

    def test_independence_chi_square(self):
        # paired outputs at two fixed noise times, 2x2 contingency
        n_mc = 30_000
        table = np.zeros((2, 2))
        for i in range(n_mc):
            tr = new_trial(tiny_params(alpha=0.2), POLICY_IMMEDIATE,
                           root_seed=13, trial_index=i)
            if tr.sigma > 2:
                a = tr.sample_at(1, W, np.zeros(tr.n, dtype=int))
                b = tr.sample_at(2, W, np.zeros(tr.n, dtype=int))
                table[a, b] += 1
        tot = table.sum()
        rows = table.sum(1, keepdims=True)
        cols = table.sum(0, keepdims=True)
        expect = rows @ cols / tot
        stat = float(((table - expect) ** 2 / expect).sum())
        assert stat < chi2.isf(1e-3, df=1)

    def test_codeword_symbols_inside_window(self):
        tr = self.make_trial()
        cw = np.zeros(tr.n, dtype=int)  # all-zeros codeword, noiseless rows
        for t in range(tr.sigma, tr.sigma + tr.n):
            assert tr.sample_at(t, W, cw) == 0


class TestArrivalPolicy:
    def test_singleton_window(self):
        params = build_min_delay_params(W, P, n=16, alpha=0.0, f=8.0, delta=0.25,
                                        delta1=0.2, delta2=0.2, M=4, gamma_mode="rate")
        assert params.a_window == 1
        for i in range(5):
            tr = new_trial(params, POLICY_IMMEDIATE, root_seed=3, trial_index=i)
            assert tr.nu == 1

    def test_immediate_sigma_equals_nu(self):
        for i in range(50):
            tr = new_trial(tiny_params(), POLICY_IMMEDIATE, root_seed=5, trial_index=i)
            assert tr.sigma == tr.nu

    def test_block_alignment_examples(self):
        assert aligned_start(3, 8, 64) == 8
        assert aligned_start(8, 8, 64) == 8   # exact multiple keeps sigma = nu
        assert aligned_start(9, 8, 64) == 16
        assert aligned_start(63, 8, 64) == 64  # clamped into the window

    def test_nu_roughly_uniform(self):
        params = tiny_params(alpha=0.2)  # A = 25
        counts = np.zeros(params.a_window)
        n_mc = 25_000
        for i in range(n_mc):
            tr = new_trial(params, POLICY_IMMEDIATE, root_seed=17, trial_index=i)
            counts[tr.nu - 1] += 1
        expect = n_mc / params.a_window
        stat = float(((counts - expect) ** 2 / expect).sum())
        assert stat < chi2.isf(1e-3, df=params.a_window - 1)
