# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled decode core.

Operation-for-operation mirror of ``_engine_py``: identical counter-mode
symbol stream, accumulation order, and uniform consumption, so results are
bit-identical to the pure backend. Keep the two files in lockstep.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, INFINITY

cnp.import_array()

cdef extern from *:
    """
    #include <stdint.h>
    static inline uint64_t sp_mix64(uint64_t z) {
        z ^= z >> 30;
        z *= 0xBF58476D1CE4E5B9ULL;
        z ^= z >> 27;
        z *= 0x94D049BB133111EBULL;
        z ^= z >> 31;
        return z;
    }
    static inline double sp_u01(uint64_t key, uint64_t t) {
        uint64_t z = sp_mix64(key + t * 0x9E3779B97F4A7C15ULL);
        return (double)(z >> 11) * (1.0 / 9007199254740992.0);
    }
    """
    unsigned long long sp_mix64(unsigned long long z) nogil
    double sp_u01(unsigned long long key, unsigned long long t) nogil

DEF R_INC_FLOOR = -1e4
DEF REFRESH_MASK = 0xFFFF
DEF POISSON_DETERMINISTIC = 30.0


cdef inline long _searchsorted(const double[:] cdf, double u) nogil:
    cdef long lo = 0
    cdef long hi = cdf.shape[0] - 1
    cdef long mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if u < cdf[mid]:
            hi = mid
        else:
            lo = mid + 1
    return lo


cdef inline long _gen_symbol(const double[:, ::1] cdf, long star,
                             const int[:] cw, long sigma, long n,
                             unsigned long long ckey, long t) nogil:
    cdef double u = sp_u01(ckey, <unsigned long long> t)
    cdef long row
    if sigma <= t and t <= sigma + n - 1:
        row = cw[t - sigma]
    else:
        row = star
    return _searchsorted(cdf[row], u)


cdef inline double _stream_next(unsigned long long dkey, long* counter) nogil:
    counter[0] += 1
    return sp_u01(dkey, <unsigned long long> counter[0])


cdef inline long _poisson(double rate, unsigned long long dkey, long* counter) nogil:
    cdef double limit, p
    cdef long k
    if rate <= 0.0:
        return 0
    if rate > POISSON_DETERMINISTIC:
        k = <long> rate
        if k < 2:
            k = 2
        if k > 1000:
            k = 1000
        return k
    limit = exp(-rate)
    k = 0
    p = _stream_next(dkey, counter)
    while p > limit:
        k += 1
        p *= _stream_next(dkey, counter)
    return k


cdef long _codeword_test(const double[:, ::1] i_inc, double gamma,
                         long window_len, long n, long align_suffix,
                         const int[:, ::1] book, long m_codewords,
                         const long long[:] win_syms, long win_off,
                         const int[:] cw_own, double collider_rate,
                         long own_per_trial, long message,
                         unsigned long long dkey, long* counter,
                         long* decoded_out, long* tie_out) nogil:
    """Returns 1 on acceptance; fills decoded (-1 = other message) and tie."""
    cdef long off = (n - window_len) if align_suffix else 0
    cdef long m_hat, j, ncand, pick, k, total
    cdef double score, v, u
    cdef long first = -1, second = -1
    decoded_out[0] = 0
    tie_out[0] = 0
    if not own_per_trial:
        # materialized: collect clearing codewords; reservoir for the tie pick
        ncand = 0
        u = 0.0
        for m_hat in range(m_codewords):
            score = 0.0
            for j in range(window_len):
                v = i_inc[book[m_hat, off + j], win_syms[win_off + j]]
                if v == -INFINITY:
                    score = -INFINITY
                    break
                score += v
            if score >= gamma:
                ncand += 1
                if ncand == 1:
                    first = m_hat + 1
                elif ncand == 2:
                    second = m_hat + 1
        if ncand == 0:
            return 0
        if ncand == 1:
            decoded_out[0] = first
            return 1
        # re-scan to index the uniform pick among candidates in order
        u = _stream_next(dkey, counter)
        pick = <long> (u * ncand)
        if pick >= ncand:
            pick = ncand - 1
        tie_out[0] = 1
        if pick == 0:
            decoded_out[0] = first
            return 1
        if pick == 1:
            decoded_out[0] = second
            return 1
        ncand = 0
        for m_hat in range(m_codewords):
            score = 0.0
            for j in range(window_len):
                v = i_inc[book[m_hat, off + j], win_syms[win_off + j]]
                if v == -INFINITY:
                    score = -INFINITY
                    break
                score += v
            if score >= gamma:
                if ncand == pick:
                    decoded_out[0] = m_hat + 1
                    return 1
                ncand += 1
        decoded_out[0] = first
        return 1
    # implicit codebook
    score = 0.0
    for j in range(window_len):
        v = i_inc[cw_own[off + j], win_syms[win_off + j]]
        if v == -INFINITY:
            score = -INFINITY
            break
        score += v
    cdef long own_pass = 1 if score >= gamma else 0
    k = _poisson(collider_rate, dkey, counter)
    total = own_pass + k
    if total == 0:
        return 0
    if total == 1:
        decoded_out[0] = message if own_pass else -1
        return 1
    u = _stream_next(dkey, counter)
    pick = <long> (u * total)
    if pick >= total:
        pick = total - 1
    tie_out[0] = 1
    decoded_out[0] = message if (own_pass and pick == 0) else -1
    return 1


def run_trial(bint full_sampling,
              long n, long a_window, long horizon, long block_len, long block_start0,
              cnp.ndarray[cnp.int64_t, ndim=1] ladder_arr,
              cnp.ndarray[cnp.float64_t, ndim=1] beta_arr,
              double gamma, long window_len, long align_suffix,
              cnp.ndarray[cnp.float64_t, ndim=2] cdf_arr, long star,
              cnp.ndarray[cnp.float64_t, ndim=1] r_inc_arr,
              cnp.ndarray[cnp.float64_t, ndim=2] i_inc_arr,
              long m_codewords,
              cnp.ndarray[cnp.int32_t, ndim=2] book_arr,
              double collider_rate,
              cnp.ndarray[cnp.int64_t, ndim=1] data_labels_arr,
              long own_per_trial,
              long nu, long sigma, long message,
              unsigned long long channel_key, unsigned long long decoder_key,
              unsigned long long codeword_key):
    cdef const long long[:] ladder = ladder_arr
    cdef const double[:] beta = beta_arr
    cdef const double[:, ::1] cdf = np.ascontiguousarray(cdf_arr)
    cdef const double[:] r_inc = r_inc_arr
    cdef const double[:, ::1] i_inc = np.ascontiguousarray(i_inc_arr)
    cdef const int[:, ::1] book = np.ascontiguousarray(book_arr)
    cdef const long long[:] labels = data_labels_arr

    cdef long ell = ladder.shape[0]
    cdef long s_total = 0
    cdef long i
    for i in range(ell):
        s_total += ladder[i]

    # own codeword
    cdef cnp.ndarray[cnp.int32_t, ndim=1] cw_np = np.empty(n, dtype=np.int32)
    cdef int[:] cw = cw_np
    cdef long k_inputs = labels.shape[0]
    cdef long j, idx
    cdef double u
    if own_per_trial:
        for j in range(n):
            u = sp_u01(codeword_key, <unsigned long long> (j + 1))
            idx = <long> (u * k_inputs)
            if idx >= k_inputs:
                idx = k_inputs - 1
            cw[j] = <int> labels[idx]
    else:
        for j in range(n):
            cw[j] = book[message - 1, j]

    cdef long counter = 0
    cdef long samples = 0
    cdef long decoded = 0
    cdef long tie = 0
    cdef long tau = -1
    cdef long forced = 0
    cdef long t, pos, filled, need, depth, e, end_max, fail_pos, next_start, sym
    cdef long slides, jmp, accepted
    cdef double r, r_win
    cdef long have_rwin

    cdef cnp.ndarray[cnp.float64_t, ndim=1] incs_np = np.empty(max(s_total, 2 * n), dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] syms_np = np.empty(max(s_total, 2 * n), dtype=np.int64)
    cdef double[:] incs = incs_np
    cdef long long[:] syms = syms_np
    cdef long long[:] win_view

    if full_sampling:
        # ring buffers of the last n increments/symbols
        r = 0.0
        slides = 0
        with nogil:
            for e in range(1, horizon + 1):
                sym = _gen_symbol(cdf, star, cw, sigma, n, channel_key, e)
                idx = e % n
                if e > n:
                    r -= incs[idx]
                incs[idx] = r_inc[sym]
                syms[idx] = sym
                r += r_inc[sym]
                if e >= n:
                    slides += 1
                    if (slides & REFRESH_MASK) == 0:
                        r = 0.0
                        for j in range(n):
                            r += incs[j]
                    if r >= beta[0]:
                        # unroll window into time order at the tail of syms
                        for j in range(n):
                            syms[n + j] = syms[(e - n + 1 + j) % n]
                        if _codeword_test(i_inc, gamma, window_len, n, align_suffix,
                                          book, m_codewords, syms, n,
                                          cw, collider_rate, own_per_trial,
                                          message, decoder_key, &counter,
                                          &decoded, &tie):
                            tau = e
                            samples = e
                            break
            if tau < 0:
                tau = horizon
                samples = horizon
                forced = 1
        if forced:
            u = _stream_next(decoder_key, &counter)
            decoded = 1 + <long> (u * m_codewords)
            if decoded > m_codewords:
                decoded = m_codewords
        return tau, samples, decoded, forced, tie

    # multiphase cascade
    cdef long T = horizon
    next_start = block_start0
    with nogil:
        while next_start <= a_window:
            t = next_start
            pos = t
            filled = 0
            fail_pos = pos - 1
            depth = 0
            accepted = 0
            for i in range(ell - 1):
                need = ladder[i]
                if pos + need - 1 > T:
                    depth = -1
                    fail_pos = pos - 1
                    break
                r = 0.0
                for j in range(need):
                    sym = _gen_symbol(cdf, star, cw, sigma, n, channel_key, pos)
                    samples += 1
                    incs[filled] = r_inc[sym]
                    syms[filled] = sym
                    filled += 1
                    r += r_inc[sym]
                    pos += 1
                depth = i + 1
                if r < beta[i]:
                    depth = -1
                    fail_pos = pos - 1
                    break
            if depth >= 0:
                end_max = t + s_total - 1
                if end_max > T:
                    end_max = T
                have_rwin = 0
                r_win = 0.0
                slides = 0
                e = pos
                while e <= end_max:
                    sym = _gen_symbol(cdf, star, cw, sigma, n, channel_key, e)
                    samples += 1
                    incs[filled] = r_inc[sym]
                    syms[filled] = sym
                    filled += 1
                    if e >= t + window_len - 1:
                        if not have_rwin:
                            r_win = 0.0
                            for j in range(filled - window_len, filled):
                                r_win += incs[j]
                            have_rwin = 1
                        else:
                            r_win += incs[filled - 1] - incs[filled - 1 - window_len]
                            slides += 1
                            if (slides & REFRESH_MASK) == 0:
                                r_win = 0.0
                                for j in range(filled - window_len, filled):
                                    r_win += incs[j]
                        if r_win >= beta[ell - 1]:
                            if _codeword_test(i_inc, gamma, window_len, n,
                                              align_suffix, book, m_codewords,
                                              syms, filled - window_len,
                                              cw, collider_rate, own_per_trial,
                                              message, decoder_key, &counter,
                                              &decoded, &tie):
                                tau = e
                                accepted = 1
                                break
                    e += 1
                if accepted:
                    break
                fail_pos = end_max
            if fail_pos < block_start0:
                next_start = block_start0
            else:
                jmp = (fail_pos - block_start0) / block_len + 1
                next_start = block_start0 + jmp * block_len
            if next_start <= t:
                next_start = t + block_len
    if tau < 0:
        tau = T
        forced = 1
        u = _stream_next(decoder_key, &counter)
        decoded = 1 + <long> (u * m_codewords)
        if decoded > m_codewords:
            decoded = m_codewords
    return tau, samples, decoded, forced, tie
