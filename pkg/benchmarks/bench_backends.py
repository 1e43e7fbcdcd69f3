"""Compare the compiled decode core against the pure-Python backend.

Runs the same trial workload through both and reports wall time per trial
and the speedup, after asserting bit-identical outcomes on a sample.

    python benchmarks/bench_backends.py [--trials N]
"""

import argparse
import math
import time

from sparsync.channel import make_binary_channel, save_channel, uniform_data_input
from sparsync.decoders import BACKEND, decode, make_context
from sparsync.harness import ExperimentConfig, build_scheme, make_codebook_for
from sparsync.timeline import default_policy, new_trial


def bench(cfg_name, cfg, trials_fast, trials_pure):
    W = make_binary_channel(0.0, noise=(0.1, 0.9))
    params = build_scheme(cfg, W)
    book = make_codebook_for(cfg, params, W)
    ctx = make_context(W, params, book)
    policy = default_policy(params)

    for i in range(min(trials_pure, 200)):
        tr = new_trial(params, policy, cfg.root_seed, i)
        a = decode(ctx, tr, backend="python")
        if BACKEND == "c":
            b = decode(ctx, tr, backend="c")
            assert (a.tau, a.samples_taken, a.decoded) == (b.tau, b.samples_taken, b.decoded), \
                f"backend mismatch on trial {i}"

    rows = {}
    for backend, n_trials in (("python", trials_pure), ("c", trials_fast)):
        if backend == "c" and BACKEND != "c":
            continue
        t0 = time.time()
        for i in range(n_trials):
            tr = new_trial(params, policy, cfg.root_seed, i)
            decode(ctx, tr, backend=backend)
        dt = time.time() - t0
        rows[backend] = dt / n_trials
        print(f"  {cfg_name:24s} {backend:7s} {1e6 * dt / n_trials:10.1f} us/trial "
              f"({n_trials} trials, {dt:.2f}s)")
    if "c" in rows:
        print(f"  {cfg_name:24s} speedup {rows['python'] / rows['c']:8.1f}x")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--trials", type=int, default=2000)
    args = ap.parse_args()
    print(f"compiled core available: {BACKEND == 'c'}")

    full = ExperimentConfig(channel="", regime="full_sampling", n=256, alpha=0.02,
                            eps=0.1, delta1=0.3, gamma_mode="code_size",
                            trials=1, root_seed=1)
    multi = ExperimentConfig(channel="", regime="min_delay", n=256, alpha=0.02,
                             f=128.0, delta=0.25, delta1=0.2, delta2=0.648,
                             gamma_mode="rate", m=8, trials=1, root_seed=1)
    small = ExperimentConfig(channel="", regime="small_delay", n=256, alpha=0.03,
                             f=4.0, delta=0.3, delta1=0.2, delta2=0.2,
                             gamma_mode="rate", m=8, trials=1, root_seed=1,
                             ladder_round="floor")
    bench("full-sampling n=256", full, args.trials, max(args.trials // 10, 100))
    bench("min-delay n=256", multi, args.trials, max(args.trials // 10, 100))
    bench("small-delay sparse", small, args.trials, max(args.trials // 10, 100))


if __name__ == "__main__":
    main()
