"""Batch command-line interface.

Subcommands: ``capacity`` (constrained capacity/dispersion record),
``predict`` (closed-form rate expansion), ``simulate`` (one Monte Carlo
cell), ``sweep`` (grid of cells, checkpointed), ``fit`` (second-order
exponent from sweep rows). Machine-readable JSON on stdout; exit codes:
0 success, 2 config error, 3 numerical failure, 4 infeasible.
"""

from __future__ import annotations

import argparse
import json
import sys

from .capacity import alpha_bar, async_capacity, dispersion, sync_capacity, sync_threshold
from .channel import load_channel
from .errors import (
    ConfigError,
    EpsilonTooSmall,
    FitDiverged,
    Infeasible,
    NoFeasibleM,
    NonConvergence,
    RangeViolation,
    SparsyncError,
    WindowCapExceeded,
)

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_INFEASIBLE = 4


def _emit(record: dict) -> None:
    json.dump(record, sys.stdout, sort_keys=True)
    sys.stdout.write("\n")


def cmd_capacity(args) -> int:
    W = load_channel(args.channel)
    res = async_capacity(W, args.alpha)
    disp = dispersion(W, args.alpha, args.eps)
    c_sync, _ = sync_capacity(W)
    oracle = {}
    if args.grid is not None:
        from .capacity import grid_search_capacity
        value, _ = grid_search_capacity(W, args.alpha, step=1.0 / args.grid)
        oracle = {"c_grid": value, "grid_steps": args.grid}
    _emit(oracle | {
        "alpha": args.alpha,
        "c_alpha": res.c_alpha,
        "c_sync": c_sync,
        "v_eps": disp.v_eps,
        "v_min": disp.v_min,
        "v_max": disp.v_max,
        "alpha_bar": alpha_bar(W),
        "alpha_w": sync_threshold(W),
        "kkt_residual": res.kkt_residual,
        "constraint_value": res.constraint_value,
        "constraint_active": res.active,
        "p_star": [float(v) for v in res.p_star.p],
        "pi_alpha_size": len(disp.pi_alpha_samples),
    })
    return 0


def cmd_predict(args) -> int:
    from .expansion import RHO_FAST, RHO_SLOW, predict_full_sampling, predict_sparse_min_delay

    W = load_channel(args.channel)
    cap = async_capacity(W, args.alpha)
    disp = dispersion(W, args.alpha, args.eps)
    if args.regime == "full_sampling":
        pred = predict_full_sampling(args.n, args.alpha, args.eps, cap, disp)
    else:
        regime = RHO_FAST if args.regime == "sparse_fast" else RHO_SLOW
        if args.rho is None:
            raise ConfigError("sparse regimes need --rho (the sampling rate at this n)")
        pred = predict_sparse_min_delay(args.n, args.alpha, args.eps, regime,
                                        args.rho, cap, disp, kappa=args.kappa)
    _emit({
        "n": pred.n, "alpha": pred.alpha, "eps": pred.eps, "regime": pred.regime,
        "ln_m": pred.ln_m, "second_order_term": pred.second_order_term,
        "band": pred.band,
    })
    return 0


def cmd_simulate(args) -> int:
    from .harness import ExperimentConfig, run_monte_carlo, write_rows_csv

    cfg = ExperimentConfig.from_file(args.config)
    if args.trials is not None:
        cfg.trials = args.trials
    if args.dump_trials is not None:
        cfg.dump_trials = args.dump_trials
    if args.all_messages:
        cfg.all_messages = True
    row = run_monte_carlo(cfg)
    record = {
        "config": row.config,
        "trials": row.trials,
        "p_hat": {k: row.counts[k] / row.trials for k in row.counts},
        "wilson_95": {k: list(v) for k, v in row.intervals.items()},
        "mean_delay": row.mean_delay,
        "mean_sampling_rate": row.mean_sampling_rate,
        "forced_random_rate": row.forced_random_rate,
        "e1_in_e2_violations": row.e1_in_e2_violations,
        "wall_time_s": row.wall_time_s,
    }
    _emit(record)
    if args.out:
        write_rows_csv([row], args.out, metadata={"config": row.config,
                                                  "root_seed": cfg.root_seed})
    return 0


def cmd_sweep(args) -> int:
    from .harness import ExperimentConfig, parse_grid_file, sweep

    grid = parse_grid_file(args.grid)
    rows = sweep(grid, args.out, metadata={"grid": args.grid})
    ok = sum(1 for r in rows if r["ok"])
    _emit({"rows": len(rows), "ok": ok, "failed": len(rows) - ok, "out": str(args.out)})
    return 0 if ok == len(rows) else EXIT_NUMERICAL


def cmd_fit(args) -> int:
    from .harness import read_rows_csv, second_order_fit

    rows = []
    for path in args.inputs:
        for rec in read_rows_csv(path):
            if args.eps is not None and abs(float(rec["eps"]) - args.eps) > 1e-12:
                continue
            rows.append((float(rec["n"]), float(rec["ln_m"])))
    c_hat, k_hat, e_hat, e_se = second_order_fit(rows)
    _emit({"rows": len(rows), "c_hat": c_hat, "k_hat": k_hat,
           "exponent_hat": e_hat, "exponent_se": e_se,
           "exponent_ci95": [e_hat - 1.96 * e_se, e_hat + 1.96 * e_se]})
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sparsync",
                                 description="Asynchronous sparse-sampling "
                                             "communication at finite blocklength")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("capacity", help="constrained capacity and dispersion")
    p.add_argument("--channel", required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--grid", type=int, default=None,
                   help="also run the exhaustive simplex grid oracle at this resolution")
    p.set_defaults(func=cmd_capacity)

    p = sub.add_parser("predict", help="closed-form rate-expansion prediction")
    p.add_argument("--channel", required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--regime", choices=["full_sampling", "sparse_fast", "sparse_slow"],
                   required=True)
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--kappa", type=float, default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("simulate", help="run one Monte Carlo configuration")
    p.add_argument("--config", required=True)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--dump-trials", default=None)
    p.add_argument("--all-messages", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="run a grid of configurations (resumable)")
    p.add_argument("--grid", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit", help="second-order exponent fit over sweep rows")
    p.add_argument("--in", dest="inputs", nargs="+", required=True)
    p.add_argument("--eps", type=float, default=None)
    p.set_defaults(func=cmd_fit)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, RangeViolation, WindowCapExceeded, FileNotFoundError,
            KeyError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (Infeasible, NoFeasibleM, EpsilonTooSmall) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (NonConvergence, FitDiverged, SparsyncError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
