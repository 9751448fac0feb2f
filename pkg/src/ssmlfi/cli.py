"""Command-line interface.

Subcommands:

* ``run``          one inference run; writes a JSONL run log, the posterior
                   point estimates as CSV, and a trace figure.
* ``bench``        the full sweep; writes raw.csv, aggregate.csv, plots.gp,
                   run.log and figures/.
* ``sweep-window`` the moving-window size sweep for the lmc-* methods.
* ``oracle``       rejection sampling against one observed time-step;
                   writes the accepted samples as CSV plus a histogram.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import plots
from .engine import run_method
from .models import MODEL_REGISTRY, SummaryStats, generate_ground_truth, get_model
from .oracle import kde_map_estimate, rejection_abc


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", type=Path, default=None,
                        help="benchmark configuration file (INI)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the random seed(s)")
    parser.add_argument("--out", type=Path, default=Path("out"),
                        help="output directory")
    parser.add_argument("--workers", type=int, default=None,
                        help="parallel sweep workers")


def _load_config(args) -> bench_mod.BenchConfig:
    config = (bench_mod.parse_bench_config(args.config)
              if args.config else bench_mod.BenchConfig())
    if args.seed is not None:
        config.seeds = [args.seed]
    if getattr(args, "workers", None):
        config.workers = args.workers
    return config


def _cmd_run(args) -> int:
    config = _load_config(args)
    run_config = config.run
    run_config.method = args.method
    run_config.seed = args.seed if args.seed is not None else config.seeds[0]
    if args.budget is not None:
        run_config.n_step = args.budget
    horizon = args.horizon or config.horizon

    model = get_model(args.model)
    truth = generate_ground_truth(model, horizon, run_config.seed)

    args.out.mkdir(parents=True, exist_ok=True)
    with (args.out / "run.log").open("w") as stream:
        result = run_method(model, truth.observations, run_config, log_stream=stream)

    lines = ["# schema: ssmlfi-posterior-v1"]
    mean_cols = ",".join(f"mean_{d}" for d in range(model.dim))
    std_cols = ",".join(f"std_{d}" for d in range(model.dim))
    lines.append(f"t,{mean_cols},{std_cols}")
    for t in result.posteriors.indices:
        samples = result.posteriors[t].samples
        cells = [str(t)]
        cells += [format(v, ".10g") for v in samples.mean(axis=0)]
        cells += [format(v, ".10g") for v in samples.std(axis=0)]
        lines.append(",".join(cells))
    (args.out / "posterior_means.csv").write_text("\n".join(lines) + "\n")

    plots.save_run_trace(truth, result.posteriors, args.model,
                         args.out / "state_trace.png")

    if result.posteriors.indices:
        rmse = bench_mod.evaluate_state_rmse(result.posteriors, truth,
                                             config.point_estimate)
        print(f"{args.method} on {args.model}: state RMSE {rmse:.4f} over "
              f"{len(result.posteriors.indices)} steps, "
              f"{result.store.counter} simulator calls")
    else:
        print(f"{args.method} on {args.model}: no posteriors "
              f"(horizon equals window), {result.store.counter} simulator calls")
    return 0


def _cmd_bench(args) -> int:
    config = _load_config(args)
    table = bench_mod.run_benchmark(config, args.out)
    print(f"wrote {len(table.rows)} rows to {args.out / 'raw.csv'}"
          + (f" ({len(table.failures)} cells failed, see run.log)"
             if table.failures else ""))
    return 1 if table.failures and not table.rows else 0


def _cmd_sweep_window(args) -> int:
    config = _load_config(args)
    windows = [int(w) for w in args.windows.split(",") if w.strip()]
    table = bench_mod.moving_window_sweep(windows, config, args.out)
    print(f"wrote {len(table.rows)} rows to {args.out / 'window_raw.csv'}"
          + (f" ({len(table.failures)} cells failed, see run.log)"
             if table.failures else ""))
    return 1 if table.failures and not table.rows else 0


def _cmd_oracle(args) -> int:
    model = get_model(args.model)
    seed = args.seed if args.seed is not None else 0
    truth = generate_ground_truth(model, args.step, seed)
    observed_points = truth.observations[args.step - 1]
    observed = SummaryStats(float(observed_points.mean()), float(observed_points.std()))

    rng = np.random.default_rng(np.random.SeedSequence([seed, 101]))
    result = rejection_abc(model, observed, args.proposals, args.retain, rng)
    estimate = kde_map_estimate(result.accepted)

    args.out.mkdir(parents=True, exist_ok=True)
    lines = ["# schema: ssmlfi-oracle-v1",
             f"# threshold: {result.threshold:.10g}",
             ",".join(f"theta_{d}" for d in range(model.dim))]
    for row in result.accepted:
        lines.append(",".join(format(v, ".10g") for v in row))
    (args.out / "accepted.csv").write_text("\n".join(lines) + "\n")
    (args.out / "estimate.json").write_text(json.dumps({
        "model": args.model, "step": args.step, "seed": seed,
        "kde_mode": estimate.tolist(),
        "accepted_mean": result.accepted.mean(axis=0).tolist(),
        "threshold": result.threshold,
        "n_accepted": int(result.accepted.shape[0]),
    }, indent=2))
    plots.save_oracle_histogram(result.accepted, estimate,
                                args.out / "accepted_hist.png")
    print(f"accepted {result.accepted.shape[0]} of {args.proposals} proposals; "
          f"KDE mode {np.round(estimate, 4).tolist()}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ssmlfi",
        description="Likelihood-free state inference in state-space models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one method on one model")
    _add_common(run_p)
    run_p.add_argument("--model", choices=sorted(MODEL_REGISTRY), required=True)
    run_p.add_argument("--method", choices=["lmc-bnn", "lmc-blr", "bolfi"],
                       default="lmc-bnn")
    run_p.add_argument("--horizon", type=int, default=None)
    run_p.add_argument("--budget", type=int, default=None,
                       help="simulations per time-step")
    run_p.set_defaults(func=_cmd_run)

    bench_p = sub.add_parser("bench", help="run the benchmark sweep")
    _add_common(bench_p)
    bench_p.set_defaults(func=_cmd_bench)

    sweep_p = sub.add_parser("sweep-window", help="sweep the moving-window size")
    _add_common(sweep_p)
    sweep_p.add_argument("--windows", default="2,3,5",
                         help="comma-separated window sizes")
    sweep_p.set_defaults(func=_cmd_sweep_window)

    oracle_p = sub.add_parser("oracle", help="rejection sampling reference")
    _add_common(oracle_p)
    oracle_p.add_argument("--model", choices=sorted(MODEL_REGISTRY), required=True)
    oracle_p.add_argument("--step", type=int, default=1,
                          help="1-indexed time-step to invert")
    oracle_p.add_argument("--proposals", type=int, default=100_000)
    oracle_p.add_argument("--retain", type=float, default=1e-3)
    oracle_p.set_defaults(func=_cmd_oracle)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
