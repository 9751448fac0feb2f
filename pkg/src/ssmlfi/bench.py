"""Benchmark harness: sweeps, evaluation metrics, CSV and figure output.

A sweep runs methods x models x seeds x budgets, each cell an isolated
seeded run evaluated for state-inference RMSE, trajectory-prediction RMSE
and wall time. Raw and aggregate tables are written as schema-tagged CSV;
figures are rendered next to them.
"""
from __future__ import annotations

import configparser
import dataclasses
import json
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .engine import PosteriorStore, RunConfig, RunResult, run_method
from .models import GroundTruthRun, StateSpaceModel, generate_ground_truth, get_model
from .oracle import kde_map_estimate

RAW_SCHEMA = "ssmlfi-raw-v1"
AGGREGATE_SCHEMA = "ssmlfi-aggregate-v1"
WINDOW_RAW_SCHEMA = "ssmlfi-window-raw-v1"
WINDOW_AGGREGATE_SCHEMA = "ssmlfi-window-aggregate-v1"
RAW_HEADER = "method,model,seed,budget,state_rmse,traj_rmse,wall_min"
TRAJECTORY_SEED_TAG = 7777


# ----------------------------------------------------------------------
# Metrics


def evaluate_state_rmse(
    posteriors: PosteriorStore,
    truth: GroundTruthRun,
    point_estimate: str = "mean",
) -> float:
    """RMSE of per-step point estimates against the ground-truth states.

    The point estimate is the posterior-sample mean (or the KDE mode when
    ``point_estimate`` is ``"kde-mode"``); the error is averaged over every
    time index that has a posterior and over state dimensions.
    """
    indices = posteriors.indices
    if not indices:
        raise ValueError("posterior store is empty")
    if indices[-1] > truth.horizon:
        raise ValueError("posterior index beyond the ground-truth horizon")
    sq = []
    for t in indices:
        samples = posteriors[t].samples
        if point_estimate == "kde-mode":
            estimate = kde_map_estimate(samples)
        elif point_estimate == "mean":
            estimate = samples.mean(axis=0)
        else:
            raise ValueError(f"unknown point estimate {point_estimate!r}")
        err = estimate - truth.states[t - 1]
        sq.extend((err**2).tolist())
    return float(np.sqrt(np.mean(sq)))


def rollout_transition_mean(
    transition,
    model: StateSpaceModel,
    start: np.ndarray,
    length: int,
    n_traj: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Mean over n_traj autoregressive rollouts of the transition model."""
    current = np.tile(np.asarray(start, dtype=float), (n_traj, 1))
    path = np.empty((length, model.dim))
    for k in range(length):
        current = transition.predict_samples_batch(current, rng)
        current = np.clip(current, model.bounds[:, 0], model.bounds[:, 1])
        path[k] = current.mean(axis=0)
    return path


def rollout_ground_truth_mean(
    model: StateSpaceModel,
    start: np.ndarray,
    length: int,
    n_traj: int,
    rng: np.random.Generator,
    start_time: int = 0,
    noise: bool = True,
) -> np.ndarray:
    """Mean over n_traj rollouts of the true dynamics from the same start.

    ``noise=False`` gives the deterministic skeleton; it exists for tests.
    """
    total = np.zeros((length, model.dim))
    start = np.asarray(start, dtype=float)
    for _ in range(n_traj):
        theta = start.copy()
        aux = model.init_aux(theta)
        for k in range(length):
            theta, aux = model.step(theta, start_time + k + 1, rng,
                                    noise=noise, aux=aux)
            theta = model.clip(theta)
            total[k] += theta
    return total / n_traj


def evaluate_trajectory_rmse(
    transition,
    model: StateSpaceModel,
    start: np.ndarray,
    length: int,
    n_traj: int,
    rng: np.random.Generator,
    start_time: int = 0,
    truth_noise: bool = True,
) -> float:
    """RMSE between mean sampled and mean ground-truth trajectories."""
    if transition is None or not getattr(transition, "is_trained", False):
        raise ValueError("transition model is untrained")
    if length < 1:
        raise ValueError("length must be >= 1")
    sampled = rollout_transition_mean(transition, model, start, length, n_traj, rng)
    actual = rollout_ground_truth_mean(model, start, length, n_traj, rng,
                                       start_time, noise=truth_noise)
    return float(np.sqrt(np.mean((sampled - actual) ** 2)))


# ----------------------------------------------------------------------
# Configuration


_BENCH_KEYS = {
    "methods", "models", "seeds", "budgets", "workers", "point_estimate",
    "measure_time", "horizon", "n_traj",
}
_RUN_KEYS = {
    "window", "n_init", "n_posterior", "n_pairs", "lmc_epochs",
    "lmc_inducing", "lmc_latents", "bnn_update_epochs",
}


@dataclass
class BenchConfig:
    methods: list[str] = field(default_factory=lambda: ["lmc-bnn", "lmc-blr", "bolfi"])
    models: list[str] = field(default_factory=lambda: ["lg"])
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    budgets: list[int] = field(default_factory=lambda: [2])
    workers: int = 1
    point_estimate: str = "mean"
    measure_time: bool = True
    horizon: int = 20
    n_traj: int = 30
    run: RunConfig = field(default_factory=RunConfig)


def parse_bench_config(source: str | Path) -> BenchConfig:
    """Parse the INI-style benchmark configuration.

    Unknown sections or keys raise with the offending names listed, so a
    typo cannot silently fall back to a default.
    """
    parser = configparser.ConfigParser()
    text = Path(source).read_text() if isinstance(source, Path) else str(source)
    parser.read_string(text)

    unknown_sections = set(parser.sections()) - {"bench", "run"}
    if unknown_sections:
        raise ValueError(f"unknown config sections: {sorted(unknown_sections)}")
    unknown = sorted(set(parser.options("bench")) - _BENCH_KEYS) if parser.has_section("bench") else []
    unknown += sorted(set(parser.options("run")) - _RUN_KEYS) if parser.has_section("run") else []
    if unknown:
        raise ValueError(f"unknown config keys: {unknown}")

    config = BenchConfig()
    if parser.has_section("bench"):
        section = parser["bench"]
        if "methods" in section:
            config.methods = [s.strip() for s in section["methods"].split(",") if s.strip()]
        if "models" in section:
            config.models = [s.strip() for s in section["models"].split(",") if s.strip()]
        if "seeds" in section:
            config.seeds = [int(s) for s in section["seeds"].split(",") if s.strip()]
        if "budgets" in section:
            config.budgets = [int(s) for s in section["budgets"].split(",") if s.strip()]
        config.workers = section.getint("workers", config.workers)
        config.point_estimate = section.get("point_estimate", config.point_estimate)
        config.measure_time = section.getboolean("measure_time", config.measure_time)
        config.horizon = section.getint("horizon", config.horizon)
        config.n_traj = section.getint("n_traj", config.n_traj)
    if parser.has_section("run"):
        section = parser["run"]
        run = config.run
        run.window = section.getint("window", run.window)
        run.n_init = section.getint("n_init", run.n_init)
        run.n_posterior = section.getint("n_posterior", run.n_posterior)
        run.n_pairs = section.getint("n_pairs", run.n_pairs)
        run.lmc_epochs = section.getint("lmc_epochs", run.lmc_epochs)
        run.lmc_inducing = section.getint("lmc_inducing", run.lmc_inducing)
        if section.get("lmc_latents", "").strip():
            run.lmc_latents = section.getint("lmc_latents")
        run.bnn_update_epochs = section.getint("bnn_update_epochs", run.bnn_update_epochs)
    return config


# ----------------------------------------------------------------------
# Sweep cells


@dataclass
class BenchRow:
    method: str
    model: str
    seed: int
    budget: int
    state_rmse: float
    traj_rmse: float | None  # None when the method has no transition model
    wall_min: float | None  # None when timing capture is off
    window: int = 2
    n_sims: int = 0

    def sort_key(self):
        return (self.method, self.model, self.window, self.budget, self.seed)


def _make_cell(config: BenchConfig, method: str, model: str, seed: int,
               budget: int, window: int | None = None) -> dict:
    run = dataclasses.replace(
        config.run,
        method=method,
        seed=seed,
        n_step=budget,
        window=window if window is not None else config.run.window,
    )
    return {
        "method": method,
        "model": model,
        "seed": seed,
        "budget": budget,
        "run": dataclasses.asdict(run),
        "horizon": config.horizon,
        "n_traj": config.n_traj,
        "point_estimate": config.point_estimate,
        "measure_time": config.measure_time,
    }


def run_cell(cell: dict) -> BenchRow:
    """Execute one isolated benchmark cell and evaluate its metrics."""
    model = get_model(cell["model"])
    truth = generate_ground_truth(model, cell["horizon"], cell["seed"])
    run_config = RunConfig(**cell["run"])

    started = time.perf_counter()
    result: RunResult = run_method(model, truth.observations, run_config)
    wall_min = (time.perf_counter() - started) / 60.0

    state_rmse = evaluate_state_rmse(result.posteriors, truth,
                                     cell["point_estimate"])
    traj_rmse = None
    if result.transition_model is not None and result.posteriors.indices:
        last = result.posteriors.indices[-1]
        start = result.posteriors.mean(last)
        traj_rng = np.random.default_rng(
            np.random.SeedSequence([cell["seed"], TRAJECTORY_SEED_TAG])
        )
        traj_rmse = evaluate_trajectory_rmse(
            result.transition_model, model, start, cell["horizon"],
            cell["n_traj"], traj_rng, start_time=last,
        )
    return BenchRow(
        method=cell["method"], model=cell["model"], seed=cell["seed"],
        budget=cell["budget"], state_rmse=state_rmse, traj_rmse=traj_rmse,
        wall_min=wall_min if cell["measure_time"] else None,
        window=run_config.window, n_sims=result.store.counter,
    )


# ----------------------------------------------------------------------
# Tables


def _fmt(value) -> str:
    return "" if value is None else format(float(value), ".10g")


@dataclass
class ResultsTable:
    rows: list[BenchRow]
    failures: list[dict] = field(default_factory=list)

    def sorted_rows(self) -> list[BenchRow]:
        return sorted(self.rows, key=BenchRow.sort_key)

    def aggregates(self, keys=("method", "model", "budget")) -> list[dict]:
        groups: dict[tuple, list[BenchRow]] = {}
        for row in self.sorted_rows():
            groups.setdefault(tuple(getattr(row, k) for k in keys), []).append(row)
        out = []
        for group_key, members in groups.items():
            entry = dict(zip(keys, group_key))
            entry["n_seeds"] = len(members)
            for metric in ("state_rmse", "traj_rmse", "wall_min"):
                values = [getattr(r, metric) for r in members]
                if any(v is None for v in values):
                    entry[f"{metric}_mean"] = None
                    entry[f"{metric}_ci95"] = None
                    continue
                arr = np.asarray(values, dtype=float)
                entry[f"{metric}_mean"] = float(arr.mean())
                half = 0.0 if arr.size < 2 else float(
                    1.96 * arr.std(ddof=1) / np.sqrt(arr.size)
                )
                entry[f"{metric}_ci95"] = half
            out.append(entry)
        return out

    def raw_csv(self, with_window: bool = False) -> str:
        schema = WINDOW_RAW_SCHEMA if with_window else RAW_SCHEMA
        header = ("window," + RAW_HEADER) if with_window else RAW_HEADER
        lines = [f"# schema: {schema}", header]
        for row in self.sorted_rows():
            cells = [row.method, row.model, str(row.seed), str(row.budget),
                     _fmt(row.state_rmse), _fmt(row.traj_rmse), _fmt(row.wall_min)]
            if with_window:
                cells = [str(row.window)] + cells
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    def aggregate_csv(self, with_window: bool = False) -> str:
        keys = ("method", "model", "window", "budget") if with_window \
            else ("method", "model", "budget")
        schema = WINDOW_AGGREGATE_SCHEMA if with_window else AGGREGATE_SCHEMA
        metric_cols = [f"{m}_{s}" for m in ("state_rmse", "traj_rmse", "wall_min")
                       for s in ("mean", "ci95")]
        header = ",".join(list(keys) + ["n_seeds"] + metric_cols)
        lines = [f"# schema: {schema}", header]
        for entry in self.aggregates(keys):
            cells = [str(entry[k]) for k in keys] + [str(entry["n_seeds"])]
            cells += [_fmt(entry[c]) for c in metric_cols]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------
# Sweeps


def _execute_cells(cells: list[dict], workers: int) -> tuple[list[BenchRow], list[dict]]:
    rows: list[BenchRow] = []
    failures: list[dict] = []
    if workers > 1:
        import multiprocessing

        context = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=workers, mp_context=context) as pool:
            outcomes = pool.map(_safe_cell, cells)
            for cell, outcome in zip(cells, outcomes):
                if isinstance(outcome, BenchRow):
                    rows.append(outcome)
                else:
                    failures.append({"cell": _cell_id(cell), "error": outcome})
    else:
        for cell in cells:
            outcome = _safe_cell(cell)
            if isinstance(outcome, BenchRow):
                rows.append(outcome)
            else:
                failures.append({"cell": _cell_id(cell), "error": outcome})
    return rows, failures


def _cell_id(cell: dict) -> dict:
    return {k: cell[k] for k in ("method", "model", "seed", "budget")} | {
        "window": cell["run"]["window"]
    }


def _safe_cell(cell: dict):
    try:
        return run_cell(cell)
    except Exception:
        return traceback.format_exc()


def _write_outputs(table: ResultsTable, out_dir: Path, config: BenchConfig,
                   with_window: bool = False):
    from . import plots

    out_dir.mkdir(parents=True, exist_ok=True)
    prefix = "window_" if with_window else ""
    (out_dir / f"{prefix}raw.csv").write_text(table.raw_csv(with_window))
    (out_dir / f"{prefix}aggregate.csv").write_text(table.aggregate_csv(with_window))
    if not with_window:
        (out_dir / "plots.gp").write_text(plot_script(config))
    log_path = out_dir / "run.log"
    with log_path.open("a") as stream:
        for row in table.sorted_rows():
            stream.write(json.dumps({"status": "ok", "cell": {
                "method": row.method, "model": row.model, "seed": row.seed,
                "budget": row.budget, "window": row.window,
            }, "n_sims": row.n_sims}) + "\n")
        for failure in table.failures:
            stream.write(json.dumps({"status": "failed", **failure}) + "\n")

    figures = out_dir / "figures"
    figures.mkdir(exist_ok=True)
    for model_name in sorted({r.model for r in table.rows}):
        model_rows = [r for r in table.rows if r.model == model_name]
        if with_window:
            plots.save_window_sweep(model_rows, model_name,
                                    figures / f"window_sweep_{model_name}.png")
        else:
            plots.save_state_rmse_boxplot(model_rows, model_name,
                                          figures / f"state_rmse_{model_name}.png")


def run_benchmark(config: BenchConfig, out_dir: str | Path) -> ResultsTable:
    """Sweep methods x models x seeds x budgets; write tables and figures."""
    cells = [
        _make_cell(config, method, model, seed, budget)
        for method in config.methods
        for model in config.models
        for seed in config.seeds
        for budget in config.budgets
    ]
    rows, failures = _execute_cells(cells, config.workers)
    table = ResultsTable(rows=rows, failures=failures)
    _write_outputs(table, Path(out_dir), config)
    return table


def moving_window_sweep(window_sizes: list[int], config: BenchConfig,
                        out_dir: str | Path) -> ResultsTable:
    """Run the moving-window methods at each window size and tabulate."""
    methods = [m for m in config.methods if m.startswith("lmc")]
    if not methods:
        raise ValueError("window sweep needs at least one lmc-* method")
    for window in window_sizes:
        if window > config.horizon:
            raise ValueError(f"window {window} exceeds horizon {config.horizon}")
    cells = [
        _make_cell(config, method, model, seed, budget, window=window)
        for window in window_sizes
        for method in methods
        for model in config.models
        for seed in config.seeds
        for budget in config.budgets
    ]
    rows, failures = _execute_cells(cells, config.workers)
    table = ResultsTable(rows=rows, failures=failures)
    _write_outputs(table, Path(out_dir), config, with_window=True)
    return table


def plot_script(config: BenchConfig) -> str:
    """A plot-tool-agnostic script describing the budget figure layout."""
    lines = [
        "# layout commands for the state-RMSE budget figure",
        "# data: raw.csv (schema ssmlfi-raw-v1), aggregate.csv",
        "set datafile separator ','",
        "set style data boxplot",
        "set xlabel 'simulations per time-step'",
        "set ylabel 'state RMSE'",
        f"# methods: {', '.join(config.methods)}",
        f"# budgets: {', '.join(str(b) for b in config.budgets)}",
    ]
    for i, method in enumerate(config.methods):
        lines.append(
            "plot 'raw.csv' using 4:5 every ::1 with boxplot "
            f"title '{method}' # filter column 1 == '{method}'"
            if i == 0 else
            "replot 'raw.csv' using 4:5 every ::1 with boxplot "
            f"title '{method}' # filter column 1 == '{method}'"
        )
    return "\n".join(lines) + "\n"
