"""Figure rendering for benchmark and run reports.

All figures are written to files (Agg backend); nothing is shown
interactively.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_state_rmse_boxplot(rows, model_name: str, path: str | Path):
    """Box plots of per-seed state RMSE, grouped by budget and method."""
    methods = sorted({r.method for r in rows})
    budgets = sorted({r.budget for r in rows})
    fig, ax = plt.subplots(figsize=(1.8 + 1.6 * len(budgets), 3.4))
    width = 0.8 / max(len(methods), 1)
    for j, method in enumerate(methods):
        positions, data = [], []
        for i, budget in enumerate(budgets):
            values = [r.state_rmse for r in rows
                      if r.method == method and r.budget == budget]
            if values:
                positions.append(i + j * width - 0.4 + width / 2)
                data.append(values)
        if data:
            box = ax.boxplot(data, positions=positions, widths=width * 0.9,
                             patch_artist=True, manage_ticks=False)
            color = plt.cm.tab10(j % 10)
            for patch in box["boxes"]:
                patch.set_facecolor(color)
                patch.set_alpha(0.6)
            ax.plot([], [], color=color, label=method)
    ax.set_xticks(range(len(budgets)))
    ax.set_xticklabels([str(b) for b in budgets])
    ax.set_xlabel("simulations per time-step")
    ax.set_ylabel("state RMSE")
    ax.set_title(model_name)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_window_sweep(rows, model_name: str, path: str | Path):
    """State RMSE and wall time against the moving-window size."""
    methods = sorted({r.method for r in rows})
    windows = sorted({r.window for r in rows})
    fig, (ax_rmse, ax_time) = plt.subplots(1, 2, figsize=(7.2, 3.2))
    for method in methods:
        rmse_mean, time_mean = [], []
        for window in windows:
            cells = [r for r in rows if r.method == method and r.window == window]
            rmse_mean.append(np.mean([r.state_rmse for r in cells]) if cells else np.nan)
            walls = [r.wall_min for r in cells if r.wall_min is not None]
            time_mean.append(np.mean(walls) if walls else np.nan)
        ax_rmse.plot(windows, rmse_mean, marker="o", label=method)
        ax_time.plot(windows, time_mean, marker="o", label=method)
    for ax, ylabel in ((ax_rmse, "state RMSE"), (ax_time, "wall time [min]")):
        ax.set_xlabel("window size")
        ax.set_ylabel(ylabel)
        ax.set_xticks(windows)
    ax_rmse.set_title(model_name)
    ax_rmse.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_run_trace(truth, posteriors, model_name: str, path: str | Path):
    """Ground-truth states with posterior means and spread per time-step."""
    indices = posteriors.indices
    dim = truth.states.shape[1]
    fig, axes = plt.subplots(dim, 1, figsize=(6.4, 2.2 * dim), squeeze=False)
    for d in range(dim):
        ax = axes[d, 0]
        ax.plot(range(1, truth.horizon + 1), truth.states[:, d],
                color="black", lw=1.2, label="ground truth")
        if indices:
            means = np.array([posteriors.mean(t)[d] for t in indices])
            lo = np.array([np.quantile(posteriors[t].samples[:, d], 0.05)
                           for t in indices])
            hi = np.array([np.quantile(posteriors[t].samples[:, d], 0.95)
                           for t in indices])
            ax.plot(indices, means, color="tab:orange", marker=".",
                    lw=1.0, label="posterior mean")
            ax.fill_between(indices, lo, hi, color="tab:orange", alpha=0.25,
                            label="5-95% band")
        ax.set_ylabel(f"state[{d}]")
        if d == 0:
            ax.set_title(model_name)
            ax.legend(fontsize=8)
    axes[-1, 0].set_xlabel("time-step")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_oracle_histogram(accepted: np.ndarray, estimate: np.ndarray,
                          path: str | Path):
    """Histogram of accepted samples per dimension with the KDE mode marked."""
    accepted = np.atleast_2d(accepted)
    dim = accepted.shape[1]
    fig, axes = plt.subplots(1, dim, figsize=(3.2 * dim, 2.8), squeeze=False)
    for d in range(dim):
        ax = axes[0, d]
        ax.hist(accepted[:, d], bins=40, color="tab:blue", alpha=0.7)
        ax.axvline(estimate[d], color="tab:red", lw=1.5, label="KDE mode")
        ax.set_xlabel(f"theta[{d}]")
        if d == 0:
            ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
