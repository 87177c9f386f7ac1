"""Figures written next to the numeric outputs (Agg backend, PNG files)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .runner import RunArtifacts, RunRecord  # noqa: E402


def _slice(grid, values):
    """2-D view of a value vector: full for 2-D grids, middle slice above."""
    shape = grid.points_per_dim
    v = np.asarray(values[: grid.n_states]).reshape(shape)
    while v.ndim > 2:
        v = v[..., shape[v.ndim - 1] // 2]
    return v


def plot_values(art: RunArtifacts, path) -> Path:
    grid = art.grid
    b = art.solution.bounds
    fig, axes = plt.subplots(1, 2, figsize=(9, 4), constrained_layout=True)
    if grid.dim == 1:
        x = grid.axis(0)
        for ax, (name, v) in zip(axes, [("lower", b.lower), ("gap", b.upper - b.lower)]):
            ax.plot(x, v[: grid.n_states], drawstyle="steps-mid")
            ax.set_xlabel("x1")
            ax.set_title(name)
        axes[0].plot(x, b.upper[: grid.n_states], drawstyle="steps-mid", alpha=0.6)
    else:
        ext = [grid.cell_lower[1], grid.cell_upper[1], grid.cell_lower[0], grid.cell_upper[0]]
        for ax, (name, v) in zip(axes, [("lower", b.lower), ("gap", b.upper - b.lower)]):
            im = ax.imshow(_slice(grid, v), origin="lower", extent=ext, aspect="auto", vmin=0,
                           vmax=1 if name == "lower" else None)
            ax.set_xlabel("x2")
            ax.set_ylabel("x1")
            ax.set_title(name)
            fig.colorbar(im, ax=ax)
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return Path(path)


def plot_policy(art: RunArtifacts, path) -> Path:
    grid = art.grid
    acts = art.solution.policy.actions
    first = acts if art.solution.policy.stationary else acts[0]
    fig, ax = plt.subplots(figsize=(5, 4), constrained_layout=True)
    if grid.dim == 1:
        ax.step(grid.axis(0), first[: grid.n_states], where="mid")
        ax.set_xlabel("x1")
        ax.set_ylabel("action")
    else:
        ext = [grid.cell_lower[1], grid.cell_upper[1], grid.cell_lower[0], grid.cell_upper[0]]
        im = ax.imshow(_slice(grid, first), origin="lower", extent=ext, aspect="auto", cmap="tab20")
        ax.set_xlabel("x2")
        ax.set_ylabel("x1")
        fig.colorbar(im, ax=ax, label="action")
    ax.set_title("policy (step 0)")
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return Path(path)


def plot_mc(rec: RunRecord, path) -> Path:
    checks = [c for c in rec.initial if c.mc is not None]
    fig, ax = plt.subplots(figsize=(5, 3.5), constrained_layout=True)
    for i, c in enumerate(checks):
        ax.plot([i, i], [c.lower, c.upper], lw=6, alpha=0.4, color="tab:blue")
        f = c.mc["frequency"]
        ax.errorbar(i, f, yerr=c.mc["delta"], fmt="o", color="tab:green" if c.contained else "tab:red")
    ax.set_xticks(range(len(checks)))
    ax.set_xticklabels([",".join(f"{v:g}" for v in c.point) for c in checks], rotation=30, fontsize=7)
    ax.set_ylim(-0.02, 1.02)
    ax.set_ylabel("probability")
    ax.set_title("certified bounds vs Monte Carlo")
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return Path(path)


def plot_convergence(history, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5), constrained_layout=True)
    ax.semilogy(np.arange(1, len(history) + 1), np.maximum(history, 1e-300))
    ax.set_xlabel("iteration")
    ax.set_ylabel("max gap")
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return Path(path)


def plot_profile(profile, path) -> Path:
    t = np.arange(len(profile.prediction)) * 0.25
    fig, ax = plt.subplots(figsize=(6, 3.5), constrained_layout=True)
    ax.plot(t, profile.prediction, label="mean")
    ax.fill_between(t, profile.prediction - profile.sigma, profile.prediction + profile.sigma, alpha=0.3)
    ax.set_xlabel("hour of day")
    ax.set_ylabel("demand [m3/h]")
    ax.legend()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return Path(path)


def render(rec: RunRecord, art: RunArtifacts, out_dir) -> list:
    """Write every applicable figure into ``out_dir``; returns the paths."""
    out_dir = Path(out_dir)
    paths = []
    if art.solution is None:
        return paths
    stem = f"{rec.benchmark}-{rec.variant}"
    paths.append(plot_values(art, out_dir / f"{stem}-values.png"))
    paths.append(plot_policy(art, out_dir / f"{stem}-policy.png"))
    if any(c.mc is not None for c in rec.initial):
        paths.append(plot_mc(rec, out_dir / f"{stem}-mc.png"))
    if art.solution.history:
        paths.append(plot_convergence(art.solution.history, out_dir / f"{stem}-convergence.png"))
    return paths
