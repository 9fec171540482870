"""Figures written next to the CSV outputs (Agg backend, reproducible PNGs)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# drop the version string so identical data gives identical bytes
_META = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path


def plot_noise(path, noise, W=None):
    fig, axes = plt.subplots(2 if W is not None else 1, 1, figsize=(7, 5 if W is not None else 3))
    axes = np.atleast_1d(axes)
    axes[0].plot(noise.y_grid, noise.w_values, lw=0.8)
    axes[0].set_xlabel("y")
    axes[0].set_ylabel("w(y)")
    if W is not None:
        xi, vals, eps = W
        axes[1].plot(xi, vals, lw=0.8)
        axes[1].set_xlabel(r"$\xi$")
        axes[1].set_ylabel(rf"$W^\epsilon(\xi)$, $\epsilon$={eps:g}")
    return _save(fig, path)


def plot_fronts(path, fronts):
    fig, ax = plt.subplots(figsize=(6, 4))
    for fr in fronts:
        if fr.x_nodes.size == 1:
            ax.plot([fr.time_stamp], fr.y_front, "o", color="C0")
        else:
            ax.plot(fr.x_nodes, fr.y_front, label=f"t={fr.time_stamp:g}")
    if fronts and fronts[0].x_nodes.size == 1:
        ax.set_xlabel("t")
    else:
        ax.set_xlabel("x")
        ax.legend(fontsize=8)
    ax.set_ylabel("front position y")
    return _save(fig, path)


def plot_corrector(path, corr, ix=0, label=None):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(corr.xi_grid, corr.chi[ix], label=r"$\chi$")
    ax.plot(corr.xi_grid, corr.chi_bar[ix], label=r"$\bar\chi$")
    ax.set_xlabel(r"$\xi$")
    ax.set_title(label or f"x = {corr.x_grid[ix]:.3g}", fontsize=9)
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_histogram(path, values, title="", reference_sd=None):
    fig, ax = plt.subplots(figsize=(6, 4))
    values = np.asarray(values, dtype=float)
    ax.hist(values, bins=30, density=True, alpha=0.7)
    if reference_sd:
        s = np.linspace(values.min(), values.max(), 200)
        ax.plot(s, np.exp(-0.5 * (s / reference_sd) ** 2) / (reference_sd * np.sqrt(2 * np.pi)))
    ax.set_title(title, fontsize=9)
    return _save(fig, path)


def plot_series(path, x, ys, xlabel, ylabel, logx=False, logy=False):
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, y in ys.items():
        ax.plot(x, y, "o-", label=name)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8)
    return _save(fig, path)
