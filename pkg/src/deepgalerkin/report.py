"""Figure rendering for run artifacts; every figure goes straight to a file."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["save_loss_figure", "save_solution_figure", "save_compare_figure"]

_DPI = 150


def save_loss_figure(path, history, term_history=None):
    """Loss curve on a log scale, with per-term curves in soft mode."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    iters = np.arange(len(history))
    ax.semilogy(iters, history, lw=1.2, label="loss")
    if term_history:
        terms = np.asarray(term_history)
        for i, label in enumerate(("residual", "boundary", "initial")):
            if np.any(terms[:, i] > 0):
                ax.semilogy(iters, terms[:, i], lw=0.8, alpha=0.7, label=label)
        ax.legend(frameon=False)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI, bbox_inches="tight")
    plt.close(fig)


def save_solution_figure(path, axes, values, var_names, title="solution"):
    """Line plot for 1-d grids, heatmap for 2-d grids."""
    values = np.asarray(values)
    if len(axes) == 1:
        fig, ax = plt.subplots(figsize=(7, 4.5))
        ax.plot(axes[0], values.ravel(), lw=1.5)
        ax.set_xlabel(var_names[0])
        ax.set_ylabel("u")
        ax.grid(alpha=0.3)
    elif len(axes) == 2:
        fig, ax = plt.subplots(figsize=(6.5, 5))
        mesh = ax.pcolormesh(axes[0], axes[1], values.T, shading="gouraud", cmap="viridis")
        fig.colorbar(mesh, ax=ax, label="u")
        ax.set_xlabel(var_names[0])
        ax.set_ylabel(var_names[1])
    else:
        return  # higher-dimensional grids stay CSV-only
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI, bbox_inches="tight")
    plt.close(fig)


def save_compare_figure(path, axes, model_values, oracle_values, title="model vs oracle"):
    """Three panels: model, reference, absolute difference."""
    xs, ys = axes
    diff = np.abs(np.asarray(model_values) - np.asarray(oracle_values))
    fig, axs = plt.subplots(1, 3, figsize=(15, 4.2))
    for ax, values, label in zip(
        axs, (model_values, oracle_values, diff), ("model", "oracle", "|difference|")
    ):
        mesh = ax.pcolormesh(xs, ys, np.asarray(values).T, shading="gouraud", cmap="viridis")
        fig.colorbar(mesh, ax=ax)
        ax.set_title(label)
        ax.set_xlabel("x")
        ax.set_ylabel("y")
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI, bbox_inches="tight")
    plt.close(fig)
