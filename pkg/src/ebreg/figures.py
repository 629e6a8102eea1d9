"""Render evidence curves to image files alongside the delimited output."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _draw_curve(ax, curve, title: str | None = None):
    lams = curve.lambdas
    vals = curve.log_zs
    ax.plot(lams, vals, "-", color="tab:blue", lw=1.4, label="log Z")
    if curve.std_errors is not None:
        se = np.asarray(curve.std_errors)
        ax.fill_between(lams, vals - 3 * se, vals + 3 * se, color="tab:blue", alpha=0.2,
                        linewidth=0)
    asy = curve.asymptote
    pred = np.array([asy.log_z_at(l) if asy.second_order_coeff * l ** (-2 / asy.kappa) > -1
                     else np.nan for l in lams])
    ax.plot(lams, pred, ":", color="tab:red", lw=1.2, label="asymptote")
    ax.axhline(asy.log_z_inf, color="0.6", lw=0.6)
    ax.set_xscale("log")
    ax.set_xlabel(r"$\lambda$")
    ax.set_ylabel(r"$\log Z(\lambda)$")
    if title:
        ax.set_title(title, fontsize=9)
    ax.legend(fontsize=7, frameon=False)


def plot_curve(curve, path, title: str | None = None) -> None:
    """Write one evidence curve (with its asymptote) to an image file."""
    fig, ax = plt.subplots(figsize=(5.0, 3.4), dpi=140)
    _draw_curve(ax, curve, title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_panel_grid(curves, titles, path, ncols: int = 3) -> None:
    """Write a grid of evidence curves (e.g. model-by-size panels) to a file."""
    n = len(curves)
    nrows = (n + ncols - 1) // ncols
    fig, axes = plt.subplots(nrows, ncols, figsize=(3.6 * ncols, 2.8 * nrows), dpi=130)
    axes = np.atleast_1d(axes).ravel()
    for ax, curve, title in zip(axes, curves, titles):
        _draw_curve(ax, curve, title)
    for ax in axes[n:]:
        ax.set_visible(False)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
