"""SVG figures for campaign reports. Output is byte-stable for identical inputs."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_RC = {"svg.hashsalt": "anderson-lab", "svg.fonttype": "none", "font.size": 9}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return path


def fluctuation_histogram(scaled, indices, eps: float, path, predicted_cov=None, bins: int = 40) -> Path:
    """Histogram of scaled fluctuations ``(N, m)`` per index with the predicted normal density."""
    scaled = np.atleast_2d(np.asarray(scaled, dtype=float).T).T
    m = len(indices)
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(1, m, figsize=(3.6 * m, 3.0), squeeze=False)
        for c, k in enumerate(indices):
            ax = axes[0, c]
            x = scaled[:, c]
            ax.hist(x, bins=bins, density=True, color="0.75", edgecolor="0.4", linewidth=0.4)
            if predicted_cov is not None:
                var = float(np.atleast_2d(predicted_cov)[c, c])
                if var > 0:
                    sd = math.sqrt(var)
                    grid = np.linspace(min(x.min(), -4 * sd), max(x.max(), 4 * sd), 400)
                    ax.plot(grid, np.exp(-(grid**2) / (2 * var)) / math.sqrt(2 * math.pi * var), "k-", lw=1.2)
            ax.set_title(f"k={k}, eps={eps:g}, N={len(x)}")
            ax.set_xlabel("scaled fluctuation")
        axes[0, 0].set_ylabel("density")
        fig.tight_layout()
        return _save(fig, path)


def variance_ladder(eps, lam_var, indices, dim: int, path, kinetic_var=None) -> Path:
    """Sample variances ``(rungs, m)`` against eps on log axes, with an eps^d guide per index."""
    eps = np.asarray(eps, dtype=float)
    lam_var = np.atleast_2d(np.asarray(lam_var, dtype=float).T).T
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.2, 3.2))
        for c, k in enumerate(indices):
            var = lam_var[:, c]
            if np.all(var > 0):
                ax.loglog(eps, var, "o-", label=f"Var lambda_{k}")
                ax.loglog(eps, var[0] * (eps / eps[0]) ** dim, "k:", lw=0.8)
        if kinetic_var is not None and np.all(np.asarray(kinetic_var) > 0):
            ax.loglog(eps, kinetic_var, "s--", label=f"Var T_{indices[0]}")
        ax.set_xlabel("eps")
        ax.set_ylabel("variance")
        if ax.lines:
            ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)
