"""Matplotlib figure rendering for the report paths.

Every CLI report that writes delimited output can also render a PNG next to
it.  Figures are built from the already-computed data (never recomputed) and
carry the config hash in a footer so a picture can be traced to its run.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

FIG_SIZE = (6.4, 4.2)
DPI = 130


def _finish(fig, config_hash: str | None):
    from . import __version__

    if config_hash:
        fig.text(
            0.99,
            0.01,
            f"srdlab {__version__} cfg {config_hash}",
            ha="right",
            va="bottom",
            fontsize=6,
            color="0.5",
        )
    fig.tight_layout(rect=(0, 0.02, 1, 1))
    return fig


def save_figure(fig, path) -> None:
    fig.savefig(path, dpi=DPI, metadata={"Software": "srdlab"})
    plt.close(fig)


def figure_tensor_entries(rows, chi: float, chi_tilde: float, config_hash=None):
    """Sorted magnitudes of the nonzero tensor entries, one series per kind."""
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    for kind, marker in (("chi", "o"), ("chi_tilde", "s")):
        values = sorted((abs(r[5]) for r in rows if r[4] == kind), reverse=True)
        if values:
            ax.semilogy(range(1, len(values) + 1), values, marker, ms=4, label=kind)
    ax.axhline(chi, color="C0", ls=":", lw=1, label="chi (Frobenius)")
    ax.axhline(chi_tilde, color="C1", ls=":", lw=1, label="chi~ (Frobenius)")
    ax.set_xlabel("entry rank")
    ax.set_ylabel("|entry|")
    ax.set_title("nonzero quartic tensor entries")
    ax.legend(fontsize=8)
    return _finish(fig, config_hash)


def figure_bounds_sweep(sigma_grid, nu_values, proxy_values, comparison_values, config_hash=None):
    """Rate and upper-bound shapes over the diffusivity grid."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 4.0))
    ax1.loglog(sigma_grid, nu_values, "o-", ms=4)
    ax1.set_xlabel("sigma")
    ax1.set_ylabel("rate nu")
    ax1.set_title("convergence rate")
    ax2.loglog(sigma_grid, proxy_values, "o-", ms=4, label="this bound (shape)")
    ax2.loglog(sigma_grid, comparison_values, "s--", ms=4, label="occupation-measure bound")
    ax2.set_xlabel("sigma")
    ax2.set_ylabel("relaxation-time bound")
    ax2.set_title("upper bounds")
    ax2.legend(fontsize=8)
    return _finish(fig, config_hash)


def figure_simulation(stats, law, config_hash=None):
    """Circle histogram vs uniform, U marginal vs Gaussian, autocorrelations."""
    fig, (ax1, ax2, ax3) = plt.subplots(1, 3, figsize=(11.5, 3.6))
    centers = 0.5 * (stats.bin_edges[1:] + stats.bin_edges[:-1])
    width = stats.bin_edges[1] - stats.bin_edges[0]
    ax1.bar(centers, stats.histogram_mass / width, width=width, alpha=0.7)
    ax1.axhline(1.0 / law.uniform_mass, color="k", ls="--", lw=1, label="uniform")
    ax1.set_xlabel("x")
    ax1.set_ylabel("density")
    ax1.set_title("position marginal")
    ax1.legend(fontsize=8)

    var = law.gaussian_variances[0]
    grid = np.linspace(-4 * math.sqrt(var), 4 * math.sqrt(var), 200)
    ax2.plot(grid, np.exp(-(grid**2) / (2 * var)) / math.sqrt(2 * math.pi * var), "k--", lw=1)
    ax2.errorbar(
        [0.0],
        [stats.means[0]],
        yerr=[math.sqrt(stats.variances[0] / stats.n_samples)],
        fmt="o",
        label=f"mean u1 = {stats.means[0]:.3g}",
    )
    ax2.set_title(f"u1: var {stats.variances[0]:.3g} (target {var:.3g})")
    ax2.legend(fontsize=8)

    rho = stats.autocorrelations
    lags = np.arange(rho.shape[1]) * stats.record_dt
    for name, series in zip(stats.observable_names, rho):
        ax3.plot(lags, series, lw=1, label=name)
    ax3.set_xlabel("lag (time)")
    ax3.set_ylabel("autocorrelation")
    ax3.set_title("observable mixing")
    ax3.legend(fontsize=7)
    return _finish(fig, config_hash)


def figure_trel_sweep(rows, config_hash=None):
    """Measured relaxation times per (L, sigma) with the lower bounds."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.5, 4.0))
    by_L: dict[float, list] = {}
    for row in rows:
        by_L.setdefault(row["L"], []).append(row)
    for i, (L, group) in enumerate(sorted(by_L.items())):
        group = sorted(group, key=lambda r: r["sigma"])
        sigmas = [r["sigma"] for r in group]
        ax1.loglog(sigmas, [r["t_rel"] for r in group], f"C{i}o-", ms=4, label=f"L={L:g}")
        ax1.axhline(group[0]["lower_bound"], color=f"C{i}", ls=":", lw=1)
    ax1.set_xlabel("sigma")
    ax1.set_ylabel("t_rel")
    ax1.set_title("measured t_rel (dots) vs lower bounds (dotted)")
    ax1.legend(fontsize=8)

    star_rows = [r for r in rows if r.get("at_sigma_star")]
    if len(star_rows) >= 2:
        Ls = np.array([r["L"] for r in star_rows])
        ts = np.array([r["t_rel"] for r in star_rows])
        order = np.argsort(Ls)
        Ls, ts = Ls[order], ts[order]
        slope = np.polyfit(np.log(Ls), np.log(ts), 1)[0]
        ax2.loglog(Ls, ts, "ko-", label=f"slope {slope:.2f}")
        ax2.loglog(Ls, ts[0] * (Ls / Ls[0]) ** 1.5, "k--", lw=1, label="L^{3/2}")
        ax2.set_xlabel("L")
        ax2.set_ylabel("t_rel at sigma*")
        ax2.legend(fontsize=8)
    ax2.set_title("size scaling at the optimal diffusivity")
    return _finish(fig, config_hash)


def figure_compare(rows, c_fit: float, config_hash=None):
    """Measured relaxation time against the fitted upper-bound shape."""
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    shapes = np.array([r["upper_shape"] for r in rows])
    measured = np.array([r["t_rel"] for r in rows])
    lower = np.array([r["lower_bound"] for r in rows])
    ax.loglog(shapes, measured, "o", ms=5, label="measured")
    ax.loglog(shapes, lower, "^", ms=4, label="lower bound")
    grid = np.linspace(shapes.min(), shapes.max(), 50)
    ax.loglog(grid, c_fit * grid, "k--", lw=1, label=f"C * shape, C = {c_fit:.3g}")
    ax.set_xlabel("sigma^2 C2^2 + sigma^-2 (C1^2 + 1/eta)")
    ax.set_ylabel("time")
    ax.set_title("bound sandwich across the sweep")
    ax.legend(fontsize=8)
    return _finish(fig, config_hash)
