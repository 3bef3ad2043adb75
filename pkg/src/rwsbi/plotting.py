"""Figure rendering for the report path.

Every CLI subcommand that writes delimited output can also render a figure
next to it (``--plot``); these helpers keep the styling in one place.
Files are written with the same basename as the CSV, .png extension.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from . import heat as H

RC = {
    "figure.figsize": (7.0, 4.4),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
    "legend.fontsize": 9,
}


def _fig(nrows=1, ncols=1):
    with plt.rc_context(RC):
        fig, ax = plt.subplots(nrows, ncols, constrained_layout=True)
    return fig, ax


def save(fig, path):
    fig.savefig(path, dpi=140)
    plt.close(fig)
    return str(path)


def fig_path(csv_path, suffix=""):
    from pathlib import Path

    p = Path(csv_path)
    return p.with_name(p.stem + (f"_{suffix}" if suffix else "") + ".png")


def plot_rho_solution(sol: H.RhoSolution, path):
    """rho_0 and total mass against their closed-form asymptotics."""
    fig, axes = _fig(1, 2)
    ts = sol.times[sol.times > math.e * 1.01]
    axes[0].plot(sol.times, sol.rho0, label="rho0(t)")
    axes[0].plot(ts, [H.asymptotic_rho0(t, sol.params) for t in ts], "--",
                 label="asymptote")
    axes[0].set_xscale("log")
    axes[0].set_xlabel("t")
    axes[0].set_title("origin density")
    axes[0].legend()
    ts_r = sol.times[sol.times > 1.01]
    axes[1].plot(sol.times, sol.mass_sum, label="R(t) (sum)")
    axes[1].plot(sol.times, sol.mass_integral, ":", label="R(t) (integral)")
    axes[1].plot(ts_r, [H.asymptotic_R(t, sol.params) for t in ts_r], "--",
                 label="asymptote")
    axes[1].set_xscale("log")
    axes[1].set_yscale("log")
    axes[1].set_xlabel("t")
    axes[1].set_title("total mass")
    axes[1].legend()
    return save(fig, path)


def plot_profiles(sol: H.RhoSolution, snap_times, path, ygrid=None):
    """Rescaled profiles at several times against the limit shape."""
    if ygrid is None:
        ygrid = np.arange(-4.0, 4.0001, 0.05)
    fig, ax = _fig()
    for t in snap_times:
        sample = H.rescaled_profile(sol, t, ygrid)
        ys, vals = zip(*sample.points)
        ax.plot(ys, vals, label=f"t = {t:g} (sup dist {sample.sup_distance:.3f})")
    ax.plot(ygrid, [H.tilde_rho(y) for y in ygrid], "k--", label="normal tail")
    ax.set_xlabel("y")
    ax.set_ylabel("rho_[sigma sqrt(t) y](t) / log t")
    ax.legend()
    return save(fig, path)


def plot_replica_counts(matrix_rows, path, reference=None, title="replica counts"):
    """Histogram of per-replica totals; optional reference line."""
    fig, ax = _fig()
    vals = np.asarray(matrix_rows, dtype=float)
    ax.hist(vals, bins=30, alpha=0.75)
    if reference is not None:
        ax.axvline(reference, color="r", ls="--", label=f"reference {reference:.4g}")
        ax.legend()
    ax.set_title(title)
    return save(fig, path)


def plot_coupling_success(x0s, estimates, ses, path):
    fig, ax = _fig()
    ax.errorbar(x0s, estimates, yerr=[4 * s for s in ses], fmt="o-")
    ax.axhline(1.0, color="k", lw=0.7)
    ax.set_xscale("log", base=2)
    ax.set_xlabel("x0")
    ax.set_ylabel("success frequency (4 se bars)")
    return save(fig, path)


def plot_lower_blocks(blocks, path, window=100):
    """Running arrival mean and the success count against block index."""
    ns = np.array([b.n for b in blocks])
    mt = np.array([b.m_tilde for b in blocks], dtype=float)
    cum_e = np.array([b.cum_e for b in blocks])
    eta = np.array([b.eta_total for b in blocks])
    run = np.convolve(mt, np.ones(window) / window, mode="valid")
    fig, axes = _fig(1, 2)
    axes[0].plot(ns[window - 1:], run, label=f"arrivals per block (window {window})")
    axes[0].set_xlabel("block n")
    axes[0].legend()
    axes[1].plot(ns, eta, label="total count at t_3n")
    axes[1].plot(ns, cum_e, label="running successes")
    axes[1].set_xlabel("block n")
    axes[1].set_yscale("log")
    axes[1].legend()
    return save(fig, path)


def plot_verify_records(records, path):
    """One bar per check, green pass / red fail, grouped by suite."""
    fig, ax = _fig()
    names = [f"{r.suite}:{r.check}" for r in records]
    colors = ["tab:green" if r.passed else "tab:red" for r in records]
    ax.barh(range(len(records)), [1] * len(records), color=colors)
    ax.set_yticks(range(len(records)), names, fontsize=7)
    ax.set_xticks([])
    ax.invert_yaxis()
    ax.set_title("verification checks")
    fig.set_figheight(max(3.0, 0.22 * len(records)))
    return save(fig, path)
