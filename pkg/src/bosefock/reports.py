"""Figures rendered next to the CSV outputs.

Every function takes data already written to disk in delimited form and
draws the matching picture as a PNG sibling.  The Agg backend is forced so
runs behave identically with and without a display.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_DPI = 150


def plot_trajectory(rows, path) -> None:
    """Energy and particle-number traces of one optimization run."""
    iters = [r.iteration for r in rows]
    fig, (ax_e, ax_n) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    ax_e.errorbar(
        iters, [r.energy for r in rows], yerr=[_bar(r.energy_stderr) for r in rows],
        lw=1.0, elinewidth=0.6, color="tab:blue",
    )
    ax_e.set_ylabel("energy")
    ax_twin = ax_e.twinx()
    ax_twin.semilogy(
        iters, [max(r.rescaled_variance, 1e-16) for r in rows],
        lw=0.8, color="tab:gray", alpha=0.7,
    )
    ax_twin.set_ylabel("rescaled variance", color="tab:gray")
    ax_n.errorbar(
        iters, [r.mean_n for r in rows], yerr=[_bar(r.stderr_n) for r in rows],
        lw=1.0, elinewidth=0.6, color="tab:orange",
    )
    ax_n.set_ylabel("mean particle number")
    ax_n.set_xlabel("iteration")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def plot_density(centers, values, stderr, path, *, xlabel="x") -> None:
    centers = np.asarray(centers)
    values = np.asarray(values)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(centers, values, lw=1.2, color="tab:blue")
    err = np.nan_to_num(np.asarray(stderr, dtype=np.float64))
    ax.fill_between(centers, values - err, values + err, alpha=0.3, color="tab:blue")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("density")
    ax.set_ylim(bottom=0.0)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def plot_obdm_curve(displacements, values, stderr, path) -> None:
    """Displacement OBDM of a periodic box."""
    fig, ax = plt.subplots(figsize=(6, 4))
    err = np.nan_to_num(np.asarray(stderr, dtype=np.float64))
    ax.errorbar(displacements, values, yerr=err, lw=1.2, elinewidth=0.6,
                color="tab:green")
    ax.set_xlabel("displacement")
    ax.set_ylabel("one-body density matrix")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def plot_obdm_matrix(matrix, path, *, condensate_fraction=None) -> None:
    """Projected OBDM heat map with its eigenvalue spectrum."""
    matrix = np.asarray(matrix)
    eigvals = np.linalg.eigvalsh(matrix)[::-1]
    fig, (ax_m, ax_s) = plt.subplots(1, 2, figsize=(9, 4))
    image = ax_m.imshow(matrix, cmap="RdBu_r",
                        vmin=-np.abs(matrix).max(), vmax=np.abs(matrix).max())
    fig.colorbar(image, ax=ax_m, shrink=0.85)
    ax_m.set_xlabel("orbital j")
    ax_m.set_ylabel("orbital i")
    ax_s.plot(np.arange(1, eigvals.size + 1), eigvals, "o-", ms=3, lw=0.8,
              color="tab:purple")
    ax_s.set_xlabel("natural orbital")
    ax_s.set_ylabel("occupation")
    if condensate_fraction is not None:
        ax_s.set_title(f"condensate fraction {condensate_fraction:.3f}")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def _bar(err: float) -> float:
    return err if np.isfinite(err) else 0.0
