"""Figures written next to the CSV outputs (non-interactive Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.dpi": 120,
}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_energy(energy_log: np.ndarray, path) -> Path:
    """Kinetic energy, dissipation and forcing work against time."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(5.0, 3.2))
        t = energy_log[:, 0]
        ax.plot(t, energy_log[:, 1], label="energy 1/2 |u|^2")
        ax.plot(t, energy_log[:, 2], label="dissipation |grad u|^2")
        ax.plot(t, energy_log[:, 3], label="forcing work")
        ax.set_xlabel("t")
        ax.legend()
        return _save(fig, path)


def plot_decay(stacks: dict, path, ylabel: str = "phi") -> Path:
    """Log-log curves of a functional against radius, one per cylinder stack."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(5.0, 3.6))
        for label, (r, v) in sorted(stacks.items()):
            r, v = np.asarray(r), np.asarray(v)
            ok = v > 0
            if ok.any():
                ax.loglog(r[ok], v[ok], "o-", ms=3, lw=0.8, label=label)
        ax.set_xlabel("radius")
        ax.set_ylabel(ylabel)
        if len(stacks) <= 12:
            ax.legend()
        return _save(fig, path)


def plot_envelope(radius, measured, first, improved, path) -> Path:
    """Measured phi against the first-pass and improved envelopes."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(5.0, 3.6))
        radius = np.asarray(radius)
        order = np.argsort(radius)
        for y, style, label in ((measured, "ko", "measured phi"), (first, "b--", "first-pass envelope"),
                                (improved, "r-", "improved envelope")):
            y = np.asarray(y)[order]
            if np.any(y > 0):
                ax.loglog(radius[order], np.where(y > 0, y, np.nan), style, ms=3, label=label)
        ax.set_xlabel("radius")
        ax.set_ylabel("phi")
        if ax.get_legend_handles_labels()[0]:
            ax.legend()
        return _save(fig, path)
