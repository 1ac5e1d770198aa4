"""Figures for simulation reports."""

from __future__ import annotations

import numpy as np

from .simulation import METHODS, SimulationReport

LABELS = {
    "wishart_kde": "Wishart KDE",
    "invwishart_kde": "inverse Wishart KDE",
    "lg_kde": "log-Gaussian KDE",
    "mlg": "log-Gaussian mixture",
}
X_LABELS = {"wishart": "degrees of freedom", "invwishart": "degrees of freedom", "lg": "log sigma^2"}


def plot_simulation(report: SimulationReport, path: str) -> None:
    """Mean test log-likelihood per method with one-std error bars, saved to ``path``."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    x = np.asarray(report.values, dtype=float)
    if report.family == "lg":
        x = np.log(x)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for j, method in enumerate(METHODS):
        ax.errorbar(x, report.mean[:, j], yerr=report.std[:, j], marker="o", capsize=3, label=LABELS[method])
    ax.set_xlabel(X_LABELS[report.family])
    ax.set_ylabel("test log-likelihood")
    ax.set_title(f"{report.family}, n={report.n}, {report.replicates} replicates")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
