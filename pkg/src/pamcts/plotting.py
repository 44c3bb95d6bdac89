"""Small-multiples SVG: one row per environment, one column per alpha."""
from __future__ import annotations

import os
from typing import Any, Mapping


def render_svg(doc: Mapping[str, Any], path: "os.PathLike[str] | str") -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    envs = doc["envs"]
    labels = list(envs)
    alphas = sorted({a for panels in envs.values() for a in panels}, key=float)
    if not labels or not alphas:
        raise ValueError("nothing to plot")
    fig, axes = plt.subplots(
        len(labels), len(alphas),
        figsize=(2.6 * len(alphas), 2.2 * len(labels)),
        sharex=True, sharey=True, squeeze=False,
    )
    for r, label in enumerate(labels):
        for c, alpha in enumerate(alphas):
            ax = axes[r][c]
            points = envs[label].get(alpha, [])
            if points:
                budgets, means, stds = zip(*points)
                ax.errorbar(budgets, means, yerr=stds, fmt="o", ms=3, capsize=2)
            if r == 0:
                ax.set_title(f"alpha = {float(alpha):g}", fontsize=9)
            if c == 0:
                ax.set_ylabel(f"{label}\ncumulative reward", fontsize=8)
            if r == len(labels) - 1:
                ax.set_xlabel("iterations / decision", fontsize=8)
            ax.tick_params(labelsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
