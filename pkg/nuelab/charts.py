"""Static SVG rate curves: -(1/n) log p_n against n with the fitted and predicted rates."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .runner import ChartSeries  # noqa: E402

# fixed salt and no timestamp: identical data gives an identical file
plt.rcParams["svg.hashsalt"] = "nuelab"


def render_rate_chart(series: ChartSeries, path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot(series.n_values, series.rates, marker="o", linestyle="-", color="#1f4e79", label=r"$-\frac{1}{n}\log \hat p_n$")
    if series.fitted is not None:
        ax.axhline(series.fitted, color="#2e7d32", linestyle=":", label=f"fitted xi = {series.fitted:.4f}")
    if series.bound is not None:
        ax.axhline(series.bound, color="#b3261e", linestyle="--", label=f"variational = {series.bound:.4f}")
    ax.set_xlabel("n [iterations]")
    ax.set_ylabel("rate [1/iteration]")
    ax.set_title(series.title)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", fontsize="small")
    fig.tight_layout()
    target = Path(path)
    fig.savefig(target, format="svg", metadata={"Date": None})
    plt.close(fig)
    return target
