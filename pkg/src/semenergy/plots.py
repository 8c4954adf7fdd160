"""Figure rendering for evaluation reports (headless matplotlib)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def save_score_histogram(centers, h_in, h_out, path, scorer: str = "") -> None:
    """Render the in/out score distributions next to the exported histogram CSV."""
    fig, ax = plt.subplots(figsize=(7, 4))
    width = (centers[1] - centers[0]) if len(centers) > 1 else 1.0
    ax.bar(centers, h_in, width=width, alpha=0.6, label="in-distribution", color="tab:blue")
    ax.bar(centers, h_out, width=width, alpha=0.6, label="out-of-distribution", color="tab:red")
    ax.set_xlabel("detection score (-E)")
    ax.set_ylabel("normalized frequency")
    title = "Score distribution"
    if scorer:
        title += f" ({scorer})"
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
