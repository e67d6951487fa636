"""Optional PNG renderings of the CDF and approximation-gap outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_cdfs(path: Path, x, curves: dict, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, y in curves.items():
        style = "-" if label.startswith("empirical") else "--"
        ax.plot(x, y, style, label=label)
    ax.set_xlabel("mutual information (nats)")
    ax.set_ylabel("CDF")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(alpha=0.3)
    ax.legend()
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return Path(path)


def plot_gap(path: Path, rows: list[dict]) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    for n in sorted({r["n"] for r in rows}):
        sel = [r for r in rows if r["n"] == n]
        ax.loglog([r["alpha"] for r in sel], [r["max_gap"] for r in sel], "o-", label=f"N={n}")
    ax.set_xlabel("alpha")
    ax.set_ylabel("max |S_exact - S_approx|")
    ax.grid(alpha=0.3, which="both")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return Path(path)
