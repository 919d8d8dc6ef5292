"""Figure rendering for the report outputs. Uses the non-interactive Agg backend."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> None:
    fig.tight_layout()
    # fixed metadata keeps reruns byte-identical
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)


def plot_history(history: list[dict], path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ep = [h["epoch"] for h in history]
    ax.semilogy(ep, [h["train_loss"] for h in history], label="train")
    test = [h["test_loss"] for h in history]
    if any(np.isfinite(test)):
        ax.semilogy(ep, test, label="test")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend()
    _save(fig, path)


def plot_pareto(foms: np.ndarray, pareto: list[int], labels: list[str], path) -> None:
    """Pairwise scatter of all outcomes with the non-dominated ones highlighted."""
    f = np.asarray(foms, dtype=np.float64)
    t = f.shape[1]
    pairs = [(i, j) for i in range(t) for j in range(i + 1, t)] or [(0, 0)]
    fig, axes = plt.subplots(1, len(pairs), figsize=(4 * len(pairs), 3.5), squeeze=False)
    mask = np.zeros(len(f), dtype=bool)
    mask[pareto] = True
    for ax, (i, j) in zip(axes[0], pairs):
        ax.scatter(f[~mask, i], f[~mask, j], s=14, c="0.6", label="restart")
        ax.scatter(f[mask, i], f[mask, j], s=24, c="C3", label="Pareto")
        ax.set_xlabel(f"J {labels[i]}")
        ax.set_ylabel(f"J {labels[j]}")
    axes[0][0].legend(fontsize=8)
    _save(fig, path)


def plot_field(field: np.ndarray, path, title: str | None = None, log: bool = True) -> None:
    f = np.asarray(field, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(4, 4))
    im = ax.imshow(np.log10(np.maximum(f, 1e-12)) if log else f, origin="lower", cmap="inferno")
    fig.colorbar(im, ax=ax, fraction=0.046, label="log10 |E|^2" if log else "|E|^2")
    if title:
        ax.set_title(title)
    ax.set_xticks([])
    ax.set_yticks([])
    _save(fig, path)
