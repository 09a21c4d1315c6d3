"""Headless figure rendering for sweeps and reports.

Every renderer writes a PNG next to the delimited artifact it
illustrates. The writer tag is stripped from the PNG metadata so equal
inputs produce byte-identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  backend must be set first
import numpy as np  # noqa: E402

from .ldpc import BerResult  # noqa: E402

_PNG_META = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)


def render_ber(result: BerResult, path) -> None:
    """BER and FER versus channel quality, log-scaled rates."""
    db = [p.ebn0_db for p in result.points]
    fig, ax = plt.subplots(figsize=(5.0, 3.5))
    ax.semilogy(db, [p.ber for p in result.points], "o-", label="BER")
    ax.semilogy(db, [p.fer for p in result.points], "s--", label="FER")
    ax.set_xlabel("Eb/N0 (dB)")
    ax.set_ylabel("error rate")
    ax.grid(True, which="both", alpha=0.4)
    ax.legend(loc="lower left")
    ax.set_title(f"{result.node_mode.value} decode, seed {result.seed}")
    _save(fig, path)


def render_accuracy(labels, predictions, class_names, path) -> None:
    """Per-class accuracy bars with the overall rate as a rule."""
    y = np.asarray(labels)
    p = np.asarray(predictions)
    accs = [float((p[y == c] == c).mean()) if (y == c).any() else 0.0
            for c in range(len(class_names))]
    fig, ax = plt.subplots(figsize=(4.5, 3.0))
    ax.bar(range(len(class_names)), accs, color="#4878cf")
    overall = float((p == y).mean())
    ax.axhline(overall, color="#d65f5f", linestyle="--",
               label=f"overall {overall:.3f}")
    ax.set_xticks(range(len(class_names)))
    ax.set_xticklabels(class_names, rotation=20)
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("accuracy")
    ax.legend(loc="lower right")
    _save(fig, path)


def render_posterior(name: str, probability: float, path) -> None:
    """Two-bar read-out of one posterior."""
    fig, ax = plt.subplots(figsize=(3.5, 3.0))
    ax.bar([0, 1], [probability, 1.0 - probability], color=["#4878cf",
                                                            "#b0b0b0"])
    ax.set_xticks([0, 1])
    ax.set_xticklabels([f"p({name}=1)", f"p({name}=0)"])
    ax.set_ylim(0.0, 1.0)
    for x, v in ((0, probability), (1, 1.0 - probability)):
        ax.text(x, v + 0.02, f"{v:.4f}", ha="center")
    _save(fig, path)
