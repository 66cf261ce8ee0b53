"""Matplotlib figures written next to the delimited outputs."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def save_history_figure(history, best_iteration, path):
    """Validation OA per co-training iteration with the saved model marked."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(len(history)), history, marker="o", color="#0072b2")
    ax.axvline(best_iteration, color="#d55e00", linestyle="--",
               label=f"best iteration ({best_iteration})")
    ax.set_xlabel("co-training iteration")
    ax.set_ylabel("validation OA (co-decision)")
    ax.set_ylim(0.0, 1.02)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_map_figure(rgb, path):
    """Classification map as a PNG alongside the bit-exact PPM."""
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.imshow(rgb, interpolation="nearest")
    ax.set_xticks([])
    ax.set_yticks([])
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
