"""Figure rendering for analysis outputs.

Everything draws through the Agg backend and writes straight to files,
so these functions work headless and never pop a window.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .analysis import PowerFit, limit_summary
from .imaging import _to_gray
from .maps import AttentionMap
from .metrics import AGGREGATE_ID, DatasetReport

DPI = 150


def save_heatmap_figure(
    image: np.ndarray,
    attention: AttentionMap,
    out_path,
    alpha: float = 0.6,
    title: str | None = None,
    metadata: dict | None = None,
) -> None:
    """Attention overlaid on the stimulus, with a colorbar."""
    values = attention.values
    if image.shape[:2] != values.shape:
        raise ValueError(
            f"image is {image.shape[:2]}, attention map is {values.shape}"
        )
    peak = float(values.max())
    alphas = alpha * (values / peak) if peak > 0 else np.zeros_like(values)
    fig, ax = plt.subplots(figsize=(6, 6 * values.shape[0] / values.shape[1]))
    ax.imshow(_to_gray(image), cmap="gray", vmin=0.0, vmax=1.0)
    overlay = ax.imshow(values, cmap="inferno", alpha=alphas)
    fig.colorbar(overlay, ax=ax, fraction=0.046, pad=0.04)
    ax.set_axis_off()
    if title:
        ax.set_title(title)
    fig.savefig(out_path, dpi=DPI, bbox_inches="tight", metadata=metadata)
    plt.close(fig)


def save_convergence_figure(
    samples, fit: PowerFit, out_path, title: str | None = None,
    metadata: dict | None = None,
) -> None:
    """Score-versus-participants points with the fitted curve and limit.

    ``samples`` is a sequence of (n_participants, score) pairs, as fed
    to the power-law fit.
    """
    ns = np.array([n for n, _ in samples], dtype=float)
    scores = np.array([s for _, s in samples], dtype=float)
    dense = np.linspace(ns.min(), ns.max(), 256)
    curve = fit.a * dense**fit.b + fit.c

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.axhspan(fit.c_ci95[0], fit.c_ci95[1], color="tab:orange", alpha=0.2, lw=0)
    ax.axhline(fit.c, color="tab:orange", ls="--", lw=1, label=limit_summary(fit))
    ax.plot(dense, curve, color="tab:blue", lw=1.5, label="power-law fit")
    ax.plot(ns, scores, "o", color="tab:blue", ms=4, mfc="white")
    ax.set_xlabel("participants")
    ax.set_ylabel("score")
    if title:
        ax.set_title(title)
    ax.legend(loc="lower right", fontsize=8)
    fig.savefig(out_path, dpi=DPI, bbox_inches="tight", metadata=metadata)
    plt.close(fig)


def save_center_bias_figure(
    profile: np.ndarray, out_path, metadata: dict | None = None
) -> None:
    """Horizontal attention profile, peak-normalized, across image width."""
    profile = np.asarray(profile, dtype=float)
    x = np.linspace(0.0, 1.0, profile.size)
    fig, ax = plt.subplots(figsize=(6, 3))
    ax.fill_between(x, profile, color="tab:blue", alpha=0.25, lw=0)
    ax.plot(x, profile, color="tab:blue", lw=1.5)
    ax.set_xlim(0.0, 1.0)
    ax.set_ylim(0.0, 1.05)
    ax.set_xlabel("horizontal position (fraction of width)")
    ax.set_ylabel("relative attention")
    fig.savefig(out_path, dpi=DPI, bbox_inches="tight", metadata=metadata)
    plt.close(fig)


def save_score_bars(
    report: DatasetReport, out_path, metadata: dict | None = None
) -> None:
    """Per-image CC and NSS bars, aggregate drawn as reference lines."""
    rows = [r for r in report.per_image if r.image_id != AGGREGATE_ID]
    labels = [r.image_id for r in rows]
    idx = np.arange(len(rows))
    width = 0.38
    fig, ax = plt.subplots(figsize=(max(4.0, 0.6 * len(rows) + 2), 4))
    ax.bar(idx - width / 2, [r.cc for r in rows], width, label="CC", color="tab:blue")
    ax.bar(
        idx + width / 2, [r.nss for r in rows], width, label="NSS", color="tab:orange"
    )
    ax.axhline(report.aggregate.cc, color="tab:blue", ls=":", lw=1)
    ax.axhline(report.aggregate.nss, color="tab:orange", ls=":", lw=1)
    ax.set_xticks(idx)
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel("score")
    ax.legend(fontsize=8)
    fig.savefig(out_path, dpi=DPI, bbox_inches="tight", metadata=metadata)
    plt.close(fig)
