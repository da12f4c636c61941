"""Report figures (PNG) written next to the text outputs."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evaluation import error_curve  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
    # Fixed metadata keeps output bytes reproducible.
    "svg.hashsalt": "sslanon",
}


def _new(ncols=1, width=6.0, height=3.2):
    with plt.rc_context(RC):
        fig, ax = plt.subplots(1, ncols, figsize=(width, height), constrained_layout=True)
    return fig, ax


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(RC):
        fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_scores(scores, path, title: str = "") -> Path:
    """Target/nontarget score histograms and the miss/false-alarm curves."""
    tgt = np.array([s.score for s in scores if s.is_target])
    non = np.array([s.score for s in scores if not s.is_target])
    fig, (ax1, ax2) = _new(ncols=2, width=8.0)
    bins = np.linspace(-1, 1, 41)
    ax1.hist(non, bins=bins, alpha=0.6, density=True, label="nontarget", color="tab:gray")
    ax1.hist(tgt, bins=bins, alpha=0.6, density=True, label="target", color="tab:blue")
    ax1.set_xlabel("cosine score")
    ax1.set_ylabel("density")
    ax1.legend(frameon=False)
    curve = error_curve(scores)
    thr = curve.thresholds.copy()
    thr[-1] = max(1.0, thr[:-1].max(initial=0.0))
    ax2.step(thr, 100 * curve.p_miss, where="post", label="miss")
    ax2.step(thr, 100 * curve.p_fa, where="post", label="false alarm")
    ax2.set_xlabel("threshold")
    ax2.set_ylabel("rate (%)")
    ax2.legend(frameon=False)
    if title:
        fig.suptitle(title)
    return _save(fig, path)


def plot_f0_track(track, path, title: str = "", sample_rate: int = 16000) -> Path:
    fig, ax = _new()
    t = np.arange(len(track)) * track.hop / sample_rate
    f0 = np.where(track.voiced, track.f0_hz, np.nan)
    ax.plot(t, f0, ".", ms=2, color="tab:blue")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("F0 (Hz)")
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_loss_history(history, path, title: str = "") -> Path:
    fig, ax = _new(height=2.8)
    ax.plot(np.arange(1, len(history) + 1), history, marker="o", ms=2)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean cross-entropy")
    if title:
        ax.set_title(title)
    return _save(fig, path)
