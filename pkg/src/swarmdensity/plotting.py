"""Report figures rendered with the Agg backend.

PNG metadata is pinned so identical inputs give identical bytes.
"""

from __future__ import annotations

from pathlib import Path
from typing import Dict, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .baselines import correlation, correlation_bias  # noqa: E402

_META = {"Software": None}
_STYLE = {"figure.dpi": 100, "font.size": 9, "axes.grid": True, "grid.alpha": 0.3,
          "svg.hashsalt": "swarmdensity", "path.simplify": False}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, format="png", metadata=_META)
    plt.close(fig)
    return path


def _figure(w=6.0, h=3.5, rows=1):
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(rows, 1, figsize=(w, h * rows), squeeze=False)
    return fig, ax[:, 0]


def bucket_histogram(hist: Dict[int, int], path) -> Path:
    """Images per visible-UAV count."""
    fig, (ax,) = _figure()
    keys = sorted(hist)
    ax.bar(keys, [hist[k] for k in keys], color="tab:blue", width=0.8)
    ax.set_xlabel("UAVs per image")
    ax.set_ylabel("images")
    return _save(fig, path)


def bin_distribution(gt_mass: Sequence[float], path, delta_d: float = 1.0) -> Path:
    """Ground-truth UAV count per distance bin."""
    fig, (ax,) = _figure()
    d = np.arange(len(gt_mass)) * delta_d
    ax.bar(d, gt_mass, width=0.8 * delta_d, align="edge", color="tab:green")
    ax.set_xlabel("distance [m]")
    ax.set_ylabel("UAVs")
    return _save(fig, path)


def error_boxplot(per_image_e: np.ndarray, path, delta_d: float = 1.0, max_bin: int = 30) -> Path:
    """Distribution of signed per-image errors for the closest ``max_bin`` bins."""
    fig, (ax,) = _figure(8.0)
    e = np.asarray(per_image_e)[:, :max_bin]
    ax.boxplot([e[:, d] for d in range(e.shape[1])], positions=np.arange(e.shape[1]) * delta_d,
               widths=0.6 * delta_d, showfliers=False)
    ax.axhline(0, color="k", lw=0.8)
    ax.set_xlabel("distance bin [m]")
    ax.set_ylabel("prediction - ground truth")
    ax.set_xticks(np.arange(0, e.shape[1], 5) * delta_d)
    ax.set_xticklabels([f"{v:g}" for v in np.arange(0, e.shape[1], 5) * delta_d])
    return _save(fig, path)


def loss_curves(history, path) -> Path:
    fig, (ax,) = _figure()
    ax.plot(history.epoch[1:], history.train_loss[1:], label="train")
    ax.plot(history.epoch, history.val_loss, label="validation")
    ax.axvline(history.best_epoch, color="k", ls=":", lw=0.8)
    ax.set_yscale("log")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend()
    return _save(fig, path)


def e_bar_comparison(reports: Sequence, names: Sequence[str], path, max_bin: int = 30) -> Path:
    fig, (ax,) = _figure(8.0)
    for r, n in zip(reports, names):
        e = np.asarray(r.e_bar)[:max_bin]
        ax.plot(np.arange(len(e)) * r.delta_d, e, marker="o", ms=2.5, label=n)
    lo, hi = reports[0].window
    ax.axvspan(lo * reports[0].delta_d, (hi + 1) * reports[0].delta_d, color="0.9", zorder=0)
    ax.set_xlabel("distance [m]")
    ax.set_ylabel("mean absolute per-bin error")
    ax.legend()
    return _save(fig, path)


def bias_study(rows: Sequence, path) -> Path:
    fig, (ax,) = _figure()
    t = [r.tilt_deg for r in rows]
    ax.step(t, [r.bbox_error for r in rows], where="mid", label="box estimate")
    ax.plot(t, [r.label_error for r in rows], "o", ms=3, label="density label")
    ax.set_xlabel("relative pitch [deg]")
    ax.set_ylabel("bin error")
    ax.legend()
    return _save(fig, path)


def correlation_plot(pred, gt, path, delta_d: float = 1.0, label: str = "prediction") -> Path:
    """Histograms on top, their cross-correlation below with the maximum marked."""
    fig, (a1, a2) = _figure(rows=2, h=2.6)
    d = np.arange(len(gt)) * delta_d
    a1.step(d, gt, where="post", label="ground truth")
    a1.step(d, pred, where="post", label=label)
    a1.set_xlabel("distance [m]")
    a1.set_ylabel("UAVs")
    a1.legend()
    lags, c = correlation(pred, gt)
    a2.plot(lags * delta_d, c)
    a2.axvline(correlation_bias(pred, gt) * delta_d, color="tab:red")
    a2.set_xlabel("shift [m]")
    a2.set_ylabel("correlation")
    return _save(fig, path)
