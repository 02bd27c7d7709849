"""Per-bin and integral error measures over density histograms.

All errors are computed on cell-summed histograms so that models with
different output grids are compared on the same footing.  Predictions are
clamped at zero first, since densities are counts.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .labeling import LabelSpec, cell_sum

DEFAULT_WINDOW = (2, 11)
BIN_COLUMNS = ["bin_index", "bin_lo_m", "bin_hi_m", "e_bar", "gt_mass"]
SUMMARY_COLUMNS = ["T_bar", "E_bar", "E_bar_prime", "n_images", "params"]
QUARTILE_COLUMNS = ["bin_index", "q1", "median", "q3", "mean_abs"]


def per_image_errors(pred, gt_raw) -> Tuple[np.ndarray, float]:
    """Signed per-bin error ``e`` and integral error ``T`` for one image."""
    p = np.maximum(cell_sum(pred) if np.ndim(pred) == 3 else np.asarray(pred, float), 0.0)
    g = cell_sum(gt_raw) if np.ndim(gt_raw) == 3 else np.asarray(gt_raw, float)
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
    total = g.sum()
    if total <= 0:
        raise ValueError("image without any ground-truth UAV; integral error undefined")
    e = p - g
    return e, float(abs(e.sum()) / total)


@dataclass
class MetricsReport:
    e_bar: np.ndarray
    gt_mass: np.ndarray
    T_bar: float
    E_bar: float
    E_bar_prime: float
    n_images: int
    window: Tuple[int, int] = DEFAULT_WINDOW
    delta_d: float = 1.0
    params: Optional[int] = None
    per_image_T: Optional[np.ndarray] = field(default=None, repr=False)
    per_image_e: Optional[np.ndarray] = field(default=None, repr=False)
    cell_E_bar: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def n_bin(self) -> int:
        return len(self.e_bar)

    def quartiles(self) -> np.ndarray:
        """Rows ``(q1, median, q3, mean |e|)`` of the per-image signed errors per bin."""
        if self.per_image_e is None:
            raise ValueError("report carries no per-image errors")
        q = np.percentile(self.per_image_e, [25, 50, 75], axis=0)
        return np.column_stack([q.T, np.abs(self.per_image_e).mean(axis=0)])


def aggregate(items: Sequence[Tuple[np.ndarray, np.ndarray]], window: Tuple[int, int] = DEFAULT_WINDOW,
              delta_d: float = 1.0, params: Optional[int] = None) -> MetricsReport:
    """Dataset aggregates from ``(e, gt)`` pairs of cell-summed histograms.

    Bins with no ground-truth mass get ``e_bar = 0`` if nobody predicted
    anything there, otherwise NaN; NaN bins are left out of the sums.
    """
    if len(items) == 0:
        raise ValueError("no images to aggregate")
    e = np.stack([np.asarray(a, float) for a, _ in items])
    g = np.stack([np.asarray(b, float) for _, b in items])
    totals = g.sum(axis=1)
    if (totals <= 0).any():
        raise ValueError("image without any ground-truth UAV; integral error undefined")
    t = np.abs(e.sum(axis=1)) / totals
    num = np.abs(e).sum(axis=0)
    den = g.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        e_bar = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.where(num == 0, 0.0, np.nan))
    lo, hi = window
    if not 0 <= lo <= hi < len(e_bar):
        raise ValueError(f"window {window} outside 0..{len(e_bar) - 1}")
    return MetricsReport(e_bar=e_bar, gt_mass=den, T_bar=float(t.mean()),
                         E_bar=float(np.nansum(e_bar)), E_bar_prime=float(np.nansum(e_bar[lo:hi + 1])),
                         n_images=len(items), window=(int(lo), int(hi)), delta_d=float(delta_d),
                         params=params, per_image_T=t, per_image_e=e)


def evaluate(preds: np.ndarray, gts_raw: np.ndarray, window: Tuple[int, int] = DEFAULT_WINDOW,
             delta_d: float = 1.0, params: Optional[int] = None) -> MetricsReport:
    """Report for batched grids ``(N, h_out, w_out, n_bin)``, including per-cell E-bar."""
    preds, gts_raw = np.asarray(preds, float), np.asarray(gts_raw, float)
    if preds.shape != gts_raw.shape or preds.ndim != 4:
        raise ValueError(f"expected matching (N, h, w, n_bin) arrays, got {preds.shape} and {gts_raw.shape}")
    items = [(per_image_errors(p, g)[0], cell_sum(g)) for p, g in zip(preds, gts_raw)]
    report = aggregate(items, window, delta_d, params)
    # per-cell breakdown with the same NaN rule, pooled over all images
    num = np.abs(np.maximum(preds, 0.0) - gts_raw).sum(axis=0)
    den = gts_raw.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        cell = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.where(num == 0, 0.0, np.nan))
    report.cell_E_bar = np.nansum(cell, axis=-1)
    return report


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "nan" if math.isnan(x) else format(float(x), ".9g")


def report_to_csv(report: MetricsReport) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(BIN_COLUMNS)
    for d in range(report.n_bin):
        wr.writerow([d, _fmt(d * report.delta_d), _fmt((d + 1) * report.delta_d),
                     _fmt(report.e_bar[d]), _fmt(report.gt_mass[d])])
    wr.writerow([])
    wr.writerow(SUMMARY_COLUMNS + ["window_lo", "window_hi"])
    wr.writerow([_fmt(report.T_bar), _fmt(report.E_bar), _fmt(report.E_bar_prime), report.n_images,
                 _fmt(report.params), report.window[0], report.window[1]])
    return buf.getvalue()


def report_export(report: MetricsReport, path) -> Path:
    path = Path(path)
    path.write_text(report_to_csv(report))
    return path


def report_import(path) -> MetricsReport:
    lines = Path(path).read_text().split("\n\n")
    if len(lines) != 2:
        raise ValueError(f"{path}: expected a per-bin block and a summary block")
    rows = list(csv.DictReader(io.StringIO(lines[0])))
    if not rows or list(rows[0]) != BIN_COLUMNS:
        raise ValueError(f"{path}: unexpected per-bin header")
    summary = next(csv.DictReader(io.StringIO(lines[1])))
    e_bar = np.array([float(r["e_bar"]) for r in rows])
    delta = float(rows[0]["bin_hi_m"]) - float(rows[0]["bin_lo_m"])
    return MetricsReport(e_bar=e_bar, gt_mass=np.array([float(r["gt_mass"]) for r in rows]),
                         T_bar=float(summary["T_bar"]), E_bar=float(summary["E_bar"]),
                         E_bar_prime=float(summary["E_bar_prime"]), n_images=int(summary["n_images"]),
                         window=(int(summary["window_lo"]), int(summary["window_hi"])), delta_d=delta,
                         params=int(summary["params"]) if summary["params"] else None)


def quartiles_export(report: MetricsReport, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as f:
        wr = csv.writer(f, lineterminator="\n")
        wr.writerow(QUARTILE_COLUMNS)
        for d, row in enumerate(report.quartiles()):
            wr.writerow([d] + [_fmt(v) for v in row])
    return path


def cells_export(report: MetricsReport, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as f:
        wr = csv.writer(f, lineterminator="\n")
        wr.writerow(["row", "col", "E_bar"])
        for (r, c), v in np.ndenumerate(report.cell_E_bar):
            wr.writerow([r, c, _fmt(v)])
    return path


def compare_reports(reports: Sequence[MetricsReport], names: Sequence[str]) -> List[dict]:
    """Side-by-side rows; the two smallest values per column are marked with ``*``."""
    if not reports:
        raise ValueError("nothing to compare")
    if len({(r.n_bin, r.delta_d, r.window) for r in reports}) != 1:
        raise ValueError("reports use different label specs or windows")
    cols = ["T_bar", "E_bar", "E_bar_prime", "params"]
    rows = [{"name": n, **{c: getattr(r, c) for c in cols}} for r, n in zip(reports, names)]
    if len(rows) > 1:
        for c in cols:
            vals = sorted({row[c] for row in rows if row[c] is not None and not math.isnan(row[c])})
            for row in rows:
                row[c + "_best"] = row[c] is not None and row[c] in vals[:2]
    return rows


def compare_to_csv(rows: List[dict]) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    cols = ["T_bar", "E_bar", "E_bar_prime", "params"]
    wr.writerow(["name"] + cols)
    for row in rows:
        wr.writerow([row["name"]] + [_fmt(row[c]) + ("*" if row.get(c + "_best") else "") for c in cols])
    return buf.getvalue()


def spec_window(spec: LabelSpec, window: Tuple[int, int] = DEFAULT_WINDOW) -> Tuple[int, int]:
    """Clip the close-range window to the histogram length."""
    lo, hi = window
    return min(lo, spec.n_bin - 1), min(hi, spec.n_bin - 1)
