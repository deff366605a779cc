"""Result serialization and summaries: significance CSVs, heatmaps,
corpus-level confusion tables, and discriminative-feature rankings."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, DataError
from .experiments import CellResult, OutcomeRecord, SignificanceMap
from .features import FeatureMatrix

CSV_COLUMNS = [
    "pair_id",
    "mode",
    "n",
    "unit_length",
    "f",
    "mean_mcc_norm",
    "mean_p_fdr",
    "wilson_hi_max",
    "significant",
    "skipped",
    "repair_flag",
]


def _fmt(value) -> str:
    if value is None:
        return ""
    return repr(float(value))


def write_significance_csv(sig_map: SignificanceMap, path: str | Path) -> None:
    """One row per cell, ordered by (mode, n, unit_length, f).

    Floats are written with repr so re-parsing reconstructs every value
    exactly; skipped cells leave their statistics empty.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for key in sorted(sig_map.cells):
            mode, n, ell, f = key
            cell = sig_map.cells[key]
            writer.writerow(
                [
                    sig_map.pair_id,
                    mode,
                    n,
                    ell,
                    f,
                    _fmt(cell.mean_mcc_norm),
                    _fmt(cell.mean_p_fdr),
                    _fmt(cell.wilson_hi_max),
                    str(cell.significant).lower(),
                    str(cell.skipped).lower(),
                    str(cell.repair_flag).lower(),
                ]
            )


def read_significance_csv(path: str | Path) -> SignificanceMap:
    """Inverse of write_significance_csv (modulo skip reasons)."""
    cells: dict[tuple[str, int, int, int], CellResult] = {}
    pair_id = ""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_COLUMNS:
            raise DataError(f"unexpected CSV columns in {path}")
        for row in reader:
            pair_id = row["pair_id"]
            key = (row["mode"], int(row["n"]), int(row["unit_length"]), int(row["f"]))
            skipped = row["skipped"] == "true"
            cells[key] = CellResult(
                mean_mcc_norm=None if skipped else float(row["mean_mcc_norm"]),
                mean_p_fdr=None if skipped else float(row["mean_p_fdr"]),
                wilson_hi_max=None if skipped else float(row["wilson_hi_max"]),
                significant=row["significant"] == "true",
                batch_count=0,
                repair_flag=row["repair_flag"] == "true",
                skipped=skipped,
            )
    return SignificanceMap(pair_id=pair_id, cells=cells)


def render_heatmap(sig_map: SignificanceMap, path: str | Path) -> None:
    """Raster significance map: x-axis (n, unit_length) combinations,
    y-axis feature counts, colored by mean normalized MCC (50-100%) only
    where significant; insignificant or skipped cells stay blank."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    keys = sorted(sig_map.cells)
    xs = sorted({(k[0], k[1], k[2]) for k in keys})
    ys = sorted({k[3] for k in keys})
    grid = np.full((len(ys), len(xs)), np.nan)
    for key in keys:
        cell = sig_map.cells[key]
        if cell.significant and not cell.skipped:
            grid[ys.index(key[3]), xs.index((key[0], key[1], key[2]))] = cell.mean_mcc_norm

    fig, ax = plt.subplots(figsize=(max(4, 0.6 * len(xs) + 2), max(3, 0.5 * len(ys) + 2)))
    masked = np.ma.masked_invalid(grid)
    im = ax.imshow(masked, vmin=50.0, vmax=100.0, cmap="viridis", aspect="auto")
    ax.set_xticks(range(len(xs)))
    ax.set_xticklabels([f"{m[:1]}{n}, l={ell}" for m, n, ell in xs], rotation=90, fontsize=7)
    ax.set_yticks(range(len(ys)))
    ax.set_yticklabels([str(f) for f in ys], fontsize=7)
    ax.set_xlabel("feature order and unit length")
    ax.set_ylabel("feature count")
    ax.set_title(sig_map.pair_id)
    fig.colorbar(im, ax=ax, label="mean normalized MCC (%)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


@dataclass
class ConfusionSummary:
    """Corpus-level rates in percent, with bracketed variants that
    exclude same-author pairs flagged as genre-differing."""

    binary_tp: float
    binary_fn: float
    binary_fp: float
    binary_tn: float
    total_tp: float
    total_fn: float
    total_fp: float
    total_tn: float
    bracketed_binary_fp: Optional[float] = None
    bracketed_binary_tn: Optional[float] = None
    bracketed_total_fp: Optional[float] = None
    bracketed_total_tn: Optional[float] = None
    n_different_author: int = 0
    n_same_author: int = 0
    n_excluded: int = 0

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _rates(outcomes: list[OutcomeRecord]) -> tuple[float, float]:
    """(binary positive %, mean total positive %) over the given pairs."""
    binary = 100.0 * sum(1 for o in outcomes if o.binary_positive) / len(outcomes)
    total = 100.0 * float(np.mean([o.total_positive_rate for o in outcomes]))
    return binary, total


def confusion_summary(
    outcomes: Sequence[OutcomeRecord],
    bracketed: bool = True,
) -> ConfusionSummary:
    """Positive = classification driven by non-sequential properties.

    True positives/false negatives are computed over different-author
    pairs, false positives/true negatives over same-author pairs. The
    bracketed variants drop same-author pairs with genre_differs=True
    (pairs with unknown genre annotation are kept).
    """
    if not outcomes:
        raise ConfigError("confusion_summary requires at least one outcome")
    diff = [o for o in outcomes if not o.truth_same_author]
    same = [o for o in outcomes if o.truth_same_author]
    summary = ConfusionSummary(
        binary_tp=0.0, binary_fn=0.0, binary_fp=0.0, binary_tn=0.0,
        total_tp=0.0, total_fn=0.0, total_fp=0.0, total_tn=0.0,
        n_different_author=len(diff), n_same_author=len(same),
    )
    if diff:
        b, t = _rates(diff)
        summary.binary_tp, summary.binary_fn = b, 100.0 - b
        summary.total_tp, summary.total_fn = t, 100.0 - t
    if same:
        b, t = _rates(same)
        summary.binary_fp, summary.binary_tn = b, 100.0 - b
        summary.total_fp, summary.total_tn = t, 100.0 - t
    if bracketed and same:
        if any(o.genre_differs is None for o in same):
            raise ConfigError(
                "bracketed rates requested but genre annotations are missing"
            )
        kept = [o for o in same if not o.genre_differs]
        summary.n_excluded = len(same) - len(kept)
        if kept:
            b, t = _rates(kept)
            summary.bracketed_binary_fp, summary.bracketed_binary_tn = b, 100.0 - b
            summary.bracketed_total_fp, summary.bracketed_total_tn = t, 100.0 - t
    return summary


def format_confusion_table(summary: ConfusionSummary) -> str:
    """Plain-text table with one-decimal percents; bracketed rates are
    shown in parentheses where available."""

    def cell(v: Optional[float], b: Optional[float] = None) -> str:
        if v is None:
            return "-"
        s = f"{v:.1f}%"
        if b is not None:
            s += f" ({b:.1f}%)"
        return s

    lines = [
        f"{'':14s}{'Positive':>22s}{'Negative':>22s}",
        f"{'Binary True':14s}{cell(summary.binary_tp):>22s}{cell(summary.binary_fn):>22s}",
        f"{'Binary False':14s}"
        f"{cell(summary.binary_fp, summary.bracketed_binary_fp):>22s}"
        f"{cell(summary.binary_tn, summary.bracketed_binary_tn):>22s}",
        f"{'Total True':14s}{cell(summary.total_tp):>22s}{cell(summary.total_fn):>22s}",
        f"{'Total False':14s}"
        f"{cell(summary.total_fp, summary.bracketed_total_fp):>22s}"
        f"{cell(summary.total_tn, summary.bracketed_total_tn):>22s}",
        f"(different-author pairs: {summary.n_different_author}, "
        f"same-author pairs: {summary.n_same_author}, "
        f"excluded by genre: {summary.n_excluded})",
    ]
    return "\n".join(lines)


def top_features(
    matrix: FeatureMatrix,
    labels,
    k: int = 20,
) -> list[dict]:
    """Features ranked by standardized mean difference between the two
    label groups: |mean1 - mean0| / pooled population std."""
    labels = np.asarray(labels, dtype=np.int64)
    if not (np.any(labels == 0) and np.any(labels == 1)):
        raise ConfigError("top_features requires both labels to be present")
    x = matrix.values
    g0, g1 = x[labels == 0], x[labels == 1]
    mean0, mean1 = g0.mean(axis=0), g1.mean(axis=0)
    var0, var1 = g0.var(axis=0), g1.var(axis=0)
    pooled = np.sqrt((len(g0) * var0 + len(g1) * var1) / (len(g0) + len(g1)))
    diff = np.abs(mean1 - mean0)
    with np.errstate(divide="ignore", invalid="ignore"):
        scores = np.where(diff == 0.0, 0.0, np.where(pooled > 0.0, diff / pooled, np.inf))
    names = matrix.feature_names or [f"f{j}" for j in range(x.shape[1])]
    order = sorted(range(x.shape[1]), key=lambda j: (-scores[j], names[j]))
    return [
        {
            "feature": names[j],
            "score": float(scores[j]),
            "mean_group0": float(mean0[j]),
            "mean_group1": float(mean1[j]),
        }
        for j in order[:k]
    ]
