"""ROC panels, the localization box plot, and the detection table.

Figures are built as matplotlib objects so structure is testable, then
saved by the plot_* entry points. Output is deterministic for a given
input directory and format: the svg hash salt is pinned and no dates
are embedded.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "plotkit"

import matplotlib.pyplot as plt
from matplotlib.patches import Patch

from .readers import (
    PdTable,
    band_label,
    read_locerr,
    read_pd_table,
    read_roc,
    roc_path,
)

METHOD_COLORS = {
    "mBA": "tab:blue",
    "uBA": "tab:orange",
    "mWC": "tab:green",
    "uWC": "tab:red",
}
FALLBACK_COLOR = "tab:gray"
FORMATS = ("svg", "png")


@dataclass(frozen=True)
class FigureSpec:
    """What to render: results directory, band subset, output format."""

    in_dir: Path
    out_dir: Path
    bands: tuple | None = None  # indices into the table band order; None is all
    fmt: str = "svg"
    log_fpr: bool = False

    def __post_init__(self):
        if self.fmt not in FORMATS:
            raise ValueError(f"format must be one of {FORMATS}, got {self.fmt!r}")


def _selected(spec: FigureSpec, table: PdTable) -> list[int]:
    if spec.bands is None:
        return list(range(len(table.bands)))
    for i in spec.bands:
        if not 0 <= i < len(table.bands):
            raise ValueError(f"band index {i} out of range 0..{len(table.bands) - 1}")
    return list(spec.bands)


def _save(fig, path: Path, fmt: str) -> None:
    if fmt == "svg":
        fig.savefig(path, format="svg", metadata={"Date": None})
    else:
        fig.savefig(path, format="png", dpi=150)
    plt.close(fig)


# ---------------------------------------------------------------------------
# ROC panels


def build_roc_figure(in_dir, band, methods, log_fpr: bool = False):
    """One band's panel: a labeled curve per method with a ROC file.

    Methods whose file is absent are omitted with a warning rather than
    failing the whole render.
    """
    fig, ax = plt.subplots(figsize=(4.5, 4.0))
    drawn = 0
    for method in methods:
        path = roc_path(in_dir, band, method)
        if not path.is_file():
            warnings.warn(f"no ROC file for {method} in band {band_label(band)}; omitted")
            continue
        fpr, tpr = read_roc(path)
        ax.plot(fpr, tpr, label=method, color=METHOD_COLORS.get(method, FALLBACK_COLOR))
        drawn += 1
    if log_fpr:
        ax.set_xscale("log")
    else:
        ax.set_xlim(0.0, 1.0)
    ax.set_ylim(0.0, 1.02)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_title(f"{band_label(band)} uCi")
    if drawn:
        ax.legend(loc="lower right")
    fig.tight_layout()
    return fig


def plot_rocs(spec: FigureSpec) -> list[Path]:
    """One image per selected band; returns the written paths."""
    table = read_pd_table(Path(spec.in_dir) / "pd_table.csv")
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for bi in _selected(spec, table):
        band = table.bands[bi]
        fig = build_roc_figure(spec.in_dir, band, table.methods, spec.log_fpr)
        path = out / f"roc_{band_label(band)}.{spec.fmt}"
        _save(fig, path, spec.fmt)
        paths.append(path)
    return paths


# ---------------------------------------------------------------------------
# localization box plot


def build_locerr_figure(summaries: dict, bands, methods):
    """Grouped boxes from the precomputed five-number summaries.

    No statistics are recomputed here; the boxes draw exactly the
    numbers the results directory carries. Cells absent from the
    summary file are skipped.
    """
    fig, ax = plt.subplots(figsize=(max(6.0, 1.5 * len(bands)), 4.0))
    group = len(methods) + 1
    positions, stats, colors = [], [], []
    for bi, band in enumerate(bands):
        for mi, method in enumerate(methods):
            cell = summaries.get((method, band))
            if cell is None:
                continue
            positions.append(bi * group + mi)
            stats.append(
                {
                    "med": cell.median,
                    "q1": cell.q1,
                    "q3": cell.q3,
                    "whislo": cell.min,
                    "whishi": cell.max,
                }
            )
            colors.append(METHOD_COLORS.get(method, FALLBACK_COLOR))
    if stats:
        result = ax.bxp(
            stats, positions=positions, widths=0.8, showfliers=False, patch_artist=True
        )
        for patch, color in zip(result["boxes"], colors):
            patch.set_facecolor(color)
            patch.set_alpha(0.6)
    ax.set_xticks([bi * group + (len(methods) - 1) / 2.0 for bi in range(len(bands))])
    ax.set_xticklabels([band_label(b) for b in bands])
    ax.set_xlabel("intensity band (uCi)")
    ax.set_ylabel("localization error (m)")
    ax.legend(
        handles=[
            Patch(facecolor=METHOD_COLORS.get(m, FALLBACK_COLOR), alpha=0.6, label=m)
            for m in methods
        ],
        loc="upper right",
    )
    fig.tight_layout()
    return fig


def plot_locerr(spec: FigureSpec) -> Path:
    table = read_pd_table(Path(spec.in_dir) / "pd_table.csv")
    summaries = read_locerr(Path(spec.in_dir) / "locerr.csv")
    bands = [table.bands[i] for i in _selected(spec, table)]
    fig = build_locerr_figure(summaries, bands, table.methods)
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"locerr.{spec.fmt}"
    _save(fig, path, spec.fmt)
    return path


# ---------------------------------------------------------------------------
# detection table


def format_pd_table(table: PdTable, band_indices=None) -> str:
    """Plain text grid: methods as rows, bands as columns, 3 decimals."""
    idx = list(band_indices) if band_indices is not None else range(len(table.bands))
    bands = [table.bands[i] for i in idx]
    labels = [band_label(b) for b in bands]
    name_w = max(6, *(len(m) for m in table.methods)) if table.methods else 6
    col_w = max(8, *(len(l) + 2 for l in labels)) if labels else 8
    lines = ["".join(["method".ljust(name_w)] + [l.rjust(col_w) for l in labels])]
    for method in table.methods:
        cells = []
        for band in bands:
            value = table.values.get((method, band))
            cells.append(("-" if value is None else f"{value:.3f}").rjust(col_w))
        lines.append("".join([method.ljust(name_w)] + cells))
    return "\n".join(lines) + "\n"


def render_pd_table(spec: FigureSpec) -> Path:
    table = read_pd_table(Path(spec.in_dir) / "pd_table.csv")
    text = format_pd_table(table, _selected(spec, table))
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "pd_table.txt"
    path.write_text(text)
    return path
