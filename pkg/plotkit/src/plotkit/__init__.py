"""Rendering for drive-by detection results directories.

Consumes only the documented CSV products of a results directory
(pd_table.csv, locerr.csv, per-band ROC files) and renders ROC panels,
the localization box plot, and the formatted detection table.
"""

from .figures import FigureSpec, plot_locerr, plot_rocs, render_pd_table
from .readers import SchemaError

__all__ = [
    "FigureSpec",
    "SchemaError",
    "plot_locerr",
    "plot_rocs",
    "render_pd_table",
]
