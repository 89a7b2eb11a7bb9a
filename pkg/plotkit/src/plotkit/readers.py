"""Readers for the results CSV schemas.

Headers are validated exactly, so schema drift in the producing package
fails loudly here instead of rendering nonsense.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

PD_HEADER = ["method", "band_lo", "band_hi", "pd_at_fpr"]
LOCERR_HEADER = ["method", "band_lo", "band_hi", "min", "q1", "median", "q3", "max", "n"]
ROC_HEADER = ["threshold", "fpr", "tpr"]


class SchemaError(Exception):
    """A results file is missing or does not match its documented schema."""

    exit_code = 3


def band_label(band: tuple[float, float]) -> str:
    return f"{band[0]:g}-{band[1]:g}"


def _read_rows(path, header) -> list[dict]:
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        got = next(reader, None)
        if got != header:
            raise SchemaError(f"{path}: expected header {','.join(header)}")
        rows = []
        for line in reader:
            if len(line) != len(header):
                raise SchemaError(f"{path}: row with {len(line)} fields: {line!r}")
            rows.append(dict(zip(header, line)))
    return rows


@dataclass(frozen=True)
class PdTable:
    methods: tuple
    bands: tuple  # (lo, hi) floats, first-appearance order
    values: dict  # (method, band) -> pd


def read_pd_table(path) -> PdTable:
    rows = _read_rows(path, PD_HEADER)
    if not rows:
        raise SchemaError(f"{path}: no rows")
    methods = []
    bands = []
    values = {}
    try:
        for row in rows:
            band = (float(row["band_lo"]), float(row["band_hi"]))
            if row["method"] not in methods:
                methods.append(row["method"])
            if band not in bands:
                bands.append(band)
            values[(row["method"], band)] = float(row["pd_at_fpr"])
    except ValueError as exc:
        raise SchemaError(f"{path}: non-numeric field: {exc}") from exc
    return PdTable(methods=tuple(methods), bands=tuple(bands), values=values)


@dataclass(frozen=True)
class BoxStats:
    """Five-number summary of localization error for one table cell."""

    min: float
    q1: float
    median: float
    q3: float
    max: float
    n: int


def read_locerr(path) -> dict:
    """(method, band) -> BoxStats; cells the producer omitted are absent."""
    out = {}
    try:
        for row in _read_rows(path, LOCERR_HEADER):
            band = (float(row["band_lo"]), float(row["band_hi"]))
            out[(row["method"], band)] = BoxStats(
                min=float(row["min"]),
                q1=float(row["q1"]),
                median=float(row["median"]),
                q3=float(row["q3"]),
                max=float(row["max"]),
                n=int(row["n"]),
            )
    except ValueError as exc:
        raise SchemaError(f"{path}: non-numeric field: {exc}") from exc
    return out


def roc_path(in_dir, band, method) -> Path:
    return Path(in_dir) / f"roc_{band_label(band)}_{method}.csv"


def read_roc(path) -> tuple[list, list]:
    """(fpr, tpr) curve points in the stored threshold order."""
    rows = _read_rows(path, ROC_HEADER)
    if not rows:
        raise SchemaError(f"{path}: no rows")
    try:
        fpr = [float(r["fpr"]) for r in rows]
        tpr = [float(r["tpr"]) for r in rows]
    except ValueError as exc:
        raise SchemaError(f"{path}: non-numeric field: {exc}") from exc
    return fpr, tpr
