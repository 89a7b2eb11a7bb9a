"""Monte Carlo driver: replicates, ROC evaluation, and CSV emission.

Each replicate draws a placement and one shared drive-by background
realization, injects source counts on top of it for the H1 stream of
each detector mode, scores and fuses every requested method, and records
the paired H1/H0 detection values plus the localization error. Replicate
seeds derive from the master seed by index, so results do not depend on
worker scheduling.
"""

from __future__ import annotations

import multiprocessing
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .background import BackgroundModel, rates_at
from .config import ExperimentConfig
from .errors import CadetError, DataError, ParameterError
from .fusion import (
    FusionContext,
    ScoreSeries,
    ba_aggregate,
    build_fusion_context,
    extract_detection,
    localization_error,
    wc_aggregate,
    write_score_map_csv,
)
from .scene import (
    MaskModel,
    SourcePlacement,
    Trajectory,
    drive_by_trajectory,
    mask_coefficients,
    sample_placement,
)
from .scoring import CewModel, cew_score_batch, pid_decode_batch
from .sensor import (
    DetectorConfig,
    draw_drive_by_background,
    draw_source_counts,
    source_mean_counts,
)
from .spectra import BinningScheme, SourceWindow, SpectrumTemplate
from .util import child_seed, fmt_float

REPLICATES_HEADER = (
    "band_lo,band_hi,rep,method,score_h1,score_h0,loc_err_m,along_m,offset_m,intensity_uci"
)
PD_TABLE_HEADER = "method,band_lo,band_hi,pd_at_fpr"
LOCERR_HEADER = "method,band_lo,band_hi,min,q1,median,q3,max,n"


@dataclass(frozen=True)
class MethodOutcome:
    score_h1: float
    score_h0: float
    loc_err_m: float


@dataclass(frozen=True)
class ReplicateRecord:
    band: tuple
    rep: int
    placement: SourcePlacement
    outcomes: dict  # method name -> MethodOutcome


@dataclass(frozen=True)
class RunContext:
    """Everything shared by every replicate of one experiment.

    The trajectory is the same for all replicates, so the background
    model lookup, the PID noise model, the mask coefficient table over
    the angle grid, and the fusion geometry are all precomputed here.
    """

    config: ExperimentConfig
    cew_model: CewModel
    binning: BinningScheme
    template: SpectrumTemplate
    window: SourceWindow
    mask: MaskModel
    trajectory: Trajectory
    rates: np.ndarray  # (T, n_bins) model background rates per pose
    noise_var: np.ndarray  # (T,) per-element window variance, floored
    background_prior: np.ndarray  # (T,) per-element window counts b0
    theta_grid_rad: np.ndarray
    coeff_grid: np.ndarray  # (A, n_elements) mask coefficients per angle
    fusion: FusionContext
    detector_masked: DetectorConfig
    detector_unmasked: DetectorConfig


def build_run_context(
    config: ExperimentConfig, model: BackgroundModel, cew_model: CewModel
) -> RunContext:
    binning = config.binning()
    template = config.template(binning)
    window = config.window(template)
    mask = config.mask()
    det_m = config.detector(masked=True)
    det_u = config.detector(masked=False)
    trajectory = drive_by_trajectory(config.road_length_m, config.speed_mps)

    rates = np.stack([rates_at(model, p) for p in trajectory.positions])
    window_rate = rates[:, window.bins].sum(axis=1)
    per_element = window_rate / det_m.n_elements
    # PID Gaussian noise model: per-element expected window counts,
    # floored so empty-background poses stay well conditioned
    noise_var = np.maximum(per_element, config.noise_floor_counts)
    background_prior = np.maximum(per_element, 1e-6)

    theta_grid = config.theta_grid_rad()
    coeff_grid = mask_coefficients(
        mask, theta_grid, n_columns=det_m.n_columns, n_rows=det_m.n_rows,
        element_width_m=config.element_width_m,
    )
    fusion = build_fusion_context(
        config.spatial_grid(),
        trajectory.times,
        trajectory.positions,
        array_area_m2=det_u.array_area_m2,
        n_elements=det_u.n_elements,
        efficiency=config.efficiency,
        window_coverage=window.mass_coverage,
        theta_grid_rad=theta_grid,
    )
    return RunContext(
        config=config,
        cew_model=cew_model,
        binning=binning,
        template=template,
        window=window,
        mask=mask,
        trajectory=trajectory,
        rates=rates,
        noise_var=noise_var,
        background_prior=background_prior,
        theta_grid_rad=theta_grid,
        coeff_grid=coeff_grid,
        fusion=fusion,
        detector_masked=det_m,
        detector_unmasked=det_u,
    )


def _masked_series(ctx: RunContext, counts) -> ScoreSeries:
    s_hat, b_hat, var_s = pid_decode_batch(
        counts.element_window_totals(),
        ctx.coeff_grid,
        ctx.noise_var,
        ctx.background_prior,
    )
    return ScoreSeries(
        times_s=ctx.trajectory.times,
        positions_m=ctx.trajectory.positions,
        s_hat=s_hat,
        b_hat=b_hat,
        var=var_s,
        theta_grid_rad=ctx.theta_grid_rad,
    )


def _unmasked_series(ctx: RunContext, counts) -> ScoreSeries:
    s_hat, b_hat, _ = cew_score_batch(counts.aggregate, ctx.cew_model)
    return ScoreSeries(
        times_s=ctx.trajectory.times,
        positions_m=ctx.trajectory.positions,
        s_hat=s_hat,
        b_hat=b_hat,
        var=np.maximum(b_hat, 1.0),
    )


def run_replicate(
    seed: int,
    band: tuple,
    config: ExperimentConfig,
    model: BackgroundModel,
    cew_model: CewModel,
    rep: int = 0,
    context: RunContext | None = None,
    dump_dir=None,
) -> ReplicateRecord:
    """One paired replicate: H1 and H0 share the background draw, so a
    zero-intensity injection gives exactly equal scores per method.

    Draw order from the seed is fixed: placement, background counts,
    masked source counts, unmasked source counts. Both detector modes
    are always synthesized; the method subset only selects scoring.
    """
    ctx = context if context is not None else build_run_context(config, model, cew_model)
    try:
        return _run_replicate_inner(seed, band, ctx, rep, dump_dir)
    except CadetError as exc:
        raise type(exc)(f"band {band[0]:g}-{band[1]:g} rep {rep}: {exc}") from exc


def _run_replicate_inner(seed, band, ctx: RunContext, rep, dump_dir) -> ReplicateRecord:
    config = ctx.config
    rng = np.random.default_rng(seed)
    placement = sample_placement(
        rng,
        (0.0, config.road_length_m),
        band,
        offset_range=(config.offset_min_m, config.offset_max_m),
    )
    background = draw_drive_by_background(
        rng, ctx.rates, ctx.window, ctx.detector_masked.n_elements
    )
    means_masked = [
        source_mean_counts(
            placement, p, ctx.detector_masked, ctx.template, ctx.window, ctx.mask
        )
        for p in ctx.trajectory.positions
    ]
    means_unmasked = [
        source_mean_counts(placement, p, ctx.detector_unmasked, ctx.template, ctx.window)
        for p in ctx.trajectory.positions
    ]
    h1_masked = background.add(draw_source_counts(rng, means_masked))
    h1_unmasked = background.add(draw_source_counts(rng, means_unmasked))

    series = {}
    if any(m.startswith("m") for m in config.methods):
        series["m"] = (_masked_series(ctx, h1_masked), _masked_series(ctx, background))
    if any(m.startswith("u") for m in config.methods):
        series["u"] = (_unmasked_series(ctx, h1_unmasked), _unmasked_series(ctx, background))

    intensities = config.intensity_grid()
    outcomes = {}
    for method in config.methods:
        pair = series[method[0]]
        if method.endswith("WC"):
            maps = [wc_aggregate(s, ctx.fusion, method) for s in pair]
        else:
            maps = [ba_aggregate(s, ctx.fusion, intensities, method) for s in pair]
        score_h1, loc = extract_detection(
            maps[0], placement.along_m, config.detection_halfwidth_m
        )
        score_h0, _ = extract_detection(
            maps[1], placement.along_m, config.detection_halfwidth_m
        )
        outcomes[method] = MethodOutcome(
            score_h1=score_h1,
            score_h0=score_h0,
            loc_err_m=localization_error(loc, placement),
        )
        if dump_dir is not None:
            label = band_label(band)
            for score_map, tag in zip(maps, ("h1", "h0")):
                write_score_map_csv(
                    Path(dump_dir) / f"map_{label}_{method}_{tag}_rep{rep}.csv", score_map
                )
    return ReplicateRecord(band=tuple(band), rep=rep, placement=placement, outcomes=outcomes)


# ---------------------------------------------------------------------------
# ROC and summaries


@dataclass(frozen=True)
class RocCurve:
    """Empirical ROC, score >= threshold raises the alarm.

    Points are stored in decreasing threshold order; the leading
    +infinity threshold contributes (0, 0) and the trailing minimum
    score contributes (1, 1).
    """

    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    n_h1: int
    n_h0: int

    def __post_init__(self):
        thr = np.asarray(self.thresholds, dtype=float)
        fpr = np.asarray(self.fpr, dtype=float)
        tpr = np.asarray(self.tpr, dtype=float)
        if not (thr.shape == fpr.shape == tpr.shape) or thr.ndim != 1:
            raise ParameterError("ROC arrays must be matching 1-D")
        if np.any(np.diff(thr) >= 0):
            raise ParameterError("thresholds must be strictly decreasing")
        if np.any(np.diff(fpr) < 0) or np.any(np.diff(tpr) < 0):
            raise ParameterError("ROC rates must be nondecreasing as thresholds fall")

    def auc(self) -> float:
        return float(np.trapezoid(self.tpr, self.fpr))


def compute_roc(h1_scores, h0_scores) -> RocCurve:
    """ROC over the union of observed scores, ties grouped."""
    h1 = np.sort(np.asarray(h1_scores, dtype=float))
    h0 = np.sort(np.asarray(h0_scores, dtype=float))
    if h1.size == 0 or h0.size == 0:
        raise DataError("ROC needs nonempty H1 and H0 score sets")
    thresholds = np.concatenate(
        [[np.inf], np.unique(np.concatenate([h1, h0]))[::-1]]
    )
    # single division of exact counts, so rates like 1/1000 round once and
    # compare cleanly against targets parsed from the same decimal
    tpr = (h1.size - np.searchsorted(h1, thresholds, side="left")) / h1.size
    fpr = (h0.size - np.searchsorted(h0, thresholds, side="left")) / h0.size
    return RocCurve(thresholds=thresholds, fpr=fpr, tpr=tpr, n_h1=h1.size, n_h0=h0.size)


def operating_point(roc: RocCurve, fpr_target: float) -> tuple[float, float, float]:
    """(threshold, fpr, tpr) at the largest threshold with fpr <= target."""
    if not 0 < fpr_target < 1:
        raise ParameterError("fpr_target must be in (0, 1)")
    idx = int(np.searchsorted(roc.fpr, fpr_target, side="right")) - 1
    return float(roc.thresholds[idx]), float(roc.fpr[idx]), float(roc.tpr[idx])


def pd_at_fpr(roc: RocCurve, fpr_target: float = 0.001) -> float:
    """Detection probability at the target FPR, conservative step rule."""
    if roc.n_h0 * fpr_target < 1:
        warnings.warn(
            f"FPR target {fpr_target:g} is undersampled with {roc.n_h0} negatives; "
            "reporting the rate at the strictest achievable threshold",
            stacklevel=2,
        )
    return operating_point(roc, fpr_target)[2]


@dataclass(frozen=True)
class LocErrSummary:
    min: float
    q1: float
    median: float
    q3: float
    max: float
    n: int


def localization_summary(errors) -> LocErrSummary | None:
    """Five-number summary after Tukey 1.5 IQR outlier removal; None for
    empty input (an absent table cell)."""
    e = np.asarray(errors, dtype=float)
    if e.size == 0:
        return None
    q1, q3 = np.percentile(e, [25, 75])
    iqr = q3 - q1
    keep = e[(e >= q1 - 1.5 * iqr) & (e <= q3 + 1.5 * iqr)]
    kq1, kmed, kq3 = np.percentile(keep, [25, 50, 75])
    return LocErrSummary(
        min=float(keep.min()),
        q1=float(kq1),
        median=float(kmed),
        q3=float(kq3),
        max=float(keep.max()),
        n=int(keep.size),
    )


def band_label(band: tuple) -> str:
    return f"{band[0]:g}-{band[1]:g}"


# ---------------------------------------------------------------------------
# experiment driver

_WORKER_CTX = None


def _worker_init(config, model, cew_model):
    global _WORKER_CTX
    _WORKER_CTX = build_run_context(config, model, cew_model)


def _worker_run(job):
    band_idx, rep, seed, dump_dir = job
    ctx = _WORKER_CTX
    record = run_replicate(
        seed,
        ctx.config.bands[band_idx],
        ctx.config,
        None,
        None,
        rep=rep,
        context=ctx,
        dump_dir=dump_dir,
    )
    return band_idx, rep, record


def run_experiment(
    config: ExperimentConfig,
    model: BackgroundModel,
    cew_model: CewModel,
    out_dir,
    workers: int = 1,
    dump_maps: bool = False,
) -> list[ReplicateRecord]:
    """Run bands x replicates, then write replicates.csv, per-band ROC
    files, pd_table.csv, and locerr.csv into ``out_dir``.

    Replicate seeds come from child_seed(master, band index, replicate
    index); records are reduced in (band, replicate) order, so outputs
    are byte-identical for any worker count.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    maps_dir = None
    if dump_maps:
        maps_dir = out / "maps"
        maps_dir.mkdir(exist_ok=True)

    jobs = [
        (bi, ri, child_seed(config.master_seed, bi, ri), maps_dir if ri == 0 else None)
        for bi in range(len(config.bands))
        for ri in range(config.replicates_per_band)
    ]

    if workers <= 1:
        ctx = build_run_context(config, model, cew_model)
        results = []
        for bi, ri, seed, dump in jobs:
            record = run_replicate(
                seed, config.bands[bi], config, model, cew_model,
                rep=ri, context=ctx, dump_dir=dump,
            )
            results.append((bi, ri, record))
    else:
        with multiprocessing.Pool(
            processes=workers,
            initializer=_worker_init,
            initargs=(config, model, cew_model),
        ) as pool:
            chunk = max(1, len(jobs) // (workers * 8))
            results = list(pool.imap_unordered(_worker_run, jobs, chunksize=chunk))
    results.sort(key=lambda item: (item[0], item[1]))
    records = [record for _, _, record in results]

    write_replicates_csv(out / "replicates.csv", records, config.methods)
    rows = records_to_rows(records, config.methods)
    write_summaries(
        rows,
        out,
        bands=list(config.bands),
        methods=list(config.methods),
        fpr_target=config.fpr_target,
    )
    return records


# ---------------------------------------------------------------------------
# CSV emission

def records_to_rows(records, methods) -> list[tuple]:
    """Flatten records to (band, rep, method, score_h1, score_h0, loc_err)."""
    rows = []
    for rec in records:
        for method in methods:
            o = rec.outcomes[method]
            rows.append((rec.band, rec.rep, method, o.score_h1, o.score_h0, o.loc_err_m))
    return rows


def write_replicates_csv(path, records, methods) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(REPLICATES_HEADER + "\n")
        for rec in records:
            lo, hi = rec.band
            p = rec.placement
            for method in methods:
                o = rec.outcomes[method]
                fh.write(
                    f"{fmt_float(lo)},{fmt_float(hi)},{rec.rep},{method},"
                    f"{fmt_float(o.score_h1)},{fmt_float(o.score_h0)},"
                    f"{fmt_float(o.loc_err_m)},{fmt_float(p.along_m)},"
                    f"{fmt_float(p.offset_m)},{fmt_float(p.intensity_uci)}\n"
                )


def read_replicates_csv(path) -> list[tuple]:
    """Rows of (band, rep, method, score_h1, score_h0, loc_err_m)."""
    rows = []
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read replicates {path}: {exc}") from exc
    with fh:
        header = fh.readline().strip()
        if header != REPLICATES_HEADER:
            raise DataError(f"{path}: unexpected replicates.csv header")
        for line in fh:
            parts = line.rstrip("\n").split(",")
            if len(parts) != 10:
                raise DataError(f"{path}: malformed row: {line!r}")
            band = (float(parts[0]), float(parts[1]))
            rows.append(
                (band, int(parts[2]), parts[3], float(parts[4]), float(parts[5]),
                 float(parts[6]))
            )
    if not rows:
        raise DataError(f"{path}: no replicate rows")
    return rows


def write_roc_csv(path, roc: RocCurve) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("threshold,fpr,tpr\n")
        for t, f, d in zip(roc.thresholds, roc.fpr, roc.tpr):
            fh.write(f"{fmt_float(t)},{fmt_float(f)},{fmt_float(d)}\n")


def write_summaries(rows, out_dir, bands=None, methods=None, fpr_target=0.001) -> None:
    """Derive ROC files, pd_table.csv, and locerr.csv from replicate rows.

    Band and method orderings default to first appearance in the rows,
    which preserves the run ordering when re-deriving from a CSV.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if bands is None:
        bands = list(dict.fromkeys(row[0] for row in rows))
    if methods is None:
        methods = list(dict.fromkeys(row[2] for row in rows))

    grouped = {}
    for band, _, method, h1, h0, err in rows:
        grouped.setdefault((tuple(band), method), []).append((h1, h0, err))

    pd_lines = [PD_TABLE_HEADER]
    loc_lines = [LOCERR_HEADER]
    for method in methods:
        for band in bands:
            cell = grouped.get((tuple(band), method))
            if not cell:
                continue
            arr = np.asarray(cell, dtype=float)
            roc = compute_roc(arr[:, 0], arr[:, 1])
            write_roc_csv(out / f"roc_{band_label(band)}_{method}.csv", roc)
            pd_value = pd_at_fpr(roc, fpr_target)
            threshold, _, _ = operating_point(roc, fpr_target)
            pd_lines.append(
                f"{method},{fmt_float(band[0])},{fmt_float(band[1])},{fmt_float(pd_value)}"
            )
            detected = arr[arr[:, 0] >= threshold, 2]
            summary = localization_summary(detected)
            if summary is None:
                continue
            loc_lines.append(
                f"{method},{fmt_float(band[0])},{fmt_float(band[1])},"
                f"{fmt_float(summary.min)},{fmt_float(summary.q1)},"
                f"{fmt_float(summary.median)},{fmt_float(summary.q3)},"
                f"{fmt_float(summary.max)},{summary.n}"
            )
    (out / "pd_table.csv").write_text("\n".join(pd_lines) + "\n")
    (out / "locerr.csv").write_text("\n".join(loc_lines) + "\n")
