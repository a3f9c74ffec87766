"""Similarity metrics between predicted attention maps and fixation data.

CC compares two maps cell by cell; NSS scores a map at discrete fixation
locations; inter-observer consistency (IOC) is the leave-one-out NSS of
the fixation data against itself, which bounds what any predictor can
achieve and is the denominator of the normalized score.
"""
from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .config import MapParams
from .errors import (
    ClickmapError,
    DimensionMismatchError,
    EmptyPointSetError,
    ValidationError,
    ZeroVarianceError,
)
from .maps import AttentionMap, PointSet, build_map

REPORT_COLUMNS = ("image_id", "n_pred", "cc", "nss", "ioc_nss", "normalized_nss")
AGGREGATE_ID = "AGGREGATE"


@dataclass(frozen=True)
class MetricReport:
    """Scores for one image (or the dataset aggregate)."""

    image_id: str
    cc: float
    nss: float
    ioc_nss: float
    normalized_nss: float
    n_pred_participants: int
    n_gt_observers: int


@dataclass(frozen=True)
class DatasetReport:
    """Per-image scores plus their unweighted dataset mean."""

    per_image: tuple[MetricReport, ...]
    aggregate: MetricReport
    n_splits: int
    base_seed: int
    skipped: tuple[str, ...] = ()


def image_seed(base_seed: int, image_id: str) -> int:
    """Stable per-image RNG seed, identical across processes and runs."""
    digest = hashlib.sha256(image_id.encode("utf-8")).digest()
    return base_seed ^ int.from_bytes(digest[:8], "big")


def _values(m) -> np.ndarray:
    return m.values if isinstance(m, AttentionMap) else np.asarray(m, dtype=np.float64)


def cc(pred, gt) -> float:
    """Pearson correlation over all grid cells as paired samples."""
    a = _values(pred)
    b = _values(gt)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"map shapes differ: {a.shape} vs {b.shape}")
    a_c = a - a.mean()
    b_c = b - b.mean()
    denom = math.sqrt(float((a_c * a_c).sum()) * float((b_c * b_c).sum()))
    if denom == 0:
        raise ZeroVarianceError("correlation undefined for a constant map")
    return float(np.clip((a_c * b_c).sum() / denom, -1.0, 1.0))


def nss(pred, fixations: PointSet) -> float:
    """Mean z-scored map value at the fixated pixels.

    Population standard deviation, nearest-pixel lookup, and an
    order-independent sum, so relabeling or reordering fixations never
    shifts the result by even one ulp.
    """
    values = _values(pred)
    if len(fixations) == 0:
        raise EmptyPointSetError("NSS needs at least one fixation")
    if values.shape != (fixations.height, fixations.width):
        raise DimensionMismatchError(
            f"map {values.shape} does not match points "
            f"({fixations.height}, {fixations.width})"
        )
    std = values.std()
    if std == 0:
        raise ZeroVarianceError("NSS undefined for a constant map")
    z = (values - values.mean()) / std
    rows, cols = fixations.pixel_rows_cols()
    return math.fsum(z[rows, cols].tolist()) / len(fixations)


def ioc(gt: PointSet, params: MapParams) -> float:
    """Inter-observer consistency: leave-one-out NSS among observers.

    Each observer's fixations are predicted by the map built from every
    other observer; scores average over observers.
    """
    observers = gt.participants
    if len(observers) < 2:
        raise ValidationError(["IOC requires at least 2 observers"])
    scores = [
        nss(build_map(gt.without(o), params), gt.subset([o])) for o in observers
    ]
    return math.fsum(scores) / len(observers)


def normalized_nss(nss_val: float, ioc_val: float) -> float:
    """NSS as a fraction of the inter-observer ceiling."""
    if not ioc_val > 0:
        raise ValidationError([f"ioc_val must be > 0, got {ioc_val}"])
    return nss_val / ioc_val


def format_percent(fraction: float) -> str:
    """Integer percent, rounding halves away from zero: 0.894 -> '89%'."""
    magnitude = math.floor(abs(fraction) * 100.0 + 0.5)
    sign = "-" if fraction < 0 and magnitude > 0 else ""
    return f"{sign}{magnitude}%"


def _attach_image_id(image_id: str, exc: ClickmapError) -> ClickmapError:
    if isinstance(exc, ValidationError):
        return ValidationError([f"{image_id}: {p}" for p in exc.problems])
    return type(exc)(f"{image_id}: {exc}")


def _image_scores(
    pred: PointSet,
    gt: PointSet,
    params: MapParams,
    n_pred: int,
    n_splits: int,
    seed: int,
) -> tuple[float, float, int]:
    """Mean CC and NSS over seeded participant subsets of the prediction."""
    gt_map = build_map(gt, params)
    participants = sorted(pred.participants)
    effective_n = min(n_pred, len(participants))
    if effective_n < 1:
        raise EmptyPointSetError("prediction has no participants")
    if effective_n == len(participants):
        subsets = [participants]
    else:
        rng = np.random.default_rng(seed)
        subsets = [
            [participants[i] for i in rng.permutation(len(participants))[:effective_n]]
            for _ in range(n_splits)
        ]
    cc_vals = []
    nss_vals = []
    for chosen in subsets:
        pred_map = build_map(pred, params, participants=chosen)
        cc_vals.append(cc(pred_map, gt_map))
        nss_vals.append(nss(pred_map, gt))
    return (
        math.fsum(cc_vals) / len(subsets),
        math.fsum(nss_vals) / len(subsets),
        effective_n,
    )


def dataset_report(
    pairs: Mapping[str, tuple[PointSet, PointSet]],
    params: MapParams,
    n_pred: int,
    n_splits: int = 10,
    base_seed: int = 0,
    skip_errors: bool = False,
) -> DatasetReport:
    """Score every image and average the per-image scores.

    ``pairs`` maps image id to (prediction points, ground-truth points).
    Per image, CC and NSS average over ``n_splits`` random subsets of
    ``n_pred`` prediction participants (one full-set evaluation when
    n_pred covers everyone); the RNG seed derives from ``base_seed`` and
    the image id, so evaluation order and parallelism cannot change any
    number. Errors carry the offending image id; with ``skip_errors`` the
    image is dropped and recorded instead.
    """
    if not pairs:
        raise ValidationError(["dataset_report needs at least one image"])
    if n_pred < 1 or n_splits < 1:
        raise ValidationError(["n_pred and n_splits must be >= 1"])
    reports = []
    skipped = []
    for image_id in sorted(pairs):
        pred, gt = pairs[image_id]
        try:
            ioc_val = ioc(gt, params)
            cc_val, nss_val, effective_n = _image_scores(
                pred, gt, params, n_pred, n_splits, image_seed(base_seed, image_id)
            )
        except ClickmapError as exc:
            if skip_errors:
                skipped.append(image_id)
                continue
            raise _attach_image_id(image_id, exc) from exc
        reports.append(
            MetricReport(
                image_id=image_id,
                cc=cc_val,
                nss=nss_val,
                ioc_nss=ioc_val,
                normalized_nss=normalized_nss(nss_val, ioc_val),
                n_pred_participants=effective_n,
                n_gt_observers=len(gt.participants),
            )
        )
    if not reports:
        raise ValidationError(["every image failed; nothing to aggregate"])
    agg_cc = math.fsum(r.cc for r in reports) / len(reports)
    agg_nss = math.fsum(r.nss for r in reports) / len(reports)
    agg_ioc = math.fsum(r.ioc_nss for r in reports) / len(reports)
    aggregate = MetricReport(
        image_id=AGGREGATE_ID,
        cc=agg_cc,
        nss=agg_nss,
        ioc_nss=agg_ioc,
        normalized_nss=normalized_nss(agg_nss, agg_ioc),
        n_pred_participants=n_pred,
        n_gt_observers=max(r.n_gt_observers for r in reports),
    )
    return DatasetReport(
        per_image=tuple(reports),
        aggregate=aggregate,
        n_splits=n_splits,
        base_seed=base_seed,
        skipped=tuple(skipped),
    )


def write_report_csv(report: DatasetReport, path, comments: Sequence[str] = ()) -> None:
    """Write per-image rows plus the AGGREGATE row.

    Floats use shortest round-trip repr, so two runs that computed the
    same numbers produce byte-identical files.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for r in (*report.per_image, report.aggregate):
            writer.writerow(
                [
                    r.image_id,
                    r.n_pred_participants,
                    repr(r.cc),
                    repr(r.nss),
                    repr(r.ioc_nss),
                    format_percent(r.normalized_nss),
                ]
            )
