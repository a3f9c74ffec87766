"""Discrete point sets and their conversion to continuous attention maps.

Clicks, mouse samples, and eye fixations all share one representation: a
set of timestamped points on an image. Blurring unit impulses at those
points with a Gaussian and normalizing yields a 2-D distribution that
downstream metrics treat identically regardless of how the points were
captured.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .config import MapParams
from .errors import (
    DimensionMismatchError,
    EmptyPointSetError,
    ValidationError,
    ZeroVarianceError,
)
from .imaging import gaussian_blur

POINT_KINDS = ("click", "move_sample", "fixation")
NORMALIZATIONS = ("raw", "probability", "zscore")


class Point(NamedTuple):
    x: float
    y: float
    t_ms: float
    participant_id: str


@dataclass(frozen=True)
class PointSet:
    """Timestamped points from one or more participants on one image.

    Every point lies within [0, width) x [0, height); timestamps are
    nondecreasing per participant in list order. An empty set is a legal
    container (filters can empty one out) but cannot become a map.
    """

    points: tuple[Point, ...]
    width: int
    height: int
    kind: str

    def __post_init__(self):
        object.__setattr__(
            self, "points", tuple(Point(*p) for p in self.points)
        )
        problems = []
        if self.kind not in POINT_KINDS:
            problems.append(f"kind must be one of {POINT_KINDS}")
        if self.width < 1 or self.height < 1:
            problems.append("width and height must be >= 1")
        last_t: dict[str, float] = {}
        for i, p in enumerate(self.points):
            if not (math.isfinite(p.x) and 0 <= p.x < self.width):
                problems.append(f"point {i}: x={p.x} outside [0, {self.width})")
            if not (math.isfinite(p.y) and 0 <= p.y < self.height):
                problems.append(f"point {i}: y={p.y} outside [0, {self.height})")
            if not (math.isfinite(p.t_ms) and p.t_ms >= 0):
                problems.append(f"point {i}: t_ms={p.t_ms} must be >= 0")
            elif p.t_ms < last_t.get(p.participant_id, 0.0):
                problems.append(
                    f"point {i}: t_ms decreases for participant {p.participant_id!r}"
                )
            else:
                last_t[p.participant_id] = p.t_ms
        if problems:
            raise ValidationError(problems)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def participants(self) -> tuple[str, ...]:
        """Distinct participant ids in order of first appearance."""
        seen = dict.fromkeys(p.participant_id for p in self.points)
        return tuple(seen)

    def subset(self, participants: Iterable[str]) -> "PointSet":
        keep = set(participants)
        return PointSet(
            points=tuple(p for p in self.points if p.participant_id in keep),
            width=self.width,
            height=self.height,
            kind=self.kind,
        )

    def without(self, participant: str) -> "PointSet":
        return self.subset(set(self.participants) - {participant})

    def pixel_rows_cols(self) -> tuple[np.ndarray, np.ndarray]:
        """Nearest-pixel indices (ties to even), edge bins clipped inward."""
        xs = np.array([p.x for p in self.points], dtype=np.float64)
        ys = np.array([p.y for p in self.points], dtype=np.float64)
        cols = np.clip(np.rint(xs), 0, self.width - 1).astype(np.intp)
        rows = np.clip(np.rint(ys), 0, self.height - 1).astype(np.intp)
        return rows, cols


@dataclass(frozen=True)
class AttentionMap:
    """Dense attention grid tagged with how its values are normalized."""

    values: np.ndarray
    normalization: str

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        problems = []
        if values.ndim != 2:
            problems.append(f"values must be a 2-D grid, got shape {values.shape}")
        elif self.normalization == "raw":
            if values.min() < 0:
                problems.append("raw map values must be >= 0")
        elif self.normalization == "probability":
            if values.min() < 0:
                problems.append("probability map values must be >= 0")
            if abs(values.sum() - 1.0) > 1e-6:
                problems.append(f"probability map sums to {values.sum()}, not 1")
        elif self.normalization == "zscore":
            if abs(values.mean()) > 1e-9:
                problems.append("zscore map mean must be 0")
            if abs(values.std() - 1.0) > 1e-9:
                problems.append("zscore map std must be 1")
        else:
            problems.append(f"normalization must be one of {NORMALIZATIONS}")
        if problems:
            raise ValidationError(problems)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


def build_map(
    pts: PointSet,
    params: MapParams,
    participants: Sequence[str] | None = None,
) -> AttentionMap:
    """Blur unit impulses at the points into a probability map.

    Each point counts once; there is no per-participant reweighting.
    Point locations are binned to the nearest pixel before the Gaussian
    is applied, using the same truncation and border rules as stimulus
    blur. An empty (sub)set is an error, never a zero map.
    """
    if participants is not None:
        pts = pts.subset(participants)
    if len(pts) == 0:
        raise EmptyPointSetError("cannot build a map from zero points")
    impulses = np.zeros((pts.height, pts.width), dtype=np.float64)
    rows, cols = pts.pixel_rows_cols()
    np.add.at(impulses, (rows, cols), 1.0)
    blurred = gaussian_blur(impulses, params.map_sigma_px)
    return AttentionMap(blurred / blurred.sum(), "probability")


def zscore(m: AttentionMap) -> AttentionMap:
    """Standardize a map to mean 0, population std 1."""
    std = m.values.std()
    if std == 0:
        raise ZeroVarianceError("cannot z-score a constant map")
    return AttentionMap((m.values - m.values.mean()) / std, "zscore")


def mean_map(maps: Sequence[AttentionMap]) -> AttentionMap:
    """Elementwise mean of probability maps, re-normalized to sum 1."""
    if not maps:
        raise ValidationError(["mean_map requires at least one map"])
    shape = maps[0].values.shape
    for m in maps:
        if m.values.shape != shape:
            raise DimensionMismatchError(
                f"mixed map dimensions: {m.values.shape} vs {shape}"
            )
        if m.normalization != "probability":
            raise ValidationError(["mean_map requires probability-normalized maps"])
    mean = np.mean([m.values for m in maps], axis=0)
    return AttentionMap(mean / mean.sum(), "probability")


def write_map_text(m: AttentionMap, path) -> None:
    """Write a map as a plain text grid: header line, then one row per line."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{m.width} {m.height} {m.normalization}\n")
        for row in m.values:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def read_map_text(path) -> AttentionMap:
    """Read a map written by :func:`write_map_text` (exact round trip)."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise ValidationError([f"{path}: bad map header"])
        width, height, normalization = int(header[0]), int(header[1]), header[2]
        values = np.loadtxt(fh, dtype=np.float64, ndmin=2)
    if values.shape != (height, width):
        raise DimensionMismatchError(
            f"{path}: header says {height}x{width}, grid is {values.shape}"
        )
    return AttentionMap(values, normalization)
