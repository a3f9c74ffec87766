"""Higher-level analyses over maps and scores.

Covers four separate questions an experimenter asks after collecting
data: how scores extrapolate with more participants (power-law fit),
which annotated elements matter most (max-in-region importance), how
attention distributes horizontally (center-bias profile), and what a
study will cost (task pricing arithmetic).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    DimensionMismatchError,
    ValidationError,
    ZeroVarianceError,
)
from .imaging import load_image
from .maps import AttentionMap, mean_map


@dataclass(frozen=True)
class PowerFit:
    """Least-squares fit of score = a * n^b + c with b constrained <= 0.

    ``c`` is the extrapolated score in the infinite-participant limit;
    ``c_ci95`` is its bootstrap 95% confidence interval.
    """

    a: float
    b: float
    c: float
    rss: float
    c_ci95: tuple[float, float]

    def __post_init__(self):
        problems = []
        if self.b > 0:
            problems.append(f"b must be <= 0, got {self.b}")
        lo, hi = self.c_ci95
        if not lo <= self.c <= hi:
            problems.append(f"c={self.c} outside its interval [{lo}, {hi}]")
        if self.rss < 0:
            problems.append("rss must be >= 0")
        if problems:
            raise ValidationError(problems)


def limit_summary(fit: PowerFit) -> str:
    """One-line report of the extrapolated limit and its interval."""
    lo, hi = fit.c_ci95
    return f"{fit.c:.2f} in the limit (95% C.I. [{lo:.3f}, {hi:.3f}])"


def _constant_fit(y: np.ndarray) -> tuple[float, float, float]:
    # At b = 0 the two basis columns coincide; the identifiable model is
    # a constant, reported as a = 0.
    c = float(y.mean())
    return 0.0, c, float(((y - c) ** 2).sum())


def _fit_at(b: float, n: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """Exact inner least squares for (a, c) at fixed b; returns (a, c, rss)."""
    if b == 0.0:
        return _constant_fit(y)
    design = np.column_stack([n**b, np.ones_like(n)])
    theta, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ theta
    return float(theta[0]), float(theta[1]), float((resid * resid).sum())


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def fit_power(
    samples: Sequence[tuple[int, float]],
    seed: int = 0,
    n_boot: int = 1000,
    grid_points: int = 301,
) -> PowerFit:
    """Fit a * n^b + c to (participant count, score) samples.

    Variable projection: b is searched over [-3, 0] on a grid and then
    refined by golden section, with (a, c) solved exactly by linear least
    squares at every candidate b. The interval on c comes from a seeded
    residual bootstrap (``n_boot`` resamples, refit on the grid).
    """
    if grid_points < 3:
        raise ValidationError(["grid_points must be >= 3"])
    n = np.array([s[0] for s in samples], dtype=np.float64)
    y = np.array([s[1] for s in samples], dtype=np.float64)
    problems = []
    if len(samples) == 0 or len(set(n.tolist())) < 4:
        problems.append("need samples at 4 or more distinct participant counts")
    if np.any(n < 1) or not np.all(n == np.rint(n)):
        problems.append("participant counts must be positive integers")
    if not np.all(np.isfinite(y)):
        problems.append("scores must be finite")
    if problems:
        raise ValidationError(problems)

    grid = np.linspace(-3.0, 0.0, grid_points)
    fits = [_fit_at(float(b), n, y) for b in grid]
    best_idx = int(np.argmin([f[2] for f in fits]))
    best_b = float(grid[best_idx])
    best = fits[best_idx]

    # Golden-section refinement between the grid neighbors of the winner.
    left = float(grid[max(best_idx - 1, 0)])
    right = float(grid[min(best_idx + 1, grid_points - 1)])
    x1 = right - _GOLDEN * (right - left)
    x2 = left + _GOLDEN * (right - left)
    f1 = _fit_at(x1, n, y)
    f2 = _fit_at(x2, n, y)
    for _ in range(80):
        if f1[2] <= f2[2]:
            right, x2, f2 = x2, x1, f1
            x1 = right - _GOLDEN * (right - left)
            f1 = _fit_at(x1, n, y)
        else:
            left, x1, f1 = x1, x2, f2
            x2 = left + _GOLDEN * (right - left)
            f2 = _fit_at(x2, n, y)
    for b_cand, fit in ((x1, f1), (x2, f2)):
        if fit[2] < best[2]:
            best_b, best = float(b_cand), fit

    a, c, rss = best
    lo, hi = _bootstrap_c_interval(n, y, a, best_b, c, grid, seed, n_boot)
    return PowerFit(
        a=a,
        b=best_b,
        c=c,
        rss=rss,
        c_ci95=(min(lo, c), max(hi, c)),
    )


def _bootstrap_c_interval(n, y, a, b, c, grid, seed, n_boot):
    """Residual-bootstrap percentile interval for the limit parameter."""
    fitted = a * n**b + c if b != 0.0 else np.full_like(y, c)
    residuals = y - fitted
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(y), size=(n_boot, len(y)))
    resampled = fitted[None, :] + residuals[idx]  # (n_boot, m)

    best_rss = np.full(n_boot, np.inf)
    best_c = np.zeros(n_boot)
    targets = resampled.T  # (m, n_boot)
    for b_k in grid:
        if b_k == 0.0:
            c_k = resampled.mean(axis=1)
            resid = targets - c_k[None, :]
            rss_k = (resid * resid).sum(axis=0)
        else:
            design = np.column_stack([n**b_k, np.ones_like(n)])
            theta, *_ = np.linalg.lstsq(design, targets, rcond=None)
            resid = targets - design @ theta
            rss_k = (resid * resid).sum(axis=0)
            c_k = theta[1]
        better = rss_k < best_rss
        best_c = np.where(better, c_k, best_c)
        best_rss = np.minimum(best_rss, rss_k)
    lo, hi = np.percentile(best_c, [2.5, 97.5])
    return float(lo), float(hi)


@dataclass(frozen=True)
class ElementAnnotation:
    """A labeled region of an image: a half-open pixel box or a mask.

    The box form is (x0, y0, x1, y1) covering columns [x0, x1) and rows
    [y0, y1). Exactly one of box and mask must be given; bounds are
    checked against the map being scored.
    """

    element_id: str
    label: str
    box: tuple[int, int, int, int] | None = None
    mask: np.ndarray | None = None

    def __post_init__(self):
        if (self.box is None) == (self.mask is None):
            raise ValidationError(
                [f"element {self.element_id!r}: give exactly one of box or mask"]
            )
        if self.box is not None:
            x0, y0, x1, y1 = self.box
            if x1 <= x0 or y1 <= y0:
                raise ValidationError(
                    [f"element {self.element_id!r}: empty box {self.box}"]
                )
            if x0 < 0 or y0 < 0:
                raise ValidationError(
                    [f"element {self.element_id!r}: negative box corner"]
                )
        else:
            mask = np.asarray(self.mask, dtype=bool)
            object.__setattr__(self, "mask", mask)
            if mask.ndim != 2 or not mask.any():
                raise ValidationError(
                    [f"element {self.element_id!r}: mask must be 2-D and nonempty"]
                )

    def region_values(self, values: np.ndarray, element_ref: str) -> np.ndarray:
        height, width = values.shape
        if self.box is not None:
            x0, y0, x1, y1 = self.box
            if x1 > width or y1 > height:
                raise ValidationError(
                    [f"element {element_ref}: box {self.box} exceeds "
                     f"{width}x{height} map"]
                )
            return values[y0:y1, x0:x1]
        if self.mask.shape != values.shape:
            raise ValidationError(
                [f"element {element_ref}: mask shape {self.mask.shape} "
                 f"does not match map {values.shape}"]
            )
        return values[self.mask]


def element_importance(
    m: AttentionMap, elements: Sequence[ElementAnnotation]
) -> list[tuple[str, float]]:
    """Score each element by the map's maximum inside its region.

    The map is max-normalized first, so scores land in [0, 1] and the
    induced ranking is invariant to any positive rescaling of the map.
    """
    peak = m.values.max()
    if peak <= 0:
        raise ZeroVarianceError("cannot score elements on an all-zero map")
    normalized = m.values / peak
    scores = []
    for el in elements:
        region = el.region_values(normalized, el.element_id)
        scores.append((el.element_id, float(region.max())))
    return scores


def _average_ranks(values: Sequence[float]) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _pearson_1d(a: np.ndarray, b: np.ndarray) -> float:
    a_c = a - a.mean()
    b_c = b - b.mean()
    denom = math.sqrt(float((a_c * a_c).sum()) * float((b_c * b_c).sum()))
    if denom == 0:
        raise ZeroVarianceError("correlation undefined for a constant list")
    return float(np.clip((a_c * b_c).sum() / denom, -1.0, 1.0))


def rank_correlation(
    scores_a: Sequence[float], scores_b: Sequence[float]
) -> tuple[float, float]:
    """(Pearson, Spearman) between two aligned score lists.

    Spearman is Pearson over average ranks, so tied scores share the mean
    of the rank positions they occupy.
    """
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatchError(
            f"score lists differ in length: {a.shape} vs {b.shape}"
        )
    if len(a) < 3:
        raise ValidationError(["rank correlation needs at least 3 pairs"])
    pearson = _pearson_1d(a, b)
    spearman = _pearson_1d(_average_ranks(a), _average_ranks(b))
    return pearson, spearman


def aggregate_element_scores(
    per_image: Sequence[tuple[str, float]]
) -> list[tuple[str, float]]:
    """Mean score per label, labels ordered by first appearance.

    Images missing a label simply contribute nothing to that label's
    mean; absence is not a zero.
    """
    if not per_image:
        raise ValidationError(["no element scores to aggregate"])
    grouped: dict[str, list[float]] = {}
    for label, score in per_image:
        grouped.setdefault(label, []).append(score)
    return [(label, math.fsum(v) / len(v)) for label, v in grouped.items()]


def center_bias_profile(maps: Sequence[AttentionMap]) -> np.ndarray:
    """Horizontal attention profile: column means of the average map.

    Averages over all rows (not a single cross-section) for noise
    robustness, then normalizes so the peak column equals 1.
    """
    averaged = mean_map(maps)
    profile = averaged.values.mean(axis=0)
    return profile / profile.max()


@dataclass(frozen=True)
class CostModel:
    """Pricing inputs for a crowdsourced task."""

    time_per_image_s: float
    images_per_task: int
    participants: tuple[int, int]
    rate_per_min: float = 0.1

    def __post_init__(self):
        problems = []
        if not self.time_per_image_s > 0:
            problems.append("time_per_image_s must be > 0")
        if self.images_per_task < 1:
            problems.append("images_per_task must be >= 1")
        if not self.rate_per_min > 0:
            problems.append("rate_per_min must be > 0")
        lo, hi = self.participants
        if lo < 0 or hi < lo:
            problems.append("participants must satisfy 0 <= lo <= hi")
        if problems:
            raise ValidationError(problems)


@dataclass(frozen=True)
class CostEstimate:
    """Exact and display-rounded prices for one task configuration.

    ``task_price_exact`` is rate x time x images with no rounding.
    ``task_price`` is what actually gets advertised: the next $0.10
    increment strictly above the exact price (workers see round numbers
    and a strict bump keeps the advertised pay at or above fair rate even
    when the exact price already lands on an increment).
    Per-image bounds divide the advertised price across images and
    multiply by the participant range, rounding the low end up to the
    cent and the high end down.
    """

    task_price_exact: Fraction
    task_price: Decimal
    per_image_lo: Decimal
    per_image_hi: Decimal


def _cents(value: Fraction, rounding: str) -> Decimal:
    cents = value * 100
    if rounding == "ceil":
        n = math.ceil(cents)
    elif rounding == "floor":
        n = math.floor(cents)
    else:
        raise ValueError(rounding)
    return Decimal(n).scaleb(-2)


def estimate_cost(model: CostModel, task_price=None) -> CostEstimate:
    """Price a task configuration and its per-image data cost.

    ``task_price`` overrides the advertised price (e.g. when matching an
    already-launched study); otherwise it derives from the rate and
    timing as described on :class:`CostEstimate`.
    """
    exact = (
        Fraction(str(model.rate_per_min))
        * Fraction(str(model.time_per_image_s))
        / 60
        * model.images_per_task
    )
    if task_price is None:
        dimes = exact / Fraction(1, 10)
        advertised = Fraction(math.floor(dimes) + 1, 10)
    else:
        advertised = Fraction(str(task_price))
        if (advertised * 100).denominator != 1 or advertised <= 0:
            raise ValidationError(
                ["task price override must be a positive whole number of cents"]
            )
    lo, hi = model.participants
    per_image = advertised / model.images_per_task
    return CostEstimate(
        task_price_exact=exact,
        task_price=Decimal((advertised * 100).numerator).scaleb(-2),
        per_image_lo=_cents(per_image * lo, "ceil"),
        per_image_hi=_cents(per_image * hi, "floor"),
    )


def format_money(amount: Decimal) -> str:
    return f"${amount:.2f}"


def read_elements(path) -> list[ElementAnnotation]:
    """Read element annotations for one image from a text file.

    One element per line, comma-separated:

        element_id,label,box,x0,y0,x1,y1
        element_id,label,mask,relative/path.png

    Mask references resolve relative to the annotation file; mask pixels
    above 0.5 belong to the element. Lines starting with # are comments.
    """
    path = Path(path)
    elements = []
    for lineno, line in enumerate(
        path.read_text(encoding="utf-8").splitlines(), start=1
    ):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        where = f"{path.name}:{lineno}"
        if len(parts) == 7 and parts[2] == "box":
            try:
                coords = tuple(int(p) for p in parts[3:])
            except ValueError:
                raise ValidationError([f"{where}: box coords must be integers"])
            elements.append(
                ElementAnnotation(element_id=parts[0], label=parts[1], box=coords)
            )
        elif len(parts) == 4 and parts[2] == "mask":
            mask_path = path.parent / parts[3]
            if not mask_path.exists():
                raise ValidationError([f"{where}: mask file {parts[3]} not found"])
            elements.append(
                ElementAnnotation(
                    element_id=parts[0],
                    label=parts[1],
                    mask=load_image(mask_path) > 0.5,
                )
            )
        else:
            raise ValidationError([f"{where}: expected box or mask record"])
    return elements


def write_power_fit_csv(fit: PowerFit, path, comments: Sequence[str] = ()) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["a", "b", "c", "rss", "c_ci95_lo", "c_ci95_hi"])
        writer.writerow(
            [repr(fit.a), repr(fit.b), repr(fit.c), repr(fit.rss),
             repr(fit.c_ci95[0]), repr(fit.c_ci95[1])]
        )


def write_profile_csv(profile: np.ndarray, path, comments: Sequence[str] = ()) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "weight"])
        for x, weight in enumerate(profile):
            writer.writerow([x, repr(float(weight))])
