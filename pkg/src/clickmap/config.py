"""Experiment parameter schemas and visual-angle unit conversions.

All parameter values that reach stimuli or analysis are in pixels; the
degree<->pixel conversion is provided for experimenters who know their
viewing geometry, but is never applied implicitly (crowdsourced screens
have unknown geometry, which is why stimulus parameters are pixel-valued).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import ValidationError

TASK_TYPES = ("free_view", "describe")
MOUSE_MODALITIES = ("click", "move")

#: Description tasks gate advancement on a minimum character count.
DEFAULT_MIN_DESCRIPTION_CHARS = 150


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment's complete parameter set.

    ``time_limit_s=None`` means unlimited viewing time, which is only
    allowed for description tasks; free-viewing always has a fixed
    per-image time that the server enforces.
    """

    experiment_id: str
    task_type: str
    blur_sigma_px: float
    bubble_radius_px: float
    time_limit_s: float | None
    mouse_modality: str
    images_per_session: int
    image_ids: tuple[str, ...]
    min_description_chars: int = 0
    move_sample_hz: int = 100
    qualification_note: str = ""

    def __post_init__(self):
        object.__setattr__(self, "image_ids", tuple(self.image_ids))

    def problems(self) -> list[str]:
        """Return every violated invariant (empty list when valid)."""
        out = []
        if not self.experiment_id:
            out.append("experiment_id must be nonempty")
        if self.task_type not in TASK_TYPES:
            out.append(f"task_type must be one of {TASK_TYPES}")
        if self.mouse_modality not in MOUSE_MODALITIES:
            out.append(f"mouse_modality must be one of {MOUSE_MODALITIES}")
        if not self.blur_sigma_px > 0:
            out.append("blur_sigma_px must be > 0")
        if not self.bubble_radius_px > 0:
            out.append("bubble_radius_px must be > 0")
        if self.time_limit_s is not None and not self.time_limit_s > 0:
            out.append("time_limit_s must be > 0 or unlimited")
        if self.task_type == "free_view" and self.time_limit_s is None:
            out.append("free_view requires finite time")
        if self.task_type == "describe" and self.min_description_chars < 1:
            out.append("describe requires min_description_chars >= 1")
        if self.task_type == "free_view" and self.min_description_chars != 0:
            out.append("free_view requires min_description_chars == 0")
        if self.min_description_chars < 0:
            out.append("min_description_chars must be >= 0")
        if self.images_per_session < 1:
            out.append("images_per_session must be >= 1")
        if self.images_per_session > len(self.image_ids):
            out.append("images_per_session exceeds number of image_ids")
        if len(set(self.image_ids)) != len(self.image_ids):
            out.append("image_ids must be unique")
        if self.move_sample_hz < 1:
            out.append("move_sample_hz must be >= 1")
        return out


@dataclass(frozen=True)
class ViewingGeometry:
    """Physical viewing setup: distance to screen plus screen size/resolution."""

    viewer_distance_cm: float
    screen_width_cm: float
    screen_width_px: int

    def problems(self) -> list[str]:
        out = []
        for name in ("viewer_distance_cm", "screen_width_cm", "screen_width_px"):
            if not getattr(self, name) > 0:
                out.append(f"{name} must be > 0")
        return out


@dataclass(frozen=True)
class MapParams:
    """Parameters for rendering point sets into attention maps.

    ``map_sigma_px`` is the Gaussian sigma (pixels) used to blur discrete
    points into a continuous map; conventionally one degree of visual
    angle in the setup the ground-truth data came from. It is stored per
    dataset, never derived implicitly; use :func:`one_degree_sigma` when
    the geometry is actually known.
    """

    map_sigma_px: float

    def problems(self) -> list[str]:
        return [] if self.map_sigma_px > 0 else ["map_sigma_px must be > 0"]


def validate_config(cfg):
    """Return ``cfg`` unchanged iff all invariants hold.

    Raises :class:`ValidationError` carrying one message per violated
    invariant otherwise. Idempotent: validating a validated config returns
    the same object.
    """
    problems = cfg.problems()
    if problems:
        raise ValidationError(problems)
    return cfg


def pixels_per_degree(geom: ViewingGeometry) -> float:
    """Pixels subtended by one degree of visual angle.

    Uses the small-screen form 2*d*tan(0.5 deg) * pixel_density; strictly
    increasing in both viewing distance and pixel density.
    """
    validate_config(geom)
    cm_per_degree = 2.0 * geom.viewer_distance_cm * math.tan(math.radians(0.5))
    return cm_per_degree * geom.screen_width_px / geom.screen_width_cm


def one_degree_sigma(geom: ViewingGeometry) -> MapParams:
    """Map params with sigma equal to one degree under ``geom``."""
    return MapParams(map_sigma_px=pixels_per_degree(geom))


_CONFIG_FIELDS = {
    "experiment_id",
    "task_type",
    "blur_sigma_px",
    "bubble_radius_px",
    "time_limit_s",
    "mouse_modality",
    "min_description_chars",
    "images_per_session",
    "image_ids",
    "move_sample_hz",
    "qualification_note",
}

_REQUIRED_FIELDS = {
    "experiment_id",
    "task_type",
    "blur_sigma_px",
    "bubble_radius_px",
    "time_limit_s",
    "mouse_modality",
    "images_per_session",
    "image_ids",
}


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build and validate a config from parsed file content.

    Unknown fields are rejected rather than ignored so that typos in
    experiment files fail loudly before any participant sees a stimulus.
    ``time_limit_s`` accepts ``null`` or ``"unlimited"`` for untimed tasks.
    """
    unknown = sorted(set(raw) - _CONFIG_FIELDS)
    if unknown:
        raise ValidationError([f"unknown field: {name}" for name in unknown])
    missing = sorted(_REQUIRED_FIELDS - set(raw))
    if missing:
        raise ValidationError([f"missing field: {name}" for name in missing])

    raw = dict(raw)
    if raw["time_limit_s"] == "unlimited":
        raw["time_limit_s"] = None
    if raw["task_type"] == "describe" and "min_description_chars" not in raw:
        raw["min_description_chars"] = DEFAULT_MIN_DESCRIPTION_CHARS
    return validate_config(ExperimentConfig(**raw))


def load_config(path) -> ExperimentConfig:
    """Load one experiment config from a JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError([f"{path}: not valid JSON ({exc})"]) from exc
    if not isinstance(raw, dict):
        raise ValidationError([f"{path}: expected a JSON object"])
    return config_from_dict(raw)


def save_config(cfg: ExperimentConfig, path) -> None:
    """Write a validated config as pretty-printed JSON."""
    validate_config(cfg)
    data = asdict(cfg)
    data["image_ids"] = list(cfg.image_ids)
    Path(path).write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")
