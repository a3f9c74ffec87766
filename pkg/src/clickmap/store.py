"""Append-only event storage, session records, and data filtering.

Everything durable is a line-delimited structured-text log: one record
per line, UTF-8, LF. Appending is the only mutation; any state can be
reconstructed by replaying the log from the start, which makes the data
trivially auditable and diffable. Events that fail validation are never
silently dropped: they go to a quarantine log with the rejection reason.
"""
from __future__ import annotations

import copy
import json
import math
import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping

from .config import ExperimentConfig
from .errors import (
    ClickmapError,
    EmptyPointSetError,
    SequenceConflictError,
    ValidationError,
)
from .maps import Point, PointSet

EVENT_KINDS = (
    "session_begin",
    "image_begin",
    "click",
    "move_sample",
    "description_update",
    "description_final",
    "image_end",
    "session_end",
)

_POINT_KINDS = ("click", "move_sample")
_TEXT_KINDS = ("description_update", "description_final")
_EVENT_FIELDS = (
    "session_id",
    "participant_id",
    "experiment_id",
    "image_id",
    "seq",
    "kind",
    "x",
    "y",
    "t_ms",
    "text",
)


class RejectedEvent(ClickmapError):
    """An event that violated log invariants; journaled to quarantine."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass(frozen=True)
class EventRecord:
    """One interaction event, exactly as stored in the log."""

    session_id: str
    participant_id: str
    experiment_id: str
    seq: int
    kind: str
    image_id: str | None = None
    x: float | None = None
    y: float | None = None
    t_ms: float = 0.0
    text: str | None = None

    def to_json(self) -> str:
        data = {name: getattr(self, name) for name in _EVENT_FIELDS}
        return json.dumps(data, ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "EventRecord":
        data = json.loads(line)
        unknown = set(data) - set(_EVENT_FIELDS)
        if unknown:
            raise ValidationError([f"unknown event field: {n}" for n in sorted(unknown)])
        return cls(**data)


@dataclass
class _SessionTail:
    """Mutable per-session replay state."""

    participant_id: str
    last_seq: int
    open: bool = True
    current_image: str | None = None
    last_t_ms: float = 0.0
    description_len: int = 0


@dataclass(frozen=True)
class FilterPolicy:
    """Which participants' clicks survive into analysis.

    ``min_clicks_per_image`` drops participants who clicked too few times
    on an image; ``participant_outlier_sd`` drops participants whose
    per-image click count sits further than that many standard deviations
    from the image's mean count (None disables the rule). Out-of-bounds
    clicks are always dropped at ingest (the only supported policy).
    """

    min_clicks_per_image: int = 2
    participant_outlier_sd: float | None = 3.0
    out_of_bounds: str = "drop_click"

    def __post_init__(self):
        problems = []
        if self.min_clicks_per_image < 0:
            problems.append("min_clicks_per_image must be >= 0")
        if self.participant_outlier_sd is not None and not self.participant_outlier_sd > 0:
            problems.append("participant_outlier_sd must be > 0 or None")
        if self.out_of_bounds != "drop_click":
            problems.append("out_of_bounds only supports drop_click")
        if problems:
            raise ValidationError(problems)


@dataclass(frozen=True)
class FilterResult:
    """Surviving points plus an account of what filtering removed."""

    points: PointSet
    n_total: int
    n_kept: int
    dropped_participants: tuple[str, ...]

    @property
    def removed_fraction(self) -> float:
        return 0.0 if self.n_total == 0 else 1.0 - self.n_kept / self.n_total


class EventLog:
    """Append-only event log for one experiment.

    When constructed over an existing directory the log is replayed to
    rebuild session state, so a restarted process continues exactly where
    the previous one stopped. Appends are fsynced before the new sequence
    number is returned.
    """

    def __init__(
        self,
        directory,
        config: ExperimentConfig | None = None,
        image_sizes: Mapping[str, tuple[int, int]] | None = None,
    ):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.config = config
        self.image_sizes = dict(image_sizes or {})
        self.events_path = self.directory / "events.jsonl"
        self.quarantine_path = self.directory / "quarantine.jsonl"
        self._sessions: dict[str, _SessionTail] = {}
        self._events: list[EventRecord] = []
        self._by_seq: dict[tuple[str, int], EventRecord] = {}
        self._first_session: dict[tuple[str, str], str] = {}
        if self.events_path.exists():
            with open(self.events_path, "r", encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        self._apply(EventRecord.from_json(line))
        self._fh = open(self.events_path, "a", encoding="utf-8", newline="\n")

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- validation ----------------------------------------------------

    def _validate(self, e: EventRecord, tail: _SessionTail | None) -> None:
        if e.kind not in EVENT_KINDS:
            raise RejectedEvent(f"unknown event kind {e.kind!r}")
        if not (math.isfinite(e.t_ms) and e.t_ms >= 0):
            raise RejectedEvent(f"t_ms must be >= 0, got {e.t_ms}")
        if self.config is not None and e.experiment_id != self.config.experiment_id:
            raise RejectedEvent(
                f"event for experiment {e.experiment_id!r} sent to "
                f"{self.config.experiment_id!r}"
            )

        if e.kind == "session_begin":
            if tail is not None:
                raise RejectedEvent(f"session {e.session_id} already began")
            if e.seq != 1:
                raise SequenceConflictError(
                    f"session must begin at seq 1, got {e.seq}", expected_next_seq=1
                )
            return
        if tail is None:
            raise RejectedEvent(f"session {e.session_id} never began")
        if not tail.open:
            raise RejectedEvent(f"session {e.session_id} is closed")
        if e.seq != tail.last_seq + 1:
            raise SequenceConflictError(
                f"expected seq {tail.last_seq + 1}, got {e.seq}",
                expected_next_seq=tail.last_seq + 1,
            )
        if e.participant_id != tail.participant_id:
            raise RejectedEvent("participant_id changed mid-session")

        if e.kind == "image_begin":
            if tail.current_image is not None:
                raise RejectedEvent(f"image {tail.current_image} still open")
            if e.image_id is None:
                raise RejectedEvent("image_begin requires image_id")
            if self.config is not None and e.image_id not in self.config.image_ids:
                raise RejectedEvent(f"image {e.image_id!r} not in experiment")
            return
        if e.kind == "session_end":
            if tail.current_image is not None:
                raise RejectedEvent("cannot end session with an image open")
            return

        # Remaining kinds all happen inside an open image view.
        if tail.current_image is None:
            raise RejectedEvent(f"{e.kind} with no image open")
        if e.image_id != tail.current_image:
            raise RejectedEvent(
                f"{e.kind} for {e.image_id!r} while {tail.current_image!r} is open"
            )
        if e.kind == "image_end":
            return
        if e.t_ms < tail.last_t_ms:
            raise RejectedEvent(
                f"t_ms went backwards: {e.t_ms} after {tail.last_t_ms}"
            )
        if e.kind in _POINT_KINDS:
            if e.x is None or e.y is None:
                raise RejectedEvent(f"{e.kind} requires x and y")
            size = self.image_sizes.get(e.image_id)
            if size is not None:
                width, height = size
                if not (0 <= e.x < width and 0 <= e.y < height):
                    raise RejectedEvent(
                        f"({e.x}, {e.y}) outside [0, {width}) x [0, {height})"
                    )
        elif e.kind in _TEXT_KINDS:
            if e.text is None:
                raise RejectedEvent(f"{e.kind} requires text")
            if (
                e.kind == "description_final"
                and self.config is not None
                and self.config.task_type == "describe"
                and len(e.text) < self.config.min_description_chars
            ):
                raise RejectedEvent(
                    f"description has {len(e.text)} chars, "
                    f"minimum is {self.config.min_description_chars}"
                )

    @staticmethod
    def _advance_tail(e: EventRecord, tail: _SessionTail | None) -> _SessionTail:
        """Session state after `e`, without touching the log. Used to
        validate a batch as a whole before any of it is written."""
        if e.kind == "session_begin":
            return _SessionTail(participant_id=e.participant_id, last_seq=e.seq)
        tail = copy.copy(tail)
        tail.last_seq = e.seq
        if e.kind == "image_begin":
            tail.current_image = e.image_id
            tail.last_t_ms = 0.0
            tail.description_len = 0
        elif e.kind == "image_end":
            tail.current_image = None
        elif e.kind == "session_end":
            tail.open = False
        else:
            tail.last_t_ms = e.t_ms
            if e.kind in _TEXT_KINDS:
                tail.description_len = len(e.text)
        return tail

    def _apply(self, e: EventRecord) -> None:
        if e.kind == "session_begin":
            self._sessions[e.session_id] = _SessionTail(
                participant_id=e.participant_id, last_seq=e.seq
            )
        else:
            tail = self._sessions[e.session_id]
            tail.last_seq = e.seq
            if e.kind == "image_begin":
                tail.current_image = e.image_id
                tail.last_t_ms = 0.0
                tail.description_len = 0
                # A participant who sees an image again (another session)
                # is no longer naive; only one exposure may count. The
                # winner is the smallest session id, which is creation
                # order for generated ids and, unlike arrival order, does
                # not depend on how concurrent sessions interleave.
                key = (e.participant_id, e.image_id)
                current = self._first_session.get(key)
                if current is None or e.session_id < current:
                    self._first_session[key] = e.session_id
            elif e.kind == "image_end":
                tail.current_image = None
            elif e.kind == "session_end":
                tail.open = False
            else:
                tail.last_t_ms = e.t_ms
                if e.kind in _TEXT_KINDS:
                    tail.description_len = len(e.text)
        self._events.append(e)
        self._by_seq[(e.session_id, e.seq)] = e

    # -- public API ----------------------------------------------------

    def append(self, e: EventRecord) -> int:
        """Validate, durably write, and apply one event; returns its seq."""
        try:
            self._validate(e, self._sessions.get(e.session_id))
        except ClickmapError as exc:
            self._quarantine(e, str(exc))
            raise
        self._fh.write(e.to_json() + "\n")
        self._fh.flush()
        os.fsync(self._fh.fileno())
        self._apply(e)
        return e.seq

    def append_batch(self, events: Iterable[EventRecord]) -> int:
        """Append events one by one; returns the last committed seq.

        Validation failure mid-batch leaves earlier events committed (the
        caller learns the committed seq from session state).
        """
        last = 0
        for e in events:
            last = self.append(e)
        return last

    def append_atomic(self, events: list[EventRecord]) -> int:
        """Append a batch all-or-nothing; returns the last committed seq.

        The whole batch is validated against a simulated session state
        first. If any event fails, nothing is written, the offending
        event lands in quarantine, and the error propagates. On success
        all lines go out in one write with a single fsync.
        """
        if not events:
            raise RejectedEvent("empty batch")
        sim: dict[str, _SessionTail | None] = {}
        for e in events:
            if e.session_id in sim:
                tail = sim[e.session_id]
            else:
                tail = self._sessions.get(e.session_id)
            try:
                self._validate(e, tail)
            except ClickmapError as exc:
                self._quarantine(e, str(exc))
                raise
            sim[e.session_id] = self._advance_tail(e, tail)
        self._fh.write("".join(e.to_json() + "\n" for e in events))
        self._fh.flush()
        os.fsync(self._fh.fileno())
        for e in events:
            self._apply(e)
        return events[-1].seq

    def get_event(self, session_id: str, seq: int) -> EventRecord | None:
        """The committed event at (session, seq), if any."""
        return self._by_seq.get((session_id, seq))

    def _quarantine(self, e: EventRecord, reason: str) -> None:
        entry = {"reason": reason, "event": json.loads(e.to_json())}
        with open(self.quarantine_path, "a", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(entry, ensure_ascii=False, separators=(",", ":")) + "\n")

    @property
    def events(self) -> tuple[EventRecord, ...]:
        return tuple(self._events)

    def last_seq(self, session_id: str) -> int:
        tail = self._sessions.get(session_id)
        return 0 if tail is None else tail.last_seq

    def session_open(self, session_id: str) -> bool:
        tail = self._sessions.get(session_id)
        return tail is not None and tail.open

    def current_image(self, session_id: str) -> str | None:
        tail = self._sessions.get(session_id)
        return None if tail is None else tail.current_image

    def description_length(self, session_id: str) -> int:
        tail = self._sessions.get(session_id)
        return 0 if tail is None else tail.description_len

    def last_t_ms(self, session_id: str) -> float:
        tail = self._sessions.get(session_id)
        return 0.0 if tail is None else tail.last_t_ms

    def events_for_image(
        self, image_id: str, kinds: tuple[str, ...] = _POINT_KINDS
    ) -> list[EventRecord]:
        """Events of the given kinds on one image, in commit order."""
        return [e for e in self._events if e.image_id == image_id and e.kind in kinds]

    def to_pointset(
        self, image_id: str, policy: FilterPolicy, kind: str = "click"
    ) -> FilterResult:
        """Filtered points for one image across all sessions.

        A participant who viewed the image in several sessions only
        counts through the first of those sessions (repeat exposures are
        not independent). Participants below the click minimum or outside
        the outlier band are removed whole; both rules are judged on the
        unfiltered per-participant counts, so tightening one rule never
        un-drops anyone from the other.
        """
        size = self.image_sizes.get(image_id)
        if size is None:
            raise ValidationError([f"no dimensions known for image {image_id!r}"])
        width, height = size
        events = [
            e
            for e in self.events_for_image(image_id, kinds=(kind,))
            if self._first_session.get((e.participant_id, e.image_id)) == e.session_id
        ]
        counts: dict[str, int] = {}
        for e in events:
            counts[e.participant_id] = counts.get(e.participant_id, 0) + 1

        dropped = set()
        for participant, n in counts.items():
            if n < policy.min_clicks_per_image:
                dropped.add(participant)
        if policy.participant_outlier_sd is not None and len(counts) > 1:
            values = list(counts.values())
            mean = sum(values) / len(values)
            sd = math.sqrt(sum((v - mean) ** 2 for v in values) / len(values))
            if sd > 0:
                for participant, n in counts.items():
                    if abs(n - mean) > policy.participant_outlier_sd * sd:
                        dropped.add(participant)

        kept_events = [e for e in events if e.participant_id not in dropped]
        if not kept_events:
            raise EmptyPointSetError(
                f"filtering removed every point for image {image_id!r}"
            )
        # Canonical order, so that the output is a pure function of the
        # committed event set regardless of how sessions interleaved.
        kept_events.sort(key=lambda e: (e.participant_id, e.session_id, e.seq))
        points = tuple(
            Point(e.x, e.y, e.t_ms, e.participant_id) for e in kept_events
        )
        return FilterResult(
            points=PointSet(points=points, width=width, height=height, kind=kind),
            n_total=len(events),
            n_kept=len(kept_events),
            dropped_participants=tuple(sorted(dropped)),
        )


# -- session records ---------------------------------------------------

SESSION_STATUSES = ("open", "complete", "abandoned")


@dataclass(frozen=True)
class Session:
    """One participant's pass through a randomized subset of images."""

    session_id: str
    participant_id: str
    experiment_id: str
    images: tuple[str, ...]
    token: str
    created_at: float
    status: str = "open"


class SessionStore:
    """Append-only registry of sessions for one experiment.

    Stored as one JSON line per change: a full record when a session is
    created, then status lines that supersede it. Replay keeps the last
    status written.
    """

    def __init__(self, path, config: ExperimentConfig):
        self.path = Path(path)
        self.config = config
        self._sessions: dict[str, Session] = {}
        self._by_token: dict[str, str] = {}
        if self.path.exists():
            with open(self.path, "r", encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        self._apply(json.loads(line))

    def _apply(self, data: dict) -> None:
        if "participant_id" in data:
            session = Session(
                session_id=data["session_id"],
                participant_id=data["participant_id"],
                experiment_id=data["experiment_id"],
                images=tuple(data["images"]),
                token=data["token"],
                created_at=data["created_at"],
                status=data["status"],
            )
            self._validate_images(session)
            self._sessions[session.session_id] = session
            self._by_token[session.token] = session.session_id
        else:
            session = self._sessions[data["session_id"]]
            self._sessions[session.session_id] = replace(
                session, status=data["status"]
            )

    def _validate_images(self, session: Session) -> None:
        problems = []
        if len(session.images) != self.config.images_per_session:
            problems.append(
                f"session {session.session_id}: expected "
                f"{self.config.images_per_session} images, got {len(session.images)}"
            )
        if len(set(session.images)) != len(session.images):
            problems.append(f"session {session.session_id}: repeated images")
        unknown = set(session.images) - set(self.config.image_ids)
        if unknown:
            problems.append(
                f"session {session.session_id}: unknown images {sorted(unknown)}"
            )
        if problems:
            raise ValidationError(problems)

    def _write(self, data: dict) -> None:
        with open(self.path, "a", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(data, ensure_ascii=False, separators=(",", ":")) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def create(self, participant_id: str, rng, created_at: float) -> Session:
        """Create a session with a randomized image subset and order."""
        order = rng.permutation(len(self.config.image_ids))
        images = tuple(
            self.config.image_ids[i]
            for i in order[: self.config.images_per_session]
        )
        session = Session(
            session_id=f"s{len(self._sessions) + 1:06d}",
            participant_id=participant_id,
            experiment_id=self.config.experiment_id,
            images=images,
            token=rng.bytes(16).hex(),
            created_at=created_at,
        )
        self._validate_images(session)
        self._write(
            {
                "session_id": session.session_id,
                "participant_id": session.participant_id,
                "experiment_id": session.experiment_id,
                "images": list(session.images),
                "token": session.token,
                "created_at": session.created_at,
                "status": session.status,
            }
        )
        self._sessions[session.session_id] = session
        self._by_token[session.token] = session.session_id
        return session

    def set_status(self, session_id: str, status: str) -> Session:
        if status not in SESSION_STATUSES:
            raise ValidationError([f"unknown session status {status!r}"])
        if session_id not in self._sessions:
            raise ValidationError([f"unknown session {session_id!r}"])
        self._write({"session_id": session_id, "status": status})
        updated = replace(self._sessions[session_id], status=status)
        self._sessions[session_id] = updated
        return updated

    def get(self, session_id: str) -> Session | None:
        return self._sessions.get(session_id)

    def by_token(self, token: str) -> Session | None:
        session_id = self._by_token.get(token)
        return None if session_id is None else self._sessions.get(session_id)

    def all(self) -> tuple[Session, ...]:
        return tuple(self._sessions.values())


# -- fixation datasets -------------------------------------------------

FIXATION_COLUMNS = ("image_id", "observer_id", "x", "y", "t_ms")


@dataclass(frozen=True)
class FixationImport:
    """Imported fixations grouped per image, plus what was discarded."""

    per_image: dict[str, PointSet]
    dropped_out_of_bounds: int


def import_fixations(
    path, image_sizes: Mapping[str, tuple[int, int]], dataset_tag: str = ""
) -> FixationImport:
    """Read a fixation CSV (header image_id,observer_id,x,y,t_ms).

    Rows with coordinates outside their image are dropped and counted;
    structurally bad rows (wrong field count, unparseable numbers,
    unknown image ids) fail the import with their line numbers.
    """
    path = Path(path)
    tag = dataset_tag or path.name
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValidationError([f"{tag}: file is empty"])
    if lines[0].strip() != ",".join(FIXATION_COLUMNS):
        raise ValidationError(
            [f"{tag}: expected header {','.join(FIXATION_COLUMNS)!r}"]
        )
    grouped: dict[str, list[Point]] = {}
    problems = []
    dropped = 0
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 5:
            problems.append(f"{tag}:{lineno}: expected 5 fields, got {len(parts)}")
            continue
        image_id, observer_id = parts[0], parts[1]
        try:
            x, y, t_ms = float(parts[2]), float(parts[3]), float(parts[4])
        except ValueError:
            problems.append(f"{tag}:{lineno}: unparseable number")
            continue
        size = image_sizes.get(image_id)
        if size is None:
            problems.append(f"{tag}:{lineno}: unknown image {image_id!r}")
            continue
        width, height = size
        if not (0 <= x < width and 0 <= y < height):
            dropped += 1
            continue
        grouped.setdefault(image_id, []).append(Point(x, y, t_ms, observer_id))
    if problems:
        raise ValidationError(problems)
    if not grouped:
        raise ValidationError([f"{tag}: no usable fixation rows"])
    per_image = {}
    for image_id, points in grouped.items():
        width, height = image_sizes[image_id]
        try:
            per_image[image_id] = PointSet(
                points=tuple(points), width=width, height=height, kind="fixation"
            )
        except ValidationError as exc:
            raise ValidationError(
                [f"{tag}: image {image_id!r}: {p}" for p in exc.problems]
            ) from exc
    return FixationImport(per_image=per_image, dropped_out_of_bounds=dropped)


def export_fixations(per_image: Mapping[str, PointSet], path) -> None:
    """Write fixations in the import CSV schema, images in sorted order."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(FIXATION_COLUMNS) + "\n")
        for image_id in sorted(per_image):
            for p in per_image[image_id].points:
                fh.write(
                    f"{image_id},{p.participant_id},{p.x:.17g},{p.y:.17g},"
                    f"{p.t_ms:.17g}\n"
                )
