"""HTTP service for running experiments and monitoring them live.

One server process hosts any number of experiments, each a directory
holding its config, stimulus images, event log, and session registry.
Participants talk to the /api/sessions routes with a per-session token;
experimenters read /api/monitor with a per-experiment key. All timing
decisions (free-viewing advance) use the server clock, never client
timestamps, and every mutation is durable before it is acknowledged.
"""

import hashlib
import json
import secrets
import shutil
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
from fastapi import Body, FastAPI, Header, Request
from fastapi.responses import JSONResponse, Response
from PIL import Image as PILImage

from .config import ExperimentConfig, load_config, save_config
from .errors import ClickmapError, SequenceConflictError, ValidationError
from .imaging import blurred_variant
from .store import EVENT_KINDS, EventLog, EventRecord, RejectedEvent, Session, SessionStore

# Kinds a client may post. Lifecycle and gate-keeping events are written
# by the server itself so clients cannot fake timing or completion.
CLIENT_KINDS = ("image_begin", "click", "move_sample", "description_update")

_EVENT_PAYLOAD_KEYS = frozenset({"seq", "kind", "image_id", "x", "y", "t_ms", "text"})

# Grace subtracted from the nominal time limit before an advance is
# accepted, covering clock skew and request latency.
DEFAULT_SKEW_ALLOWANCE_S = 0.25


class ApiError(Exception):
    """Maps onto a JSON error body with a machine-readable reason code."""

    def __init__(self, status: int, reason: str, message: str, **extra):
        super().__init__(message)
        self.status = status
        self.reason = reason
        self.message = message
        self.extra = extra

    def body(self) -> dict:
        return {"reason": self.reason, "message": self.message, **self.extra}


@dataclass
class _Experiment:
    config: ExperimentConfig
    directory: Path
    log: EventLog
    sessions: SessionStore
    sizes: dict[str, tuple[int, int]]
    originals: dict[str, Path]
    blurred: dict[str, Path]
    experimenter_key: str

    @property
    def closed(self) -> bool:
        return (self.directory / "closed").exists()


def provision_experiment(
    root,
    config: ExperimentConfig,
    image_paths: Mapping[str, Path] | Mapping[str, str],
    experimenter_key: str | None = None,
) -> Path:
    """Lay out an experiment directory the server can load.

    ``image_paths`` maps each configured image id to a source PNG, which
    is copied under the experiment. Returns the experiment directory.
    """
    missing = [i for i in config.image_ids if i not in image_paths]
    if missing:
        raise ValidationError([f"no image file given for {i!r}" for i in missing])
    directory = Path(root) / config.experiment_id
    (directory / "images").mkdir(parents=True, exist_ok=True)
    save_config(config, directory / "config.json")
    for image_id in config.image_ids:
        shutil.copyfile(image_paths[image_id], directory / "images" / f"{image_id}.png")
    key_path = directory / "experimenter_key"
    if not key_path.exists():
        key_path.write_text(
            (experimenter_key or secrets.token_hex(16)) + "\n", encoding="utf-8"
        )
    elif experimenter_key is not None:
        key_path.write_text(experimenter_key + "\n", encoding="utf-8")
    return directory


def close_experiment(root, experiment_id: str) -> None:
    """Stop new sessions for an experiment; existing data stays readable."""
    marker = Path(root) / experiment_id / "closed"
    marker.parent.mkdir(parents=True, exist_ok=True)
    marker.touch()


def _load_experiment(directory: Path) -> _Experiment:
    config = load_config(directory / "config.json")
    if config.experiment_id != directory.name:
        raise ValidationError(
            [
                f"directory {directory.name!r} holds config for "
                f"{config.experiment_id!r}"
            ]
        )
    sizes: dict[str, tuple[int, int]] = {}
    originals: dict[str, Path] = {}
    blurred: dict[str, Path] = {}
    problems = []
    for image_id in config.image_ids:
        path = directory / "images" / f"{image_id}.png"
        if not path.exists():
            problems.append(f"missing image file {path.name}")
            continue
        with PILImage.open(path) as im:
            sizes[image_id] = (im.width, im.height)
        originals[image_id] = path
        blurred[image_id] = blurred_variant(
            path, config.blur_sigma_px, directory / "cache"
        )
    if problems:
        raise ValidationError(problems)
    key_path = directory / "experimenter_key"
    if not key_path.exists():
        key_path.write_text(secrets.token_hex(16) + "\n", encoding="utf-8")
    return _Experiment(
        config=config,
        directory=directory,
        log=EventLog(directory / "log", config=config, image_sizes=sizes),
        sessions=SessionStore(directory / "sessions.jsonl", config=config),
        sizes=sizes,
        originals=originals,
        blurred=blurred,
        experimenter_key=key_path.read_text(encoding="utf-8").strip(),
    )


def _public_config(exp: _Experiment) -> dict:
    c = exp.config
    return {
        "experiment_id": c.experiment_id,
        "task_type": c.task_type,
        "blur_sigma_px": c.blur_sigma_px,
        "bubble_radius_px": c.bubble_radius_px,
        "time_limit_s": c.time_limit_s,
        "mouse_modality": c.mouse_modality,
        "images_per_session": c.images_per_session,
        "min_description_chars": c.min_description_chars,
        "move_sample_hz": c.move_sample_hz,
        "qualification_note": c.qualification_note,
        "open": not exp.closed,
    }


def completion_code(session: Session) -> str:
    """Short code a participant hands back as proof of completion."""
    digest = hashlib.sha256(
        f"{session.session_id}:{session.token}".encode()
    ).hexdigest()
    return digest[:10]


def create_app(
    root,
    seed: int | None = None,
    clock: Callable[[], float] | None = None,
    skew_allowance_s: float = DEFAULT_SKEW_ALLOWANCE_S,
) -> FastAPI:
    """Build the application over every experiment directory under ``root``.

    ``seed`` fixes the image-permutation stream for reproducible session
    sequences; ``clock`` is the timing authority (epoch seconds) and is
    injectable for tests.
    """
    root = Path(root)
    clock = clock or time.time
    rng = np.random.default_rng(seed)
    experiments: dict[str, _Experiment] = {}
    for child in sorted(root.iterdir() if root.exists() else []):
        if (child / "config.json").exists():
            exp = _load_experiment(child)
            experiments[exp.config.experiment_id] = exp
    # Server receipt time of each image_begin, the reference point for
    # free-viewing advances. Rebuilt lazily after a restart: an image
    # already open then is treated as opened at first sight.
    view_start: dict[tuple[str, str], float] = {}

    app = FastAPI(title="clickmap", docs_url=None, redoc_url=None)

    @app.exception_handler(ApiError)
    def _api_error(request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content=exc.body())

    def _experiment(experiment_id: str) -> _Experiment:
        exp = experiments.get(experiment_id)
        if exp is None:
            raise ApiError(
                404, "unknown_experiment", f"no experiment {experiment_id!r}"
            )
        return exp

    def _session_by_token(token: str | None) -> tuple[_Experiment, Session]:
        if not token:
            raise ApiError(403, "missing_token", "X-Session-Token header required")
        for exp in experiments.values():
            session = exp.sessions.by_token(token)
            if session is not None:
                return exp, session
        raise ApiError(403, "invalid_token", "session token not recognized")

    def _auth_session(session_id: str, token: str | None) -> tuple[_Experiment, Session]:
        exp, session = _session_by_token(token)
        if session.session_id != session_id:
            raise ApiError(403, "invalid_token", "token does not match session")
        return exp, session

    def _require_str(payload: dict, key: str) -> str:
        value = payload.get(key)
        if not isinstance(value, str) or not value:
            raise ApiError(422, "bad_request", f"{key} must be a non-empty string")
        return value

    @app.get("/api/experiments/{experiment_id}")
    def get_experiment(experiment_id: str):
        return _public_config(_experiment(experiment_id))

    @app.post("/api/sessions", status_code=201)
    def create_session(payload: dict = Body(...)):
        exp = _experiment(_require_str(payload, "experiment_id"))
        participant_id = _require_str(payload, "participant_id")
        if exp.closed:
            raise ApiError(
                409,
                "experiment_closed",
                f"experiment {exp.config.experiment_id!r} is closed to new sessions",
            )
        session = exp.sessions.create(participant_id, rng=rng, created_at=clock())
        exp.log.append(
            EventRecord(
                session_id=session.session_id,
                participant_id=session.participant_id,
                experiment_id=session.experiment_id,
                seq=1,
                kind="session_begin",
            )
        )
        return {
            "session_id": session.session_id,
            "token": session.token,
            "participant_id": session.participant_id,
            "experiment_id": session.experiment_id,
            "images": list(session.images),
            "committed_through": 1,
        }

    @app.get("/api/sessions/{session_id}")
    def get_session(
        session_id: str,
        x_session_token: str | None = Header(default=None, alias="X-Session-Token"),
    ):
        exp, session = _auth_session(session_id, x_session_token)
        return {
            "session_id": session.session_id,
            "participant_id": session.participant_id,
            "experiment_id": session.experiment_id,
            "images": list(session.images),
            "status": session.status,
            "committed_through": exp.log.last_seq(session_id),
            "current_image": exp.log.current_image(session_id),
        }

    @app.get("/api/images/{image_id}")
    def get_image(
        image_id: str,
        variant: str = "blurred",
        x_session_token: str | None = Header(default=None, alias="X-Session-Token"),
        x_experimenter_key: str | None = Header(
            default=None, alias="X-Experimenter-Key"
        ),
    ):
        if variant not in ("blurred", "original"):
            raise ApiError(422, "bad_variant", f"unknown variant {variant!r}")
        exp = None
        if x_session_token:
            found, session = _session_by_token(x_session_token)
            if image_id not in session.images:
                raise ApiError(
                    403, "image_not_in_session", f"{image_id!r} is not in this session"
                )
            exp = found
        elif x_experimenter_key:
            for candidate in experiments.values():
                if (
                    candidate.experimenter_key == x_experimenter_key
                    and image_id in candidate.config.image_ids
                ):
                    exp = candidate
                    break
            if exp is None:
                raise ApiError(403, "unauthorized", "experimenter key not recognized")
        else:
            raise ApiError(403, "missing_token", "authentication header required")
        path = (exp.blurred if variant == "blurred" else exp.originals).get(image_id)
        if path is None:
            raise ApiError(404, "unknown_image", f"no image {image_id!r}")
        return Response(content=path.read_bytes(), media_type="image/png")

    def _parse_events(
        exp: _Experiment, session: Session, raw: list
    ) -> list[EventRecord]:
        records = []
        for i, item in enumerate(raw):
            if not isinstance(item, dict):
                raise ApiError(422, "bad_request", f"events[{i}] is not an object")
            unknown = set(item) - _EVENT_PAYLOAD_KEYS
            if unknown:
                raise ApiError(
                    422,
                    "bad_request",
                    f"events[{i}] has unknown fields {sorted(unknown)}",
                )
            kind = item.get("kind")
            if kind not in EVENT_KINDS:
                raise ApiError(422, "bad_request", f"events[{i}] kind {kind!r} unknown")
            if kind not in CLIENT_KINDS:
                raise ApiError(
                    422,
                    "rejected_event",
                    f"events[{i}] kind {kind!r} is server-managed",
                )
            seq = item.get("seq")
            if not isinstance(seq, int) or isinstance(seq, bool):
                raise ApiError(422, "bad_request", f"events[{i}] seq must be an integer")
            try:
                records.append(
                    EventRecord(
                        session_id=session.session_id,
                        participant_id=session.participant_id,
                        experiment_id=session.experiment_id,
                        seq=seq,
                        kind=kind,
                        image_id=item.get("image_id"),
                        x=None if item.get("x") is None else float(item["x"]),
                        y=None if item.get("y") is None else float(item["y"]),
                        t_ms=float(item.get("t_ms", 0.0)),
                        text=item.get("text"),
                    )
                )
            except (TypeError, ValueError) as exc:
                raise ApiError(422, "bad_request", f"events[{i}]: {exc}") from exc
        return records

    @app.post("/api/sessions/{session_id}/events")
    def post_events(
        session_id: str,
        payload: dict = Body(...),
        x_session_token: str | None = Header(default=None, alias="X-Session-Token"),
    ):
        exp, session = _auth_session(session_id, x_session_token)
        raw = payload.get("events")
        if not isinstance(raw, list) or not raw:
            raise ApiError(422, "bad_request", "events must be a non-empty list")
        records = _parse_events(exp, session, raw)

        tail = exp.log.last_seq(session_id)
        if records[0].seq <= tail:
            # Possibly a retry of a batch we already committed. It is a
            # no-op only if every event matches the committed one
            # byte-for-byte; anything else is a real conflict.
            if all(exp.log.get_event(session_id, e.seq) == e for e in records):
                return {"committed_through": tail, "duplicate": True}
            raise ApiError(
                409,
                "seq_conflict",
                f"expected seq {tail + 1}",
                expected_next_seq=tail + 1,
            )
        try:
            committed = exp.log.append_atomic(records)
        except SequenceConflictError as exc:
            raise ApiError(
                409,
                "seq_conflict",
                str(exc),
                expected_next_seq=exc.expected_next_seq,
            ) from exc
        except RejectedEvent as exc:
            raise ApiError(422, "rejected_event", str(exc)) from exc
        except ClickmapError as exc:
            raise ApiError(422, "rejected_event", str(exc)) from exc
        now = clock()
        for e in records:
            if e.kind == "image_begin":
                view_start[(session_id, e.image_id)] = now
        return {"committed_through": committed, "duplicate": False}

    @app.post("/api/sessions/{session_id}/advance")
    def advance(
        session_id: str,
        payload: dict = Body(...),
        x_session_token: str | None = Header(default=None, alias="X-Session-Token"),
    ):
        exp, session = _auth_session(session_id, x_session_token)
        image_id = _require_str(payload, "image_id")
        current = exp.log.current_image(session_id)
        if current is None:
            raise ApiError(409, "no_image_open", "no image is open in this session")
        if image_id != current:
            raise ApiError(
                409,
                "wrong_image",
                f"session is viewing {current!r}, not {image_id!r}",
            )

        config = exp.config
        started = view_start.setdefault((session_id, current), clock())
        elapsed_s = max(clock() - started, 0.0)
        description = payload.get("description")

        if config.task_type == "describe":
            if not isinstance(description, str):
                raise ApiError(422, "bad_request", "description must be a string")
            short = config.min_description_chars - len(description)
            if short > 0:
                raise ApiError(
                    409,
                    "description_too_short",
                    f"{short} more character{'s' if short != 1 else ''} required",
                    chars_remaining=short,
                )
        elif config.time_limit_s is not None:
            remaining = config.time_limit_s - elapsed_s
            if remaining > skew_allowance_s:
                remaining = round(remaining, 3)
                raise ApiError(
                    409,
                    "advance_too_early",
                    f"{remaining:g} s remaining",
                    seconds_remaining=remaining,
                )

        # The server writes the closing events itself, stamped with its
        # own elapsed time, so completion cannot be forged or replayed
        # with client timestamps.
        t_stamp = max(exp.log.last_t_ms(session_id), round(elapsed_s * 1000.0, 3))
        seq = exp.log.last_seq(session_id)
        closing = []
        if config.task_type == "describe":
            seq += 1
            closing.append(
                EventRecord(
                    session_id=session_id,
                    participant_id=session.participant_id,
                    experiment_id=session.experiment_id,
                    seq=seq,
                    kind="description_final",
                    image_id=current,
                    t_ms=t_stamp,
                    text=description,
                )
            )
        seq += 1
        closing.append(
            EventRecord(
                session_id=session_id,
                participant_id=session.participant_id,
                experiment_id=session.experiment_id,
                seq=seq,
                kind="image_end",
                image_id=current,
                t_ms=t_stamp,
            )
        )
        index = session.images.index(current)
        finished = index + 1 >= len(session.images)
        if finished:
            seq += 1
            closing.append(
                EventRecord(
                    session_id=session_id,
                    participant_id=session.participant_id,
                    experiment_id=session.experiment_id,
                    seq=seq,
                    kind="session_end",
                    t_ms=t_stamp,
                )
            )
        try:
            committed = exp.log.append_atomic(closing)
        except ClickmapError as exc:
            raise ApiError(422, "rejected_event", str(exc)) from exc
        view_start.pop((session_id, current), None)
        if finished:
            exp.sessions.set_status(session_id, "complete")
            return {
                "committed_through": committed,
                "session_complete": True,
                "completion_code": completion_code(session),
            }
        return {
            "committed_through": committed,
            "session_complete": False,
            "next_image": session.images[index + 1],
        }

    @app.get("/api/monitor/{experiment_id}/{image_id}")
    def monitor(
        experiment_id: str,
        image_id: str,
        x_experimenter_key: str | None = Header(
            default=None, alias="X-Experimenter-Key"
        ),
    ):
        exp = _experiment(experiment_id)
        if not x_experimenter_key or x_experimenter_key != exp.experimenter_key:
            raise ApiError(403, "unauthorized", "experimenter key required")
        if image_id not in exp.config.image_ids:
            raise ApiError(404, "unknown_image", f"no image {image_id!r}")
        streams: dict[str, list[dict]] = {}
        for e in exp.log.events_for_image(image_id, kinds=EVENT_KINDS):
            streams.setdefault(e.session_id, []).append(json.loads(e.to_json()))
        width, height = exp.sizes[image_id]
        return {
            "experiment": _public_config(exp),
            "image": {
                "image_id": image_id,
                "width": width,
                "height": height,
                "blurred_url": f"/api/images/{image_id}?variant=blurred",
                "original_url": f"/api/images/{image_id}?variant=original",
            },
            "streams": [
                {
                    "session_id": session_id,
                    "participant_id": events[0]["participant_id"],
                    "events": events,
                }
                for session_id, events in sorted(streams.items())
            ],
        }

    return app


def run(root, host: str = "127.0.0.1", port: int = 8000, seed: int | None = None):
    """Serve ``root`` with uvicorn; blocks until interrupted."""
    import uvicorn

    uvicorn.run(create_app(root, seed=seed), host=host, port=port)
