"""HTTP face of the session layer.

One process hosts many sessions; each session has a single logical writer (a
run thread or an intervention handler) and any number of readers. Endpoints
return plain JSON with a top-level schema_version; errors carry a stable
``code`` plus a human-readable message and optional details for editors
(field messages, byte offsets).

The app factory takes injectable collaborators so the whole service is
testable in-process: a storage directory for crash-safe persistence, an LLM
chat client, a remote-property client, and a clock.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Callable, Iterator

from fastapi import Body, FastAPI, Query, Request
from fastapi.responses import JSONResponse, PlainTextResponse, StreamingResponse

from . import llm as llm_bridge
from .engine import GAConfig
from .molgraph import SmilesError, parse_smiles
from .scoring import RemotePropertyClient, ScoringSpec
from .session import (
    SCHEMA_VERSION,
    BUILTIN_SAMPLES,
    InvalidEditError,
    Session,
    SessionError,
    UnknownKeyError,
    ValidationFailedError,
    load_sample,
)
from .substructure import PatternSyntaxError, parse_pattern

_STATUS_BY_CODE = {
    "dataset_too_small": 400,
    "validation_failed": 400,
    "invalid_edit": 400,
    "dataset_already_loaded": 409,
    "already_running": 409,
    "not_runnable": 409,
    "unknown_key": 404,
    "unknown_generation": 404,
    "session_error": 400,
    "endpoint_unavailable": 502,
    "timeout": 504,
    "no_valid_candidates": 422,
    "llm_error": 400,
}

EVENT_POLL_SECONDS = 0.2


def _error_response(code: str, message: str, details: dict | None = None):
    return JSONResponse(
        status_code=_STATUS_BY_CODE.get(code, 400),
        content={
            "schema_version": SCHEMA_VERSION,
            "error": {"code": code, "message": message,
                      "details": details or {}},
        },
    )


def create_app(
    storage_dir: str | Path | None = None,
    llm_client: llm_bridge.ChatClient | None = None,
    remote_client: RemotePropertyClient | None = None,
    clock: Callable[[], str] | None = None,
) -> FastAPI:
    app = FastAPI(title="molsteer", docs_url=None, redoc_url=None)
    sessions: dict[str, Session] = {}
    registry_lock = threading.Lock()
    storage = Path(storage_dir) if storage_dir else None

    def _session_kwargs():
        kw = {"remote_client": remote_client}
        if clock is not None:
            kw["clock"] = clock
        return kw

    if storage is not None:
        storage.mkdir(parents=True, exist_ok=True)
        for path in sorted(storage.glob("*.json")):
            session = Session.load(path, remote_client=remote_client)
            if clock is not None:
                session.clock = clock
            session.save_path = path
            sessions[session.id] = session

    def _register(session: Session) -> None:
        if storage is not None:
            session.save_path = storage / f"{session.id}.json"
            session.save(session.save_path)
        with registry_lock:
            sessions[session.id] = session

    def _get(session_id: str) -> Session:
        session = sessions.get(session_id)
        if session is None:
            raise UnknownKeyError(f"no session {session_id!r}")
        return session

    def _dataset_lines(dataset: dict) -> list[str]:
        if "sample" in dataset:
            return load_sample(dataset["sample"])
        lines = dataset.get("lines")
        if not isinstance(lines, list):
            raise SessionError("dataset needs 'lines' or 'sample'")
        return lines

    @app.exception_handler(SessionError)
    async def _session_error(request: Request, exc: SessionError):
        details = {}
        if isinstance(exc, ValidationFailedError):
            details["fields"] = exc.errors
        if isinstance(exc, InvalidEditError):
            details["offset"] = exc.offset
        return _error_response(exc.code, str(exc), details)

    @app.exception_handler(llm_bridge.LlmBridgeError)
    async def _llm_error(request: Request, exc: llm_bridge.LlmBridgeError):
        details = {}
        if isinstance(exc, llm_bridge.NoValidCandidatesError):
            details["rejected"] = [
                {"text": text, "reason": reason}
                for text, reason in exc.reasons
            ]
        return _error_response(exc.code, str(exc), details)

    @app.get("/health")
    def health():
        return {"schema_version": SCHEMA_VERSION, "status": "ok",
                "sessions": len(sessions)}

    @app.get("/sessions")
    def list_sessions():
        return {
            "schema_version": SCHEMA_VERSION,
            "sessions": [s.status() for s in sessions.values()],
        }

    @app.post("/sessions", status_code=201)
    def create_session(body: dict = Body(default={})):
        try:
            config = GAConfig.from_dict(body["config"]) if body.get("config") \
                else None
            spec = ScoringSpec.from_dict(body["spec"]) if body.get("spec") \
                else None
            session = Session(
                config=config,
                spec=spec,
                fingerprint_radius=body.get("fingerprint_radius", 2),
                fingerprint_n_bits=body.get("fingerprint_n_bits", 2048),
                **_session_kwargs(),
            )
        except (ValueError, TypeError, KeyError) as exc:
            raise ValidationFailedError({"session": str(exc)}) from None
        warnings = None
        if body.get("dataset"):
            result = session.load_dataset(_dataset_lines(body["dataset"]))
            warnings = result["warnings"]
        _register(session)
        payload = session.status()
        if warnings is not None:
            payload["warnings"] = warnings
        return payload

    @app.post("/sessions/import", status_code=201)
    def import_session(body: dict = Body(...)):
        try:
            session = Session.from_dict(body, remote_client=remote_client)
        except (KeyError, ValueError, TypeError) as exc:
            raise ValidationFailedError({"session": str(exc)}) from None
        if clock is not None:
            session.clock = clock
        if session.id in sessions:
            raise SessionError(f"session {session.id!r} already registered")
        _register(session)
        return session.status()

    @app.get("/sessions/{session_id}")
    def session_status(session_id: str):
        return _get(session_id).status()

    @app.post("/sessions/{session_id}/dataset")
    def load_dataset(session_id: str, body: dict = Body(...)):
        session = _get(session_id)
        result = session.load_dataset(_dataset_lines(body))
        return {"schema_version": SCHEMA_VERSION, **result}

    @app.get("/sessions/{session_id}/config")
    def get_config(session_id: str):
        session = _get(session_id)
        return {"schema_version": SCHEMA_VERSION,
                "config": session.config.to_dict()}

    @app.put("/sessions/{session_id}/config")
    def put_config(session_id: str, body: dict = Body(...)):
        result = _get(session_id).update_config(body)
        return {"schema_version": SCHEMA_VERSION, **result}

    @app.get("/sessions/{session_id}/spec")
    def get_spec(session_id: str):
        session = _get(session_id)
        with session.lock:
            return {
                "schema_version": SCHEMA_VERSION,
                "spec": session.spec.to_dict(),
                "history": [s.to_dict() for s in session.spec_history],
            }

    @app.put("/sessions/{session_id}/spec")
    def put_spec(session_id: str, body: dict = Body(...)):
        result = _get(session_id).update_spec(body)
        return {"schema_version": SCHEMA_VERSION, **result}

    @app.post("/sessions/{session_id}/run", status_code=202)
    def start_run(session_id: str, body: dict = Body(default={})):
        session = _get(session_id)
        generations = body.get("generations")
        count = session.start_run(generations)
        thread = threading.Thread(
            target=session._run_loop, args=(count,), daemon=True
        )
        thread.start()
        return {"schema_version": SCHEMA_VERSION, "run_state": "running",
                "generations": count}

    @app.post("/sessions/{session_id}/cancel")
    def cancel_run(session_id: str):
        return {"schema_version": SCHEMA_VERSION, **_get(session_id).cancel()}

    @app.get("/sessions/{session_id}/generations/{index}")
    def get_generation(
        session_id: str,
        index: int,
        sort: str | None = Query(default=None),
        order: str = Query(default="desc"),
        filter: list[str] = Query(default=[]),
    ):
        session = _get(session_id)
        filters = [_parse_filter(f) for f in filter]
        return session.get_population(index, sort=sort, order=order,
                                      filters=filters)

    @app.post("/sessions/{session_id}/interventions")
    def intervene(session_id: str, body: dict = Body(...)):
        session = _get(session_id)
        action = body.get("action")
        if not action:
            raise SessionError("intervention body needs an 'action'")
        payload = {k: v for k, v in body.items() if k != "action"}
        result = session.intervene(action, payload)
        return {"schema_version": SCHEMA_VERSION, "action": action,
                **result, "status": session.status()}

    @app.get("/sessions/{session_id}/export")
    def export_session(session_id: str, format: str = Query(default="json")):
        session = _get(session_id)
        if format == "json":
            return PlainTextResponse(
                session.export_json(), media_type="application/json"
            )
        if format == "csv":
            return PlainTextResponse(
                session.export_csv(), media_type="text/csv"
            )
        raise SessionError(f"unknown export format {format!r}")

    @app.get("/sessions/{session_id}/events")
    def events(
        session_id: str,
        since: int = Query(default=-1),
        follow: bool = Query(default=False),
    ):
        session = _get(session_id)

        def stream() -> Iterator[str]:
            cursor = since
            while True:
                batch = session.events_since(cursor)
                for event in batch:
                    cursor = event["seq"]
                    payload = {"schema_version": SCHEMA_VERSION, **event}
                    yield f"data: {json.dumps(payload)}\n\n"
                if not follow:
                    break
                with session.event_signal:
                    session.event_signal.wait(EVENT_POLL_SECONDS)

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.post("/sessions/{session_id}/llm/suggest")
    def llm_suggest(session_id: str, body: dict = Body(...)):
        if llm_client is None:
            return _error_response(
                "endpoint_unavailable", "no llm endpoint configured"
            )
        session = _get(session_id)
        try:
            request = llm_bridge.LlmEditRequest(
                mode=body.get("mode", "mutate"),
                keys=tuple(body.get("keys", ())),
                instruction=body.get("instruction", ""),
                n_candidates=body.get("n_candidates", 3),
            )
        except ValueError as exc:
            raise ValidationFailedError({"request": str(exc)}) from None
        result = llm_bridge.llm_edit(session, request, llm_client)
        return {"schema_version": SCHEMA_VERSION, **result.to_dict()}

    @app.post("/validate/smiles")
    def validate_smiles(body: dict = Body(...)):
        text = body.get("smiles", "")
        try:
            fragments = parse_smiles(text)
        except SmilesError as exc:
            return {
                "schema_version": SCHEMA_VERSION,
                "valid": False,
                "error": {
                    "type": type(exc).__name__,
                    "message": str(exc),
                    "offset": exc.offset,
                },
            }
        return {
            "schema_version": SCHEMA_VERSION,
            "valid": True,
            "fragments": [m.canonical_smiles for m in fragments],
        }

    @app.post("/validate/pattern")
    def validate_pattern(body: dict = Body(...)):
        text = body.get("pattern", "")
        try:
            pattern = parse_pattern(text)
        except PatternSyntaxError as exc:
            return {
                "schema_version": SCHEMA_VERSION,
                "valid": False,
                "error": {"message": str(exc), "offset": exc.offset},
            }
        return {
            "schema_version": SCHEMA_VERSION,
            "valid": True,
            "atoms": len(pattern.atoms),
        }

    @app.get("/samples")
    def samples():
        return {"schema_version": SCHEMA_VERSION,
                "samples": list(BUILTIN_SAMPLES)}

    return app


def _parse_filter(text: str) -> dict:
    """``property:min:max`` with either bound omitted, e.g. ``mol_weight:100:``."""
    parts = text.split(":")
    if len(parts) != 3:
        raise SessionError(
            f"filter {text!r} must look like property:min:max"
        )
    name, low, high = parts
    try:
        return {
            "property_id": name,
            "min": float(low) if low else None,
            "max": float(high) if high else None,
        }
    except ValueError:
        raise SessionError(f"filter {text!r} has non-numeric bounds") from None
