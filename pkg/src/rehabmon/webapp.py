"""HTTP interface to the monitoring service.

Request and response bodies use the same JSON conventions as the sequence
documents; dates are ISO-8601 calendar dates passed as query or body fields.
The storage directory comes from the REHABMON_STORAGE environment variable
unless given explicitly.
"""

from __future__ import annotations

import datetime as dt
import json
import os
from typing import Any

from fastapi import FastAPI, HTTPException, Request

from .errors import IndeterminateResult, SequenceFormatError
from .monitor import (
    DuplicateError,
    MonitorService,
    NotFoundError,
)

STORAGE_ENV_VAR = "REHABMON_STORAGE"


def _parse_date(value: str, field: str) -> dt.date:
    try:
        return dt.date.fromisoformat(value)
    except ValueError:
        raise HTTPException(status_code=422, detail=f"{field} must be an ISO date") from None


def _require(body: dict, field: str) -> Any:
    if field not in body:
        raise HTTPException(status_code=422, detail=f"missing field {field!r}")
    return body[field]


def _document(value: Any) -> str:
    """Accept an embedded JSON document either inline or as a string."""
    if isinstance(value, str):
        return value
    return json.dumps(value, separators=(",", ":"))


def create_app(storage_dir: str | None = None) -> FastAPI:
    """Build the application; storage defaults to $REHABMON_STORAGE."""
    if storage_dir is None:
        storage_dir = os.environ.get(STORAGE_ENV_VAR)
    if not storage_dir:
        raise ValueError(
            f"storage directory required: pass storage_dir or set {STORAGE_ENV_VAR}"
        )
    service = MonitorService(storage_dir)
    app = FastAPI(title="rehabmon monitor")
    app.state.service = service

    @app.post("/patients", status_code=201)
    async def register_patient(request: Request) -> dict:
        body = await request.json()
        try:
            patient = service.register_patient(
                patient_id=_require(body, "patient_id"), name=_require(body, "name")
            )
        except DuplicateError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from None
        return {"patient_id": patient.patient_id, "name": patient.name}

    @app.post("/patients/{patient_id}/actions", status_code=201)
    async def assign_action(patient_id: str, request: Request) -> dict:
        body = await request.json()
        try:
            assignment = service.assign_action(
                patient_id=patient_id,
                action_id=_require(body, "action_id"),
                intensity=_require(body, "intensity"),
                start_date=_parse_date(_require(body, "start_date"), "start_date"),
                visit_date=_parse_date(_require(body, "visit_date"), "visit_date"),
                sample_document=_document(_require(body, "sample")),
                profile_document=_document(_require(body, "profile")),
                sets_per_checkpoint=body.get("sets_per_checkpoint", 3),
                reps_per_set=body.get("reps_per_set", 10),
            )
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None
        except DuplicateError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from None
        except (SequenceFormatError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        return {
            "patient_id": assignment.patient_id,
            "action_id": assignment.action_id,
            "intensity": assignment.intensity,
            "start_date": assignment.start_date.isoformat(),
            "visit_date": assignment.visit_date.isoformat(),
            "sets_per_checkpoint": assignment.sets_per_checkpoint,
            "reps_per_set": assignment.reps_per_set,
            "required_weekly_checkpoints": assignment.required_weekly_checkpoints,
        }

    @app.post("/patients/{patient_id}/actions/{action_id}/uploads", status_code=201)
    async def ingest_upload(patient_id: str, action_id: str, date: str, request: Request) -> dict:
        when = _parse_date(date, "date")
        raw = await request.body()
        try:
            result = service.ingest_upload(
                patient_id, action_id, raw.decode("utf-8"), when
            )
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None
        except (SequenceFormatError, UnicodeDecodeError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        except IndeterminateResult as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        return {
            "score": result.score,
            "similar": result.similar,
            "repetitions": result.repetitions,
            "outlier_repairs": result.outlier_repairs,
            "extrapolation_repairs": result.extrapolation_repairs,
            "indeterminate_similarity": result.indeterminate_similarity,
            "indeterminate_count": result.indeterminate_count,
        }

    @app.get("/patients/{patient_id}/actions/{action_id}/results")
    async def results(patient_id: str, action_id: str) -> list[dict]:
        try:
            records = service.results(patient_id, action_id)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None
        return [
            {
                "upload_id": record.upload_id,
                "date": record.date.isoformat(),
                "score": record.result.score,
                "similar": record.result.similar,
                "repetitions": record.result.repetitions,
                "outlier_repairs": record.result.outlier_repairs,
                "extrapolation_repairs": record.result.extrapolation_repairs,
                "indeterminate_similarity": record.result.indeterminate_similarity,
                "indeterminate_count": record.result.indeterminate_count,
            }
            for record in records
        ]

    @app.get("/patients/{patient_id}/actions/{action_id}/completion")
    async def completion(patient_id: str, action_id: str, date: str) -> dict:
        when = _parse_date(date, "date")
        try:
            rate = service.completion_rate(patient_id, action_id, when)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None
        return {"date": when.isoformat(), "completion_rate": rate}

    @app.post("/notifications/check")
    async def check_notifications(date: str) -> list[dict]:
        when = _parse_date(date, "date")
        emitted = service.notification_check(when)
        return [
            {
                "patient_id": n.patient_id,
                "action_id": n.action_id,
                "date": n.date.isoformat(),
                "completion_rate": n.completion_rate,
            }
            for n in emitted
        ]

    @app.get("/patients/{patient_id}/notifications")
    async def notifications(patient_id: str) -> list[dict]:
        try:
            recorded = service.notifications(patient_id)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None
        return [
            {
                "patient_id": n.patient_id,
                "action_id": n.action_id,
                "date": n.date.isoformat(),
                "completion_rate": n.completion_rate,
            }
            for n in recorded
        ]

    return app
