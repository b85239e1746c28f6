"""HTTP control plane: create runs, inspect state, submit decisions,
stream iteration events, export artifacts.

Thin layer over the orchestrator; every state mutation goes through its
single-writer lock, so concurrent requests across runs are unrestricted
while per-run mutation stays serialized.
"""

from __future__ import annotations

import json
import os
import queue
import threading

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, PlainTextResponse, StreamingResponse

from .orchestrator import ChoiceError, Orchestrator, RunError
from .scenario import ScenarioError, parse_scenario

DEFAULT_PORT = 8080
DEFAULT_HEARTBEAT_S = 15.0

TOKEN_ENV = "RANLOOP_API_TOKEN"
PORT_ENV = "RANLOOP_PORT"
DATA_DIR_ENV = "RANLOOP_DATA_DIR"


def _error(status: int, error: str, details: list[str] | None = None) -> JSONResponse:
    return JSONResponse(
        status_code=status, content={"error": error, "details": details or []}
    )


def create_app(
    data_dir: str | None = None,
    api_token: str | None = None,
    heartbeat_s: float = DEFAULT_HEARTBEAT_S,
    orchestrator: Orchestrator | None = None,
) -> FastAPI:
    """Build the service; token and data dir fall back to the environment."""
    if data_dir is None:
        data_dir = os.environ.get(DATA_DIR_ENV) or None
    if api_token is None:
        api_token = os.environ.get(TOKEN_ENV) or None
    orch = orchestrator or Orchestrator(data_dir=data_dir)
    app = FastAPI(title="ranloop control service")
    app.state.orchestrator = orch

    def authorized(request: Request) -> bool:
        if not api_token:
            return True
        header = request.headers.get("authorization", "")
        if header == f"Bearer {api_token}":
            return True
        return request.headers.get("x-api-token") == api_token

    def drive_headless(run_id: str) -> None:
        try:
            state = orch.get_run(run_id)
            while state.status == "running":
                orch.step(run_id, "auto-top")
        except Exception:
            state = orch.get_run(run_id)
            state.status = "failed"

    @app.post("/runs", status_code=201)
    async def create_run(request: Request):
        if not authorized(request):
            return _error(401, "invalid or missing API token")
        try:
            body = await request.json()
        except json.JSONDecodeError:
            return _error(400, "request body is not valid JSON")
        if not isinstance(body, dict) or "scenario" not in body:
            return _error(400, "missing field", ["scenario"])
        try:
            spec = parse_scenario(body["scenario"])
        except ScenarioError as e:
            return _error(400, "invalid scenario", [str(e)])
        mode = body.get("mode", "headless")
        if mode not in ("headless", "hitl"):
            return _error(400, "invalid mode", [f"mode: {mode!r}"])
        kwargs = {
            "mode": mode,
            "qos_floor_mode": bool(body.get("qos_floor_mode", False)),
        }
        if "max_iterations" in body:
            kwargs["max_iterations"] = int(body["max_iterations"])
        try:
            state = orch.start_run(spec, **kwargs)
        except (ScenarioError, ValueError) as e:
            return _error(400, "invalid run request", [str(e)])
        if mode == "headless" and state.status == "running":
            threading.Thread(
                target=drive_headless, args=(state.run_id,), daemon=True
            ).start()
        return JSONResponse(status_code=201, content=state.summary())

    @app.get("/runs")
    async def list_runs():
        return [s.summary() for s in orch.list_runs()]

    @app.get("/runs/{run_id}")
    async def get_run(run_id: str):
        try:
            return orch.get_run(run_id).to_dict()
        except RunError:
            return _error(404, f"unknown run: {run_id}")

    @app.post("/runs/{run_id}/decision")
    async def submit_decision(run_id: str, request: Request):
        if not authorized(request):
            return _error(401, "invalid or missing API token")
        try:
            state = orch.get_run(run_id)
        except RunError:
            return _error(404, f"unknown run: {run_id}")
        try:
            body = await request.json()
        except json.JSONDecodeError:
            return _error(400, "request body is not valid JSON")
        if not isinstance(body, dict) or "choice" not in body:
            return _error(400, "missing field", ["choice"])
        if state.status != "awaiting_human":
            return _error(
                409,
                f"run {run_id} is not awaiting a decision (status: {state.status})",
            )
        try:
            state = orch.step(run_id, body["choice"])
        except ChoiceError as e:
            return _error(400, "invalid choice", [str(e)])
        except RunError as e:
            return _error(409, str(e))
        return state.to_dict()

    @app.get("/runs/{run_id}/events")
    async def events(run_id: str):
        try:
            state = orch.get_run(run_id)
        except RunError:
            return _error(404, f"unknown run: {run_id}")

        def sse(event: str, payload: dict) -> str:
            return f"event: {event}\ndata: {json.dumps(payload)}\n\n"

        def stream():
            if state.status in ("finished", "failed"):
                last = state.records[-1] if state.records else None
                yield sse(
                    "finished",
                    {
                        "event": "finished",
                        "run_id": run_id,
                        "status": state.status,
                        "terminal_reason": state.terminal_reason,
                        "record": last.canonical_dict() if last else None,
                    },
                )
                return
            q = orch.subscribe(run_id)
            try:
                while True:
                    try:
                        payload = q.get(timeout=heartbeat_s)
                    except queue.Empty:
                        yield ": heartbeat\n\n"
                        continue
                    yield sse(payload["event"], payload)
                    if payload["event"] == "finished":
                        return
            finally:
                orch.unsubscribe(run_id, q)

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.get("/runs/{run_id}/export")
    async def export(run_id: str, format: str = "csv"):
        fmt = {"csv": "csv", "log": "log"}.get(format)
        if fmt is None:
            return _error(400, f"unknown export format: {format}", ["format"])
        try:
            text = orch.export_run(run_id, fmt)
        except RunError:
            return _error(404, f"unknown run: {run_id}")
        media = "text/csv" if fmt == "csv" else "application/x-ndjson"
        return PlainTextResponse(text, media_type=media)

    return app


def serve(
    host: str = "0.0.0.0",
    port: int | None = None,
    data_dir: str | None = None,
    api_token: str | None = None,
) -> None:
    import uvicorn

    if port is None:
        port = int(os.environ.get(PORT_ENV, DEFAULT_PORT))
    app = create_app(data_dir=data_dir, api_token=api_token)
    uvicorn.run(app, host=host, port=port)
