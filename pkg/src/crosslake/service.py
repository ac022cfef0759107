"""HTTP discovery service: JSON over HTTP in front of QueryEngine.

Endpoints:
  POST /query/{op}              one body-JSON call per discovery primitive
  POST /replay                  re-execute a recorded provenance chain
  GET  /de/{de_id}              display detail for one element
  GET  /graph/neighborhood      subgraph around an element
  GET  /health                  artifact fingerprints
  GET  /lake/summary            corpus and graph counts
"""

from __future__ import annotations

import json
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .errors import (
    ArtifactError,
    CrosslakeError,
    IndexMissing,
    ModelMissing,
    UnknownDE,
)
from .queryservice import DP_NAMES, DRS, QueryEngine, load_engine

_QUERY_OPS = tuple(op for op in DP_NAMES if op != "drs_combine")


def _error(status: int, code: str, message: str, **extra) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={"error": {"code": code, "message": message, **extra}},
    )


def create_app(engine: QueryEngine | None = None, workdir: str | Path | None = None,
               embeddings_path: str | None = None) -> FastAPI:
    app = FastAPI(title="crosslake discovery service", version="0.1.0")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"],
    )
    state = app.state
    state.engine = engine
    state.load_error = None
    if engine is None and workdir is not None:
        try:
            state.engine = load_engine(workdir, embeddings_path=embeddings_path)
        except (ArtifactError, FileNotFoundError) as exc:
            state.load_error = str(exc)

    def need_engine():
        if state.engine is None:
            return _error(503, "artifacts_missing",
                          state.load_error or "no artifacts loaded")
        return None

    @app.get("/health")
    def health():
        missing = need_engine()
        if missing:
            return missing
        summary = state.engine.summary()
        return {
            "status": "ok",
            "config_fingerprint": state.engine.config.fingerprint(),
            "summary": summary,
        }

    @app.get("/lake/summary")
    def lake_summary():
        missing = need_engine()
        if missing:
            return missing
        return state.engine.summary()

    @app.post("/query/{op}")
    async def query(op: str, request: Request):
        missing = need_engine()
        if missing:
            return missing
        if op not in _QUERY_OPS:
            return _error(400, "unknown_op", f"unknown operation: {op}",
                          ops=sorted(_QUERY_OPS))
        try:
            params = await request.json()
        except json.JSONDecodeError:
            return _error(400, "malformed_request", "body must be a JSON object")
        if not isinstance(params, dict):
            return _error(400, "malformed_request", "body must be a JSON object")
        try:
            drs = state.engine.execute_op(op, params)
        except UnknownDE as exc:
            return _error(404, "unknown_de", str(exc))
        except (IndexMissing, ModelMissing) as exc:
            return _error(503, "artifacts_missing", str(exc))
        except (KeyError, ValueError, TypeError) as exc:
            return _error(400, "malformed_request", str(exc))
        return state.engine.decorate(drs)

    @app.post("/replay")
    async def replay(request: Request):
        missing = need_engine()
        if missing:
            return missing
        try:
            body = await request.json()
            provenance = body["provenance"]
        except (json.JSONDecodeError, KeyError, TypeError):
            return _error(400, "malformed_request", "body must be {provenance: [...]}")
        try:
            drs = state.engine.replay(provenance)
        except UnknownDE as exc:
            return _error(404, "unknown_de", str(exc))
        except CrosslakeError as exc:
            return _error(400, "malformed_request", str(exc))
        return state.engine.decorate(drs)

    @app.get("/de/{de_id}")
    def de_detail(de_id: str):
        missing = need_engine()
        if missing:
            return missing
        try:
            return state.engine.describe(de_id)
        except UnknownDE:
            return _error(404, "unknown_de", f"no such element: {de_id}")

    @app.get("/graph/neighborhood")
    def neighborhood(id: str, depth: int = 1):
        missing = need_engine()
        if missing:
            return missing
        try:
            return state.engine.neighborhood(id, depth)
        except UnknownDE:
            return _error(404, "unknown_de", f"no such element: {id}")
        except IndexMissing as exc:
            return _error(503, "artifacts_missing", str(exc))

    return app


def serve(workdir: str | Path, host: str = "127.0.0.1", port: int = 8265,
          embeddings_path: str | None = None) -> None:
    import uvicorn

    app = create_app(workdir=workdir, embeddings_path=embeddings_path)
    uvicorn.run(app, host=host, port=port, log_level="info")
