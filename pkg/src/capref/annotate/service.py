"""HTTP service over the annotation store: task creation, assignment,
submissions, QC sampling, exports, and static serving of the web UI
bundle when one is available."""

from __future__ import annotations

import os
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.responses import JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles

from .store import GUIDELINES, AnnotateError, AnnotationStore, ConflictError, NotFoundError

STORE_ENV_VAR = "CAPREF_ANNOTATE_STORE"
UI_ENV_VAR = "CAPREF_ANNOTATE_UI"


def _http_error(e: AnnotateError) -> HTTPException:
    if isinstance(e, NotFoundError):
        return HTTPException(status_code=404, detail=str(e))
    if isinstance(e, ConflictError):
        return HTTPException(status_code=409, detail=str(e))
    return HTTPException(status_code=400, detail=str(e))


def build_app(store: AnnotationStore, ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="capref annotation service")

    @app.exception_handler(AnnotateError)
    async def annotate_error_handler(request: Request, exc: AnnotateError):
        err = _http_error(exc)
        return JSONResponse(status_code=err.status_code, content={"detail": err.detail})

    @app.get("/healthz")
    def healthz():
        return {"ok": True}

    @app.get("/api/guidelines", response_class=PlainTextResponse)
    def guidelines():
        return GUIDELINES

    @app.get("/api/status")
    def status():
        return store.status_counts()

    @app.post("/api/tasks")
    async def create_tasks(request: Request):
        doc = await request.json()
        kind = doc.get("kind", "")
        items = doc.get("items", [])
        task_ids = store.create_tasks(kind, items, batch_id=doc.get("batch_id"))
        batch = store._tasks[task_ids[0]].batch_id if task_ids else None
        return {"task_ids": task_ids, "batch_id": batch}

    @app.get("/api/tasks/next")
    def next_task(annotator: str = Query(...), kind: str = Query(...)):
        task = store.next_task(annotator, kind)
        if task is None:
            return JSONResponse(status_code=204, content=None)
        return task

    @app.post("/api/submissions")
    async def submit(request: Request):
        doc = await request.json()
        return store.submit(doc)

    @app.get("/api/export", response_class=PlainTextResponse)
    def export(kind: str = Query(...)):
        return store.export(kind)

    @app.get("/api/qc")
    def qc(batch: str = Query(...), k: int = Query(...), seed: int = Query(0)):
        return store.qc_sample(batch, k, seed)

    ui_dir = ui_dir or os.environ.get(UI_ENV_VAR)
    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    return app


def serve(
    store_dir: str,
    port: int = 8018,
    host: str = "127.0.0.1",
    ui_dir: str | None = None,
    lease_seconds: float = 600.0,
) -> None:
    import uvicorn

    store = AnnotationStore(store_dir, lease_seconds=lease_seconds)
    uvicorn.run(build_app(store, ui_dir=ui_dir), host=host, port=port, log_level="warning")
