"""HTTP distribution of PLOD snapshots.

Every read handler takes the current snapshot once and renders from it, so
a publish that lands mid-request is never observed. Rendered bodies are
memoized on the snapshot, which keeps repeated queries cheap under load.
"""
from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import Response
from starlette.concurrency import run_in_threadpool

from plod.model import PlodGraph, ValidationIssue, errors, merge_graphs, validate_graph
from plod.query import (
    InvalidQuery, PublishRefused, SimpleQuery, Snapshot, SnapshotStore, case_closure,
    evaluate_simple_query, render_turtle,
)
from plod.service.schemas import ErrorOut, GraphOut, HealthOut, IssueOut, PublishOut
from plod.turtle import TurtleSyntaxError, parse, read_file

log = logging.getLogger("plod.access")

TURTLE = "text/turtle; charset=utf-8"
JSON = "application/json"
CACHE_CONTROL = "public, max-age=60"

ENV_DATA_DIR = "PLOD_DATA_DIR"
ENV_BIND = "PLOD_BIND"
ENV_PUBLISH_TOKEN = "PLOD_PUBLISH_TOKEN"
DEFAULT_BIND = "127.0.0.1:8000"
QUERY_PARAMS = ("since", "until", "area", "disease", "format")


class DataDirError(Exception):
    def __init__(self, message: str, issues: list[ValidationIssue] = ()):
        super().__init__(message)
        self.issues = list(issues)


def load_data_dir(path) -> tuple[PlodGraph, list[ValidationIssue]]:
    """Merge every ``*.ttl`` under *path*; raise DataDirError on any error."""
    path = Path(path)
    files = sorted(path.glob("*.ttl")) if path.is_dir() else [path]
    if not files:
        raise DataDirError(f"no .ttl files in {path}")
    graphs = []
    for f in files:
        try:
            g, _ = read_file(f)
        except (OSError, TurtleSyntaxError) as e:
            raise DataDirError(f"{f}: {e}") from e
        graphs.append(g)
    g = merge_graphs(graphs)
    issues = validate_graph(g)
    if errors(issues):
        raise DataDirError(f"{path}: snapshot has validation errors", issues)
    return g, issues


def parse_bind(bind: str) -> tuple[str, int]:
    host, _, port = bind.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"bind address must be HOST:PORT, got {bind!r}")
    return host, int(port)


def _issue(i: ValidationIssue) -> IssueOut:
    return IssueOut(severity=i.severity.value, code=i.code.value, subject=i.subject, message=i.message)


def _error(status: int, detail: str, issues=()) -> Response:
    body = ErrorOut(detail=detail, issues=[_issue(i) for i in issues])
    return Response(body.model_dump_json(by_alias=True), status_code=status, media_type=JSON)


def _etag(s: Snapshot) -> str:
    return f'"{s.strong_validator}"'


def _not_modified(request: Request, etag: str) -> bool:
    header = request.headers.get("if-none-match")
    if not header:
        return False
    for tag in header.split(","):
        tag = tag.strip()
        if tag == "*" or tag.removeprefix("W/") == etag:
            return True
    return False


def _wants_json(request: Request, fmt: Optional[str]) -> bool:
    if fmt is not None:
        if fmt not in ("ttl", "json"):
            raise InvalidQuery(f"format must be ttl or json, got {fmt!r}")
        return fmt == "json"
    accept = request.headers.get("accept", "")
    best, best_q = "ttl", 0.0
    for part in accept.split(","):
        media, *params = [x.strip() for x in part.split(";")]
        q = 1.0
        for p in params:
            if p.startswith("q="):
                try:
                    q = float(p[2:])
                except ValueError:
                    q = 0.0
        kind = {"application/json": "json", "text/turtle": "ttl"}.get(media)
        if kind and q > best_q:
            best, best_q = kind, q
    return best == "json"


def _render(s: Snapshot, key, g_fn, as_json: bool) -> bytes:
    def compute():
        g = g_fn()
        if as_json:
            return GraphOut.of(g).model_dump_json(by_alias=True).encode()
        return render_turtle(g).encode()
    return s.memo((key, as_json), compute)


def _respond(request: Request, s: Snapshot, body: bytes, as_json: bool,
             diagnostics: tuple = ()) -> Response:
    etag = _etag(s)
    headers = {
        "ETag": etag,
        "X-Snapshot-Version": str(s.version),
        "Cache-Control": CACHE_CONTROL,
        "Vary": "Accept",
    }
    if diagnostics:
        headers["X-PLOD-Diagnostic"] = "; ".join(diagnostics)
    if _not_modified(request, etag):
        return Response(status_code=304, headers=headers)
    return Response(body, media_type=JSON if as_json else TURTLE, headers=headers)


class AccessLog:
    """One log line per request: method, path, status, snapshot version."""

    def __init__(self, app):
        self.app = app

    async def __call__(self, scope, receive, send):
        if scope["type"] != "http" or not log.isEnabledFor(logging.INFO):
            await self.app(scope, receive, send)
            return
        seen = {}

        async def wrapped(message):
            if message["type"] == "http.response.start":
                seen["status"] = message["status"]
                for k, v in message.get("headers", ()):
                    if k == b"x-snapshot-version":
                        seen["version"] = v.decode()
            await send(message)

        try:
            await self.app(scope, receive, wrapped)
        finally:
            log.info("%s %s %s v%s", scope["method"], scope["path"],
                     seen.get("status", 500), seen.get("version", "-"))


def create_app(store: Optional[SnapshotStore] = None, *,
               publish_token: Optional[str] = None) -> FastAPI:
    store = store if store is not None else SnapshotStore()
    app = FastAPI(title="PLOD distribution service")
    app.state.store = store
    app.add_middleware(AccessLog)

    def current() -> Optional[Snapshot]:
        return store.current

    @app.get("/health", response_model=HealthOut)
    async def health():
        s = current()
        if s is None:
            return HealthOut(status="empty", version=0)
        return HealthOut(status="ok", version=s.version, strong_validator=s.strong_validator,
                         built_at=s.built_at.isoformat())

    @app.get("/data.ttl")
    async def data(request: Request):
        s = current()
        if s is None:
            return _error(503, "no snapshot published")
        return _respond(request, s, _render(s, "data", lambda: s.graph, False), False)

    # parameters are read directly from the query string: this is the hot
    # path, and FastAPI's per-parameter resolution costs more than the lookup
    @app.get("/query", openapi_extra={"parameters": [
        {"name": n, "in": "query", "required": False, "schema": {"type": "string"}}
        for n in QUERY_PARAMS]})
    async def query(request: Request):
        s = current()
        if s is None:
            return _error(503, "no snapshot published")
        params = request.query_params
        try:
            q = SimpleQuery.from_params(params.get("since"), params.get("until"),
                                        params.get("area"), params.get("disease"))
            as_json = _wants_json(request, params.get("format"))
        except InvalidQuery as e:
            return _error(400, str(e))

        def compute():
            diagnostics: list[str] = []
            g = evaluate_simple_query(q, s, diagnostics)
            return g, tuple(diagnostics)

        g, diagnostics = s.memo(("query", q.key()), compute)
        body = _render(s, ("query", q.key()), lambda: g, as_json)
        return _respond(request, s, body, as_json, diagnostics)

    @app.get("/cases/{pid}")
    async def cases(request: Request, pid: str, format: Optional[str] = None):
        s = current()
        if s is None:
            return _error(503, "no snapshot published")
        try:
            as_json = _wants_json(request, format)
        except InvalidQuery as e:
            return _error(400, str(e))
        g = s.memo(("case", pid), lambda: case_closure(s, pid))
        if g is None:
            return _error(404, f"unknown PID {pid!r}")
        return _respond(request, s, _render(s, ("case", pid), lambda: g, as_json), as_json)

    @app.post("/snapshot", status_code=201, response_model=PublishOut)
    async def snapshot(request: Request):
        token = publish_token if publish_token is not None else os.environ.get(ENV_PUBLISH_TOKEN)
        if not token:
            return _error(403, "publishing is disabled")
        auth = request.headers.get("authorization", "")
        if auth != f"Bearer {token}":
            return _error(401, "missing or invalid publish token")
        text = (await request.body()).decode("utf-8", errors="replace")

        def build():
            g, issues = parse(text)
            return g, issues, store.publish(g)

        try:
            g, issues, snap = await run_in_threadpool(build)
        except TurtleSyntaxError as e:
            return _error(400, str(e))
        except PublishRefused as e:
            return _error(422, "snapshot refused: validation errors", errors(e.issues))
        out = PublishOut(version=snap.version, strong_validator=snap.strong_validator,
                         entities=len(g), warnings=[_issue(i) for i in issues])
        return Response(out.model_dump_json(by_alias=True), status_code=201, media_type=JSON,
                        headers={"X-Snapshot-Version": str(snap.version)})

    return app


def app_from_env() -> FastAPI:
    """Build the app from the environment; used by ``uvicorn --factory``."""
    store = SnapshotStore()
    data_dir = os.environ.get(ENV_DATA_DIR)
    if data_dir:
        g, _ = load_data_dir(data_dir)
        store.publish(g)
    return create_app(store)
