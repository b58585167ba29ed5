"""Synthetic load for the distribution service.

Builds Figure 3 plus N generated events, then drives the ASGI app with
concurrent readers while a publisher alternates between two graphs. Each
response is checked against the publish log: its version, ETag and body
must all belong to one published snapshot.
"""
from __future__ import annotations

import asyncio
import datetime as dt
import json
import time
from dataclasses import dataclass, field

from urllib.parse import urlencode

from plod.model import (
    Event, MoveAction, Patient, PlodDate, PlodGraph, Report, event_id, make_move_id,
    make_patient_id, make_report_id, merge_graphs,
)
from plod.query import SimpleQuery, Snapshot, evaluate_simple_query, render_turtle
from plod.turtle import GNJP, serialize

CITIES = ["Tokyo", "Osaka"]

# mostly narrow app-style lookups (a day or two, optionally one area) plus a
# few broad ones that return most of the graph
QUERIES = [
    {"since": f"2020-02-{d:02d}", "until": f"2020-02-{d + 1:02d}", **({"area": a} if a else {})}
    for d in range(1, 11) for a in ("Tokyo", "Osaka", None)
] + [
    {}, {"area": "Osaka"}, {"area": "Tokyo"}, {"area": "gnjp:Osaka", "since": "2020-01-16"},
    {"since": "2020-02-01", "until": "2020-02-07"}, {"since": "2020-02-10", "until": "2020-02-10", "area": "Tokyo"},
    {"disease": "COVID-19"}, {"disease": "COVID-19", "area": "Osaka", "until": "2020-02-03"},
    {"area": "Atlantis"}, {"since": "2020-03-01"},
]


def synthetic_graph(base: PlodGraph, n: int, shift: int = 0) -> PlodGraph:
    """*base* plus *n* events, each with one report, one patient and two moves."""
    disease = base.diseases[0].iri
    events, reports, patients, moves = [], [], [], []
    for i in range(n):
        ev = event_id(f"S{i:05d}")
        rid, pid = make_report_id(ev, 1), make_patient_id(ev, 1)
        day = dt.date(2020, 2, 1) + dt.timedelta(days=(i + shift) % 28)
        a, b = CITIES[i % 2], CITIES[(i + 1) % 2]
        events.append(Event(ev, ev.text))
        reports.append(Report(rid, rid.text, ev, 1, PlodDate.of(day)))
        patients.append(Patient(pid, pid.text, ev, disease, PlodDate.of(day), home_location=GNJP + a))
        for k, (src, dst) in enumerate(((a, b), (b, a)), start=1):
            mid = make_move_id(pid, k)
            moves.append(MoveAction(mid, mid.text, pid, PlodDate.of(day), PlodDate.of(day),
                                    GNJP + src, GNJP + dst))
    extra = PlodGraph(events=tuple(events), reports=tuple(reports), patients=tuple(patients), moves=tuple(moves))
    return merge_graphs([base, extra])


def expected_bodies(g: PlodGraph) -> dict[bytes, bytes]:
    """The Turtle body per query string, computed directly on the graph."""
    s = Snapshot.build(g, 0)
    return {_qs(p): render_turtle(evaluate_simple_query(SimpleQuery.from_params(**p), s)).encode()
            for p in QUERIES}


def _qs(params: dict) -> bytes:
    return urlencode(sorted(params.items())).encode()


class Response:
    __slots__ = ("status", "headers", "body")

    def __init__(self):
        self.status, self.headers, self.body = 0, {}, b""


async def call(app, method: str, path: str, query: bytes = b"", headers=(), body: bytes = b"") -> Response:
    """Drive one request through an ASGI app in-process, with no client library in the loop."""
    scope = {
        "type": "http", "asgi": {"version": "3.0"}, "http_version": "1.1", "method": method,
        "scheme": "http", "path": path, "raw_path": path.encode(), "query_string": query,
        "root_path": "", "headers": [(k.lower().encode(), v.encode()) for k, v in headers],
        "client": ("127.0.0.1", 50000), "server": ("plod", 80),
    }
    sent = False

    async def receive():
        nonlocal sent
        if sent:
            return {"type": "http.disconnect"}
        sent = True
        return {"type": "http.request", "body": body, "more_body": False}

    out = Response()
    chunks = []

    async def send(message):
        if message["type"] == "http.response.start":
            out.status = message["status"]
            out.headers = {k.decode(): v.decode() for k, v in message.get("headers", ())}
        elif message["type"] == "http.response.body":
            chunks.append(message.get("body", b""))

    await app(scope, receive, send)
    out.body = b"".join(chunks)
    return out


@dataclass
class SurgeResult:
    queries: int = 0
    seconds: float = 0.0
    publishes: int = 0
    server_errors: int = 0
    mixed: list = field(default_factory=list)
    statuses: dict = field(default_factory=dict)
    log: dict = field(default_factory=dict)

    @property
    def qps(self) -> float:
        return self.queries / self.seconds if self.seconds else 0.0


async def _surge(app, graphs, token, duration, readers, publish_every):
    texts = [serialize(g).encode() for g in graphs]
    bodies = [expected_bodies(g) for g in graphs]
    validators = [Snapshot.build(g, 0).strong_validator for g in graphs]
    auth = [("Authorization", f"Bearer {token}")]
    first = await call(app, "POST", "/snapshot", headers=auth, body=texts[0])
    assert first.status == 201, first.body
    base = json.loads(first.body)["version"]
    # publishes alternate, so version base + k must carry graphs[k % len(graphs)]
    log = {base: 0}
    res = SurgeResult()
    deadline = time.perf_counter() + duration
    queries = [_qs(p) for p in QUERIES]

    async def reader(offset):
        i = offset
        while time.perf_counter() < deadline:
            # in-process requests may complete without suspending
            await asyncio.sleep(0)
            qs = queries[i % len(queries)]
            i += 1
            r = await call(app, "GET", "/query", qs)
            res.queries += 1
            res.statuses[r.status] = res.statuses.get(r.status, 0) + 1
            if r.status >= 500:
                res.server_errors += 1
                continue
            version = int(r.headers["x-snapshot-version"])
            which = (version - base) % len(graphs)
            if r.headers["etag"] != f'"{validators[which]}"':
                res.mixed.append((version, "etag"))
            if r.body != bodies[which][qs]:
                res.mixed.append((version, "body", qs))

    async def publisher():
        n = 1
        while time.perf_counter() + publish_every < deadline:
            await asyncio.sleep(publish_every)
            which = n % len(graphs)
            r = await call(app, "POST", "/snapshot", headers=auth, body=texts[which])
            if r.status >= 500:
                res.server_errors += 1
                continue
            assert r.status == 201, r.body
            version = json.loads(r.body)["version"]
            log[version] = which
            if (version - base) % len(graphs) != which:
                res.mixed.append((version, "publish order"))
            res.publishes += 1
            n += 1

    tasks = [asyncio.create_task(reader(k)) for k in range(readers)]
    pub = asyncio.create_task(publisher())
    start = time.perf_counter()
    await asyncio.gather(*tasks, pub)
    res.seconds = time.perf_counter() - start
    res.log = log
    return res


def run_surge(app, graphs, token, duration=3.0, readers=8, publish_every=0.25) -> SurgeResult:
    return asyncio.run(_surge(app, graphs, token, duration, readers, publish_every))
