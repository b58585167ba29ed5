import datetime as dt
import json
import random
import socket
import threading
import time

import pytest
from click.testing import CliRunner
from fastapi.testclient import TestClient

from plod import cli
from plod.match import Gazetteer, LocationFix, history_to_json
from plod.query import SnapshotStore
from plod.service import create_app
from plod.turtle import parse, serialize, triple_set
from oracles import match_oracle
from surge import synthetic_graph

FIG3_ID = "12202001311"


@pytest.fixture
def run():
    runner = CliRunner()

    def invoke(*args, **kw):
        return runner.invoke(cli.main, [str(a) for a in args], catch_exceptions=False, **kw)
    return invoke


def test_version(run):
    r = run("--version")
    assert r.exit_code == 0 and "version" in r.stdout


# validate

def test_validate_figure3(run, data_dir):
    r = run("validate", data_dir / "figure3.ttl")
    assert r.exit_code == 0 and r.stdout == ""


def test_validate_figure4(run, data_dir):
    r = run("validate", data_dir / "figure4.ttl")
    lines = r.stdout.splitlines()
    assert r.exit_code == 0 and len(lines) == 2
    assert all("warning" in x and "MISSING_LOCATION" in x and "29202001281-P01-M01" in x for x in lines)


def test_validate_missing_and_broken(run, data_dir, tmp_path):
    assert run("validate", tmp_path / "nope.ttl").exit_code == 3
    assert run("validate", data_dir / "figure4_as_printed.ttl").exit_code == 3
    assert run("validate").exit_code == 2


def test_validate_errors_exit_1(run, tmp_path):
    p = tmp_path / "bad.ttl"
    p.write_text("<https://plod.info/data/Z-P01-M01> a <https://schema.org/MoveAction> ;"
                 " <https://schema.org/agent> <https://plod.info/data/Z-P01> .\n")
    r = run("validate", p)
    assert r.exit_code == 1 and "DANGLING_REF" in r.stdout


def test_validate_several_paths_prefixed(run, data_dir):
    r = run("validate", data_dir / "figure3.ttl", data_dir / "figure4.ttl")
    assert r.exit_code == 0
    assert all(x.startswith(str(data_dir / "figure4.ttl")) for x in r.stdout.splitlines())


# ingest

def test_ingest_figure3(run, data_dir, tmp_path, figure3):
    r = run("ingest", data_dir / "figure3.json", "--out", tmp_path / "a")
    assert r.exit_code == 0
    assert "ingested 1 records: 1 written, 0 failed" in r.stderr
    out = tmp_path / "a" / f"{FIG3_ID}.ttl"
    g, issues = parse(out.read_text(encoding="utf-8"))
    assert issues == [] and triple_set(g) == triple_set(figure3)
    run("ingest", data_dir / "figure3.json", "--out", tmp_path / "b")
    assert (tmp_path / "b" / f"{FIG3_ID}.ttl").read_bytes() == out.read_bytes()


def test_ingest_no_inputs_is_usage_error(run, tmp_path):
    assert run("ingest", "--out", tmp_path).exit_code == 2


def test_ingest_one_bad_of_three(run, data_dir, tmp_path):
    good = json.loads((data_dir / "figure3.json").read_text(encoding="utf-8"))
    other = dict(good, releaseId="12202002011")
    src = tmp_path / "src"
    src.mkdir()
    (src / "a.json").write_text(json.dumps(good))
    (src / "b.json").write_text(json.dumps(other))
    (src / "c.json").write_text('{"releaseId": "99", "patients": [')
    out = tmp_path / "out"
    r = run("ingest", src, "--out", out)
    assert r.exit_code == 1
    assert sorted(p.name for p in out.iterdir()) == [f"{FIG3_ID}.ttl", "12202002011.ttl"]
    assert "c.json" in r.stderr and "2 written, 1 failed" in r.stderr


def test_ingest_invalid_record_listed(run, data_dir, tmp_path):
    good = json.loads((data_dir / "figure3.json").read_text(encoding="utf-8"))
    batch = tmp_path / "batch.json"
    batch.write_text(json.dumps([good, {"releaseId": "bad id!"}, good]))
    r = run("ingest", batch, "--out", tmp_path / "out")
    assert r.exit_code == 1
    assert "duplicate releaseId" in r.stderr
    assert [p.name for p in (tmp_path / "out").iterdir()] == [f"{FIG3_ID}.ttl"]
    assert "1 written, 2 failed" in r.stderr


def test_ingest_unreadable_is_io_failure(run, tmp_path):
    assert run("ingest", tmp_path / "missing.json", "--out", tmp_path / "o").exit_code == 3


def test_ingest_prepare(run, data_dir, tmp_path):
    r = run("ingest", data_dir / "section42_corpus", "--out", tmp_path / "o", "--prepare")
    assert r.exit_code == 0, r.stderr
    assert len(list((tmp_path / "o").glob("*.ttl"))) == 39
    assert run("validate", *sorted((tmp_path / "o").glob("*.ttl"))).exit_code == 0


# stats

def test_stats_table1(run, data_dir):
    r = run("stats", data_dir / "table1_corpus")
    assert r.exit_code == 0
    rows = {line[:34].strip(): line[34:].split() for line in r.stdout.splitlines()[1:]}
    assert rows["Yearly total"] == ["54", "135", "39", "228"]
    assert [rows[k][-1] for k in list(rows)[:-1]] == ["71", "9", "80", "16", "45", "3", "4"]


def test_stats_json(run, data_dir):
    r = run("stats", data_dir / "table1_corpus", "--json")
    assert r.exit_code == 0
    assert json.loads(r.stdout) == json.loads(run("stats", data_dir / "table1_corpus", "--json").stdout)


def test_stats_evaluation(run, data_dir):
    r = run("stats", data_dir / "section42_corpus", "--evaluation")
    assert r.exit_code == 0
    values = {line[:32].strip(): line[32:].strip() for line in r.stdout.splitlines()}
    assert [values[k] for k in ("releases", "with patient information", "with dated and located trace",
                                "trace steps", "steps with origin/destination")] == ["39", "23", "8", "21", "10"]
    assert values["granularity"] == "Facility: 1, Prefecture: 8, Overseas: 1"
    js = json.loads(run("stats", data_dir / "section42_corpus", "--evaluation", "--json").stdout)
    assert js["granularity"] == {"Facility": 1, "Prefecture": 8, "Overseas": 1}


def test_stats_empty_and_missing(run, tmp_path):
    r = run("stats", tmp_path)
    assert r.exit_code == 0 and "Yearly total" in r.stdout
    assert r.stdout.splitlines()[-1].split() == ["Yearly", "total", "0"]
    assert run("stats", tmp_path / "missing").exit_code == 3


# match

def _history(tmp_path, rows, name="history.json"):
    p = tmp_path / name
    p.write_text(json.dumps(rows))
    return p


def test_match_figure3(run, data_dir, tmp_path):
    h = _history(tmp_path, [{"timestamp": "2020-01-16T03:00:00Z", "lat": 34.6937, "lon": 135.5023}])
    r = run("match", h, data_dir / "figure3.ttl")
    assert r.exit_code == 0
    report = json.loads(r.stdout)
    assert [c["moveId"] for c in report["candidates"]] == ["12202001311-P01-M01"]
    assert "*** 1 possible contact with published patient moves ***" in r.stderr
    assert run("match", h, data_dir / "figure3.ttl").stdout == r.stdout


def test_match_empty_history(run, data_dir, tmp_path):
    for content in ("[]", ""):
        p = tmp_path / "empty.json"
        p.write_text(content)
        r = run("match", p, data_dir / "figure3.ttl")
        assert r.exit_code == 0
        assert json.loads(r.stdout)["candidates"] == []
        assert "no possible contacts found" in r.stderr


def test_match_unsorted_history(run, data_dir, tmp_path):
    h = _history(tmp_path, [{"timestamp": "2020-01-17T00:00:00Z", "lat": 34.7, "lon": 135.5},
                            {"timestamp": "2020-01-16T00:00:00Z", "lat": 34.7, "lon": 135.5}])
    r = run("match", h, data_dir / "figure3.ttl")
    assert r.exit_code == 2 and "sorted" in r.stderr


def test_match_flags_and_out(run, data_dir, tmp_path):
    h = _history(tmp_path, [{"timestamp": "2020-01-17T03:00:00Z", "lat": 34.6937, "lon": 135.5023}])
    assert json.loads(run("match", h, data_dir / "figure3.ttl").stdout)["candidates"] == []
    out = tmp_path / "report.json"
    r = run("match", h, data_dir / "figure3.ttl", "--padding-days", 1, "--out", out)
    assert r.exit_code == 0 and r.stdout == ""
    report = json.loads(out.read_text())
    assert report["config"]["timePaddingDays"] == 1 and len(report["candidates"]) == 1
    r = run("match", h, data_dir / "figure3.ttl", "--padding-days", 1, "--min-confidence", "Medium")
    assert json.loads(r.stdout)["candidates"] == []
    assert run("match", h, data_dir / "figure3.ttl", "--padding-days", -1).exit_code == 2
    assert run("match", tmp_path / "nope.json", data_dir / "figure3.ttl").exit_code == 3


def test_match_figure4_unmatchable(run, data_dir, tmp_path):
    h = _history(tmp_path, [{"timestamp": "2020-01-28T03:00:00Z", "lat": 34.685, "lon": 135.805}])
    report = json.loads(run("match", h, data_dir / "figure4.ttl", "--padding-days", 3).stdout)
    assert report["candidates"] == [] and report["tallies"]["unmatchableMoves"] == 1


def test_match_oracle_corpus(run, figure3, tmp_path):
    """The oracle writes its expected report first; the command must reproduce it."""
    g = synthetic_graph(figure3, 120)
    data = tmp_path / "data.ttl"
    data.write_text(serialize(g), encoding="utf-8")
    gaz = Gazetteer.default()
    centers = [gaz.get("http://geonames.jp/resource/" + c) for c in ("Tokyo", "Osaka", "Chiba")]
    rng = random.Random(20200131)
    fixes = []
    t = dt.datetime(2020, 1, 14, tzinfo=dt.timezone.utc)
    for _ in range(20):
        t += dt.timedelta(hours=rng.uniform(1, 40))
        e = rng.choice(centers)
        spread = e.radius_km * 1.4 / 111
        fixes.append(LocationFix(t, e.latitude + rng.uniform(-spread, spread), e.longitude + rng.uniform(-spread, spread)))
    h = _history(tmp_path, history_to_json(fixes))
    for padding in (0, 1, 3):
        expected = sorted(match_oracle(fixes, g, gaz, padding_days=padding))
        expected_file = tmp_path / f"expected-{padding}.json"
        expected_file.write_text(json.dumps([[str(x) if isinstance(x, dt.date) else x for x in row] for row in expected]))
        r = run("match", h, data, "--padding-days", padding)
        assert r.exit_code == 0
        got = sorted((c["moveId"], c["endpoint"], c["place"], tuple(c["fixIndices"]), c["overlapStart"],
                      c["overlapEnd"], c["confidence"], c["distanceKm"]) for c in json.loads(r.stdout)["candidates"])
        want = [tuple(row[:3]) + (tuple(row[3]),) + tuple(row[4:]) for row in json.loads(expected_file.read_text())]
        assert len(got) == len(want) > 0
        for a, b in zip(got, want):
            assert a[:7] == b[:7] and abs(a[7] - b[7]) < 1e-5


# export

def test_export_formats(run, data_dir, figure3, tmp_path):
    ttl = run("export", data_dir / "figure3.ttl").stdout
    assert ttl == serialize(figure3)
    nt = run("export", data_dir / "figure3.ttl", "--format", "nt").stdout
    assert len(nt.splitlines()) == 48
    js = json.loads(run("export", data_dir / "figure3.ttl", "--format", "json").stdout)
    assert len(js["moves"]) == 2
    out = tmp_path / "x.ttl"
    assert run("export", data_dir / "figure3.ttl", "--out", out).exit_code == 0
    assert out.read_text(encoding="utf-8") == ttl


# serve

def test_serve_invalid_snapshot_exits_before_binding(run, tmp_path, monkeypatch):
    import uvicorn
    monkeypatch.setattr(uvicorn, "run", lambda *a, **k: pytest.fail("server started"))
    (tmp_path / "bad.ttl").write_text("<https://plod.info/data/Z-P01-M01> a <https://schema.org/MoveAction> ;"
                                      " <https://schema.org/agent> <https://plod.info/data/Z-P01> .\n")
    r = run("serve", tmp_path)
    assert r.exit_code == 1 and "DANGLING_REF" in r.stderr
    empty = tmp_path / "empty"
    empty.mkdir()
    assert run("serve", empty).exit_code == 1
    assert run("serve", tmp_path / "missing").exit_code == 3
    monkeypatch.delenv("PLOD_DATA_DIR", raising=False)
    assert run("serve").exit_code == 2
    assert run("serve", tmp_path, "--bind", "nonsense").exit_code == 2


def test_serve_starts_with_snapshot(run, data_dir, monkeypatch):
    import uvicorn
    seen = {}
    monkeypatch.setattr(uvicorn, "run", lambda app, **kw: seen.update(app=app, **kw))
    r = run("serve", data_dir / "figure3.ttl", "--bind", "127.0.0.1:8765", "--publish-token", "t")
    assert r.exit_code == 0 and (seen["host"], seen["port"]) == ("127.0.0.1", 8765)
    c = TestClient(seen["app"])
    q = c.get("/query", params={"area": "Osaka"})
    assert q.status_code == 200 and "12202001311-P01-M01" in q.text
    assert c.get("/cases/unknown").status_code == 404
    assert c.get("/query", params={"area": "Osaka"}, headers={"If-None-Match": q.headers["etag"]}).status_code == 304


def test_serve_env_fallbacks(run, data_dir, monkeypatch):
    import uvicorn
    seen = {}
    monkeypatch.setattr(uvicorn, "run", lambda app, **kw: seen.update(app=app, **kw))
    monkeypatch.setenv("PLOD_DATA_DIR", str(data_dir / "figure3.ttl"))
    monkeypatch.setenv("PLOD_BIND", "0.0.0.0:9001")
    assert run("serve").exit_code == 0
    assert (seen["host"], seen["port"]) == ("0.0.0.0", 9001)


# query client

@pytest.fixture(scope="module")
def live_url(figure3):
    import uvicorn
    store = SnapshotStore()
    store.publish(figure3)
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    server = uvicorn.Server(uvicorn.Config(create_app(store), host="127.0.0.1", port=port, log_level="warning"))
    t = threading.Thread(target=server.run, daemon=True)
    t.start()
    deadline = time.time() + 10
    while not server.started and time.time() < deadline:
        time.sleep(0.02)
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    t.join(10)


def test_query_client(run, live_url):
    r = run("query", "--url", live_url, "--area", "Osaka", "--since", "2020-01-16", "--until", "2020-01-16")
    assert r.exit_code == 0 and "12202001311-P01-M01" in r.stdout and "-M02" not in r.stdout
    r = run("query", "--url", live_url, "--case", "12202001311-P01-M02", "--format", "json")
    assert [m["id"] for m in json.loads(r.stdout)["moves"]] == ["12202001311-P01-M02"]
    assert run("query", "--url", live_url, "--since", "2020-02-01", "--until", "2020-01-01").exit_code == 2
    assert run("query", "--url", live_url, "--case", "nope").exit_code == 1
    r = run("query", "--url", live_url, "--area", "Atlantis")
    assert r.exit_code == 0 and "unknown area" in r.stderr


def test_query_client_unreachable(run):
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    assert run("query", "--url", f"http://127.0.0.1:{port}").exit_code == 3
