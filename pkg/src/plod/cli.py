"""Operator command line: ``plod validate|ingest|stats|match|export|serve|query``.

Exit codes: 0 success, 1 validation errors, 2 usage error, 3 I/O or parse failure.
"""
from __future__ import annotations

import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional

import click

from plod.ingest import (
    IngestError, ReleaseRecord, default_registry, evaluation_pipeline, ingest, load_records,
    prepare_corpus, stats,
)
from plod.match import Confidence, Gazetteer, MatchConfig, load_history, match_history
from plod.model import InvalidArgument, PlodGraph, ValidationIssue, errors, merge_graphs, validate_graph
from plod.query import canonical_ntriples
from plod.service.schemas import GraphOut
from plod.turtle import SerializationRefused, TurtleSyntaxError, read_file, serialize, triple_set

OK, INVALID, USAGE, IO_FAILURE = 0, 1, 2, 3


def _echo_err(msg: str) -> None:
    click.echo(msg, err=True)


def _ttl_files(path: Path) -> list[Path]:
    return sorted(path.glob("*.ttl")) if path.is_dir() else [path]


def _load_graph(path: str) -> tuple[PlodGraph, list[ValidationIssue]]:
    """Merge the Turtle at *path* (file or directory); exit 3 on read/parse failure."""
    p = Path(path)
    files = _ttl_files(p)
    graphs = []
    for f in files:
        try:
            g, _ = read_file(f)
        except (OSError, TurtleSyntaxError) as e:
            _echo_err(f"{f}: {e}")
            sys.exit(IO_FAILURE)
        graphs.append(g)
    g = merge_graphs(graphs)
    return g, validate_graph(g)


def _write_out(text: str, out: Optional[str]) -> None:
    if out is None:
        click.echo(text, nl=False)
        return
    try:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as e:
        _echo_err(f"{out}: {e}")
        sys.exit(IO_FAILURE)


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(package_name="artifact")
def main():
    """Patient locational open data tools."""


@main.command()
@click.argument("paths", nargs=-1, required=True)
def validate(paths):
    """Parse and validate Turtle files; print one line per issue."""
    status = OK
    for path in paths:
        try:
            _, issues = read_file(path)
        except (OSError, TurtleSyntaxError) as e:
            _echo_err(f"{path}: {e}")
            status = IO_FAILURE
            continue
        for i in issues:
            click.echo(f"{path}: {i}" if len(paths) > 1 else str(i))
        if errors(issues) and status == OK:
            status = INVALID
    sys.exit(status)


def _read_record_docs(path: Path) -> tuple[list, int]:
    """Record documents under *path*, plus the number of files that are not JSON."""
    files = sorted(path.glob("*.json")) if path.is_dir() else [path]
    docs, bad = [], 0
    for f in files:
        try:
            doc = json.loads(f.read_text(encoding="utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as e:
            _echo_err(f"error: {f}: not a JSON record: {e}")
            bad += 1
            continue
        docs.extend(doc if isinstance(doc, list) else [doc])
    return docs, bad


@main.command("ingest")
@click.argument("records", nargs=-1, required=True)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False),
              help="Directory receiving one <releaseId>.ttl per release.")
@click.option("--prepare", is_flag=True,
              help="Infer omitted home endpoints and resolve same-as-case references first.")
def ingest_cmd(records, out_dir, prepare):
    """Convert release records (JSON) into PLOD Turtle."""
    docs, failed = [], 0
    for path in records:
        try:
            found, bad = _read_record_docs(Path(path))
        except OSError as e:
            _echo_err(f"{path}: {e}")
            sys.exit(IO_FAILURE)
        docs.extend(found)
        failed += bad
    parsed: list[ReleaseRecord] = []
    seen: set[str] = set()
    for d in docs:
        try:
            r = ReleaseRecord.from_json(d)
        except (IngestError, InvalidArgument, AttributeError) as e:
            _echo_err(f"error: {e}")
            failed += 1
            continue
        if r.release_id in seen:
            _echo_err(f"error: duplicate releaseId {r.release_id!r}")
            failed += 1
            continue
        seen.add(r.release_id)
        parsed.append(r)
    issues: list[ValidationIssue] = []
    if prepare:
        try:
            parsed = prepare_corpus(parsed, issues=issues)
        except IngestError as e:
            _echo_err(f"error: {e}")
            sys.exit(INVALID)
    for i in issues:
        _echo_err(str(i))
    registry = default_registry()
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        _echo_err(f"{out}: {e}")
        sys.exit(IO_FAILURE)
    written = 0
    for r in sorted(parsed, key=lambda r: r.release_id):
        try:
            g = ingest(r, registry)
            text = serialize(g)
        except (IngestError, InvalidArgument, SerializationRefused) as e:
            _echo_err(f"error: {r.release_id}: {e}")
            failed += 1
            continue
        try:
            (out / f"{r.release_id}.ttl").write_text(text, encoding="utf-8", newline="\n")
        except OSError as e:
            _echo_err(f"{out}: {e}")
            sys.exit(IO_FAILURE)
        written += 1
    _echo_err(f"ingested {written + failed} records: {written} written, {failed} failed")
    sys.exit(INVALID if failed else OK)


@main.command("stats")
@click.argument("corpus")
@click.option("--evaluation", is_flag=True, help="Expressiveness summary instead of the category table.")
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
def stats_cmd(corpus, evaluation, as_json):
    """Category by year table (or evaluation summary) for a record corpus."""
    path = Path(corpus)
    if not path.exists():
        _echo_err(f"{corpus}: no such file or directory")
        sys.exit(IO_FAILURE)
    try:
        records = load_records(path)
    except (OSError, IngestError) as e:
        _echo_err(f"{corpus}: {e}")
        sys.exit(IO_FAILURE)
    result = evaluation_pipeline(records) if evaluation else stats(records)
    if as_json:
        click.echo(json.dumps(result.to_json(), indent=2, ensure_ascii=False))
    else:
        click.echo(result.render(), nl=False)


@main.command("match")
@click.argument("history")
@click.argument("data")
@click.option("--gazetteer", "gazetteer_path", default=None, help="Gazetteer JSON/CSV (default: shipped).")
@click.option("--padding-days", type=click.IntRange(min=0), default=0, show_default=True)
@click.option("--min-confidence", type=click.Choice([c.value for c in Confidence]), default="Low",
              show_default=True)
@click.option("--max-candidates", type=click.IntRange(min=0), default=None)
@click.option("--utc-offset", type=float, default=9.0, show_default=True,
              help="Hours added to fix timestamps before taking the calendar day.")
@click.option("--out", default=None, help="Write the report here instead of standard output.")
def match_cmd(history, data, gazetteer_path, padding_days, min_confidence, max_candidates,
              utc_offset, out):
    """Match a resident's location history against published moves."""
    try:
        fixes = load_history(history)
    except (OSError, ValueError, KeyError, TypeError) as e:
        _echo_err(f"{history}: {e}")
        sys.exit(IO_FAILURE)
    try:
        gaz = Gazetteer.load(gazetteer_path) if gazetteer_path else Gazetteer.default()
    except (OSError, ValueError, KeyError) as e:
        _echo_err(f"{gazetteer_path}: {e}")
        sys.exit(IO_FAILURE)
    g, issues = _load_graph(data)
    if errors(issues):
        for i in errors(issues):
            _echo_err(str(i))
        sys.exit(INVALID)
    cfg = MatchConfig(padding_days=padding_days, max_candidates=max_candidates,
                      min_confidence=Confidence(min_confidence), utc_offset_hours=utc_offset)
    try:
        report = match_history(fixes, g, gaz, cfg)
    except InvalidArgument as e:
        _echo_err(f"usage error: {e}")
        sys.exit(USAGE)
    _write_out(json.dumps(report.to_json(), indent=2, ensure_ascii=False) + "\n", out)
    n = len(report.candidates)
    if n:
        _echo_err(f"*** {n} possible contact{'s' if n != 1 else ''} with published patient moves ***")
    else:
        _echo_err("no possible contacts found")


@main.command("export")
@click.argument("data")
@click.option("--format", "fmt", type=click.Choice(["ttl", "json", "nt"]), default="ttl", show_default=True)
@click.option("--out", default=None)
def export_cmd(data, fmt, out):
    """Merge Turtle files into one canonical document."""
    g, issues = _load_graph(data)
    if errors(issues):
        for i in errors(issues):
            _echo_err(str(i))
        sys.exit(INVALID)
    if fmt == "ttl":
        text = serialize(g)
    elif fmt == "nt":
        text = canonical_ntriples(triple_set(g))
    else:
        text = GraphOut.of(g).model_dump_json(by_alias=True, indent=2) + "\n"
    _write_out(text, out)


@main.command("serve")
@click.argument("data_dir", required=False)
@click.option("--bind", default=None, help="HOST:PORT (default from PLOD_BIND or 127.0.0.1:8000).")
@click.option("--publish-token", default=None, help="Bearer token for POST /snapshot (default PLOD_PUBLISH_TOKEN).")
def serve_cmd(data_dir, bind, publish_token):
    """Serve the snapshot in DATA_DIR (or PLOD_DATA_DIR) over HTTP."""
    import uvicorn

    from plod.query import SnapshotStore
    from plod.service.app import (
        DEFAULT_BIND, ENV_BIND, ENV_DATA_DIR, DataDirError, create_app, load_data_dir, parse_bind,
    )

    data_dir = data_dir or os.environ.get(ENV_DATA_DIR)
    if not data_dir:
        raise click.UsageError(f"give DATA_DIR or set {ENV_DATA_DIR}")
    try:
        host, port = parse_bind(bind or os.environ.get(ENV_BIND) or DEFAULT_BIND)
    except ValueError as e:
        raise click.UsageError(str(e))
    if not Path(data_dir).exists():
        _echo_err(f"{data_dir}: no such file or directory")
        sys.exit(IO_FAILURE)
    try:
        g, warnings = load_data_dir(data_dir)
    except DataDirError as e:
        _echo_err(str(e))
        for i in e.issues:
            _echo_err(str(i))
        sys.exit(INVALID)
    for i in warnings:
        _echo_err(str(i))
    store = SnapshotStore()
    snap = store.publish(g)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")
    _echo_err(f"serving snapshot v{snap.version} ({len(g)} entities) on http://{host}:{port}")
    uvicorn.run(create_app(store, publish_token=publish_token), host=host, port=port,
                access_log=False, log_level="warning")


@main.command("query")
@click.option("--url", default="http://127.0.0.1:8000", show_default=True, help="Service base URL.")
@click.option("--since")
@click.option("--until")
@click.option("--area")
@click.option("--disease")
@click.option("--case", "case_pid", default=None, help="Fetch the closure of one PID instead.")
@click.option("--format", "fmt", type=click.Choice(["ttl", "json"]), default="ttl", show_default=True)
def query_cmd(url, since, until, area, disease, case_pid, fmt):
    """Run a simplified query against a running service."""
    import httpx

    params = {k: v for k, v in (("since", since), ("until", until), ("area", area),
                                ("disease", disease), ("format", fmt)) if v}
    path = f"/cases/{case_pid}" if case_pid else "/query"
    try:
        resp = httpx.get(url.rstrip("/") + path, params=params, timeout=30)
    except httpx.HTTPError as e:
        _echo_err(f"{url}: {e}")
        sys.exit(IO_FAILURE)
    diagnostic = resp.headers.get("x-plod-diagnostic")
    if diagnostic:
        _echo_err(f"diagnostic: {diagnostic}")
    if resp.status_code != 200:
        _echo_err(f"HTTP {resp.status_code}: {resp.text}")
        sys.exit(USAGE if resp.status_code == 400 else IO_FAILURE if resp.status_code >= 500 else INVALID)
    click.echo(resp.text, nl=False)


if __name__ == "__main__":
    main()
