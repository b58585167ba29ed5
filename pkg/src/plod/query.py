"""Read-only querying over immutable, versioned PLOD snapshots.

Two routes answer the same question. :func:`evaluate_simple_query` walks the
typed graph through indexes; :func:`canonical_query` expresses each simple
query as basic graph patterns run by :func:`select_triples`, with the few
comparisons BGPs cannot state (date ranges, "has no located endpoint")
applied to the bindings afterwards. The canonical form of a query with
since ``S``, until ``U``, area ``A`` and disease ``D`` is::

    moves   = { ?m | (?m rdf:type schema:MoveAction) }
    D:        keep ?m with (?m schema:agent ?p) (?p schema:healthCondition <d>), d in D
    A:        keep ?m with (?m schema:fromLocation <a>)
                      or   (?m schema:toLocation <a>)
                      or   (?m schema:agent ?p) (?p schema:homeLocation <a>)
                           and no IRI-valued fromLocation/toLocation on ?m,   a in A
    S, U:     keep ?m whose [startTime, endTime] (either bound alone stands for
              both) intersects [S, U]; moves without dates fail a date filter
    closure = ?m, their agents, the agents' events, reports whose mainEntity is
              one of those events, places used by any of these, the agents'
              diseases and the diseases' codes (each required to be typed)
    result  = every triple (?x ?p ?o) with ?x in the closure

An empty query returns the whole snapshot.
"""
from __future__ import annotations

import datetime as dt
import hashlib
import threading
from collections import OrderedDict, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence, Union

from plod.model import (
    Event, InfectiousDisease, InvalidArgument, Literal, MoveAction, Patient, Pid, PidKind,
    PlodGraph, Report, ValidationIssue, is_located, parse_pid, to_uri, validate_graph,
)
from plod.turtle import (
    PREFIXES, RDF_TYPE, RDFS_LABEL, SCHEMA, Term, Triple, serialize, term_key, triple_set,
)


class InvalidQuery(InvalidArgument):
    pass


class PublishRefused(ValueError):
    def __init__(self, issues: Sequence[ValidationIssue]):
        errs = [i for i in issues if i.is_error]
        super().__init__(f"snapshot has {len(errs)} validation error(s); first: {errs[0]}")
        self.issues = list(issues)


# --- canonical form and validators

def _escape(s: str) -> str:
    return (s.replace("\\", "\\\\").replace('"', '\\"')
            .replace("\n", "\\n").replace("\r", "\\r"))


def ntriples_term(o: Term) -> str:
    if isinstance(o, str):
        return f"<{o}>"
    text = f'"{_escape(o.lexical)}"'
    if o.lang:
        return f"{text}@{o.lang}"
    if o.datatype:
        return f"{text}^^<{o.datatype}>"
    return text


def canonical_ntriples(triples: Iterable[Triple]) -> str:
    lines = sorted(f"{ntriples_term(t.subject)} {ntriples_term(t.predicate)} {ntriples_term(t.object)} .\n"
                   for t in triples)
    return "".join(lines)


def strong_validator(triples: Iterable[Triple]) -> str:
    return hashlib.sha256(canonical_ntriples(triples).encode("utf-8")).hexdigest()


# --- triple patterns

class Var(NamedTuple):
    name: str

    def __repr__(self) -> str:
        return f"?{self.name}"


PatternTerm = Union[Var, str, Literal]


def var(name: str) -> Var:
    return Var(name.lstrip("?"))


class TriplePattern(NamedTuple):
    subject: PatternTerm
    predicate: PatternTerm
    object: PatternTerm

    @property
    def variables(self) -> list[str]:
        return [t.name for t in self if isinstance(t, Var)]


class TripleIndex:
    """Subject / predicate / object hash indexes over a triple set."""

    def __init__(self, triples: Iterable[Triple]):
        self.all = list(triples)
        self.s: dict = defaultdict(list)
        self.p: dict = defaultdict(list)
        self.o: dict = defaultdict(list)
        for t in self.all:
            self.s[t.subject].append(t)
            self.p[t.predicate].append(t)
            self.o[t.object].append(t)

    def candidates(self, s, p, o) -> list[Triple]:
        pools = []
        if not isinstance(s, Var):
            pools.append(self.s.get(s, ()))
        if not isinstance(p, Var):
            pools.append(self.p.get(p, ()))
        if not isinstance(o, Var):
            pools.append(self.o.get(o, ()))
        if not pools:
            return self.all
        return min(pools, key=len)


def _bind(term: PatternTerm, binding: dict) -> PatternTerm:
    if isinstance(term, Var):
        return binding.get(term.name, term)
    return term


def select_triples(patterns: Sequence[TriplePattern], source, *, scan_guard: bool = False
                   ) -> list[dict[str, Term]]:
    """Conjunctive triple-pattern matching (the basic-graph-pattern fragment).

    ``source`` is a :class:`Snapshot`, a :class:`TripleIndex` or an iterable
    of triples. Bindings come back sorted by their values in variable-name
    order. With ``scan_guard`` on, a pattern made only of variables is
    refused.
    """
    if not patterns:
        raise InvalidQuery("at least one triple pattern is required")
    patterns = [TriplePattern(*p) for p in patterns]
    if scan_guard:
        for p in patterns:
            if all(isinstance(t, Var) for t in p):
                raise InvalidQuery(f"pattern {p} has no constant term (full scan refused)")
    if isinstance(source, Snapshot):
        index = source.index
    elif isinstance(source, TripleIndex):
        index = source
    else:
        index = TripleIndex(source)

    bindings: list[dict] = [{}]
    for pat in patterns:
        nxt: list[dict] = []
        for b in bindings:
            s, p, o = (_bind(t, b) for t in pat)
            for t in index.candidates(s, p, o):
                new = dict(b)
                ok = True
                for pt, value in zip((s, p, o), t):
                    if isinstance(pt, Var):
                        if new.setdefault(pt.name, value) != value:
                            ok = False
                            break
                    elif pt != value:
                        ok = False
                        break
                if ok:
                    nxt.append(new)
        bindings = nxt
        if not bindings:
            break
    names = sorted({n for p in patterns for n in p.variables})
    unique = {tuple(b[n] for n in names): b for b in bindings}
    return [unique[k] for k in sorted(unique, key=lambda k: [term_key(v) for v in k])]


# --- snapshots

@dataclass(eq=False)
class Snapshot:
    """An immutable published graph. Derived indexes and renderings are memoized."""

    graph: PlodGraph
    version: int
    built_at: dt.datetime
    triples: frozenset
    strong_validator: str
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)
    _index: Optional[TripleIndex] = field(default=None, repr=False)
    _typed: Optional["_TypedIndex"] = field(default=None, repr=False)
    _cache: OrderedDict = field(default_factory=OrderedDict, repr=False)
    cache_size: int = 4096

    @classmethod
    def build(cls, graph: PlodGraph, version: int) -> "Snapshot":
        triples = triple_set(graph)
        return cls(graph, version, dt.datetime.now(dt.timezone.utc), triples, strong_validator(triples))

    @property
    def index(self) -> TripleIndex:
        if self._index is None:
            with self._lock:
                if self._index is None:
                    self._index = TripleIndex(self.triples)
        return self._index

    @property
    def typed(self) -> "_TypedIndex":
        if self._typed is None:
            with self._lock:
                if self._typed is None:
                    self._typed = _TypedIndex(self.graph)
        return self._typed

    def memo(self, key, compute):
        """Memoize a rendering for this snapshot (bounded LRU)."""
        try:
            value = self._cache[key]
            self._cache.move_to_end(key)
            return value
        except KeyError:
            pass
        value = compute()
        with self._lock:
            self._cache[key] = value
            while len(self._cache) > self.cache_size:
                self._cache.popitem(last=False)
        return value


class SnapshotStore:
    """Single-publisher, many-reader holder of the current snapshot.

    Readers take :attr:`current` once per request and use that object
    throughout; publishing builds the new snapshot completely before one
    reference assignment makes it visible.
    """

    def __init__(self):
        self._current: Optional[Snapshot] = None
        self._publish_lock = threading.Lock()

    @property
    def current(self) -> Optional[Snapshot]:
        return self._current

    @property
    def version(self) -> int:
        snap = self._current
        return snap.version if snap else 0

    def publish(self, graph: PlodGraph) -> Snapshot:
        issues = validate_graph(graph)
        if any(i.is_error for i in issues):
            raise PublishRefused(issues)
        with self._publish_lock:
            snap = Snapshot.build(graph, self.version + 1)
            self._current = snap
        return snap


def publish_snapshot(graph: PlodGraph, store: Optional[SnapshotStore] = None) -> Snapshot:
    store = store if store is not None else SnapshotStore()
    return store.publish(graph)


# --- simple queries

@dataclass(frozen=True)
class SimpleQuery:
    since: Optional[dt.date] = None
    until: Optional[dt.date] = None
    area: Optional[str] = None
    disease: Optional[str] = None

    def __post_init__(self):
        if self.since and self.until and self.since > self.until:
            raise InvalidQuery(f"since {self.since} is after until {self.until}")

    @property
    def is_empty(self) -> bool:
        return self.since is None and self.until is None and not self.area and not self.disease

    @classmethod
    def from_params(cls, since: Optional[str] = None, until: Optional[str] = None,
                    area: Optional[str] = None, disease: Optional[str] = None) -> "SimpleQuery":
        def day(name, v):
            if not v:
                return None
            try:
                return dt.date.fromisoformat(v)
            except ValueError:
                raise InvalidQuery(f"{name} must be YYYY-MM-DD, got {v!r}") from None
        return cls(day("since", since), day("until", until), area or None, disease or None)

    def key(self) -> tuple:
        return (self.since, self.until, self.area, self.disease)


def expand_name(name: str) -> str:
    """Expand a known prefixed name (``gnjp:Osaka``); other strings pass through."""
    prefix, sep, local = name.partition(":")
    if sep and not local.startswith("//"):
        for p, ns in PREFIXES:
            if p == prefix:
                return ns + local
    return name


class _TypedIndex:
    def __init__(self, g: PlodGraph):
        self.patients = {p.id: p for p in g.patients}
        self.place_iris = {p.iri for p in g.places}
        self.place_labels: dict[str, set[str]] = defaultdict(set)
        for p in g.places:
            if p.label:
                self.place_labels[p.label.casefold()].add(p.iri)
        self.disease_iris = {d.iri for d in g.diseases}
        self.disease_names: dict[str, set[str]] = defaultdict(set)
        for d in g.diseases:
            for name in (d.label, d.name.lexical if d.name else None):
                if name:
                    self.disease_names[name.casefold()].add(d.iri)
        self.moves_by_place: dict[str, list[MoveAction]] = defaultdict(list)
        self.moves_by_home: dict[str, list[MoveAction]] = defaultdict(list)
        for m in g.moves:
            located = {loc for loc in (m.from_location, m.to_location) if is_located(loc)}
            for loc in located:
                self.moves_by_place[loc].append(m)
            if not located:
                agent = self.patients.get(m.agent)
                if agent is not None and agent.home_location:
                    self.moves_by_home[agent.home_location].append(m)
        self.reports_by_event: dict[Pid, list[Report]] = defaultdict(list)
        for r in g.reports:
            if r.main_entity is not None:
                self.reports_by_event[r.main_entity].append(r)
        self.patients_by_event: dict[Pid, list[Patient]] = defaultdict(list)
        for p in g.patients:
            if p.subject_of is not None:
                self.patients_by_event[p.subject_of].append(p)
        self.moves_by_agent: dict[Pid, list[MoveAction]] = defaultdict(list)
        for m in g.moves:
            if m.agent is not None:
                self.moves_by_agent[m.agent].append(m)
        self.events = {e.id: e for e in g.events}
        self.moves = {m.id: m for m in g.moves}
        self.reports = {r.id: r for r in g.reports}
        self.places = {p.iri: p for p in g.places}
        self.diseases = {d.iri: d for d in g.diseases}
        self.codes = {c.iri: c for c in g.codes}
        self.extra_by_subject: dict[str, list[Triple]] = defaultdict(list)
        for t in g.extra:
            self.extra_by_subject[t.subject].append(t)

    def areas(self, area: str) -> set[str]:
        iri = expand_name(area)
        if iri in self.place_iris:
            return {iri}
        return set(self.place_labels.get(area.casefold(), ()))

    def diseases_for(self, disease: str) -> set[str]:
        iri = expand_name(disease)
        if iri in self.disease_iris:
            return {iri}
        return set(self.disease_names.get(disease.casefold(), ()))


def _overlaps(m: MoveAction, since: Optional[dt.date], until: Optional[dt.date]) -> bool:
    iv = m.interval
    if iv is None:
        return False
    return (since is None or iv[1] >= since) and (until is None or iv[0] <= until)


def closure(g: PlodGraph, ix: _TypedIndex, moves: Iterable[MoveAction] = (),
            patients: Iterable[Patient] = (), events: Iterable[Pid] = ()) -> PlodGraph:
    """Smallest valid subgraph containing the seeds and everything they reference."""
    ms = {m.id: m for m in moves}
    ps = {p.id: p for p in patients}
    for m in ms.values():
        if m.agent in ix.patients:
            ps.setdefault(m.agent, ix.patients[m.agent])
    es = {e for e in events if e in ix.events}
    es |= {p.subject_of for p in ps.values() if p.subject_of in ix.events}
    rs = [r for e in es for r in ix.reports_by_event.get(e, ())]
    place_refs = {r.publisher for r in rs} | {p.home_location for p in ps.values()}
    place_refs |= {loc for m in ms.values() for loc in (m.from_location, m.to_location)}
    places = [ix.places[i] for i in place_refs if i in ix.places]
    diseases = [ix.diseases[p.health_condition] for p in ps.values() if p.health_condition in ix.diseases]
    diseases = list({d.iri: d for d in diseases}.values())
    codes = list({ix.codes[d.code].iri: ix.codes[d.code] for d in diseases if d.code in ix.codes}.values())
    sub = PlodGraph(
        events=[ix.events[e] for e in sorted(es)],
        reports=sorted(rs, key=lambda r: r.id),
        patients=sorted(ps.values(), key=lambda p: p.id),
        moves=sorted(ms.values(), key=lambda m: m.id),
        places=sorted(places, key=lambda p: p.iri),
        diseases=sorted(diseases, key=lambda d: d.iri),
        codes=sorted(codes, key=lambda c: c.iri),
    )
    keys = {to_uri(e.id) for e in sub.events} | {to_uri(r.id) for r in sub.reports}
    keys |= {to_uri(p.id) for p in sub.patients} | {to_uri(m.id) for m in sub.moves}
    keys |= {p.iri for p in sub.places} | {d.iri for d in sub.diseases} | {c.iri for c in sub.codes}
    extra = frozenset(t for k in keys for t in ix.extra_by_subject.get(k, ()))
    if extra:
        sub = PlodGraph(*(getattr(sub, n) for n in
                          ("events", "reports", "patients", "moves", "places", "diseases", "codes")),
                        extra=extra)
    return sub


def evaluate_simple_query(q: SimpleQuery, s: Snapshot,
                          diagnostics: Optional[list[str]] = None) -> PlodGraph:
    """Moves matching every given criterion, plus their referential closure."""
    if q.is_empty:
        return s.graph
    ix = s.typed
    candidates: Optional[Iterable[MoveAction]] = None
    if q.area:
        areas = ix.areas(q.area)
        if not areas and diagnostics is not None:
            diagnostics.append(f"unknown area {q.area!r}")
        hits = {}
        for a in sorted(areas):
            for m in [*ix.moves_by_place.get(a, ()), *ix.moves_by_home.get(a, ())]:
                hits[m.id] = m
        candidates = hits.values()
    if candidates is None:
        candidates = s.graph.moves
    diseases = None
    if q.disease:
        diseases = ix.diseases_for(q.disease)
        if not diseases and diagnostics is not None:
            diagnostics.append(f"unknown disease {q.disease!r}")
    selected = []
    for m in candidates:
        if (q.since or q.until) and not _overlaps(m, q.since, q.until):
            continue
        if diseases is not None:
            agent = ix.patients.get(m.agent)
            if agent is None or agent.health_condition not in diseases:
                continue
        selected.append(m)
    return closure(s.graph, ix, moves=selected)


def case_closure(s: Snapshot, pid_text: str) -> Optional[PlodGraph]:
    """Closure around one event, report, patient or move; ``None`` if unknown."""
    try:
        pid = parse_pid(pid_text)
    except InvalidArgument:
        return None
    ix = s.typed
    if pid.kind is PidKind.REPORT:
        r = ix.reports.get(pid)
        if r is None:
            return None
        if r.main_entity not in ix.events:
            return _only_report(ix, r)
        pid = r.main_entity
    if pid.kind is PidKind.EVENT:
        if pid not in ix.events:
            return None
        patients = ix.patients_by_event.get(pid, [])
        moves = [m for p in patients for m in ix.moves_by_agent.get(p.id, ())]
        return closure(s.graph, ix, moves=moves, patients=patients, events=[pid])
    if pid.kind is PidKind.PATIENT:
        p = ix.patients.get(pid)
        if p is None:
            return None
        return closure(s.graph, ix, moves=ix.moves_by_agent.get(pid, ()), patients=[p])
    m = ix.moves.get(pid)
    return None if m is None else closure(s.graph, ix, moves=[m])


def _only_report(ix: _TypedIndex, r: Report) -> PlodGraph:
    places = [ix.places[r.publisher]] if r.publisher in ix.places else []
    return PlodGraph(reports=[r], places=places)


# --- the documented reference route

SCHEMA_MOVE = SCHEMA + "MoveAction"


def _day(lit: Term) -> Optional[str]:
    if isinstance(lit, Literal) and len(lit.lexical) >= 10:
        return lit.lexical[:10]
    return None


def canonical_query(q: SimpleQuery, s: Snapshot) -> frozenset[Triple]:
    """Answer ``q`` through triple patterns only; see the module docstring."""
    if q.is_empty:
        return frozenset(Triple(b["s"], b["p"], b["o"])
                         for b in select_triples([(var("s"), var("p"), var("o"))], s))

    def col(name, patterns) -> set:
        return {b[name] for b in select_triples(patterns, s)}

    M, P, X = var("m"), var("p"), var("x")
    moves = col("m", [(M, RDF_TYPE, SCHEMA_MOVE)])
    if q.disease:
        ds = _resolve_by_patterns(q.disease, s, SCHEMA + "InfectiousDisease", with_name=True)
        moves &= {b["m"] for d in ds for b in select_triples(
            [(M, SCHEMA + "agent", P), (P, SCHEMA + "healthCondition", d)], s)}
    if q.area:
        areas = _resolve_by_patterns(q.area, s, SCHEMA + "Place")
        located = {b["m"] for pred in ("fromLocation", "toLocation")
                   for b in select_triples([(M, SCHEMA + pred, X)], s) if isinstance(b["x"], str)}
        hit = set()
        for a in areas:
            hit |= col("m", [(M, SCHEMA + "fromLocation", a)])
            hit |= col("m", [(M, SCHEMA + "toLocation", a)])
            hit |= col("m", [(M, SCHEMA + "agent", P), (P, SCHEMA + "homeLocation", a)]) - located
        moves &= hit
    if q.since or q.until:
        starts = {b["m"]: _day(b["x"]) for b in select_triples([(M, SCHEMA + "startTime", X)], s)}
        ends = {b["m"]: _day(b["x"]) for b in select_triples([(M, SCHEMA + "endTime", X)], s)}
        since = q.since.isoformat() if q.since else None
        until = q.until.isoformat() if q.until else None
        keep = set()
        for m in moves:
            lo, hi = starts.get(m) or ends.get(m), ends.get(m) or starts.get(m)
            if lo is None:
                continue
            if (since is None or hi >= since) and (until is None or lo <= until):
                keep.add(m)
        moves = keep

    def typed(cls) -> set:
        return col("x", [(X, RDF_TYPE, SCHEMA + cls)])

    def follow(subjects, pred) -> set:
        return {b["x"] for s_ in subjects for b in select_triples([(s_, pred, X)], s)}

    patients = follow(moves, SCHEMA + "agent") & typed("Patient")
    events = follow(patients, SCHEMA + "subjectOf") & typed("Event")
    reports = {b["x"] for e in events
               for b in select_triples([(X, SCHEMA + "mainEntity", e)], s)} & typed("Report")
    places = (follow(reports, SCHEMA + "publisher") | follow(patients, SCHEMA + "homeLocation")
              | follow(moves, SCHEMA + "fromLocation") | follow(moves, SCHEMA + "toLocation")) & typed("Place")
    diseases = follow(patients, SCHEMA + "healthCondition") & typed("InfectiousDisease")
    codes = follow(diseases, SCHEMA + "code") & typed("MedicalCode")
    out = set()
    for subject in moves | patients | events | reports | places | diseases | codes:
        for b in select_triples([(subject, var("p"), var("o"))], s):
            out.add(Triple(subject, b["p"], b["o"]))
    return frozenset(out)


def _resolve_by_patterns(name: str, s: Snapshot, cls: str, with_name: bool = False) -> set[str]:
    X, L = var("x"), var("l")
    members = {b["x"] for b in select_triples([(X, RDF_TYPE, cls)], s)}
    iri = expand_name(name)
    if iri in members:
        return {iri}
    preds = [RDFS_LABEL] + ([SCHEMA + "name"] if with_name else [])
    out = set()
    for pred in preds:
        for b in select_triples([(X, RDF_TYPE, cls), (X, pred, L)], s):
            if isinstance(b["l"], Literal) and b["l"].lexical.casefold() == name.casefold():
                out.add(b["x"])
    return out


# --- representations

def render_turtle(g: PlodGraph) -> str:
    return serialize(g, check=False)
