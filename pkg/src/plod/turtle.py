"""Reading and writing the Turtle subset PLOD is published in.

Supported syntax: ``@prefix``/``PREFIX`` directives, IRIs, prefixed names,
the ``a`` keyword, single-line strings with optional language tag or
datatype, and ``;`` / ``,`` / ``.`` punctuation. Blank nodes, collections,
numeric shorthands and long strings are rejected with a positioned error.

Serialization is deterministic: subjects are grouped by entity kind and
sorted by IRI, predicates follow the order used in published PLOD files.
"""
from __future__ import annotations

import bisect
import datetime as dt
import functools
import re
from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple, Optional, Union

from plod.model import (
    SCHEMA, SCHEMA_BOOLEAN, SCHEMA_INTEGER,
    Event, InfectiousDisease, InvalidArgument, IssueCode, Literal, MedicalCode,
    MoveAction, Patient, Pid, PidKind, Place, PlodDate, PlodGraph, Report,
    ValidationIssue, entity_key, parse_uri, to_uri, validate_graph,
)

RDF = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"
RDFS = "http://www.w3.org/2000/01/rdf-schema#"
DCTERMS = "http://purl.org/dc/terms/"
FOAF = "http://xmlns.com/foaf/0.1/"
GNJP = "http://geonames.jp/resource/"
PLOD = "https://plod.info/property/"

PREFIXES: tuple[tuple[str, str], ...] = (
    ("rdf", RDF),
    ("rdfs", RDFS),
    ("schema", SCHEMA),
    ("dcterms", DCTERMS),
    ("foaf", FOAF),
    ("gnjp", GNJP),
    ("plod", PLOD),
)

RDF_TYPE = RDF + "type"
RDFS_LABEL = RDFS + "label"

Term = Union[str, Literal]


class Triple(NamedTuple):
    subject: str
    predicate: str
    object: Term


class TurtleSyntaxError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class SerializationRefused(ValueError):
    def __init__(self, issue: ValidationIssue):
        super().__init__(f"graph has validation errors: {issue}")
        self.issue = issue


# --- value codecs: (encode model value -> term, decode term -> model value or None)

_DATE_RE = re.compile(r"^(\d{4})-(\d{2})-(\d{2})(?:$|T)")
_INT_RE = re.compile(r"^-?(?:0|[1-9][0-9]*)$")


def _enc_plain(v: str) -> Term:
    return Literal(v)


def _dec_plain(o: Term) -> Optional[str]:
    if isinstance(o, Literal) and o.datatype is None and o.lang is None:
        return o.lexical
    return None


def _dec_iri(o: Term) -> Optional[str]:
    return o if isinstance(o, str) else None


def _pid_codec(kind: PidKind):
    def dec(o: Term) -> Optional[Pid]:
        if not isinstance(o, str):
            return None
        try:
            pid = parse_uri(o)
        except InvalidArgument:
            return None
        return pid if pid.kind is kind else None
    return to_uri, dec


def _dec_date(o: Term) -> Optional[PlodDate]:
    if not isinstance(o, Literal) or o.lang is not None:
        return None
    m = _DATE_RE.match(o.lexical)
    if not m:
        return None
    try:
        day = dt.date(int(m[1]), int(m[2]), int(m[3]))
    except ValueError:
        return None
    return PlodDate(day, o.lexical, o.datatype)


def _enc_int(v: int) -> Term:
    return Literal(str(v), SCHEMA_INTEGER)


def _dec_int(o: Term) -> Optional[int]:
    if isinstance(o, Literal) and o.datatype == SCHEMA_INTEGER and _INT_RE.match(o.lexical):
        return int(o.lexical)
    return None


def _dec_literal(o: Term) -> Optional[Literal]:
    return o if isinstance(o, Literal) else None


def _dec_location(o: Term) -> Optional[str]:
    if isinstance(o, str):
        return o
    if o == Literal(""):
        return ""
    return None


def _enc_location(v: str) -> Term:
    return v if v else Literal("")


_TRUE = Literal("true", SCHEMA_BOOLEAN)


def _dec_true(o: Term) -> Optional[bool]:
    return True if o == _TRUE else None


_ENDPOINTS = ("fromLocation", "toLocation")


def _dec_endpoint_name(o: Term) -> Optional[str]:
    v = _dec_plain(o)
    return v if v in _ENDPOINTS else None


@dataclass(frozen=True)
class _Field:
    predicate: str
    attr: str
    encode: Callable
    decode: Callable
    multi: bool = False
    skip: Callable = staticmethod(lambda v: v is None)


def _f(predicate, attr, codec, **kw) -> _Field:
    return _Field(predicate, attr, codec[0], codec[1], **kw)


PLAIN = (_enc_plain, _dec_plain)
IRI = (lambda v: v, _dec_iri)
DATE = (PlodDate.literal, _dec_date)
INT = (_enc_int, _dec_int)
LIT = (lambda v: v, _dec_literal)
LOC = (_enc_location, _dec_location)

_LABEL = _f(RDFS_LABEL, "label", PLAIN)

# Field order is the order predicates are written in.
_FIELDS: dict[type, tuple[_Field, ...]] = {
    Event: (_LABEL,),
    Report: (
        _LABEL,
        _f(SCHEMA + "mainEntity", "main_entity", _pid_codec(PidKind.EVENT)),
        _f(PLOD + "numberOfPatients", "number_of_patients", INT),
        _f(SCHEMA + "datePublished", "date_published", DATE),
        _f(SCHEMA + "publisher", "publisher", IRI),
        _f(SCHEMA + "url", "url", IRI),
        _f(DCTERMS + "isReferencedBy", "is_referenced_by", IRI),
    ),
    Patient: (
        _LABEL,
        _f(SCHEMA + "subjectOf", "subject_of", _pid_codec(PidKind.EVENT)),
        _f(SCHEMA + "healthCondition", "health_condition", IRI),
        _f(PLOD + "dateConfirmed", "date_confirmed", DATE),
        _f(FOAF + "age", "age", PLAIN),
        _f(SCHEMA + "gender", "gender", PLAIN),
        _f(SCHEMA + "homeLocation", "home_location", IRI),
    ),
    MoveAction: (
        _LABEL,
        _f(SCHEMA + "agent", "agent", _pid_codec(PidKind.PATIENT)),
        _f(SCHEMA + "startTime", "start_time", DATE),
        _f(SCHEMA + "endTime", "end_time", DATE),
        _f(SCHEMA + "fromLocation", "from_location", LOC),
        _f(SCHEMA + "toLocation", "to_location", LOC),
        _f(SCHEMA + "instrument", "instrument", LIT),
        _f(PLOD + "rawText", "raw_text", PLAIN),
        _f(PLOD + "negated", "negated", (lambda v: _TRUE, _dec_true), skip=lambda v: not v),
        _f(PLOD + "derivedFrom", "derived_from", _pid_codec(PidKind.MOVE)),
        _f(PLOD + "inferred", "inferred", (_enc_plain, _dec_endpoint_name), multi=True,
           skip=lambda v: not v),
    ),
    Place: (_LABEL,),
    InfectiousDisease: (
        _LABEL,
        _f(SCHEMA + "name", "name", LIT),
        _f(SCHEMA + "infectiousAgent", "infectious_agent", PLAIN),
        _f(SCHEMA + "code", "code", IRI),
    ),
    MedicalCode: (
        _f(SCHEMA + "codeValue", "code_value", PLAIN),
        _f(SCHEMA + "codingSystem", "coding_system", PLAIN),
    ),
}

_CLASS_IRI: dict[type, str] = {
    Event: SCHEMA + "Event",
    Report: SCHEMA + "Report",
    Patient: SCHEMA + "Patient",
    MoveAction: SCHEMA + "MoveAction",
    Place: SCHEMA + "Place",
    InfectiousDisease: SCHEMA + "InfectiousDisease",
    MedicalCode: SCHEMA + "MedicalCode",
}
_CLASS_BY_IRI = {v: k for k, v in _CLASS_IRI.items()}
_PID_KIND = {Event: PidKind.EVENT, Report: PidKind.REPORT, Patient: PidKind.PATIENT,
             MoveAction: PidKind.MOVE}
_GROUP = {Event: "events", Report: "reports", Patient: "patients", MoveAction: "moves",
          Place: "places", InfectiousDisease: "diseases", MedicalCode: "codes"}


def entity_triples(e) -> list[Triple]:
    """Triples describing one entity, in writing order."""
    s = entity_key(e)
    out = [Triple(s, RDF_TYPE, _CLASS_IRI[type(e)])]
    for f in _FIELDS[type(e)]:
        v = getattr(e, f.attr)
        if f.skip(v):
            continue
        for item in (v if f.multi else (v,)):
            out.append(Triple(s, f.predicate, f.encode(item)))
    return out


# entities are immutable values shared between successive snapshots, so
# their triples and Turtle blocks are cached by value
@functools.lru_cache(maxsize=1 << 16)
def _cached_triples(e) -> tuple[Triple, ...]:
    return tuple(entity_triples(e))


def triple_set(g: PlodGraph) -> frozenset[Triple]:
    out: set[Triple] = set(g.extra)
    for e in g.entities():
        out.update(_cached_triples(e))
    return frozenset(out)


def term_key(o: Term) -> tuple:
    if isinstance(o, Literal):
        return (1, o.lexical, o.datatype or "", o.lang or "")
    return (0, o)


# --- writing

_LOCAL_RE = re.compile(r"^[A-Za-z0-9_](?:[A-Za-z0-9_-]*)$")
_IRI_ESCAPE = re.compile(r'[\x00-\x20<>"{}|^`\\]')
_STR_ESCAPES = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\r": "\\r", "\t": "\\t"}
_STR_ESCAPE = re.compile(r'[\\"\n\r\t]')


def _full_iri(iri: str) -> str:
    return "<" + _IRI_ESCAPE.sub(lambda m: f"\\u{ord(m.group()):04X}", iri) + ">"


def _iri(iri: str) -> str:
    for prefix, ns in PREFIXES:
        if iri.startswith(ns) and _LOCAL_RE.match(iri[len(ns):]):
            return f"{prefix}:{iri[len(ns):]}"
    return _full_iri(iri)


def _term(o: Term) -> str:
    if isinstance(o, str):
        return _iri(o)
    text = '"' + _STR_ESCAPE.sub(lambda m: _STR_ESCAPES[m.group()], o.lexical) + '"'
    if o.lang:
        return f"{text}@{o.lang}"
    if o.datatype:
        return f"{text}^^{_iri(o.datatype)}"
    return text


def _block(subject: str, pairs: list[tuple[str, Term]]) -> str:
    lines = []
    for pred, obj in pairs:
        verb = "a" if pred == RDF_TYPE else _iri(pred)
        lines.append(f"{verb} {_term(obj)}")
    return _full_iri(subject) + " " + " ;\n    ".join(lines) + " .\n"


@functools.lru_cache(maxsize=1 << 16)
def _entity_block(e) -> str:
    return _block(entity_key(e), [(t.predicate, t.object) for t in _cached_triples(e)])


def serialize(g: PlodGraph, *, check: bool = True) -> str:
    """Write ``g`` as Turtle. Refuses graphs with validation errors unless ``check`` is off."""
    if check:
        for issue in validate_graph(g):
            if issue.is_error:
                raise SerializationRefused(issue)
    extra_by_subject: dict[str, list[Triple]] = defaultdict(list)
    for t in g.extra:
        extra_by_subject[t.subject].append(t)

    def extras(s: str) -> list[tuple[str, Term]]:
        ts = sorted(extra_by_subject.pop(s, ()), key=lambda t: (t.predicate, term_key(t.object)))
        return [(t.predicate, t.object) for t in ts]

    parts = ["".join(f"@prefix {p}: <{ns}> .\n" for p, ns in PREFIXES)]
    for group in ("events", "reports", "patients", "moves", "places", "diseases", "codes"):
        ents = sorted(getattr(g, group), key=entity_key)
        seen: set[str] = set()
        for e in ents:
            s = entity_key(e)
            if s in seen or s not in extra_by_subject:
                parts.append(_entity_block(e))
                seen.add(s)
                continue
            seen.add(s)
            parts.append(_block(s, [(t.predicate, t.object) for t in _cached_triples(e)] + extras(s)))
    for s in sorted(extra_by_subject):
        parts.append(_block(s, extras(s)))
    return "\n".join(parts)


# --- reading

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+|\#[^\n]*)
  | (?P<iri><(?:[^<>"{}|^`\\\x00-\x20]|\\u[0-9A-Fa-f]{4}|\\U[0-9A-Fa-f]{8})*>)
  | (?P<long>\"\"\"|''')
  | (?P<string>"(?:[^"\\\n\r]|\\.)*"|'(?:[^'\\\n\r]|\\.)*')
  | (?P<directive>@prefix\b|@base\b)
  | (?P<lang>@[A-Za-z]+(?:-[A-Za-z0-9]+)*)
  | (?P<carets>\^\^)
  | (?P<pname>(?:[A-Za-z][\w.-]*)?:(?:[\w-](?:[\w.-]*[\w-])?)?)
  | (?P<word>[A-Za-z]+)
  | (?P<punct>[;,.])
  | (?P<unsupported>_:|\[|\(|[-+]?[0-9])
""", re.VERBOSE)

_ECHAR = {"t": "\t", "b": "\b", "n": "\n", "r": "\r", "f": "\f", '"': '"', "'": "'", "\\": "\\"}
_UCHAR_RE = re.compile(r"\\u([0-9A-Fa-f]{4})|\\U([0-9A-Fa-f]{8})")


class _Tok(NamedTuple):
    kind: str
    text: str
    pos: int


class _Reader:
    def __init__(self, text: str):
        self.text = text
        self.newlines = [i for i, c in enumerate(text) if c == "\n"]
        self.tokens = self._tokenize()
        self.i = 0
        self.prefixes: dict[str, str] = {}

    def where(self, pos: int) -> tuple[int, int]:
        line = bisect.bisect_left(self.newlines, pos)
        start = self.newlines[line - 1] + 1 if line else 0
        return line + 1, pos - start + 1

    def error(self, message: str, pos: Optional[int] = None):
        if pos is None:
            pos = self.tokens[self.i].pos if self.i < len(self.tokens) else len(self.text)
        raise TurtleSyntaxError(message, *self.where(pos))

    def _tokenize(self) -> list[_Tok]:
        out, pos, n = [], 0, len(self.text)
        while pos < n:
            m = _TOKEN_RE.match(self.text, pos)
            if m is None:
                self.error(f"unexpected character {self.text[pos]!r}", pos)
            kind = m.lastgroup
            if kind == "unsupported" or kind == "long":
                self.error(f"unsupported syntax {m.group()!r}", pos)
            if kind != "ws":
                out.append(_Tok(kind, m.group(), pos))
            pos = m.end()
        return out

    def peek(self) -> Optional[_Tok]:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def next(self, expected: str) -> _Tok:
        tok = self.peek()
        if tok is None:
            self.error(f"unexpected end of input, expected {expected}")
        self.i += 1
        return tok

    def expect_punct(self, ch: str) -> None:
        tok = self.next(repr(ch))
        if tok.kind != "punct" or tok.text != ch:
            self.error(f"expected {ch!r}, found {tok.text!r}", tok.pos)

    # grammar

    def document(self) -> list[Triple]:
        triples: list[Triple] = []
        while self.peek() is not None:
            tok = self.peek()
            if tok.kind == "directive" or (tok.kind == "word" and tok.text.upper() == "PREFIX"):
                self.prefix_directive()
            else:
                triples.extend(self.triples())
                self.expect_punct(".")
        return triples

    def prefix_directive(self) -> None:
        tok = self.next("directive")
        if tok.text == "@base":
            self.error("@base is not supported", tok.pos)
        name = self.next("prefix name")
        if name.kind != "pname" or not name.text.endswith(":") or name.text.count(":") != 1:
            self.error(f"expected prefix name, found {name.text!r}", name.pos)
        iri = self.next("IRI")
        if iri.kind != "iri":
            self.error(f"expected IRI, found {iri.text!r}", iri.pos)
        self.prefixes[name.text[:-1]] = self.iri_value(iri)
        if tok.kind == "directive":
            self.expect_punct(".")

    def iri_value(self, tok: _Tok) -> str:
        return _UCHAR_RE.sub(lambda m: chr(int(m[1] or m[2], 16)), tok.text[1:-1])

    def resolve(self, tok: _Tok) -> str:
        if tok.kind == "iri":
            return self.iri_value(tok)
        prefix, _, local = tok.text.partition(":")
        if prefix not in self.prefixes:
            self.error(f"undefined prefix {prefix!r}", tok.pos)
        return self.prefixes[prefix] + local

    def triples(self) -> list[Triple]:
        tok = self.next("subject")
        if tok.kind not in ("iri", "pname"):
            self.error(f"expected subject, found {tok.text!r}", tok.pos)
        subject = self.resolve(tok)
        out: list[Triple] = []
        while True:
            verb = self.next("predicate")
            if verb.kind == "word" and verb.text == "a":
                pred = RDF_TYPE
            elif verb.kind in ("iri", "pname"):
                pred = self.resolve(verb)
            else:
                self.error(f"expected predicate, found {verb.text!r}", verb.pos)
            out.append(Triple(subject, pred, self.object()))
            while self._at(","):
                self.i += 1
                out.append(Triple(subject, pred, self.object()))
            if not self._at(";"):
                return out
            while self._at(";"):
                self.i += 1
            if self._at("."):
                return out

    def _at(self, ch: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.kind == "punct" and tok.text == ch

    def object(self) -> Term:
        tok = self.next("object")
        if tok.kind in ("iri", "pname"):
            return self.resolve(tok)
        if tok.kind != "string":
            self.error(f"expected object, found {tok.text!r}", tok.pos)
        lexical = self.unescape(tok)
        nxt = self.peek()
        if nxt is not None and nxt.kind == "lang":
            self.i += 1
            return Literal(lexical, lang=nxt.text[1:])
        if nxt is not None and nxt.kind == "carets":
            self.i += 1
            dtype = self.next("datatype")
            if dtype.kind not in ("iri", "pname"):
                self.error(f"expected datatype IRI, found {dtype.text!r}", dtype.pos)
            return Literal(lexical, datatype=self.resolve(dtype))
        return Literal(lexical)

    def unescape(self, tok: _Tok) -> str:
        body = tok.text[1:-1]
        out, i = [], 0
        while i < len(body):
            c = body[i]
            if c != "\\":
                out.append(c)
                i += 1
                continue
            nxt = body[i + 1]
            if nxt in _ECHAR:
                out.append(_ECHAR[nxt])
                i += 2
                continue
            m = _UCHAR_RE.match(body, i)
            if m is None:
                self.error(f"bad escape \\{nxt}", tok.pos + 1 + i)
            out.append(chr(int(m[1] or m[2], 16)))
            i = m.end()
        return "".join(out)


def parse_triples(text: str) -> list[Triple]:
    """Parse Turtle text into triples in document order (duplicates removed)."""
    return list(dict.fromkeys(_Reader(text).document()))


def graph_from_triples(triples: Iterable[Triple]) -> tuple[PlodGraph, list[ValidationIssue]]:
    """Type a triple set into a :class:`PlodGraph`.

    Triples the model cannot hold (unknown predicates, surplus values,
    values of an unexpected shape, untyped subjects) go to ``extra``.
    """
    by_subject: dict[str, list[Triple]] = defaultdict(list)
    for t in dict.fromkeys(triples):
        by_subject[t.subject].append(t)

    groups: dict[str, list] = {name: [] for name in _GROUP.values()}
    extra: set[Triple] = set()
    warnings: list[ValidationIssue] = []
    order = list(_CLASS_IRI)
    for subject, ts in by_subject.items():
        classes = sorted({_CLASS_BY_IRI[t.object] for t in ts
                          if t.predicate == RDF_TYPE and t.object in _CLASS_BY_IRI},
                         key=order.index)
        if not classes:
            extra.update(ts)
            continue
        cls = classes[0]
        kw: dict = {}
        if cls in _PID_KIND:
            try:
                pid = parse_uri(subject)
            except InvalidArgument:
                pid = None
            if pid is None or pid.kind is not _PID_KIND[cls]:
                warnings.append(ValidationIssue(
                    IssueCode.UNRECOGNIZED_SUBJECT, subject,
                    f"typed {_CLASS_IRI[cls]} but not a PLOD {_PID_KIND[cls].value} URI"))
                extra.update(ts)
                continue
            kw["id"] = pid
        else:
            kw["iri"] = subject
        fields = {f.predicate: f for f in _FIELDS[cls]}
        multi: dict[str, list] = defaultdict(list)
        type_seen = False
        for t in ts:
            if t.predicate == RDF_TYPE and t.object == _CLASS_IRI[cls] and not type_seen:
                type_seen = True
                continue
            f = fields.get(t.predicate)
            value = f.decode(t.object) if f else None
            if f is None or value is None or (not f.multi and f.attr in kw):
                extra.add(t)
            elif f.multi:
                multi[f.attr].append(value)
            else:
                kw[f.attr] = value
        for attr, values in multi.items():
            kw[attr] = tuple(sorted(set(values)))
        groups[_GROUP[cls]].append(cls(**kw))

    graph = PlodGraph(**groups, extra=frozenset(extra))
    if by_subject and not len(graph):
        warnings.append(ValidationIssue(IssueCode.NO_PLOD_SUBJECTS, "-",
                                        "document contains no PLOD-typed subject"))
    return graph, warnings


def parse(text: str) -> tuple[PlodGraph, list[ValidationIssue]]:
    """Parse PLOD Turtle. Returns the graph and every issue found in it."""
    graph, warnings = graph_from_triples(parse_triples(text))
    return graph, warnings + validate_graph(graph)


def read_file(path) -> tuple[PlodGraph, list[ValidationIssue]]:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())


def write_file(g: PlodGraph, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize(g))
