"""Regenerate the coded fixture corpora shipped under src/plod/data/.

table1_corpus/  228 releases whose category x year counts match the reference
                cross-tab in TABLE1 below. Only category, year and disease are
                fixed; identifiers, places, dates and prose are synthetic.
section42_corpus/  39 COVID-19 releases (2020-01-16 .. 2020-02-11) shaped to the
                reference expressiveness summary: 23 with patient details,
                8 with dated and located trace, 21 steps, 10 of them with an
                origin or destination. Contains the figure3 and figure4
                releases; everything else is synthetic.

Output is deterministic: ``python scripts/build_corpora.py``.
"""
import datetime as dt
import json
import random
from pathlib import Path

DATA = Path(__file__).resolve().parents[1] / "src" / "plod" / "data"

PREFS = [e["label"] for e in json.loads((DATA / "gazetteer.json").read_text())["entries"]
         if e["level"] == "Prefecture"]
assert len(PREFS) == 47

TABLE1 = {
    "DetailedSection": (3, 67, 1),
    "MentionInBody": (1, 3, 5),
    "NonSpecific": (30, 20, 30),
    "NoExposure": (1, 15, 0),
    "NotAvailable": (16, 26, 3),
    "Other": (0, 3, 0),
    "NoCaseDescription": (3, 1, 0),
}
YEARS = (2018, 2019, 2020)

AGES = ["10s", "20s", "30s", "40s", "50s", "60s", "70s"]
GENDERS = ["Female", "Male"]

_used_ids = set()


def release_id(pref: str, day: dt.date) -> str:
    code = PREFS.index(pref) + 1
    seq = 1
    while f"{code:02d}{day:%Y%m%d}{seq}" in _used_ids:
        seq += 1
    rid = f"{code:02d}{day:%Y%m%d}{seq}"
    _used_ids.add(rid)
    return rid


def base(pref, day, style, n_patients, text):
    rid = release_id(pref, day)
    return {
        "releaseId": rid, "publisher": pref, "datePublished": day.isoformat(),
        "url": f"https://example.org/synthetic/{rid}.html",
        "numberOfPatients": n_patients, "traceStyle": style,
        "rawTraceText": text, "patients": [], "synthetic": True,
    }


def patient(rng, pref, day, disease, moves=()):
    return {"age": rng.choice(AGES), "gender": rng.choice(GENDERS), "homeLocation": pref,
            "dateConfirmed": day.isoformat(), "disease": disease, "moves": list(moves)}


def table1(rng):
    by_year = {y: [] for y in YEARS}
    figure3 = json.loads((DATA / "figure3.json").read_text())
    for style, counts in TABLE1.items():
        for year, n in zip(YEARS, counts):
            disease = "COVID-19" if year == 2020 else "Measles"
            for _ in range(n):
                if year == 2020 and style == "DetailedSection":
                    by_year[year].append(figure3)
                    _used_ids.add(figure3["releaseId"])
                    continue
                if year == 2020:
                    day = dt.date(2020, 1, 16) + dt.timedelta(days=rng.randrange(75))
                else:
                    day = dt.date(year, 1, 1) + dt.timedelta(days=rng.randrange(365))
                pref = rng.choice(PREFS)
                onset = day - dt.timedelta(days=rng.randrange(2, 10))
                if style == "NoCaseDescription":
                    r = base(pref, day, style, rng.randint(1, 5),
                             "Synthetic: only the number of cases is announced.")
                    by_year[year].append(r)
                    continue
                r = base(pref, day, style, 1, None)
                moves = []
                if style in ("DetailedSection", "MentionInBody"):
                    dest = rng.choice(PREFS)
                    moves.append({"start": onset.isoformat(), "end": onset.isoformat(),
                                  "from": pref, "to": dest,
                                  "rawText": f"Synthetic: travelled from {pref} to {dest}."})
                    r["rawTraceText"] = ("Synthetic: trace listed in its own section."
                                         if style == "DetailedSection"
                                         else "Synthetic: trace mentioned in the announcement body.")
                elif style == "NonSpecific":
                    moves.append({"start": onset.isoformat(), "end": onset.isoformat(),
                                  "rawText": "Synthetic: used public transportation in the area."})
                    r["rawTraceText"] = "Synthetic: trace given in generic terms only."
                elif style == "NoExposure":
                    r["rawTraceText"] = "Synthetic: no risk of public exposure."
                elif style == "Other":
                    r["rawTraceText"] = "Synthetic: uncategorised description."
                r["patients"].append(patient(rng, pref, day, disease, moves))
                by_year[year].append(r)
    return by_year


def move(day, frm=None, to=None, text="", **flags):
    m = {"start": day, "end": day}
    if frm:
        m["from"] = frm
    if to:
        m["to"] = to
    if text:
        m["rawText"] = "Synthetic: " + text
    m.update(flags)
    return m


def section42(rng):
    figure3 = json.loads((DATA / "figure3.json").read_text())
    figure4 = json.loads((DATA / "figure4.json").read_text())
    _used_ids.clear()
    _used_ids.update({figure3["releaseId"], figure4["releaseId"]})
    d = dt.date

    def rel(pref, day, moves, style="DetailedSection"):
        r = base(pref, day, style, 1, "Synthetic: trace listed in its own section.")
        r["patients"].append(patient(rng, pref, day, "COVID-19", moves))
        return r

    r2 = rel("Aichi", d(2020, 1, 26), [
        move("2020-01-20", "Aichi", "Gifu", "visited relatives in Gifu."),
        move("2020-01-21", text="works as a taxi driver."),
        move("2020-01-22", text="has not left the prefecture since.", negated=True),
    ])
    trace = [
        figure3,
        r2,
        rel("Kanagawa", d(2020, 1, 29), [
            move("2020-01-18", "overseas", None, "returned from overseas travel."),
            move("2020-01-19", "Kanagawa", "Tokyo", "commuted to Tokyo."),
            move("2020-01-20", text="returning home with a child.", homeReference=True),
        ]),
        rel("Osaka", d(2020, 1, 30), [
            move("2020-01-23", None, "Kansai International Airport", "met a tour group at the airport."),
            move(None, text="same as past case.",
                 sameAsCase={"releaseId": figure3["releaseId"], "patient": 1}),
        ]),
        rel("Hokkaido", d(2020, 2, 1), [
            move("2020-01-25", "Hokkaido", "Tokyo", "flew to Tokyo."),
            move("2020-01-26", text="did not travel overseas.", negated=True),
            move("2020-01-27", text="works as a bus guide."),
        ]),
        rel("Tokyo", d(2020, 2, 4), [
            move("2020-01-28", "Tokyo", "Chiba", "visited Chiba."),
            move("2020-01-29", text="returned home.", homeReference=True),
            move(None, text="same as past case.",
                 sameAsCase={"releaseId": r2["releaseId"], "patient": 1}),
        ]),
        rel("Wakayama", d(2020, 2, 7), [
            move("2020-02-01", "Wakayama", "Osaka", "went shopping in Osaka."),
            move("2020-02-02", text="went back home.", homeReference=True),
        ]),
        rel("Kyoto", d(2020, 2, 10), [
            move("2020-02-03", "Osaka", "Kyoto", "took a train to Kyoto."),
            move("2020-02-04", text="no visits outside the city.", negated=True),
            move("2020-02-05", text="works as a driver."),
        ]),
    ]
    span = (d(2020, 2, 11) - d(2020, 1, 16)).days
    no_trace = [figure4]
    for _ in range(14):
        pref = rng.choice(PREFS)
        day = d(2020, 1, 16) + dt.timedelta(days=rng.randrange(span + 1))
        r = base(pref, day, rng.choice(["NonSpecific", "NotAvailable", "NoExposure"]), 1,
                 "Synthetic: patient described, no trace given.")
        r["patients"].append(patient(rng, pref, day, "COVID-19"))
        no_trace.append(r)
    count_only = []
    for _ in range(16):
        pref = rng.choice(PREFS)
        day = d(2020, 1, 16) + dt.timedelta(days=rng.randrange(span + 1))
        count_only.append(base(pref, day, rng.choice(["NotAvailable", "NoCaseDescription"]),
                               rng.randint(1, 4), "Synthetic: case count only."))
    return {"trace": trace, "patients_without_trace": no_trace, "count_only": count_only}


def write(path: Path, records):
    path.parent.mkdir(parents=True, exist_ok=True)
    records = sorted(records, key=lambda r: r["releaseId"])
    path.write_text(json.dumps(records, ensure_ascii=False, indent=1) + "\n", encoding="utf-8")


def main():
    for year, records in table1(random.Random(20200131)).items():
        write(DATA / "table1_corpus" / f"{year}.json", records)
    for name, records in section42(random.Random(20200211)).items():
        write(DATA / "section42_corpus" / f"{name}.json", records)


if __name__ == "__main__":
    main()
