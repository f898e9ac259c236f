#!/usr/bin/env python3
"""Regenerates the small synthetic datasets under samples/.

Output is deterministic (fixed seed), so rerunning leaves the files unchanged.
"""

import json
import random
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
OUT = ROOT / "samples"

FIRST = ["Anna", "Boris", "Clara", "Dmitri", "Elena", "Farid", "Greta", "Hugo", "Ines", "Jonas", "Kira", "Luca",
         "Maya", "Nils", "Olga", "Pavel", "Rosa", "Sven", "Tara", "Umar", "Vera", "Wim", "Yara", "Zeno"]
LAST = ["Adler", "Berg", "Costa", "Dahl", "Engel", "Fischer", "Gallo", "Horn", "Ivanov", "Jansen", "Keller", "Lind",
        "Moreau", "Novak", "Olsen", "Petrov", "Quint", "Rossi", "Sato", "Tamm", "Ueda", "Vogel", "Weber", "Zorn"]
CITIES = ["Arlen", "Brisk", "Calder", "Dunmore", "Elmsford", "Farrow", "Glenby", "Harwick", "Ivybridge", "Jarrow",
          "Kelso", "Lowick", "Marden", "Norham", "Oakham", "Penrith", "Redcar", "Selby", "Thirsk", "Wetherby"]
REGIONS = ["North Vale", "East March", "Highmoor", "Lowland Reach", "West Fen", "Southdown", "Riverlands", "Stonecross"]
COUNTRIES = ["Aldoria", "Belmark", "Corvania", "Drevia", "Estmark", "Falland", "Gorsia", "Hallen"]
FILMS = ["Silent Harbor", "Glass Orchard", "The Long Tide", "Paper Moons", "Iron Meadow", "Cold Lantern",
         "Quiet Summit", "Salt Garden", "Hollow Crown", "Amber Road"]
SONGS = ["Blue Hour", "River Song", "Night Train", "Golden Gate", "Paper Heart", "Slow Fire", "Open Sky", "Last Dance"]
JOBS = ["physician", "architect", "composer", "journalist", "engineer", "botanist", "lawyer", "painter"]
ORGS = ["Norvik Systems", "Halden Bank", "Corra Foods", "Elbe Motors", "Fjord Media", "Granite Labs", "Helix Energy",
        "Iona Press", "Juniper Air", "Kestrel Mining"]
RELIGIONS = ["Buddhist", "Catholic", "Lutheran"]


def person(rng):
    return [rng.choice(FIRST), rng.choice(LAST)]


def mention(tokens, words, etype=None):
    """Finds `words` in `tokens` and returns an entity mention with its span."""
    n = len(words)
    for i in range(len(tokens) - n + 1):
        if tokens[i:i + n] == words:
            m = {"surface": " ".join(words), "span": [i, i + n]}
            if etype:
                m["type"] = etype
            return m
    raise ValueError(f"{words} not in {tokens}")


# --- FewRel-style: 5 relations x 20 instances ----------------------------------

FEWREL_RELATIONS = [
    ("P26", "spouse"),
    ("P57", "director"),
    ("P106", "occupation"),
    ("P131", "located in the administrative territorial entity"),
    ("P175", "performer"),
]


def fewrel_instance(rng, pid, n):
    if pid == "P26":
        s, o = person(rng), person(rng)
        pre, mid, post = rng.choice([(["In", "1998", ","], ["married"], ["in", "a", "small", "ceremony", "."]),
                                     ([], ["and", "her", "husband"], ["moved", "abroad", "in", "2004", "."]),
                                     ([], ["was", "the", "wife", "of"], ["for", "thirty", "years", "."])])
    elif pid == "P57":
        s, o = rng.choice(FILMS).split(), person(rng)
        pre, mid, post = rng.choice([([], ["is", "a", "drama", "film", "directed", "by"], ["."]),
                                     (["The", "film"], ["was", "shot", "in", "winter", "under", "director"], ["."])])
    elif pid == "P106":
        s, o = person(rng), [rng.choice(JOBS)]
        pre, mid, post = rng.choice([([], ["worked", "as", "a"], ["in", "the", "capital", "."]),
                                     ([], ["is", "a", "celebrated"], ["born", "in", "1961", "."])])
    elif pid == "P131":
        s, o = [rng.choice(CITIES)], rng.choice(REGIONS).split()
        pre, mid, post = rng.choice([([], ["is", "a", "market", "town", "in"], ["."]),
                                     (["The", "village", "of"], ["lies", "in", "the", "district", "of"], ["."])])
    else:  # P175
        s, o = rng.choice(SONGS).split(), person(rng)
        pre, mid, post = rng.choice([([], ["is", "a", "song", "recorded", "by"], ["for", "her", "debut", "album", "."]),
                                     (["The", "single"], ["was", "performed", "live", "by"], ["."])])
    if s == o:
        s = s + ["Jr."]
    tokens = pre + s + mid + o + post
    return {
        "id": f"{pid}-{n:02d}",
        "text": " ".join(tokens),
        "tokens": tokens,
        "entities": [mention(tokens, s), mention(tokens, o)],
        "gold_triples": [{"subject": 0, "relation": pid, "object": 1}],
        "gold_relation": pid,
    }


def make_fewrel(rng):
    rows = [fewrel_instance(rng, pid, n) for pid, _ in FEWREL_RELATIONS for n in range(20)]
    descriptor = {"name": "fewrel-mini", "task": "single-label", "typed_entities": False,
                  "source_format": "canonical-jsonl",
                  "relations": [{"id": pid, "name": name} for pid, name in FEWREL_RELATIONS]}
    return rows, descriptor


# --- TACRED-style: typed, mostly no_relation -----------------------------------

def make_tacred(rng, count=60):
    rows = []
    kinds = ["per:city_of_birth", "per:title", "org:founded_by", "per:spouse", "org:city_of_headquarters"]
    for n in range(count):
        kind = "no_relation" if rng.random() < 0.78 else rng.choice(kinds)
        p, q = person(rng), person(rng)
        while q == p:
            q = person(rng)
        city, org, job = [rng.choice(CITIES)], rng.choice(ORGS).split(), [rng.choice(JOBS)]
        if kind == "per:city_of_birth":
            tokens = p + ["was", "born", "in"] + city + ["in", "1950", "."]
            ents = [mention(tokens, p, "PERSON"), mention(tokens, city, "CITY")]
        elif kind == "per:title":
            tokens = ["The"] + job + p + ["spoke", "at", "the", "meeting", "."]
            ents = [mention(tokens, p, "PERSON"), mention(tokens, job, "TITLE")]
        elif kind == "org:founded_by":
            tokens = org + ["was", "founded", "by"] + p + ["in", "1987", "."]
            ents = [mention(tokens, org, "ORGANIZATION"), mention(tokens, p, "PERSON")]
        elif kind == "per:spouse":
            tokens = p + ["and", "his", "wife"] + q + ["attended", "the", "gala", "."]
            ents = [mention(tokens, p, "PERSON"), mention(tokens, q, "PERSON")]
        elif kind == "org:city_of_headquarters":
            tokens = org + [",", "based", "in"] + city + [",", "reported", "losses", "."]
            ents = [mention(tokens, org, "ORGANIZATION"), mention(tokens, city, "CITY")]
        else:
            tokens = p + ["met"] + q + ["in"] + city + ["last", "week", "."]
            ents = [mention(tokens, p, "PERSON"), mention(tokens, q, "PERSON")]
        row = {"id": f"tac-{n:03d}", "text": " ".join(tokens), "tokens": tokens, "entities": ents,
               "gold_triples": [], "gold_relation": kind}
        if kind != "no_relation":
            row["gold_triples"] = [{"subject": 0, "relation": kind, "object": 1}]
        rows.append(row)
    return rows


# --- NYT-style: several typed entities, overlapping triples ---------------------

def make_nyt(rng):
    contains = "/location/location/contains"
    capital = "/location/country/capital"
    admin = "/location/country/administrative_divisions"
    division_of = "/location/administrative_division/country"
    lived = "/people/person/place_lived"
    born = "/people/person/place_of_birth"
    nationality = "/people/person/nationality"
    company = "/business/person/company"
    founders = "/business/company/founders"
    religion = "/people/person/religion"
    rows = []

    def add(tokens, entities, triples):
        rows.append({"id": f"nyt-{len(rows):03d}", "text": " ".join(tokens), "tokens": tokens,
                     "entities": [mention(tokens, w, t) for w, t in entities],
                     "gold_triples": [{"subject": s, "relation": r, "object": o} for s, r, o in triples]})

    for _ in range(6):  # SEP, N=1
        c, city = [rng.choice(COUNTRIES)], [rng.choice(CITIES)]
        t = ["Visitors", "to"] + city + [",", "a", "port", "in"] + c + [",", "doubled", "."]
        add(t, [(c, "LOCATION"), (city, "LOCATION")], [(0, contains, 1)])
    for _ in range(6):  # EPO: country/capital pair carries two relations, plus another triple
        c, city, p = [rng.choice(COUNTRIES)], [rng.choice(CITIES)], person(rng)
        t = p + ["flew", "to"] + city + [",", "the", "capital", "of"] + c + ["."]
        add(t, [(c, "LOCATION"), (city, "LOCATION"), (p, "PERSON")],
            [(0, contains, 1), (0, capital, 1), (2, lived, 0)])
    for _ in range(6):  # SEP, N=2: one pair, two relations
        c, city = [rng.choice(COUNTRIES)], [rng.choice(CITIES)]
        t = city + ["is", "the", "capital", "of"] + c + ["."]
        add(t, [(c, "LOCATION"), (city, "LOCATION")], [(0, contains, 1), (0, capital, 1)])
    for _ in range(6):  # SEO: one person linked to two places
        c, city, p = [rng.choice(COUNTRIES)], [rng.choice(CITIES)], person(rng)
        t = p + [",", "born", "in"] + city + [",", "is", "a", "citizen", "of"] + c + ["."]
        add(t, [(p, "PERSON"), (city, "LOCATION"), (c, "LOCATION")], [(0, born, 1), (0, nationality, 2)])
    for _ in range(6):  # NEO: disjoint triples
        c, city, p, org = [rng.choice(COUNTRIES)], [rng.choice(CITIES)], person(rng), rng.choice(ORGS).split()
        t = p + ["joined"] + org + ["while"] + city + ["in"] + c + ["grew", "."]
        add(t, [(p, "PERSON"), (org, "ORGANIZATION"), (c, "LOCATION"), (city, "LOCATION")],
            [(0, company, 1), (2, contains, 3)])
    for _ in range(4):  # N=5 and N=6, entity overlap
        c, city, p, org = [rng.choice(COUNTRIES)], [rng.choice(CITIES)], person(rng), rng.choice(ORGS).split()
        region = rng.choice(REGIONS).split()
        rel = [rng.choice(RELIGIONS)]
        t = (p + [",", "a"] + rel + ["who", "founded"] + org + [",", "lives", "in"] + city + [","] + region
             + [",", "in"] + c + ["."])
        triples = [(1, founders, 0), (0, lived, 3), (5, admin, 4), (4, division_of, 5), (5, contains, 3), (0, religion, 2)]
        if len(rows) % 2:
            triples = triples[:5]
        add(t, [(p, "PERSON"), (org, "ORGANIZATION"), (rel, "MISC"), (city, "LOCATION"), (region, "LOCATION"),
                (c, "LOCATION")], triples)
    return rows


# --- native layouts for the ingest adapters -------------------------------------

def make_native(fewrel_rows, tacred_rows, nyt_rows):
    fewrel = {}
    for row in fewrel_rows[::10]:
        pid = row["gold_relation"]
        h, t = row["entities"]
        fewrel.setdefault(pid, []).append({
            "tokens": row["tokens"],
            "h": [h["surface"], "Q1", [list(range(*h["span"]))]],
            "t": [t["surface"], "Q2", [list(range(*t["span"]))]],
        })
    pid2name = {pid: [name, ""] for pid, name in FEWREL_RELATIONS}
    tacred = []
    for row in tacred_rows[:12]:
        s, o = row["entities"]
        tacred.append({"id": row["id"], "token": row["tokens"], "relation": row["gold_relation"],
                       "subj_start": s["span"][0], "subj_end": s["span"][1] - 1,
                       "obj_start": o["span"][0], "obj_end": o["span"][1] - 1,
                       "subj_type": s["type"], "obj_type": o["type"]})
    nyt = []
    for row in nyt_rows[:8]:
        ents = row["entities"]
        nyt.append({"id": row["id"], "text": row["text"],
                    "triple_list": [[ents[t["subject"]]["surface"], t["relation"], ents[t["object"]]["surface"]]
                                    for t in row["gold_triples"]],
                    "entity_types": {e["surface"]: e["type"] for e in ents}})
    return fewrel, pid2name, tacred, nyt


def write_jsonl(path, rows):
    with open(path, "w") as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False) + "\n")


def write_json(path, obj):
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, ensure_ascii=False)
        f.write("\n")


def main():
    rng = random.Random(20230501)
    OUT.mkdir(exist_ok=True)
    (OUT / "native").mkdir(exist_ok=True)
    fewrel, descriptor = make_fewrel(rng)
    tacred = make_tacred(rng)
    nyt = make_nyt(rng)
    write_jsonl(OUT / "fewrel_mini.jsonl", fewrel)
    write_json(OUT / "fewrel_mini.descriptor.json", descriptor)
    write_jsonl(OUT / "tacred_mini.jsonl", tacred)
    write_jsonl(OUT / "nyt_mini.jsonl", nyt)
    native_fewrel, pid2name, native_tacred, native_nyt = make_native(fewrel, tacred, nyt)
    write_json(OUT / "native" / "fewrel_native.json", native_fewrel)
    write_json(OUT / "native" / "fewrel_pid2name.json", pid2name)
    write_json(OUT / "native" / "tacred_native.json", native_tacred)
    write_jsonl(OUT / "native" / "nyt_native.jsonl", native_nyt)


if __name__ == "__main__":
    main()
