"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line."""

import datetime as dt
import math
import os
import random
import subprocess
import sys
from pathlib import Path

import networkx as nx
import pytest
from corpus import BOARDS, build, make_review
from oracles import EMPTY_SHA256, brute_force_order, brute_force_scores, connected_atlas, expected_outcome, round_heads

from academia.canonical import fingerprint
from academia.coe import LinkedStamp, RegistryStamp, TimestampAuthority, TrustAnchors, Verdict, verify_coe
from academia.errors import MalformedCoE
from academia.escrow import Action, EscrowService
from academia.harness import SimWorld, build_institutional, simulate
from academia.model import (
    AuthorKnown,
    Blob,
    DocumentHandle,
    Grade,
    Identity,
    OpenAttribution,
    PostHocCitation,
    PseudonymousAttribution,
    Relation,
    ReviewerKnownWhen,
    ReviewerMode,
    ReviewObject,
    ReviewProcessSpec,
    TextAudience,
    TextPublishedWhen,
    WorkPublic,
    board_key,
    citation_as_object,
    make_handle,
    review_as_object,
    validate_review,
)
from academia.query import AnyOf, KnowledgeGraph, RankingSpec, SavedQuery, TitleTerms, execute, review_weight
from academia.review_proc import verify_double_blind_link
from academia.store import DefinitelyAbsent, Found, PossiblyAbsent

FIXTURES = Path(__file__).parent / "fixtures"
OWNER = Identity("Editors")


@pytest.fixture
def report(capsys):
    def emit(number: int, name: str, ok: bool, detail: str = "") -> None:
        with capsys.disabled():
            print(f"\nacceptance {number} {name}: {'PASS' if ok else 'FAIL'}" + (f" ({detail})" if detail else ""))
        assert ok, detail

    return emit


def test_1_fixture_fidelity(report):
    raw = (FIXTURES / "blind_review_example.aca").read_bytes()
    review = ReviewObject.from_bytes(raw)
    text = (FIXTURES / "report_handle.txt").read_text()
    handle = DocumentHandle.from_text(text)
    checks = {
        "review bytes identical": review.canonical_bytes() == raw,
        "grades": [(g.value, g.scale_max) for g in review.grades] == [(2, 3), (4, 5)],
        "dates": (review.process.start_date, review.process.end_date) == (dt.date(2014, 3, 14), dt.date(2014, 4, 14)),
        "target": review.targets[0].fingerprint.path_form()
        == "sha256/e83b0a9861eec4906f52d269056925bd0692c77882ee54d0a62eb876cc61be69",
        "no violations": validate_review(review) == [],
        "handle text identical": handle.to_text() == text,
        "handle coe": [c.to_text() for c in handle.coes] == [text.splitlines()[3].removeprefix("CoEs: ")]
        and handle.earliest_coe_date() == dt.date(2014, 5, 10),
    }
    failed = [k for k, v in checks.items() if not v]
    report(1, "fixture fidelity", not failed, ", ".join(failed))


def _flip(data: bytes, rng: random.Random) -> bytes:
    i = rng.randrange(len(data) * 8)
    out = bytearray(data)
    out[i // 8] ^= 1 << (i % 8)
    return bytes(out)


def _rejected(coe_factory, fp, anchors) -> bool:
    try:
        coe = coe_factory()
    except MalformedCoE:
        return True
    return verify_coe(coe, fp, anchors) == Verdict.INVALID


def test_2_fingerprint_and_coe_soundness(report):
    rng = random.Random(2)
    problems = []
    if fingerprint(b"").hex != EMPTY_SHA256:
        problems.append("empty digest")

    tsa = TimestampAuthority.generate("tsa", rng.randbytes(32))
    content = [rng.randbytes(64) for _ in range(4)]
    fps = [fingerprint(c) for c in content]
    registry = [tsa.stamp(fp, dt.date(2014, 5, 10), f"id-{i}") for i, fp in enumerate(fps)]
    for fp in fps:
        tsa.append(fp)
    head0, linked = tsa.close()
    tsa.append(fingerprint(b"second round"))
    head1, (other,) = tsa.close()
    anchors = TrustAnchors().trust(tsa)

    if any(len(s.audit_path) != 2 for s in linked):
        problems.append("audit path length")
    if not all(verify_coe(s, fp, anchors) == Verdict.VALID for s, fp in zip(linked, fps)):
        problems.append("4-leaf verification")
    if [head0, head1] != round_heads([[fp.digest for fp in fps], [fingerprint(b"second round").digest]]):
        problems.append("heads differ from oracle")
    if not all(verify_coe(s, fp, anchors) == Verdict.VALID for s, fp in zip(registry, fps)):
        problems.append("registry verification")

    def tamper_registry(s: RegistryStamp, i: int):
        part = rng.choice(["content", "signature", "external_id", "date"])
        fp = fps[i]
        if part == "content":
            fp = fingerprint(_flip(content[i], rng))
            return (lambda: s), fp
        if part == "signature":
            return (lambda: RegistryStamp(s.authority, s.date, s.external_id, _flip(s.signature, rng))), fp
        if part == "external_id":
            eid = _flip(s.external_id.encode(), rng).decode("latin-1")
            return (lambda: RegistryStamp(s.authority, s.date, eid, s.signature)), fp
        day = s.date + dt.timedelta(days=1 << rng.randrange(10))
        return (lambda: RegistryStamp(s.authority, day, s.external_id, s.signature)), fp

    def tamper_linked(s: LinkedStamp, i: int):
        part = rng.choice(["content", "path", "head", "prev", "leaf"])
        fp = fps[i]
        path, head, prev, leaf = list(s.audit_path), s.round_head, s.prev_head, s.leaf_index
        if part == "content":
            fp = fingerprint(_flip(content[i], rng))
        elif part == "path":
            j = rng.randrange(len(path))
            path[j] = (path[j][0], _flip(path[j][1], rng))
        elif part == "head":
            head = _flip(head, rng)
        elif part == "prev":
            prev = _flip(prev, rng)
        else:
            leaf ^= 1 << rng.randrange(3)
        return (lambda: LinkedStamp(s.authority, s.round, leaf, tuple(path), head, prev)), fp

    reg_ok = sum(_rejected(*tamper_registry(registry[i % 4], i % 4), anchors) for i in range(100))
    link_ok = sum(_rejected(*tamper_linked(linked[i % 4], i % 4), anchors) for i in range(100))
    if reg_ok != 100 or link_ok != 100:
        problems.append(f"tamper rejected {reg_ok}/100 registry, {link_ok}/100 linked")

    s = linked[0]
    replayed = LinkedStamp(s.authority, 1, s.leaf_index, s.audit_path, s.round_head, s.prev_head)
    if verify_coe(replayed, fps[0], anchors) != Verdict.INVALID or verify_coe(other, fps[0], anchors) != Verdict.INVALID:
        problems.append("cross-round verification succeeded")
    report(2, "fingerprint/CoE soundness", not problems, "; ".join(problems) or "200/200 tampered stamps invalid")


def test_3_double_blind_protocol(report):
    problems = []
    privates = []
    results = [simulate("double_blind_round", seed) for seed in range(50)]
    privates = [r.details["private"] for r in results]
    for seed, res in enumerate(results):
        d = res.details
        for review in d["reviews"]:
            matches = [i for i, p in enumerate(privates) if verify_double_blind_link(review, p)]
            if matches != [seed] or verify_double_blind_link(review, d["anonymized"]):
                problems.append(f"seed {seed}: link matched {matches}")
        digests = {fingerprint(r.canonical_bytes()).hex for r in d["reviews"]}
        early = [line for line in res.log if int(line.split("\t")[0]) < d["end_tick"] and line.split("\t")[3] in digests]
        if early or d["early_public_review_bytes"]:
            problems.append(f"seed {seed}: review bytes before end date")
        leaks = [a for a in d["authors"] for data in d["delivered"] if a.encode() in data]
        if leaks:
            problems.append(f"seed {seed}: author names in anonymized deliverables")
        if not res.verdict:
            problems.append(f"seed {seed}: scenario verdict fail")
    report(3, "double-blind protocol", not problems, "; ".join(problems[:3]) or "50 seeds")


def _random_identity(rng: random.Random) -> Identity:
    letters = "bcdfghjklmnpqrstvwxz"
    name = "".join(rng.choice(letters) for _ in range(6)).capitalize() + " " + "".join(
        rng.choice(letters) for _ in range(8)
    ).capitalize()
    return Identity(name, f"Inst{rng.randrange(10**6)}", f"{name.replace(' ', '.').lower()}@example.org")


def _anon_spec(board) -> ReviewProcessSpec:
    return ReviewProcessSpec(
        dt.date(2020, 1, 1), dt.date(2020, 2, 1), AuthorKnown.PRIOR, ReviewerMode.ANONYMIZED,
        ReviewerKnownWhen.AFTERWARDS, TextPublishedWhen.END_OF_PROCESS, TextAudience.PUBLIC,
        WorkPublic.AFTERWARDS, escrow_board=tuple(board),
    )


def test_4_escrow(report):
    rng = random.Random(4)
    problems = []

    # Leak scan: every public artifact an escrow produces for 1000 sealed identities.
    board = [Identity("Board Member One", "U"), Identity("Board Member Two", "V")]
    esc = EscrowService("pc", board, random.Random(40))
    spec = _anon_spec(board)
    work = make_handle(Blob(b"submission"), "Submission")
    identities = [_random_identity(rng) for _ in range(1000)]
    public: list[bytes] = []
    handles = []
    for ident in identities:
        p = esc.register(ident)
        r = ReviewObject(esc.attribution(p), f"Review by {p}", (work,), (Grade("g", rng.randint(0, 5), 5),), "ok", spec)
        obj, h = review_as_object(r)
        esc.attest(r, h)
        public += [p.encode(), obj.canonical_bytes()]
        handles.append(h)
    now = dt.date(2020, 3, 1)
    petitioners = [Identity(f"Petitioner {i}") for i in range(3)]
    inv_a = esc.open_investigation(petitioners, handles[:10], now)
    for t in esc.resolve_investigation(inv_a.id, Action.CLARIFICATION, now):
        public.append(review_as_object(t.fill("Clarified."))[0].canonical_bytes())
    esc.open_investigation(petitioners, handles[10:20], now)
    public += esc.public_log + [repr(esc.public_status()).encode(), repr(esc).encode()]
    blob = b"\n".join(public)
    leaked = [i for i in identities if any(s.encode() in blob for s in (i.display_name, i.contact, i.affiliation))]
    if leaked:
        problems.append(f"{len(leaked)} identities leaked")

    # Expiry on a toy corpus: exactly the board's reviews drop to weight 0.
    graph = KnowledgeGraph()
    works = [make_handle(Blob(b"toy %d" % i), f"Toy {i}") for i in range(3)]
    for w in works:
        graph.index(Blob(b"toy %d" % int(w.title[-1])), w)
    north, south = BOARDS["north"], BOARDS["south"]
    north_esc = EscrowService("north", north, random.Random(1))
    south_esc = EscrowService("south", south, random.Random(2))
    reviews = {}
    for i, (e, grade) in enumerate([(north_esc, 5), (south_esc, 1), (north_esc, 2), (south_esc, 4), (None, 3)]):
        target = works[i % 3]
        if e is None:
            r = make_review(OpenAttribution(Identity("Open Reviewer")), f"Toy review {i}", [target], [Grade("g", grade, 5)])
        else:
            p = e.register(_random_identity(rng))
            r = ReviewObject(e.attribution(p), f"Toy review {i}", (target,), (Grade("g", grade, 5),), "", _anon_spec(e.board))
        obj, h = review_as_object(r)
        if e is not None:
            e.attest(r, h)
        graph.index(obj, h)
        reviews[h.fingerprint] = e
    spec_r = RankingSpec()
    before = {fp: review_weight(graph, fp, spec_r) for fp in reviews}
    disputed = [DocumentHandle(fp) for fp, e in reviews.items() if e is north_esc]
    inv = north_esc.open_investigation(petitioners, disputed, now)
    north_esc.expire_investigation(inv.id, inv.deadline + dt.timedelta(days=1))
    graph.set_escrow_status(north_esc.board_key, north_esc.responsive, north_esc.label)
    after = {fp: review_weight(graph, fp, spec_r) for fp in reviews}
    flipped = {fp for fp in reviews if before[fp] != 0 and after[fp] == 0}
    expected = {fp for fp, e in reviews.items() if e is north_esc}
    if flipped != expected or any(after[fp] != before[fp] for fp in reviews if fp not in expected):
        problems.append("expiry flipped the wrong weights")

    # Same check against the brute-force oracle on random corpora.
    for seed in range(50):
        b = build(random.Random(1000 + seed), dismiss=False)
        e = EscrowService("north", north, random.Random(seed))
        inv = e.open_investigation(petitioners, [], now)
        e.expire_investigation(inv.id, inv.deadline + dt.timedelta(days=1))
        b.graph.set_escrow_status(e.board_key, e.responsive)
        b.oracle.dismissed_boards.add(board_key(north))
        got = [r.handle.fingerprint.hex for r in execute(b.graph, SavedQuery("q", OWNER)) if not r.expansion]
        if got != brute_force_order(b.oracle):
            problems.append(f"oracle mismatch on corpus {seed}")
            break
    report(4, "escrow", not problems, "; ".join(problems) or "1000 identities, 0 leaks")


def test_5_store_soundness(report):
    problems = []
    cases = 0
    me = Identity("Depositor")
    for gi, g in enumerate(connected_atlas(6)):
        n = g.number_of_nodes()
        world = SimWorld(gi)
        nodes = build_institutional(world, list(g.edges()), n)
        for mask in range(1 << n):
            holders = {i for i in range(n) if mask >> i & 1}
            blob = Blob(b"graph %d placement %d" % (gi, mask))
            fp = fingerprint(blob.data)
            for i in holders:
                nodes[i].submit(blob, me)
            for origin in range(n):
                for ttl in (6, 2) if n <= 5 else (6,):
                    cases += 1
                    want, dist = expected_outcome(g, holders, origin, ttl)
                    got = nodes[origin].propagate_request(fp, ttl)
                    kind = {Found: "found", DefinitelyAbsent: "definitely_absent", PossiblyAbsent: "possibly_absent"}[type(got)]
                    if kind != want:
                        problems.append(f"graph {gi} holders {sorted(holders)} origin {origin} ttl {ttl}: {kind} != {want}")
                    elif isinstance(got, Found):
                        if fingerprint(got.object.canonical_bytes()) != fp or got.hops != dist:
                            problems.append(f"graph {gi}: bad Found")
                    if origin not in holders:
                        nodes[origin].store.delete(fp)
                        nodes[origin]._cache.pop(fp, None)
        if len(problems) > 5:
            break

    # Home copies survive any eviction sequence.
    rng = random.Random(5)
    for trial in range(100):
        world = SimWorld(trial)
        a, b = build_institutional(world, [(0, 1)], 2)
        homes = []
        for step in range(30):
            op = rng.random()
            if op < 0.3:
                homes.append(a.submit(Blob(b"home %d %d" % (trial, step)), me).fingerprint)
            elif op < 0.7:
                h = b.submit(Blob(b"remote %d %d" % (trial, step)), me)
                a.propagate_request(h.fingerprint)
            else:
                a.config.cache_capacity = rng.randint(0, 4)
                a.evict_non_home()
            for fp in homes:
                got = a.get(fp)
                if not isinstance(got, Found) or fingerprint(got.object.canonical_bytes()) != fp:
                    problems.append(f"home lost in trial {trial}")
                    break
    report(5, "store soundness", not problems, "; ".join(problems[:3]) or f"{cases} lookups matched the oracle")


def test_6_dht(report):
    clean = simulate("drop_and_retry", 6, {"drop": 0.0, "trials": 100, "absent": 20, "min_rate": 1.0})
    lossy = simulate("drop_and_retry", 6, {"drop": 0.1, "alpha": 3, "trials": 100, "absent": 20})
    problems = []
    if clean.details["found"] != 100 or clean.details["max_hops"] > 8:
        problems.append(f"0% drop: {clean.details['found']}/100, max hops {clean.details['max_hops']}")
    if lossy.details["rate"] < 0.95:
        problems.append(f"10% drop: rate {lossy.details['rate']}")
    absent = clean.details["absent"] + lossy.details["absent"]
    if not all(isinstance(a, PossiblyAbsent) for a in absent):
        problems.append("an absent key was not PossiblyAbsent")
    detail = f"0%: {clean.details['found']}/100 max {clean.details['max_hops']} hops; 10%: {lossy.details['found']}/100"
    report(6, "DHT", not problems, "; ".join(problems) or detail)


def _rank(graph, fp_hex) -> int:
    order = [r.handle.fingerprint.hex for r in execute(graph, SavedQuery("q", OWNER)) if not r.expansion]
    return order.index(fp_hex)


def test_7_ranking(report):
    problems = []
    for seed in range(200):
        b = build(random.Random(seed))
        got = [r.handle.fingerprint.hex for r in execute(b.graph, SavedQuery("q", OWNER)) if not r.expansion]
        if got != brute_force_order(b.oracle):
            problems.append(f"order mismatch on corpus {seed}")

    east = (Identity("Board East One", "East"),)
    for trial in range(500):
        rng = random.Random(10_000 + trial)
        b = build(rng, max_works=10, max_reviews=12)
        target = rng.choice(b.works)
        s = brute_force_scores(b.oracle)[target.fingerprint.hex]
        floor = 0 if s is None else math.floor(s * 10) + 1
        value = min(10, rng.randint(floor, 10)) if floor <= 10 else 10
        before = _rank(b.graph, target.fingerprint.hex)
        r = make_review(PseudonymousAttribution(f"Anonymous reviewer {trial} mandated by east", east),
                        "Extra", [target], [Grade("g", value, 10)])
        b.graph.index(*review_as_object(r))
        after = _rank(b.graph, target.fingerprint.hex)
        if after > before:
            problems.append(f"monotonicity broken in trial {trial}")

    for seed in range(100):
        rng = random.Random(20_000 + seed)
        b = build(rng, max_reviews=5)
        for c in range(rng.randint(1, 4)):
            src, dst = rng.sample(b.works, 2) if len(b.works) > 1 else (b.works[0], b.works[0])
            if src == dst:
                continue
            cit = PostHocCitation(src, dst, rng.choice(list(Relation)), "asserted link", Identity(f"Reader {c}"))
            b.graph.index(*citation_as_object(cit))
        pred = rng.choice([TitleTerms(("alpha",)), TitleTerms(("beta",)), AnyOf((TitleTerms(("alpha",)),))])
        results = execute(b.graph, SavedQuery("q", OWNER, pred))
        present = {r.handle.fingerprint for r in results}
        primary = [r for r in results if not r.expansion]
        # Every citation touching a filtered result has both sides listed.
        if any(n.other not in present for r in primary for n in r.notes):
            problems.append(f"expansion missed a citation side in corpus {seed}")
        # Every expanded entry sits one citation edge away from a filtered result.
        linked = {n.other for r in primary for n in r.notes}
        if any(r.handle.fingerprint not in linked for r in results if r.expansion):
            problems.append(f"unsound expansion in corpus {seed}")
    report(7, "ranking", not problems, "; ".join(problems[:3]) or "200 orders, 500 monotonicity trials")


def test_8_scenario_reproducibility(report):
    cmd = [sys.executable, "-m", "academia.cli", "simulate", "credit_loss", "--seed", "42"]
    runs = [
        subprocess.run(cmd, capture_output=True, env=dict(os.environ, PYTHONHASHSEED=str(h)), check=False)
        for h in (1, 2)
    ]
    problems = []
    if runs[0].stdout != runs[1].stdout or not runs[0].stdout:
        problems.append("logs differ between runs")
    if runs[0].returncode != 0 or not runs[0].stdout.endswith(b"verdict\tpass\n"):
        problems.append(f"verdict line missing (exit {runs[0].returncode})")
    res = simulate("credit_loss", 42)
    final = {r.handle.fingerprint: r for r in res.details["final"]}
    tool, deriv = res.details["tool"], res.details["derivative"]
    if tool not in final or deriv not in final:
        problems.append("a work is missing from the final query output")
    else:
        for fp, other in ((tool, deriv), (deriv, tool)):
            if not any(n.other == other and n.endorsements for n in final[fp].notes):
                problems.append("citation context missing")
    report(8, "scenario reproducibility", not problems, "; ".join(problems) or f"{len(runs[0].stdout)} identical bytes")


def test_graph_atlas_is_complete():
    # 1 + 1 + 2 + 6 + 21 + 112 connected graphs on 1..6 nodes
    assert len(connected_atlas(6)) == 143
    assert all(nx.is_connected(g) for g in connected_atlas(6))
