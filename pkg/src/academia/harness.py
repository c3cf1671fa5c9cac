"""Deterministic discrete-event simulation of stores, rounds and escrows.

Everything random draws from the world's seeded generator and time is an
integer tick (one tick is one day in the scenario narratives), so a seed
and a scenario fully determine the event log. Log lines are
``tick<TAB>node<TAB>kind<TAB>digest`` where ``digest`` is the hex sha256 of
the canonical payload behind the event.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import heapq
import random
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Any

from academia import review_proc
from academia.canonical import canonical_encode, fingerprint
from academia.coe import TimestampAuthority, TrustAnchors, Verdict, verify_coe
from academia.errors import UnknownScenario, UnknownTarget
from academia.escrow import EscrowService
from academia.model import (
    AuthorKnown,
    Blob,
    DocumentHandle,
    Grade,
    Identity,
    OpenAttribution,
    PostHocCitation,
    PublishedObject,
    Relation,
    ReviewerKnownWhen,
    ReviewerMode,
    ReviewObject,
    ReviewProcessSpec,
    TextAudience,
    TextPublishedWhen,
    WorkPublic,
    citation_as_object,
    make_handle,
    review_as_object,
)
from academia.query import KnowledgeGraph, SavedQuery, TitleTerms, execute, results_bytes
from academia.store import (
    Found,
    MetadataOnly,
    PossiblyAbsent,
    StoreConfig,
    StoreMode,
    StoreNode,
    decode_frame,
    encode_frame,
)

EPOCH = dt.date(2024, 1, 1)


def digest(payload: Any) -> str:
    data = payload if isinstance(payload, bytes) else canonical_encode(payload)
    return hashlib.sha256(data).hexdigest()


@dataclass
class Link:
    latency: int = 1
    drop: float = 0.0


@dataclass(order=True)
class _Event:
    time: int
    seq: int
    label: str = field(compare=False)
    action: Callable[[], None] = field(compare=False)


class SimWorld:
    """Clock, event queue, link model and log shared by one simulation."""

    def __init__(self, seed: int, epoch: dt.date = EPOCH):
        self.seed = seed
        self.rng = random.Random(seed)
        self.epoch = epoch
        self.clock = 0
        self._queue: list[_Event] = []
        self._seq = 0
        self.log: list[str] = []
        self.public_channel: list[tuple[int, bytes]] = []
        self.stores: dict[str, StoreNode] = {}
        self.authorities: dict[str, TimestampAuthority] = {}
        self.escrows: dict[str, EscrowService] = {}
        self.rounds: dict[str, review_proc.RoundState] = {}
        self.links: dict[frozenset, Link] = {}
        self.node_drop: dict[str, float] = {}
        self.global_drop = 0.0
        self.killed: set[str] = set()
        self.transport = SimTransport(self)

    # -- time ---------------------------------------------------------------

    def date(self, tick: int | None = None) -> dt.date:
        return self.epoch + dt.timedelta(days=self.clock if tick is None else tick)

    def tick_of(self, date: dt.date) -> int:
        return (date - self.epoch).days

    def schedule(self, at: int, label: str, action: Callable[[], None]) -> None:
        self._seq += 1
        heapq.heappush(self._queue, _Event(at, self._seq, label, action))

    def run(self, until: int | None = None) -> None:
        while self._queue and (until is None or self._queue[0].time <= until):
            ev = heapq.heappop(self._queue)
            self.clock = max(self.clock, ev.time)
            ev.action()

    def record(self, node: str, kind: str, payload: Any) -> None:
        self.log.append(f"{self.clock}\t{node}\t{kind}\t{digest(payload)}")

    def publish(self, node: str, data: bytes) -> None:
        self.public_channel.append((self.clock, data))
        self.record(node, "publish", data)

    def log_text(self) -> str:
        return "".join(line + "\n" for line in self.log)

    # -- components ---------------------------------------------------------

    def add_store(self, name: str, config: StoreConfig) -> StoreNode:
        config.address = name
        node = StoreNode(config, self.transport)
        self.stores[name] = node
        return node

    def add_authority(self, name: str) -> TimestampAuthority:
        auth = TimestampAuthority.generate(name, self.rng.randbytes(32))
        self.authorities[name] = auth
        return auth

    def add_escrow(self, label: str, board) -> EscrowService:
        esc = EscrowService(label, board, random.Random(self.rng.getrandbits(64)))
        self.escrows[label] = esc
        return esc

    def anchors(self) -> TrustAnchors:
        anchors = TrustAnchors()
        for auth in self.authorities.values():
            anchors = anchors.trust(auth)
        return anchors

    def link(self, a: str, b: str) -> Link:
        return self.links.setdefault(frozenset((a, b)), Link())

    def connect(self, a: str, b: str, latency: int = 1) -> None:
        self.stores[a].config.peers.append(b)
        self.stores[b].config.peers.append(a)
        self.link(a, b).latency = latency

    def knows(self, name: str) -> bool:
        return name in self.stores or name in self.authorities or name in self.escrows


class SimTransport:
    """Synchronous delivery through frames; faults come from the world's link model."""

    def __init__(self, world: SimWorld):
        self.world = world

    def _dropped(self, src: str, dst: str) -> bool:
        w = self.world
        p = max(w.global_drop, w.link(src, dst).drop, w.node_drop.get(src, 0.0), w.node_drop.get(dst, 0.0))
        return p > 0 and w.rng.random() < p

    def request(self, src: str, dst: str, message: dict) -> dict | None:
        w = self.world
        node = w.stores.get(dst)
        frame = encode_frame(message)
        w.record(src, "send:" + message.get("op", "?"), frame)
        if node is None or dst in w.killed or src in w.killed:
            w.record(src, "timeout", frame)
            return None
        latency = w.link(src, dst).latency
        if self._dropped(src, dst):
            w.clock += latency
            w.record(src, "drop", frame)
            return None
        w.clock += latency
        w.record(dst, "recv:" + message.get("op", "?"), frame)
        reply = node.handle_frame(frame)
        if self._dropped(dst, src):
            w.clock += latency
            w.record(dst, "drop", reply)
            return None
        w.clock += latency
        w.record(src, "reply", reply)
        return decode_frame(reply)


FAULT_KINDS = ("drop_link", "kill_node", "delay")


def inject_fault(world: SimWorld, kind: str, target, params: dict | None = None) -> SimWorld:
    """Apply a fault to later deliveries.

    ``target`` is a node name or, for link faults, a pair of node names.
    A single name on a link fault applies it to every link of that node.
    """
    params = params or {}
    if kind not in FAULT_KINDS:
        raise ValueError(f"unknown fault kind {kind!r}")
    names = (target,) if isinstance(target, str) else tuple(target)
    for n in names:
        if not world.knows(n):
            raise UnknownTarget(f"no node named {n!r}")
    if kind == "kill_node":
        if len(names) != 1:
            raise UnknownTarget("kill_node takes a single node")
        world.killed.add(names[0])
    elif kind == "drop_link":
        p = float(params.get("probability", 1.0))
        if len(names) == 1:
            world.node_drop[names[0]] = p
        else:
            world.link(*names).drop = p
    else:
        ticks = int(params.get("ticks", 1))
        if len(names) != 2:
            raise UnknownTarget("delay needs a pair of nodes")
        world.link(*names).latency += ticks
    world.record("world", f"fault:{kind}", {"target": list(names), "params": sorted(map(str, params.items()))})
    return world


# ---------------------------------------------------------------------------
# network builders


def build_institutional(world: SimWorld, edges: list[tuple[int, int]], n: int, ttl: int = 6) -> list[StoreNode]:
    nodes = [
        world.add_store(f"inst-{i}", StoreConfig(StoreMode.INSTITUTIONAL, world.rng.randbytes(32), request_ttl=ttl))
        for i in range(n)
    ]
    for a, b in edges:
        world.connect(f"inst-{a}", f"inst-{b}")
    return nodes


def build_dht(world: SimWorld, n: int = 64, k: int = 8, alpha: int = 3, cache_capacity: int = 64) -> list[StoreNode]:
    """Join ``n`` owner nodes through one bootstrap node, then refresh every table."""
    nodes = []
    for i in range(n):
        owner = Identity(f"Owner {i:02d}", contact=f"owner{i:02d}@example.org")
        cfg = StoreConfig(
            StoreMode.P2P, world.rng.randbytes(32), owner=owner, k=k, alpha=alpha, cache_capacity=cache_capacity
        )
        nodes.append(world.add_store(f"p2p-{i:02d}", cfg))
    for node in nodes[1:]:
        node.bootstrap([nodes[0].contact])
    for node in nodes:
        node.find_nodes(node.config.node_id)
    return nodes


# ---------------------------------------------------------------------------
# scenarios


@dataclass
class ScenarioResult:
    name: str
    seed: int
    verdict: bool
    log: list[str]
    details: dict = field(default_factory=dict)

    def log_text(self) -> str:
        return "".join(line + "\n" for line in self.log)


_SYLLABLES = ["ka", "lo", "mi", "ren", "sa", "tu", "vel", "dor", "fin", "ga", "hel", "jor", "quin", "zar"]


def _name(rng: random.Random) -> str:
    def word():
        return "".join(rng.choice(_SYLLABLES) for _ in range(rng.randint(2, 3))).capitalize()

    return f"{word()} {word()}"


def _credit_loss(world: SimWorld, params: dict) -> ScenarioResult:
    tsa = world.add_authority("tsa")
    store = world.add_store("inst-library", StoreConfig(StoreMode.INSTITUTIONAL, world.rng.randbytes(32)))
    graph = KnowledgeGraph()
    alice = Identity(params.get("tool_author", "Alice Toolsmith"), "Univ A")
    bob = Identity(params.get("competitor", "Bob Rival"), "Univ B")
    endorsers = [Identity(f"Endorser {i}", "Community") for i in range(int(params.get("endorsers", 2)))]
    journal = SavedQuery("spline-journal", Identity("Spline Interest Group"), TitleTerms(("spline",)))
    out: dict = {}

    def publish(obj: PublishedObject, handle: DocumentHandle, who: Identity):
        store.submit(obj, who, handle.title, handle.authors, handle.coes)
        graph.index(obj, handle)
        world.publish(store.address, obj.canonical_bytes())

    def run_query(tag: str):
        results = execute(graph.snapshot(), journal)
        world.record("query-engine", f"query:{tag}", results_bytes(results))
        out[tag] = results

    tool = Blob(b"curvefit toolkit v1 source archive\n" + world.rng.randbytes(16))

    def day0():
        stamp = tsa.stamp(fingerprint(tool.canonical_bytes()), world.date())
        out["tool_handle"] = make_handle(tool, "A toolkit for smooth curve fitting", [alice.display_name], [stamp])
        world.record("alice", "private-stamp", stamp.to_text())

    def day30():
        paper = Blob(b"Fast spline interpolation, derived from an uncredited toolkit\n" + world.rng.randbytes(16))
        stamp = tsa.stamp(fingerprint(paper.canonical_bytes()), world.date())
        handle = make_handle(paper, "Fast spline interpolation", [bob.display_name], [stamp])
        out["derivative_handle"] = handle
        publish(paper, handle, bob)
        run_query("before")

    def day45():
        publish(tool, out["tool_handle"], alice)
        cit = PostHocCitation(
            out["tool_handle"],
            out["derivative_handle"],
            Relation.PRIOR_WORK,
            "The interpolation method relies on the curve fitting toolkit published earlier.",
            alice,
        )
        obj, handle = citation_as_object(cit)
        out["citation_handle"] = handle
        publish(obj, handle, alice)

    def day50():
        spec = ReviewProcessSpec(
            world.date(), world.date(), AuthorKnown.PRIOR, ReviewerMode.OPEN, ReviewerKnownWhen.PRIOR,
            TextPublishedWhen.IMMEDIATE, TextAudience.PUBLIC, WorkPublic.PRIOR,
        )
        for i, e in enumerate(endorsers):
            value = world.rng.randint(4, 5)
            review = ReviewObject(
                OpenAttribution(e), f"Endorsement {i + 1}", (out["citation_handle"],),
                (Grade("accuracy", value, 5),), "The prior-work claim checks out.", spec,
            )
            obj, handle = review_as_object(review)
            publish(obj, handle, e)
        run_query("after")

    world.schedule(0, "stamp", day0)
    world.schedule(30, "derivative", day30)
    world.schedule(45, "citation", day45)
    world.schedule(50, "endorse", day50)
    world.run()

    tool_fp = out["tool_handle"].fingerprint
    deriv_fp = out["derivative_handle"].fingerprint
    before = [r.handle.fingerprint for r in out["before"]]
    final = out["after"]
    by_fp = {r.handle.fingerprint: r for r in final}
    original = by_fp.get(tool_fp)
    context_ok = (
        original is not None
        and any(n.other == deriv_fp and n.endorsements for n in original.notes)
        and deriv_fp in by_fp
        and any(n.other == tool_fp and n.endorsements for n in by_fp[deriv_fp].notes)
    )
    verdict = tool_fp not in before and deriv_fp in by_fp and context_ok
    return ScenarioResult(
        "credit_loss", world.seed, verdict, list(world.log),
        {"before": out["before"], "final": final, "tool": tool_fp, "derivative": deriv_fp},
    )


def _double_blind_round(world: SimWorld, params: dict) -> ScenarioResult:
    rng = world.rng
    tsa = world.add_authority("tsa")
    board = [Identity(_name(rng), "Escrow board") for _ in range(2)]
    escrow = world.add_escrow("board", board)
    authors = [_name(rng) for _ in range(int(params.get("authors", 2)))]
    reviewers = [Identity(_name(rng), "Reviewer Univ") for _ in range(int(params.get("reviewers", 3)))]
    length = int(params.get("days", 30))
    spec = ReviewProcessSpec(
        world.date(0), world.date(length), AuthorKnown.AFTER_FIRST_RELEASE, ReviewerMode.ANONYMIZED,
        ReviewerKnownWhen.AFTERWARDS, TextPublishedWhen.END_OF_PROCESS, TextAudience.PUBLIC,
        WorkPublic.AFTERWARDS, coordinators=(Identity(_name(rng), "Coordination"),), escrow_board=tuple(board),
    )
    body = b"On deterministic replay of review rounds. " + rng.randbytes(24)
    private = Blob(body + b"\nAuthors: " + ", ".join(authors).encode())
    anonymized = Blob(body + b"\nAuthors: (withheld for review)")
    coe = tsa.stamp(fingerprint(private.canonical_bytes()), world.date(0))
    work = review_proc.RoundWork(private, coe, anonymized, "On deterministic replay", tuple(authors))
    state = review_proc.start_round(
        spec, [work], review_proc.Mode.DOUBLE_BLIND, escrow,
        on_publish=lambda obj, handle: world.publish("round", obj.canonical_bytes()),
    )
    world.rounds["round"] = state
    world.record("round", "start", state.description())
    delivered: list[bytes] = []
    review_bytes: list[bytes] = []
    submitted: list[ReviewObject] = []

    def deliver():
        for r in reviewers:
            for packet in state.packets():
                data = packet.delivered_bytes()
                delivered.append(data)
                world.record(f"to:{escrow.register(r)}", "deliver", data)

    def submit(i: int, pseudonym: str):
        review = state.template().fill(
            escrow.attribution(pseudonym), f"Review {i + 1}",
            (Grade("soundness", rng.randint(1, 5), 5), Grade("novelty", rng.randint(1, 3), 3)),
            "Careful work; the replay argument holds.",
        )
        review_proc.submit_review(state, review)
        submitted.append(review)
        review_bytes.append(review.canonical_bytes())
        world.record("round", "submit", {"sealed": len(submitted)})

    def release():
        released = review_proc.release(state, world.date())
        world.record("round", "release", [h for _, h in released])

    world.schedule(1, "deliver", deliver)
    world.schedule(length, "release", release)
    world.run(until=1)
    for i in range(len(reviewers)):
        world.schedule(rng.randint(2, length - 1), "submit", lambda i=i: submit(i, escrow.pseudonyms()[i]))
    world.run()

    end_tick = world.tick_of(spec.end_date)
    early = [
        (t, data) for t, data in world.public_channel
        if t < end_tick and any(rb in data or data in rb for rb in review_bytes)
    ]
    review_digests = {digest(rb) for rb in review_bytes}
    early_log = [
        line for line in world.log
        if int(line.split("\t")[0]) < end_tick and line.split("\t")[3] in review_digests
    ]
    links_ok = all(review_proc.verify_double_blind_link(r, private) for r in submitted)
    wrong_ok = not any(review_proc.verify_double_blind_link(r, anonymized) for r in submitted)
    coe_ok = verify_coe(coe, fingerprint(private.canonical_bytes()), world.anchors()) == Verdict.VALID
    name_leaks = [a for a in authors for d in delivered if a.encode() in d]
    verdict = links_ok and wrong_ok and coe_ok and not early and not early_log and not name_leaks and bool(submitted)
    return ScenarioResult(
        "double_blind_round", world.seed, verdict, list(world.log),
        {
            "links_ok": links_ok,
            "anonymized_link_rejected": wrong_ok,
            "early_public_review_bytes": len(early) + len(early_log),
            "name_leaks": name_leaks,
            "authors": authors,
            "delivered": delivered,
            "reviews": submitted,
            "private": private,
            "anonymized": anonymized,
            "end_tick": end_tick,
        },
    )


def _dual_network_consult(world: SimWorld, params: dict) -> ScenarioResult:
    inst = build_institutional(world, [(0, 1)], 2)
    peers = build_dht(world, int(params.get("p2p_nodes", 16)))
    sharer = peers[int(params.get("sharer", 3)) % len(peers)]
    legacy = Blob(b"Legacy monograph, scanned 1987 edition\n" + world.rng.randbytes(16))
    handle = sharer.submit(legacy, sharer.config.owner, "Legacy monograph", ["Historic Author"])
    inst[1].index_legacy(handle)
    world.record(inst[1].address, "index-legacy", handle)

    meta = world.transport.request("client", inst[0].address, {"op": "GET_METADATA", "fp": handle.fingerprint})
    inst_outcome = inst[1].propagate_request(handle.fingerprint)
    wire = world.transport.request("client", inst[0].address, {"op": "GET_OBJECT", "fp": handle.fingerprint, "ttl": 2})
    p2p_outcome = peers[-1].dht_lookup(handle.fingerprint)
    world.record(peers[-1].address, "consult", {"outcome": type(p2p_outcome).__name__})

    content_ok = (
        isinstance(p2p_outcome, Found)
        and fingerprint(p2p_outcome.object.canonical_bytes()) == handle.fingerprint
        and p2p_outcome.served_by == sharer.config.owner
    )
    inst_ok = isinstance(inst_outcome, MetadataOnly) and wire is not None and wire["status"] == "absent"
    return ScenarioResult(
        "dual_network_consult", world.seed, content_ok and inst_ok, list(world.log),
        {"institutional": inst_outcome, "metadata": meta, "p2p": p2p_outcome, "sharer": sharer.config.owner},
    )


def _drop_and_retry(world: SimWorld, params: dict) -> ScenarioResult:
    nodes = build_dht(world, int(params.get("nodes", 64)), alpha=int(params.get("alpha", 3)))
    world.global_drop = float(params.get("drop", 0.1))
    trials = int(params.get("trials", 100))
    found = 0
    hops = []
    for j in range(trials):
        owner, origin = world.rng.sample(nodes, 2)
        obj = Blob(f"object {j} ".encode() + world.rng.randbytes(8))
        h = owner.submit(obj, owner.config.owner)
        res = origin.dht_lookup(h.fingerprint)
        if isinstance(res, Found) and fingerprint(res.object.canonical_bytes()) == h.fingerprint:
            found += 1
            hops.append(res.hops)
    absent = [
        nodes[i % len(nodes)].dht_lookup(fingerprint(b"never inserted %d" % i))
        for i in range(int(params.get("absent", 10)))
    ]
    rate = found / trials if trials else 1.0
    verdict = rate >= float(params.get("min_rate", 0.95)) and all(isinstance(a, PossiblyAbsent) for a in absent)
    world.record("world", "summary", {"found": found, "trials": trials})
    return ScenarioResult(
        "drop_and_retry", world.seed, verdict, list(world.log),
        {"found": found, "trials": trials, "rate": rate, "max_hops": max(hops, default=0), "absent": absent},
    )


SCENARIOS: dict[str, Callable[[SimWorld, dict], ScenarioResult]] = {
    "credit_loss": _credit_loss,
    "double_blind_round": _double_blind_round,
    "dual_network_consult": _dual_network_consult,
    "drop_and_retry": _drop_and_retry,
}


def run_scenario(world: SimWorld, scenario: str, params: dict | None = None) -> ScenarioResult:
    try:
        fn = SCENARIOS[scenario]
    except KeyError:
        raise UnknownScenario(f"unknown scenario {scenario!r}; known: {', '.join(sorted(SCENARIOS))}") from None
    return fn(world, dict(params or {}))


def simulate(scenario: str, seed: int, params: dict | None = None) -> ScenarioResult:
    return run_scenario(SimWorld(seed), scenario, params)
