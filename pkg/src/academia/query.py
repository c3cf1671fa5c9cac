"""Knowledge graph, review-weighted ranking, saved queries and Atom feeds.

Scoring rule (all arithmetic in exact rationals)::

    q(r)       = mean of r's grades, each mapped to [0, 1] with 1 = best
    w(r, 0)    = 0 if r's escrow is dismissed, else 1
    w(r, d)    = 0 if r's escrow is dismissed,
                 else max(0, 1 + damping * sum over meta-reviews m of r
                                           of (2 q(m) - 1) * w(m, d - 1))
    score(x)   = sum w(r, D) q(r) / sum w(r, D)   over graded reviews r of x

A meta-review already on the current chain is skipped, which bounds the
recursion on review cycles. Works whose weights sum to zero are unscored.
"""

from __future__ import annotations

import copy
import datetime as dt
import re
import threading
import unicodedata
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Union
from xml.etree import ElementTree as ET

from academia.canonical import Fingerprint, canonical_decode, canonical_encode, fingerprint
from academia.errors import MalformedObject, QueryPrivate
from academia.model import (
    DocumentHandle,
    Identity,
    OpenAttribution,
    PostHocCitation,
    PseudonymousAttribution,
    PublishedObject,
    ReviewObject,
    make_handle,
    parse_semantic,
)

ATOM_NS = "http://www.w3.org/2005/Atom"
ACA_NS = "urn:academia:feed:1"
EXPANSION_MARK = "posthoc-expansion"

ET.register_namespace("", ATOM_NS)
ET.register_namespace("aca", ACA_NS)


# ---------------------------------------------------------------------------
# graph


@dataclass
class GraphNode:
    fingerprint: Fingerprint
    kind: str  # "work" | "review" | "citation"
    resolved: bool
    own_handle: DocumentHandle | None = None
    hints: dict[bytes, DocumentHandle] = field(default_factory=dict)
    review: ReviewObject | None = None
    citation: PostHocCitation | None = None

    @property
    def handle(self) -> DocumentHandle:
        """Display handle; CoEs are the union over every handle seen for this node."""
        if self.own_handle is not None:
            base = self.own_handle
        else:
            base = self.hints[min(self.hints)] if self.hints else DocumentHandle(self.fingerprint)
        coes = {c.to_text(): c for h in [base, *self.hints.values()] for c in h.coes}
        return DocumentHandle(self.fingerprint, base.title, base.authors, tuple(coes[k] for k in sorted(coes)))


class KnowledgeGraph:
    """Works, reviews and post-hoc citations with their typed edges.

    Writers call :meth:`index`; readers should work on :meth:`snapshot`.
    ``escrow_status`` maps an escrow board key to its responsive flag.
    """

    def __init__(self):
        self.nodes: dict[Fingerprint, GraphNode] = {}
        self.reviews_of: dict[Fingerprint, set[Fingerprint]] = {}
        self.citations_of: dict[Fingerprint, set[Fingerprint]] = {}
        self.escrow_status: dict[str, bool] = {}
        self.escrow_labels: dict[str, str] = {}
        self._lock = threading.Lock()

    def __len__(self):
        return len(self.nodes)

    def snapshot(self) -> KnowledgeGraph:
        with self._lock:
            snap = KnowledgeGraph()
            snap.nodes = {fp: copy.copy(n) for fp, n in self.nodes.items()}
            for n in snap.nodes.values():
                n.hints = dict(n.hints)
            snap.reviews_of = {k: set(v) for k, v in self.reviews_of.items()}
            snap.citations_of = {k: set(v) for k, v in self.citations_of.items()}
            snap.escrow_status = dict(self.escrow_status)
            snap.escrow_labels = dict(self.escrow_labels)
            return snap

    def set_escrow_status(self, board_key: str, responsive: bool, label: str | None = None) -> None:
        with self._lock:
            self.escrow_status[board_key] = responsive
            if label is not None:
                self.escrow_labels[board_key] = label

    def _placeholder(self, handle: DocumentHandle) -> None:
        node = self.nodes.get(handle.fingerprint)
        if node is None:
            node = self.nodes[handle.fingerprint] = GraphNode(handle.fingerprint, "work", resolved=False)
        node.hints.setdefault(canonical_encode(handle), handle)

    def index(self, obj: PublishedObject, handle: DocumentHandle | None = None) -> KnowledgeGraph:
        data = obj.canonical_bytes()
        fp = fingerprint(data)
        with self._lock:
            existing = self.nodes.get(fp)
            if existing is not None and existing.resolved:
                if handle is not None:
                    existing.hints.setdefault(canonical_encode(handle), handle)
                return self
            sem = parse_semantic(data)
            if isinstance(sem, ReviewObject):
                node = GraphNode(fp, "review", True, review=sem)
                node.own_handle = handle or make_handle(obj, sem.title, [str(sem.author)])
                for target in sem.targets:
                    self._placeholder(target)
                    self.reviews_of.setdefault(target.fingerprint, set()).add(fp)
            elif isinstance(sem, PostHocCitation):
                node = GraphNode(fp, "citation", True, citation=sem)
                node.own_handle = handle or make_handle(
                    obj, f"Post-hoc citation ({sem.relation.value})", [sem.author.display_name]
                )
                for end in (sem.source, sem.target):
                    self._placeholder(end)
                    self.citations_of.setdefault(end.fingerprint, set()).add(fp)
            else:
                node = GraphNode(fp, "work", True, own_handle=handle or make_handle(obj))
            if existing is not None:
                node.hints = existing.hints
            self.nodes[fp] = node
        return self

    def works(self) -> list[GraphNode]:
        return [n for n in self.nodes.values() if n.kind == "work"]


def index(graph: KnowledgeGraph, obj: PublishedObject, handle: DocumentHandle | None = None) -> KnowledgeGraph:
    return graph.index(obj, handle)


# ---------------------------------------------------------------------------
# ranking


@dataclass(frozen=True)
class RankingSpec:
    damping: Fraction = Fraction(1, 2)
    max_depth: int = 3
    unreviewed_policy: str = "rank_after_scored"

    def __post_init__(self):
        object.__setattr__(self, "damping", Fraction(self.damping))
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.max_depth < 1:
            raise ValueError("max meta-review depth must be at least 1")
        if self.unreviewed_policy != "rank_after_scored":
            raise ValueError(f"unsupported unreviewed policy {self.unreviewed_policy!r}")

    def to_canonical(self) -> dict:
        return {
            "damping": f"{self.damping.numerator}/{self.damping.denominator}",
            "max_depth": self.max_depth,
            "unreviewed": self.unreviewed_policy,
            "tiebreak": ["earliest_coe_desc", "fingerprint_asc"],
        }

    @classmethod
    def from_canonical(cls, data: Mapping) -> RankingSpec:
        return cls(Fraction(data["damping"]), data["max_depth"], data.get("unreviewed", "rank_after_scored"))


def _dismissed(graph: KnowledgeGraph, review: ReviewObject, blacklist: frozenset[str]) -> bool:
    author = review.author
    if not isinstance(author, PseudonymousAttribution):
        return False
    key = author.board_key
    return graph.escrow_status.get(key, True) is False or key in blacklist


def review_weight(
    graph: KnowledgeGraph,
    review_fp: Fingerprint,
    spec: RankingSpec,
    blacklist: frozenset[str] = frozenset(),
) -> Fraction:
    def weight(fp: Fingerprint, depth: int, chain: frozenset) -> Fraction:
        review = graph.nodes[fp].review
        if _dismissed(graph, review, blacklist):
            return Fraction(0)
        if depth == 0:
            return Fraction(1)
        adjust = Fraction(0)
        for meta in sorted(graph.reviews_of.get(fp, ())):
            node = graph.nodes[meta]
            if meta in chain or node.review is None:
                continue
            q = node.review.quality()
            if q is None:
                continue
            adjust += (2 * q - 1) * weight(meta, depth - 1, chain | {meta})
        return max(Fraction(0), 1 + spec.damping * adjust)

    return weight(review_fp, spec.max_depth, frozenset([review_fp]))


def score(
    graph: KnowledgeGraph,
    work: Fingerprint | DocumentHandle,
    spec: RankingSpec = RankingSpec(),
    blacklist: Iterable[str] = (),
) -> Fraction | None:
    """Weighted mean review quality of ``work``; ``None`` when unreviewed."""
    fp = work.fingerprint if isinstance(work, DocumentHandle) else work
    blacklist = frozenset(blacklist)
    num = den = Fraction(0)
    for r in graph.reviews_of.get(fp, ()):
        review = graph.nodes[r].review
        if review is None:
            continue
        q = review.quality()
        if q is None:
            continue
        w = review_weight(graph, r, spec, blacklist)
        num += w * q
        den += w
    if den == 0:
        return None
    return num / den


def rank_key(score_value: Fraction | None, handle: DocumentHandle):
    """Sort key: scored before unscored, score desc, latest CoE first, fingerprint asc."""
    date = handle.earliest_coe_date()
    return (
        score_value is None,
        -(score_value if score_value is not None else 0),
        (0, -date.toordinal()) if date is not None else (1, 0),
        handle.fingerprint,
    )


# ---------------------------------------------------------------------------
# filters


_WORD = re.compile(r"\w+")


def words(text: str) -> list[str]:
    return _WORD.findall(unicodedata.normalize("NFC", text).casefold())


@dataclass(frozen=True)
class TitleTerms:
    terms: tuple[str, ...]

    def to_canonical(self):
        return {"op": "title", "terms": list(self.terms)}


@dataclass(frozen=True)
class AuthorMatch:
    name: str

    def to_canonical(self):
        return {"op": "author", "name": self.name}


@dataclass(frozen=True)
class CoeDateRange:
    start: dt.date | None = None
    end: dt.date | None = None

    def to_canonical(self):
        return {
            "op": "coe_date",
            "start": self.start.isoformat() if self.start else None,
            "end": self.end.isoformat() if self.end else None,
        }


@dataclass(frozen=True)
class MinScore:
    value: Fraction

    def to_canonical(self):
        v = Fraction(self.value)
        return {"op": "min_score", "value": f"{v.numerator}/{v.denominator}"}


@dataclass(frozen=True)
class ReviewedBy:
    """At least one counted review from a community: an escrow board key or an open reviewer name."""

    community: str

    def to_canonical(self):
        return {"op": "reviewed_by", "community": self.community}


@dataclass(frozen=True)
class AllOf:
    items: tuple

    def to_canonical(self):
        return {"op": "all", "items": list(self.items)}


@dataclass(frozen=True)
class AnyOf:
    items: tuple

    def to_canonical(self):
        return {"op": "any", "items": list(self.items)}


@dataclass(frozen=True)
class Not:
    item: Any

    def to_canonical(self):
        return {"op": "not", "item": self.item}


Predicate = Union[TitleTerms, AuthorMatch, CoeDateRange, MinScore, ReviewedBy, AllOf, AnyOf, Not]


def predicate_from_canonical(data: Mapping) -> Predicate:
    try:
        op = data["op"]
        if op == "title":
            return TitleTerms(tuple(data["terms"]))
        if op == "author":
            return AuthorMatch(data["name"])
        if op == "coe_date":
            return CoeDateRange(
                dt.date.fromisoformat(data["start"]) if data.get("start") else None,
                dt.date.fromisoformat(data["end"]) if data.get("end") else None,
            )
        if op == "min_score":
            return MinScore(Fraction(data["value"]))
        if op == "reviewed_by":
            return ReviewedBy(data["community"])
        if op == "all":
            return AllOf(tuple(predicate_from_canonical(i) for i in data["items"]))
        if op == "any":
            return AnyOf(tuple(predicate_from_canonical(i) for i in data["items"]))
        if op == "not":
            return Not(predicate_from_canonical(data["item"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedObject(f"bad query filter: {exc}") from None
    raise MalformedObject(f"unknown filter op {data.get('op')!r}")


class _Context:
    def __init__(self, graph: KnowledgeGraph, spec: RankingSpec, blacklist: frozenset[str]):
        self.graph, self.spec, self.blacklist = graph, spec, blacklist
        self._scores: dict[Fingerprint, Fraction | None] = {}

    def score(self, fp: Fingerprint) -> Fraction | None:
        if fp not in self._scores:
            self._scores[fp] = score(self.graph, fp, self.spec, self.blacklist)
        return self._scores[fp]


def _matches(pred: Predicate, node: GraphNode, ctx: _Context) -> bool:
    handle = node.handle
    if isinstance(pred, TitleTerms):
        have = set(words(handle.title or ""))
        return all(w in have for t in pred.terms for w in words(t))
    if isinstance(pred, AuthorMatch):
        wanted = words(pred.name)
        return any(
            wanted and all(w in set(words(a)) for w in wanted) for a in (handle.authors or ())
        )
    if isinstance(pred, CoeDateRange):
        date = handle.earliest_coe_date()
        if date is None:
            return False
        return (pred.start is None or date >= pred.start) and (pred.end is None or date <= pred.end)
    if isinstance(pred, MinScore):
        s = ctx.score(node.fingerprint)
        return s is not None and s >= pred.value
    if isinstance(pred, ReviewedBy):
        for r in ctx.graph.reviews_of.get(node.fingerprint, ()):
            review = ctx.graph.nodes[r].review
            if review is None or _dismissed(ctx.graph, review, ctx.blacklist):
                continue
            a = review.author
            if isinstance(a, PseudonymousAttribution) and a.board_key == pred.community:
                return True
            if isinstance(a, OpenAttribution) and a.identity.display_name == pred.community:
                return True
        return False
    if isinstance(pred, AllOf):
        return all(_matches(p, node, ctx) for p in pred.items)
    if isinstance(pred, AnyOf):
        return any(_matches(p, node, ctx) for p in pred.items)
    if isinstance(pred, Not):
        return not _matches(pred.item, node, ctx)
    raise TypeError(f"unknown predicate {pred!r}")


# ---------------------------------------------------------------------------
# saved queries


@dataclass(frozen=True)
class SavedQuery:
    id: str
    owner: Identity
    filter: Predicate | None = None
    ranking: RankingSpec = RankingSpec()
    public: bool = True
    escrow_blacklist: frozenset[str] = frozenset()
    title: str | None = None

    def to_canonical(self) -> dict:
        return {
            "id": self.id,
            "owner": self.owner,
            "filter": self.filter,
            "ranking": self.ranking,
            "public": self.public,
            "escrow_blacklist": sorted(self.escrow_blacklist),
            "title": self.title,
        }

    @classmethod
    def from_canonical(cls, data: Mapping) -> SavedQuery:
        try:
            return cls(
                id=data["id"],
                owner=Identity.from_canonical(data["owner"]),
                filter=predicate_from_canonical(data["filter"]) if data.get("filter") is not None else None,
                ranking=RankingSpec.from_canonical(data["ranking"]) if "ranking" in data else RankingSpec(),
                public=data.get("public", True),
                escrow_blacklist=frozenset(data.get("escrow_blacklist", ())),
                title=data.get("title"),
            )
        except (KeyError, TypeError) as exc:
            raise MalformedObject(f"bad saved query: {exc}") from None

    def definition_bytes(self) -> bytes:
        return canonical_encode(self)


@dataclass(frozen=True)
class CitationContext:
    citation: Fingerprint
    relation: str
    statement: str
    role: str  # role of the annotated entry: "source" or "target"
    other: Fingerprint
    endorsements: tuple[tuple[str, tuple[str, ...]], ...]  # (review author, grade texts)

    def to_canonical(self) -> dict:
        return {
            "citation": self.citation,
            "relation": self.relation,
            "statement": self.statement,
            "role": self.role,
            "other": self.other,
            "reviews": [{"author": a, "grades": list(g)} for a, g in self.endorsements],
        }


@dataclass(frozen=True)
class QueryResult:
    handle: DocumentHandle
    score: Fraction | None
    notes: tuple[CitationContext, ...] = ()
    expansion: bool = False

    def to_canonical(self) -> dict:
        return {
            "handle": self.handle,
            "score": f"{self.score.numerator}/{self.score.denominator}" if self.score is not None else None,
            "notes": list(self.notes),
            "mark": EXPANSION_MARK if self.expansion else None,
        }


def _citation_contexts(graph: KnowledgeGraph, fp: Fingerprint) -> list[CitationContext]:
    out = []
    for c in sorted(graph.citations_of.get(fp, ())):
        cit = graph.nodes[c].citation
        if cit is None:
            continue
        role, other = ("source", cit.target.fingerprint) if cit.source.fingerprint == fp else ("target", cit.source.fingerprint)
        endorsements = []
        for r in sorted(graph.reviews_of.get(c, ())):
            review = graph.nodes[r].review
            if review is not None:
                endorsements.append((str(review.author), tuple(str(g) for g in review.grades)))
        out.append(CitationContext(c, cit.relation.value, cit.statement, role, other, tuple(endorsements)))
    return out


def execute(graph: KnowledgeGraph, q: SavedQuery, caller: Identity | None = None) -> list[QueryResult]:
    """Filter, score and rank works, then append missing citation sides."""
    if not q.public and caller != q.owner:
        raise QueryPrivate(f"query {q.id!r} is private to its owner")
    ctx = _Context(graph, q.ranking, q.escrow_blacklist)
    hits = [n for n in graph.works() if q.filter is None or _matches(q.filter, n, ctx)]
    ranked = sorted(hits, key=lambda n: rank_key(ctx.score(n.fingerprint), n.handle))
    results = [
        QueryResult(n.handle, ctx.score(n.fingerprint), tuple(_citation_contexts(graph, n.fingerprint)))
        for n in ranked
    ]
    present = {r.handle.fingerprint for r in results}
    expanded: list[QueryResult] = []
    for r in results:
        for note in r.notes:
            if note.other in present:
                continue
            present.add(note.other)
            node = graph.nodes[note.other]
            expanded.append(
                QueryResult(node.handle, ctx.score(note.other), tuple(_citation_contexts(graph, note.other)), True)
            )
    return results + expanded


def results_bytes(results: list[QueryResult]) -> bytes:
    return canonical_encode(results)


# ---------------------------------------------------------------------------
# feeds


def _atom_date(date: dt.date) -> str:
    return f"{date.isoformat()}T00:00:00Z"


def feed(
    graph: KnowledgeGraph,
    q: SavedQuery,
    limit: int = 20,
    updated: dt.date | None = None,
    base_url: str = "",
) -> bytes:
    """Atom document for the top ``limit`` results of a public query.

    The feed embeds the query definition so readers can audit the criteria.
    ``updated`` defaults to the newest entry date, keeping output a pure
    function of the graph.
    """
    if not q.public:
        raise QueryPrivate(f"query {q.id!r} is private; feeds are public only")
    results = execute(graph, q)[: max(0, limit)]
    dates = [d for d in (r.handle.earliest_coe_date() for r in results) if d is not None]
    feed_date = updated or (max(dates) if dates else dt.date(1970, 1, 1))

    root = ET.Element(f"{{{ATOM_NS}}}feed")
    ET.SubElement(root, f"{{{ATOM_NS}}}id").text = f"urn:academia:query:{q.id}"
    ET.SubElement(root, f"{{{ATOM_NS}}}title").text = q.title or q.id
    ET.SubElement(root, f"{{{ATOM_NS}}}updated").text = _atom_date(feed_date)
    author = ET.SubElement(root, f"{{{ATOM_NS}}}author")
    ET.SubElement(author, f"{{{ATOM_NS}}}name").text = q.owner.display_name
    if base_url:
        ET.SubElement(root, f"{{{ATOM_NS}}}link", rel="self", href=f"{base_url}/queries/{q.id}/feed")
        ET.SubElement(root, f"{{{ATOM_NS}}}link", rel="describedby", href=f"{base_url}/queries/{q.id}/definition")
    ET.SubElement(root, f"{{{ACA_NS}}}query").text = q.definition_bytes().decode("utf-8")

    for r in results:
        h = r.handle
        entry = ET.SubElement(root, f"{{{ATOM_NS}}}entry")
        ET.SubElement(entry, f"{{{ATOM_NS}}}id").text = h.fingerprint.path_form()
        ET.SubElement(entry, f"{{{ATOM_NS}}}title").text = h.title or h.fingerprint.path_form()
        date = h.earliest_coe_date()
        ET.SubElement(entry, f"{{{ATOM_NS}}}updated").text = _atom_date(date or feed_date)
        for name in h.authors or ():
            a = ET.SubElement(entry, f"{{{ATOM_NS}}}author")
            ET.SubElement(a, f"{{{ATOM_NS}}}name").text = name
        if base_url:
            ET.SubElement(entry, f"{{{ATOM_NS}}}link", href=f"{base_url}/objects/{h.fingerprint.path_form()}")
        score_el = ET.SubElement(entry, f"{{{ACA_NS}}}score")
        score_el.text = "unscored" if r.score is None else f"{r.score.numerator}/{r.score.denominator}"
        for c in h.coes:
            ET.SubElement(entry, f"{{{ACA_NS}}}coe").text = c.to_text()
        if r.expansion:
            ET.SubElement(entry, f"{{{ATOM_NS}}}category", term=EXPANSION_MARK)
        if r.notes:
            lines = []
            for n in r.notes:
                line = f"{n.relation} ({n.role}) with {n.other.path_form()}: {n.statement}"
                if n.endorsements:
                    line += " [" + "; ".join(f"{a}: {', '.join(g)}" for a, g in n.endorsements) + "]"
                lines.append(line)
            ET.SubElement(entry, f"{{{ATOM_NS}}}summary").text = "\n".join(lines)
    return b'<?xml version="1.0" encoding="utf-8"?>\n' + ET.tostring(root, encoding="utf-8", xml_declaration=False)


def parse_results(data: bytes) -> list[dict]:
    return canonical_decode(data)
