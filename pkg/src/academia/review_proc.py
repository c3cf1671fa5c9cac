"""Review rounds as release-gated state machines.

A round follows the self-organized blind process: authors hand reviewers a
private copy plus a review template carrying the process description;
reviews are held until the end date and then released together with the
works. The double-blind variant hands out an anonymized copy while the
template targets the fingerprint and CoE of the non-anonymized version.

Time is a calendar date supplied by the caller; nothing reads the clock.
"""

from __future__ import annotations

import datetime as dt
import enum
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from fractions import Fraction

from academia.canonical import Fingerprint, canonical_encode, fingerprint
from academia.coe import CoERef, parse_coe
from academia.errors import (
    MissingAnonymizedVariant,
    MissingCoE,
    ProcessMismatch,
    SpecInvalid,
    TargetMismatch,
    TooEarly,
    WrongPhase,
)
from academia.model import (
    DocumentHandle,
    OpenAttribution,
    PublishedObject,
    ReviewerAttribution,
    ReviewerMode,
    ReviewObject,
    ReviewProcessSpec,
    TextPublishedWhen,
    WorkPublic,
    object_fingerprint,
    object_from_bytes,
    review_as_object,
)
from academia.query import KnowledgeGraph, RankingSpec, score


class Phase(str, enum.Enum):
    SETUP = "setup"
    INVITATION = "invitation"
    REVIEWING = "reviewing"
    RELEASED = "released"


class Mode(str, enum.Enum):
    BLIND = "blind"
    DOUBLE_BLIND = "double_blind"


@dataclass(frozen=True)
class RoundWork:
    """One work entered in a round.

    ``private_object`` is the version carrying the author names; its
    fingerprint and ``nonanon_coe`` are the "X" that reviews link to.
    """

    private_object: PublishedObject
    nonanon_coe: CoERef | None
    anonymized_object: PublishedObject | None = None
    title: str | None = None
    authors: tuple[str, ...] | None = None

    @property
    def nonanon_fingerprint(self) -> Fingerprint:
        return object_fingerprint(self.private_object)

    def public_handle(self) -> DocumentHandle:
        coes = (self.nonanon_coe,) if self.nonanon_coe is not None else ()
        return DocumentHandle(self.nonanon_fingerprint, self.title, self.authors, coes)

    def review_target(self) -> DocumentHandle:
        # Fingerprint and CoE only: the target must not leak names to reviewers.
        coes = (self.nonanon_coe,) if self.nonanon_coe is not None else ()
        return DocumentHandle(self.nonanon_fingerprint, None, None, coes)


@dataclass(frozen=True)
class DoubleBlindLink:
    anonymized_fingerprint: Fingerprint
    nonanon_fingerprint: Fingerprint
    nonanon_coe: CoERef

    def __post_init__(self):
        if self.anonymized_fingerprint == self.nonanon_fingerprint:
            raise MissingAnonymizedVariant("anonymized version must differ from the non-anonymized one")


@dataclass(frozen=True)
class ReviewTemplate:
    targets: tuple[DocumentHandle, ...]
    process: ReviewProcessSpec

    def fill(self, author: ReviewerAttribution, title: str, grades, comments: str) -> ReviewObject:
        return ReviewObject(author, title, self.targets, tuple(grades), comments, self.process)

    def to_canonical(self) -> dict:
        return {"targets": list(self.targets), "process": self.process}


@dataclass(frozen=True)
class ReviewerPacket:
    """What the intermediate experts circulate privately to a reviewer."""

    work: PublishedObject
    template: ReviewTemplate

    def delivered_bytes(self) -> bytes:
        return self.work.canonical_bytes() + b"\n" + canonical_encode(self.template)


@dataclass(frozen=True)
class SubmissionReceipt:
    review_handle: DocumentHandle
    published: bool


@dataclass
class RoundState:
    spec: ReviewProcessSpec
    mode: Mode
    works: list[RoundWork]
    phase: Phase = Phase.SETUP
    logical_now: dt.date | None = None
    links: list[DoubleBlindLink] = field(default_factory=list)
    _pending: list[ReviewObject] = field(default_factory=list, repr=False)
    public: list[tuple[PublishedObject, DocumentHandle]] = field(default_factory=list)
    on_publish: Callable[[PublishedObject, DocumentHandle], None] | None = field(default=None, repr=False)
    escrow: object | None = field(default=None, repr=False)

    def target_fingerprints(self) -> set[Fingerprint]:
        return {w.nonanon_fingerprint for w in self.works}

    def packets(self) -> list[ReviewerPacket]:
        if self.phase == Phase.RELEASED:
            raise WrongPhase("round already released")
        template = ReviewTemplate(tuple(w.review_target() for w in self.works), self.spec)
        if self.mode == Mode.DOUBLE_BLIND:
            return [ReviewerPacket(w.anonymized_object, template) for w in self.works]
        return [ReviewerPacket(w.private_object, template) for w in self.works]

    def template(self) -> ReviewTemplate:
        return ReviewTemplate(tuple(w.review_target() for w in self.works), self.spec)

    def public_view(self) -> list[tuple[PublishedObject, DocumentHandle]]:
        """Everything published so far; held reviews never appear here early."""
        return list(self.public)

    def pending_count(self) -> int:
        return len(self._pending)

    def _publish(self, obj: PublishedObject, handle: DocumentHandle) -> None:
        self.public.append((obj, handle))
        if self.on_publish is not None:
            self.on_publish(obj, handle)

    def description(self) -> dict:
        """Round description file contents: spec plus work fingerprints."""
        return {
            "spec": self.spec,
            "mode": self.mode.value,
            "phase": self.phase.value,
            "works": [
                {
                    "fingerprint": w.nonanon_fingerprint,
                    "coe": w.nonanon_coe,
                    "anonymized": object_fingerprint(w.anonymized_object) if w.anonymized_object else None,
                }
                for w in self.works
            ],
        }


def start_round(
    spec: ReviewProcessSpec,
    works: Sequence[RoundWork],
    mode: Mode = Mode.BLIND,
    escrow=None,
    on_publish: Callable[[PublishedObject, DocumentHandle], None] | None = None,
) -> RoundState:
    """Open a round in the reviewing phase.

    ``escrow`` (an :class:`~academia.escrow.EscrowService`) receives an
    accountability record for every pseudonymous review accepted.
    """
    mode = Mode(mode)
    problems = spec.violations()
    if problems:
        raise SpecInvalid("; ".join(map(str, problems)))
    if not works:
        raise SpecInvalid("a round needs at least one work")
    links = []
    for i, w in enumerate(works):
        if w.nonanon_coe is None:
            raise MissingCoE(f"work {i} has no certificate of existence")
        if mode == Mode.DOUBLE_BLIND:
            if w.anonymized_object is None:
                raise MissingAnonymizedVariant(f"work {i} has no anonymized version")
            links.append(DoubleBlindLink(object_fingerprint(w.anonymized_object), w.nonanon_fingerprint, w.nonanon_coe))
    state = RoundState(spec, mode, list(works), links=links, on_publish=on_publish, escrow=escrow)
    state.phase = Phase.INVITATION
    state.logical_now = spec.start_date
    state.phase = Phase.REVIEWING
    return state


def submit_review(state: RoundState, review: ReviewObject) -> SubmissionReceipt:
    if state.phase != Phase.REVIEWING:
        raise WrongPhase(f"round is {state.phase.value}, not reviewing")
    if review.process != state.spec:
        diff = [
            k for k, v in review.process.to_canonical().items()
            if state.spec.to_canonical().get(k) != v
        ] or sorted(set(state.spec.to_canonical()) - set(review.process.to_canonical()))
        raise ProcessMismatch(f"review process differs from the round spec in {', '.join(diff)}")
    allowed = state.target_fingerprints()
    if not review.targets or any(t.fingerprint not in allowed for t in review.targets):
        raise TargetMismatch("review targets must be works of this round")
    anonymized = state.spec.reviewer_identity_mode != ReviewerMode.OPEN
    if anonymized and isinstance(review.author, OpenAttribution):
        raise ProcessMismatch("this round anonymizes reviewers; submit under a pseudonym")
    obj, handle = review_as_object(review)
    if state.escrow is not None and anonymized:
        state.escrow.attest(review, handle)
    state._pending.append(review)
    published = state.spec.review_text_published_when == TextPublishedWhen.IMMEDIATE
    if published:
        state._publish(obj, handle)
    return SubmissionReceipt(handle, published)


def release(
    state: RoundState,
    now: dt.date,
    ranking: RankingSpec = RankingSpec(),
) -> list[tuple[PublishedObject, DocumentHandle]]:
    """Emit held reviews and the (non-anonymized) works.

    Threshold-gated rounds withhold works scoring below the threshold from
    the round's output; their reviews are released regardless, and the
    authors stay free to publish the work on their own.
    """
    if state.phase != Phase.REVIEWING:
        raise WrongPhase(f"round is {state.phase.value}, not reviewing")
    if now < state.spec.end_date:
        raise TooEarly(f"round ends {state.spec.end_date}, now is {now}")
    out: list[tuple[PublishedObject, DocumentHandle]] = []
    graph = KnowledgeGraph()
    already = {h.fingerprint for _, h in state.public}
    for review in state._pending:
        obj, handle = review_as_object(review)
        graph.index(obj, handle)
        out.append((obj, handle))
        if handle.fingerprint not in already:
            state._publish(obj, handle)
    gated = state.spec.reviewed_work_public == WorkPublic.AFTERWARDS_BEYOND_THRESHOLD
    for w in state.works:
        if gated:
            s = score(graph, w.nonanon_fingerprint, ranking)
            if s is None or s < Fraction(state.spec.acceptance_threshold):
                continue
        handle = w.public_handle()
        out.append((w.private_object, handle))
        if state.spec.reviewed_work_public != WorkPublic.PRIOR:
            state._publish(w.private_object, handle)
    state._pending = []
    state.phase = Phase.RELEASED
    state.logical_now = now
    return out


def verify_double_blind_link(review: ReviewObject, revealed: PublishedObject) -> bool:
    if len(review.targets) != 1:
        raise ValueError("link verification needs a review with exactly one target")
    return fingerprint(revealed.canonical_bytes()) == review.targets[0].fingerprint


def _obj_record(obj: PublishedObject | None) -> dict | None:
    if obj is None:
        return None
    return {"data": obj.canonical_bytes(), "media_type": obj.media_type}


def _obj_from_record(rec: dict | None) -> PublishedObject | None:
    return None if rec is None else object_from_bytes(rec["data"], rec["media_type"])


def round_to_canonical(state: RoundState) -> dict:
    """Full round state for persistence; holds unreleased reviews, so keep it private."""
    return {
        "spec": state.spec,
        "mode": state.mode.value,
        "phase": state.phase.value,
        "now": state.logical_now.isoformat() if state.logical_now else None,
        "works": [
            {
                "private": _obj_record(w.private_object),
                "coe": w.nonanon_coe,
                "anonymized": _obj_record(w.anonymized_object),
                "title": w.title,
                "authors": list(w.authors) if w.authors is not None else None,
            }
            for w in state.works
        ],
        "pending": list(state._pending),
        "public": [dict(_obj_record(obj), handle=h) for obj, h in state.public],
    }


def round_from_canonical(data: dict, escrow=None, on_publish=None) -> RoundState:
    works = [
        RoundWork(
            _obj_from_record(w["private"]),
            parse_coe(w["coe"]) if w["coe"] is not None else None,
            _obj_from_record(w["anonymized"]),
            w["title"],
            tuple(w["authors"]) if w["authors"] is not None else None,
        )
        for w in data["works"]
    ]
    mode = Mode(data["mode"])
    links = [
        DoubleBlindLink(object_fingerprint(w.anonymized_object), w.nonanon_fingerprint, w.nonanon_coe)
        for w in works
        if mode == Mode.DOUBLE_BLIND
    ]
    return RoundState(
        spec=ReviewProcessSpec.from_canonical(data["spec"]),
        mode=mode,
        works=works,
        phase=Phase(data["phase"]),
        logical_now=dt.date.fromisoformat(data["now"]) if data["now"] else None,
        links=links,
        _pending=[ReviewObject.from_canonical(r) for r in data["pending"]],
        public=[(_obj_from_record(p), DocumentHandle.from_canonical(p["handle"])) for p in data["public"]],
        on_publish=on_publish,
        escrow=escrow,
    )
