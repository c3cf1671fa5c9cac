"""Domain objects: published objects, document handles, reviews, citations.

Every object here is an immutable value with a ``to_canonical()`` map and a
matching ``from_canonical()`` constructor, so it fingerprints the same way
on every platform.
"""

from __future__ import annotations

import datetime as dt
import enum
import json
from collections.abc import Callable, Iterator, Mapping, Sequence
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Union

from academia.canonical import (
    Fingerprint,
    canonical_decode,
    canonical_encode,
    fingerprint,
    fingerprint_value,
    parse_fingerprint,
)
from academia.coe import CoERef, coe_date, parse_coe, parse_date
from academia.errors import (
    AcademiaError,
    InvalidReview,
    MalformedEncoding,
    MalformedObject,
)

REVIEW_MEDIA_TYPE = "application/vnd.academia.review"
CITATION_MEDIA_TYPE = "application/vnd.academia.posthoc-citation"
DICTIONARY_MEDIA_TYPE = "application/vnd.academia.dictionary"
DEFAULT_MEDIA_TYPE = "application/octet-stream"
MAX_TRAVERSAL_DEPTH = 64


# ---------------------------------------------------------------------------
# identities


@dataclass(frozen=True)
class Identity:
    display_name: str
    affiliation: str | None = None
    contact: str | None = None
    verify_key: bytes | None = None

    def to_canonical(self) -> dict:
        out: dict[str, Any] = {"name": self.display_name}
        if self.affiliation is not None:
            out["affiliation"] = self.affiliation
        if self.contact is not None:
            out["contact"] = self.contact
        if self.verify_key is not None:
            out["key"] = self.verify_key
        return out

    @classmethod
    def from_canonical(cls, data: Mapping) -> Identity:
        _require_map(data, "identity")
        return cls(data["name"], data.get("affiliation"), data.get("contact"), data.get("key"))

    def __str__(self) -> str:
        if self.affiliation:
            return f"{self.display_name} ({self.affiliation})"
        return self.display_name


def board_key(board: Sequence[Identity]) -> str:
    """Stable identifier of an escrow board: the fingerprint of its member list."""
    return fingerprint_value([m.to_canonical() for m in board]).path_form()


# ---------------------------------------------------------------------------
# published objects


@dataclass(frozen=True)
class Blob:
    data: bytes
    media_type: str = DEFAULT_MEDIA_TYPE

    def canonical_bytes(self) -> bytes:
        return self.data


@dataclass(frozen=True)
class Dictionary:
    entries: Mapping[str, Fingerprint]

    def __post_init__(self):
        object.__setattr__(self, "entries", dict(self.entries))
        for name in self.entries:
            if not isinstance(name, str) or not name:
                raise MalformedObject("dictionary entry names must be non-empty text")

    @property
    def media_type(self) -> str:
        return DICTIONARY_MEDIA_TYPE

    def canonical_bytes(self) -> bytes:
        return canonical_encode({"dictionary": self.entries})

    def __hash__(self):
        return hash(self.canonical_bytes())


PublishedObject = Union[Blob, Dictionary]


def object_fingerprint(obj: PublishedObject) -> Fingerprint:
    return fingerprint(obj.canonical_bytes())


def object_from_bytes(data: bytes, media_type: str = DEFAULT_MEDIA_TYPE) -> PublishedObject:
    if media_type == DICTIONARY_MEDIA_TYPE:
        try:
            raw = canonical_decode(data)["dictionary"]
            return Dictionary({k: parse_fingerprint(v) for k, v in raw.items()})
        except (AcademiaError, KeyError, TypeError, AttributeError) as exc:
            raise MalformedObject(f"bad dictionary object: {exc}") from None
    return Blob(bytes(data), media_type)


def traverse(
    root: Fingerprint,
    resolve: Callable[[Fingerprint], PublishedObject | None],
    max_depth: int = MAX_TRAVERSAL_DEPTH,
) -> Iterator[tuple[tuple[str, ...], Fingerprint, PublishedObject | None]]:
    """Walk a dictionary tree depth first, yielding ``(path, fp, object)``.

    Unresolvable entries are yielded with ``None``. A visited set and depth
    limit bound the walk even for crafted cyclic structures.
    """
    visited: set[Fingerprint] = set()
    stack: list[tuple[tuple[str, ...], Fingerprint]] = [((), root)]
    while stack:
        path, fp = stack.pop()
        if fp in visited:
            continue
        visited.add(fp)
        obj = resolve(fp)
        yield path, fp, obj
        if isinstance(obj, Dictionary) and len(path) < max_depth:
            for name in sorted(obj.entries, reverse=True):
                stack.append((path + (name,), obj.entries[name]))


# ---------------------------------------------------------------------------
# handles


@dataclass(frozen=True, eq=False)
class DocumentHandle:
    """Public name of a work. Equality and hashing use the fingerprint only."""

    fingerprint: Fingerprint
    title: str | None = None
    authors: tuple[str, ...] | None = None
    coes: tuple[CoERef, ...] = ()

    def __post_init__(self):
        if self.authors is not None:
            object.__setattr__(self, "authors", tuple(self.authors))
        object.__setattr__(self, "coes", tuple(self.coes))

    def __eq__(self, other):
        if not isinstance(other, DocumentHandle):
            return NotImplemented
        return self.fingerprint == other.fingerprint

    def __hash__(self):
        return hash(self.fingerprint)

    def earliest_coe_date(self) -> dt.date | None:
        dates = [d for d in map(coe_date, self.coes) if d is not None]
        return min(dates) if dates else None

    def with_coes(self, *coes: CoERef) -> DocumentHandle:
        merged = list(self.coes)
        for c in coes:
            if c not in merged:
                merged.append(c)
        return DocumentHandle(self.fingerprint, self.title, self.authors, tuple(merged))

    def to_canonical(self) -> dict:
        out: dict[str, Any] = {"fingerprint": self.fingerprint, "coes": list(self.coes)}
        if self.title is not None:
            out["title"] = self.title
        if self.authors is not None:
            out["authors"] = list(self.authors)
        return out

    @classmethod
    def from_canonical(cls, data: Mapping) -> DocumentHandle:
        _require_map(data, "handle")
        try:
            return cls(
                fingerprint=parse_fingerprint(data["fingerprint"]),
                title=data.get("title"),
                authors=tuple(data["authors"]) if "authors" in data else None,
                coes=tuple(parse_coe(c) for c in data.get("coes", [])),
            )
        except KeyError as exc:
            raise MalformedObject(f"handle lacks field {exc}") from None

    def to_text(self) -> str:
        authors = ", ".join(json.dumps(a, ensure_ascii=False) for a in self.authors) if self.authors else "-"
        coes = " ".join(c.to_text() for c in self.coes) if self.coes else "-"
        return (
            f"Title: {self.title if self.title is not None else '-'}\n"
            f"Authors: {authors}\n"
            f"Fingerprint: {self.fingerprint.path_form()}\n"
            f"CoEs: {coes}\n"
        )

    @classmethod
    def from_text(cls, text: str) -> DocumentHandle:
        """Parse the four-line form produced by :meth:`to_text`.

        The fingerprint line accepts either textual fingerprint form.
        """
        fields: dict[str, str] = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            key, sep, value = line.partition(":")
            if not sep:
                raise MalformedObject(f"bad handle line {line!r}")
            fields[key.strip().lower()] = value.strip()
        if "fingerprint" not in fields:
            raise MalformedObject("handle lacks a fingerprint line")
        title = fields.get("title", "-")
        authors_text = fields.get("authors", "-")
        authors = None
        if authors_text != "-":
            try:
                authors = tuple(json.loads(f"[{authors_text}]"))
            except json.JSONDecodeError:
                raise MalformedObject(f"bad author list {authors_text!r}") from None
        coes_text = fields.get("coes", "-")
        coes = () if coes_text == "-" else tuple(parse_coe(c) for c in coes_text.split())
        return cls(parse_fingerprint(fields["fingerprint"]), None if title == "-" else title, authors, coes)

    def __repr__(self) -> str:
        return f"DocumentHandle({self.fingerprint.path_form()!r}, title={self.title!r})"


def make_handle(
    obj: PublishedObject,
    title: str | None = None,
    authors: Sequence[str] | None = None,
    coes: Sequence[CoERef] = (),
) -> DocumentHandle:
    return DocumentHandle(object_fingerprint(obj), title, tuple(authors) if authors is not None else None, tuple(coes))


# ---------------------------------------------------------------------------
# grades and review processes


class Orientation(str, enum.Enum):
    HIGHER_IS_BETTER = "higher_is_better"
    LOWER_IS_BETTER = "lower_is_better"


@dataclass(frozen=True)
class Grade:
    name: str
    value: int
    scale_max: int
    orientation: Orientation = Orientation.HIGHER_IS_BETTER

    def normalized(self) -> Fraction:
        """Grade in [0, 1] with 1 always best."""
        ratio = Fraction(self.value, self.scale_max)
        return ratio if self.orientation == Orientation.HIGHER_IS_BETTER else 1 - ratio

    def to_canonical(self) -> dict:
        return {
            "name": self.name,
            "value": self.value,
            "scale": self.scale_max,
            "orientation": self.orientation.value,
        }

    @classmethod
    def from_canonical(cls, data: Mapping) -> Grade:
        _require_map(data, "grade")
        return cls(data["name"], data["value"], data["scale"], Orientation(data["orientation"]))

    def __str__(self) -> str:
        return f"{self.name}: {self.value}/{self.scale_max}, {self.orientation.value.replace('_', ' ')}"


class AuthorKnown(str, enum.Enum):
    PRIOR = "prior"
    AFTERWARDS = "afterwards"
    AFTER_FIRST_RELEASE = "after_first_release"


class ReviewerMode(str, enum.Enum):
    OPEN = "open"
    ANONYMIZED = "anonymized"
    ANONYMIZED_TO_AUTHORS_ONLY = "anonymized_to_authors_only"


class ReviewerKnownWhen(str, enum.Enum):
    PRIOR = "prior"
    IMMEDIATE = "immediate"
    AFTERWARDS = "afterwards"


class TextPublishedWhen(str, enum.Enum):
    IMMEDIATE = "immediate"
    END_OF_PROCESS = "end_of_process"


class TextAudience(str, enum.Enum):
    PUBLIC = "public"
    AUTHORS_AND_COMMITTEE = "authors_and_committee"


class WorkPublic(str, enum.Enum):
    PRIOR = "prior"
    AFTERWARDS = "afterwards"
    AFTERWARDS_BEYOND_THRESHOLD = "afterwards_beyond_threshold"


@dataclass(frozen=True)
class Violation:
    field: str
    rule: str
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.field}: {self.rule}" + (f" ({self.detail})" if self.detail else "")


def _fraction_text(value: Fraction) -> str:
    return f"{value.numerator}/{value.denominator}"


def _parse_fraction(text: str) -> Fraction:
    num, sep, den = text.partition("/")
    if not sep or not num.lstrip("-").isdigit() or not den.isdigit():
        raise MalformedObject(f"expected a rational 'n/d', got {text!r}")
    value = Fraction(int(num), int(den))
    if _fraction_text(value) != text:
        raise MalformedObject(f"rational {text!r} is not in lowest terms")
    return value


@dataclass(frozen=True)
class ReviewProcessSpec:
    """Declarative description of the process that produced a review."""

    start_date: dt.date
    end_date: dt.date
    author_identity_known_to_reviewer: AuthorKnown
    reviewer_identity_mode: ReviewerMode
    reviewer_identity_known_when: ReviewerKnownWhen
    review_text_published_when: TextPublishedWhen
    review_text_audience: TextAudience
    reviewed_work_public: WorkPublic
    acceptance_threshold: Fraction | None = None
    coordinators: tuple[Identity, ...] = ()
    escrow_board: tuple[Identity, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "coordinators", tuple(self.coordinators))
        object.__setattr__(self, "escrow_board", tuple(self.escrow_board))
        if self.acceptance_threshold is not None:
            object.__setattr__(self, "acceptance_threshold", Fraction(self.acceptance_threshold))

    def violations(self, prefix: str = "process") -> list[Violation]:
        out = []
        if self.start_date > self.end_date:
            out.append(Violation(f"{prefix}.end", "DatesInverted", f"{self.start_date} > {self.end_date}"))
        if self.reviewer_identity_mode != ReviewerMode.OPEN and not self.escrow_board:
            out.append(Violation(f"{prefix}.escrow", "EscrowMissing"))
        if self.reviewed_work_public == WorkPublic.AFTERWARDS_BEYOND_THRESHOLD and self.acceptance_threshold is None:
            out.append(Violation(f"{prefix}.threshold", "ThresholdMissing"))
        for i, ident in enumerate(self.coordinators):
            if not ident.display_name:
                out.append(Violation(f"{prefix}.coordinators[{i}]", "EmptyDisplayName"))
        for i, ident in enumerate(self.escrow_board):
            if not ident.display_name:
                out.append(Violation(f"{prefix}.escrow[{i}]", "EmptyDisplayName"))
        return out

    def to_canonical(self) -> dict:
        out = {
            "start": self.start_date.isoformat(),
            "end": self.end_date.isoformat(),
            "author_known": self.author_identity_known_to_reviewer.value,
            "reviewer_mode": self.reviewer_identity_mode.value,
            "reviewer_known_when": self.reviewer_identity_known_when.value,
            "text_published_when": self.review_text_published_when.value,
            "text_audience": self.review_text_audience.value,
            "work_public": self.reviewed_work_public.value,
            "coordinators": list(self.coordinators),
            "escrow": list(self.escrow_board),
        }
        if self.acceptance_threshold is not None:
            out["threshold"] = _fraction_text(self.acceptance_threshold)
        return out

    @classmethod
    def from_canonical(cls, data: Mapping) -> ReviewProcessSpec:
        _require_map(data, "process")
        try:
            threshold = data.get("threshold")
            return cls(
                start_date=parse_date(data["start"]),
                end_date=parse_date(data["end"]),
                author_identity_known_to_reviewer=AuthorKnown(data["author_known"]),
                reviewer_identity_mode=ReviewerMode(data["reviewer_mode"]),
                reviewer_identity_known_when=ReviewerKnownWhen(data["reviewer_known_when"]),
                review_text_published_when=TextPublishedWhen(data["text_published_when"]),
                review_text_audience=TextAudience(data["text_audience"]),
                reviewed_work_public=WorkPublic(data["work_public"]),
                acceptance_threshold=_parse_fraction(threshold) if threshold is not None else None,
                coordinators=tuple(Identity.from_canonical(i) for i in data.get("coordinators", [])),
                escrow_board=tuple(Identity.from_canonical(i) for i in data.get("escrow", [])),
            )
        except KeyError as exc:
            raise MalformedObject(f"process lacks field {exc}") from None
        except ValueError as exc:
            raise MalformedObject(str(exc)) from None


# ---------------------------------------------------------------------------
# reviews


@dataclass(frozen=True)
class OpenAttribution:
    identity: Identity

    def __str__(self) -> str:
        return self.identity.display_name

    def to_canonical(self) -> dict:
        return {"open": self.identity}


@dataclass(frozen=True)
class PseudonymousAttribution:
    pseudonym: str
    escrow_board: tuple[Identity, ...]

    def __post_init__(self):
        object.__setattr__(self, "escrow_board", tuple(self.escrow_board))

    @property
    def board_key(self) -> str:
        return board_key(self.escrow_board)

    def __str__(self) -> str:
        return self.pseudonym

    def to_canonical(self) -> dict:
        return {"pseudonym": self.pseudonym, "escrow": list(self.escrow_board)}


ReviewerAttribution = Union[OpenAttribution, PseudonymousAttribution]


def _attribution_from_canonical(data: Mapping) -> ReviewerAttribution:
    _require_map(data, "author")
    if "open" in data:
        return OpenAttribution(Identity.from_canonical(data["open"]))
    if "pseudonym" in data:
        return PseudonymousAttribution(data["pseudonym"], tuple(Identity.from_canonical(i) for i in data["escrow"]))
    raise MalformedObject("author must be open or pseudonymous")


@dataclass(frozen=True)
class ReviewObject:
    author: ReviewerAttribution
    title: str
    targets: tuple[DocumentHandle, ...]
    grades: tuple[Grade, ...]
    comments: str
    process: ReviewProcessSpec

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        object.__setattr__(self, "grades", tuple(self.grades))

    def to_canonical(self) -> dict:
        return {
            "author": self.author,
            "title": self.title,
            "targets": list(self.targets),
            "grades": list(self.grades),
            "comments": self.comments,
            "process": self.process,
        }

    @classmethod
    def from_canonical(cls, data: Mapping) -> ReviewObject:
        _require_map(data, "review")
        if set(data) != _REVIEW_KEYS:
            raise MalformedObject(f"review fields must be exactly {sorted(_REVIEW_KEYS)}")
        try:
            return cls(
                author=_attribution_from_canonical(data["author"]),
                title=data["title"],
                targets=tuple(DocumentHandle.from_canonical(t) for t in data["targets"]),
                grades=tuple(Grade.from_canonical(g) for g in data["grades"]),
                comments=data["comments"],
                process=ReviewProcessSpec.from_canonical(data["process"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, AcademiaError):
                raise
            raise MalformedObject(f"bad review: {exc}") from None

    def canonical_bytes(self) -> bytes:
        return canonical_encode(self)

    @classmethod
    def from_bytes(cls, data: bytes) -> ReviewObject:
        return cls.from_canonical(canonical_decode(data))

    def quality(self) -> Fraction | None:
        """Mean normalized grade, or ``None`` for a review without grades."""
        if not self.grades:
            return None
        return sum((g.normalized() for g in self.grades), Fraction(0)) / len(self.grades)


_REVIEW_KEYS = {"author", "title", "targets", "grades", "comments", "process"}


def validate_review(review: ReviewObject, known_identities: Sequence[Identity] = ()) -> list[Violation]:
    """Check every review invariant; returns the violations, never raises.

    ``known_identities`` lets a caller that knows real reviewer names scan a
    pseudonymous review for leaks.
    """
    out: list[Violation] = []
    if not review.title:
        out.append(Violation("title", "EmptyTitle"))
    if not review.targets:
        out.append(Violation("targets", "NoTargets"))
    for i, g in enumerate(review.grades):
        where = f"grades[{i}]"
        if not isinstance(g.value, int) or not isinstance(g.scale_max, int):
            out.append(Violation(where, "GradeNotInteger"))
            continue
        if g.scale_max < 1:
            out.append(Violation(where, "ScaleInvalid", f"scale_max {g.scale_max}"))
        elif not 0 <= g.value <= g.scale_max:
            out.append(Violation(where, "GradeOutOfRange", f"{g.value}/{g.scale_max}"))
    author = review.author
    if isinstance(author, OpenAttribution):
        if not author.identity.display_name:
            out.append(Violation("author", "EmptyDisplayName"))
    else:
        if not author.pseudonym:
            out.append(Violation("author.pseudonym", "EmptyPseudonym"))
        if not author.escrow_board:
            out.append(Violation("author.escrow", "EscrowMissing"))
        if known_identities:
            blob = review.canonical_bytes()
            for ident in known_identities:
                if ident.display_name and ident.display_name.encode("utf-8") in blob and ident not in author.escrow_board:
                    out.append(Violation("author", "IdentityLeak", "a sealed identity appears in the review"))
                    break
    out.extend(review.process.violations())
    if review.process.reviewer_identity_mode == ReviewerMode.OPEN and isinstance(author, PseudonymousAttribution):
        out.append(Violation("author", "AttributionMismatch", "open process with pseudonymous author"))
    if review.process.reviewer_identity_mode != ReviewerMode.OPEN and isinstance(author, OpenAttribution):
        out.append(Violation("author", "AttributionMismatch", "anonymized process with open author"))
    return out


def review_as_object(review: ReviewObject) -> tuple[Blob, DocumentHandle]:
    """The review as a publishable blob plus a handle named after it."""
    violations = validate_review(review)
    if violations:
        raise InvalidReview(violations)
    blob = Blob(review.canonical_bytes(), REVIEW_MEDIA_TYPE)
    return blob, make_handle(blob, review.title, [str(review.author)])


# ---------------------------------------------------------------------------
# post-hoc citations


class Relation(str, enum.Enum):
    PRIOR_WORK = "prior_work"
    INFLUENCE = "influence"
    PLAGIARISM = "plagiarism"


@dataclass(frozen=True)
class PostHocCitation:
    """``source`` is the earlier or original work, ``target`` the derived one."""

    source: DocumentHandle
    target: DocumentHandle
    relation: Relation
    statement: str
    author: Identity

    def to_canonical(self) -> dict:
        return {
            "source": self.source,
            "target": self.target,
            "relation": self.relation.value,
            "statement": self.statement,
            "author": self.author,
        }

    @classmethod
    def from_canonical(cls, data: Mapping) -> PostHocCitation:
        _require_map(data, "citation")
        if set(data) != _CITATION_KEYS:
            raise MalformedObject(f"citation fields must be exactly {sorted(_CITATION_KEYS)}")
        try:
            return cls(
                DocumentHandle.from_canonical(data["source"]),
                DocumentHandle.from_canonical(data["target"]),
                Relation(data["relation"]),
                data["statement"],
                Identity.from_canonical(data["author"]),
            )
        except (KeyError, ValueError) as exc:
            if isinstance(exc, AcademiaError):
                raise
            raise MalformedObject(f"bad citation: {exc}") from None

    def canonical_bytes(self) -> bytes:
        return canonical_encode(self)


_CITATION_KEYS = {"source", "target", "relation", "statement", "author"}


def validate_posthoc(c: PostHocCitation) -> list[Violation]:
    # Publication order is deliberately not checked: late assertions are legal.
    out = []
    if c.source.fingerprint == c.target.fingerprint:
        out.append(Violation("target", "SelfCitation"))
    if c.relation == Relation.PLAGIARISM and not c.statement.strip():
        out.append(Violation("statement", "StatementRequired"))
    if not c.author.display_name:
        out.append(Violation("author", "EmptyDisplayName"))
    return out


def citation_as_object(c: PostHocCitation) -> tuple[Blob, DocumentHandle]:
    violations = validate_posthoc(c)
    if violations:
        raise InvalidReview(violations)
    blob = Blob(c.canonical_bytes(), CITATION_MEDIA_TYPE)
    return blob, make_handle(blob, f"Post-hoc citation ({c.relation.value})", [c.author.display_name])


# ---------------------------------------------------------------------------


def parse_semantic(data: bytes) -> ReviewObject | PostHocCitation | None:
    """Recognize review and citation encodings; anything else is opaque."""
    try:
        value = canonical_decode(data)
    except MalformedEncoding:
        return None
    if not isinstance(value, dict):
        return None
    try:
        if set(value) == _REVIEW_KEYS:
            return ReviewObject.from_canonical(value)
        if set(value) == _CITATION_KEYS:
            return PostHocCitation.from_canonical(value)
    except (AcademiaError, KeyError, TypeError, ValueError, AttributeError):
        return None
    return None


def _require_map(data: Any, what: str) -> None:
    if not isinstance(data, Mapping):
        raise MalformedObject(f"{what} must be a map")
