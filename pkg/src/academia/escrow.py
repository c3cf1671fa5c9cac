"""Identity escrow for anonymized reviewers.

The service issues pseudonyms, keeps the real identities sealed, and runs
petition-driven investigations whose only public trace is an append-only
log of review handles and state transitions.
"""

from __future__ import annotations

import base64
import datetime as dt
import enum
import random
import secrets
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

from cryptography.fernet import Fernet, InvalidToken
from cryptography.hazmat.primitives.kdf.scrypt import Scrypt

from academia.canonical import canonical_decode, canonical_encode
from academia.errors import (
    EscrowLocked,
    InvestigationClosed,
    NotYetExpired,
    PetitionerOnBoard,
    PetitionTooSmall,
    UnknownInvestigation,
    UnknownPseudonym,
)
from academia.model import (
    DocumentHandle,
    Identity,
    PseudonymousAttribution,
    ReviewObject,
    ReviewProcessSpec,
    board_key,
)

DEFAULT_MIN_PETITIONERS = 3
DEFAULT_WINDOW = dt.timedelta(days=60)


class InvestigationState(str, enum.Enum):
    OPEN = "open"
    RESOLVED_RETRACTION = "resolved_retraction"
    RESOLVED_CLARIFICATION = "resolved_clarification"
    ESCROW_NONRESPONSIVE = "escrow_nonresponsive"


class Action(str, enum.Enum):
    RETRACTION = "retraction"
    CLARIFICATION = "clarification"


@dataclass
class Investigation:
    id: str
    petitioners: tuple[Identity, ...]
    reviews_in_question: tuple[DocumentHandle, ...]
    state: InvestigationState
    deadline: dt.date
    opened: dt.date


@dataclass(frozen=True)
class CounterReviewTemplate:
    """Draft review the escrowed author fills in to retract or clarify.

    It is authored under the original pseudonym and targets the disputed
    reviews, so publishing it needs no identity disclosure.
    """

    author: PseudonymousAttribution
    title: str
    targets: tuple[DocumentHandle, ...]
    process: ReviewProcessSpec
    action: Action

    def fill(self, comments: str, grades=()) -> ReviewObject:
        return ReviewObject(self.author, self.title, self.targets, tuple(grades), comments, self.process)


@dataclass(frozen=True)
class _Attested:
    pseudonym: str
    review: ReviewObject
    handle: DocumentHandle


class EscrowService:
    """A board that seals reviewer identities behind pseudonyms.

    ``rng`` drives pseudonym numbering; pass a seeded ``random.Random`` for
    reproducible simulations, otherwise numbers come from ``secrets``.
    """

    def __init__(self, label: str, board: Sequence[Identity], rng: random.Random | None = None):
        if not board:
            raise ValueError("an escrow board needs at least one member")
        self.label = label
        self.board = tuple(board)
        self.responsive = True
        self._rng = rng
        self._records: dict[str, Identity] = {}
        self._numbers: set[int] = set()
        self._attested: dict = {}
        self.investigations: dict[str, Investigation] = {}
        self.public_log: list[bytes] = []

    @property
    def board_key(self) -> str:
        return board_key(self.board)

    def __repr__(self) -> str:
        return f"EscrowService({self.label!r}, members={len(self.board)}, sealed={len(self._records)})"

    # -- pseudonyms -------------------------------------------------------

    def _draw(self, bound: int) -> int:
        return self._rng.randrange(bound) if self._rng is not None else secrets.randbelow(bound)

    def _fresh_number(self) -> int:
        # Numbers are drawn at random from a range kept at least twice the
        # number issued, so the number leaks nothing about registration order.
        bound = max(16, 2 * (len(self._numbers) + 1))
        while True:
            n = 1 + self._draw(bound)
            if n not in self._numbers:
                self._numbers.add(n)
                return n

    def register(self, identity: Identity) -> str:
        while True:
            pseudonym = f"Anonymous reviewer {self._fresh_number()} mandated by {self.label}"
            if identity.display_name and identity.display_name in pseudonym:
                continue
            self._records[pseudonym] = identity
            return pseudonym

    def attribution(self, pseudonym: str) -> PseudonymousAttribution:
        if pseudonym not in self._records:
            raise UnknownPseudonym(f"unknown pseudonym {pseudonym!r}")
        return PseudonymousAttribution(pseudonym, self.board)

    def pseudonyms(self) -> list[str]:
        return sorted(self._records)

    def attest(self, review: ReviewObject, handle: DocumentHandle) -> None:
        """Record that a round accepted ``review`` under one of our pseudonyms."""
        author = review.author
        if not isinstance(author, PseudonymousAttribution) or author.pseudonym not in self._records:
            raise UnknownPseudonym("review is not attributed to a pseudonym of this escrow")
        self._attested[handle.fingerprint] = _Attested(author.pseudonym, review, handle)

    def is_accountable(self, pseudonym: str) -> bool:
        return pseudonym in self._records

    def reveal_internally(self, pseudonym: str) -> Identity:
        """Board-internal lookup. Never route the result to a public channel."""
        try:
            return self._records[pseudonym]
        except KeyError:
            raise UnknownPseudonym(f"unknown pseudonym {pseudonym!r}") from None

    # -- investigations ---------------------------------------------------

    def _log(self, inv: Investigation, date: dt.date, event: str) -> None:
        self.public_log.append(
            canonical_encode(
                {
                    "investigation": inv.id,
                    "board": self.label,
                    "reviews": [h.fingerprint for h in inv.reviews_in_question],
                    "event": event,
                    "date": date.isoformat(),
                }
            )
        )

    def open_investigation(
        self,
        petitioners: Sequence[Identity],
        reviews: Sequence[DocumentHandle],
        now: dt.date,
        min_petitioners: int = DEFAULT_MIN_PETITIONERS,
        window: dt.timedelta = DEFAULT_WINDOW,
    ) -> Investigation:
        distinct = tuple(dict.fromkeys(petitioners))
        if len(distinct) < min_petitioners:
            raise PetitionTooSmall(f"{len(distinct)} distinct petitioners, {min_petitioners} required")
        board_names = {m.display_name for m in self.board}
        for p in distinct:
            if p in self.board or p.display_name in board_names:
                raise PetitionerOnBoard(f"petitioner {p.display_name!r} sits on the escrow board")
        inv = Investigation(
            id=f"{self.label}/inv-{len(self.investigations) + 1}",
            petitioners=distinct,
            reviews_in_question=tuple(reviews),
            state=InvestigationState.OPEN,
            deadline=now + window,
            opened=now,
        )
        self.investigations[inv.id] = inv
        self._log(inv, now, InvestigationState.OPEN.value)
        return inv

    def _get(self, inv_id: str) -> Investigation:
        try:
            inv = self.investigations[inv_id]
        except KeyError:
            raise UnknownInvestigation(f"unknown investigation {inv_id!r}") from None
        if inv.state != InvestigationState.OPEN:
            raise InvestigationClosed(f"investigation {inv_id} is {inv.state.value}")
        return inv

    def resolve_investigation(self, inv_id: str, action: Action, now: dt.date) -> list[CounterReviewTemplate]:
        """Board adjudication; one template per pseudonym behind the disputed reviews."""
        inv = self._get(inv_id)
        action = Action(action)
        grouped: dict[str, list[_Attested]] = {}
        for handle in inv.reviews_in_question:
            rec = self._attested.get(handle.fingerprint)
            if rec is None:
                continue
            grouped.setdefault(rec.pseudonym, []).append(rec)
        templates = []
        verb = "Retraction" if action == Action.RETRACTION else "Clarification"
        for pseudonym in sorted(grouped):
            recs = grouped[pseudonym]
            titles = ", ".join(r.review.title for r in recs)
            templates.append(
                CounterReviewTemplate(
                    author=PseudonymousAttribution(pseudonym, self.board),
                    title=f"{verb} of {titles}",
                    targets=tuple(r.handle for r in recs),
                    process=recs[0].review.process,
                    action=action,
                )
            )
        inv.state = (
            InvestigationState.RESOLVED_RETRACTION
            if action == Action.RETRACTION
            else InvestigationState.RESOLVED_CLARIFICATION
        )
        self._log(inv, now, inv.state.value)
        return templates

    def expire_investigation(self, inv_id: str, now: dt.date) -> InvestigationState:
        inv = self._get(inv_id)
        if now <= inv.deadline:
            raise NotYetExpired(f"investigation {inv_id} runs until {inv.deadline}")
        inv.state = InvestigationState.ESCROW_NONRESPONSIVE
        self.responsive = False
        self._log(inv, now, inv.state.value)
        return inv.state

    def public_status(self) -> list[dict]:
        return [
            {
                "id": inv.id,
                "reviews": [h.fingerprint.path_form() for h in inv.reviews_in_question],
                "state": inv.state.value,
                "deadline": inv.deadline.isoformat(),
            }
            for inv in self.investigations.values()
        ]

    # -- persistence ------------------------------------------------------

    def _sealed_state(self) -> dict:
        return {
            "label": self.label,
            "board": list(self.board),
            "responsive": self.responsive,
            "records": {p: ident for p, ident in self._records.items()},
            "numbers": sorted(self._numbers),
            "attested": [
                {"pseudonym": a.pseudonym, "review": a.review, "handle": a.handle}
                for _, a in sorted(self._attested.items())
            ],
            "investigations": [
                {
                    "id": inv.id,
                    "petitioners": list(inv.petitioners),
                    "reviews": list(inv.reviews_in_question),
                    "state": inv.state.value,
                    "deadline": inv.deadline.isoformat(),
                    "opened": inv.opened.isoformat(),
                }
                for inv in self.investigations.values()
            ],
            "log": list(self.public_log),
        }

    def save(self, path: Path, passphrase: str) -> None:
        """Encrypt the whole state (sealed records included) under the board passphrase."""
        salt = secrets.token_bytes(16)
        token = Fernet(_derive_key(passphrase, salt)).encrypt(canonical_encode(self._sealed_state()))
        Path(path).write_bytes(b"ACA-ESCROW-1\n" + base64.b64encode(salt) + b"\n" + token)

    @classmethod
    def load(cls, path: Path, passphrase: str, rng: random.Random | None = None) -> EscrowService:
        magic, salt_b64, token = Path(path).read_bytes().split(b"\n", 2)
        if magic != b"ACA-ESCROW-1":
            raise EscrowLocked("not an escrow file")
        try:
            plain = Fernet(_derive_key(passphrase, base64.b64decode(salt_b64))).decrypt(token)
        except InvalidToken:
            raise EscrowLocked("wrong passphrase or corrupted escrow file") from None
        data = canonical_decode(plain)
        svc = cls(data["label"], [Identity.from_canonical(m) for m in data["board"]], rng)
        svc.responsive = data["responsive"]
        svc._records = {p: Identity.from_canonical(i) for p, i in data["records"].items()}
        svc._numbers = set(data["numbers"])
        for a in data["attested"]:
            handle = DocumentHandle.from_canonical(a["handle"])
            svc._attested[handle.fingerprint] = _Attested(
                a["pseudonym"], ReviewObject.from_canonical(a["review"]), handle
            )
        for i in data["investigations"]:
            inv = Investigation(
                id=i["id"],
                petitioners=tuple(Identity.from_canonical(p) for p in i["petitioners"]),
                reviews_in_question=tuple(DocumentHandle.from_canonical(h) for h in i["reviews"]),
                state=InvestigationState(i["state"]),
                deadline=dt.date.fromisoformat(i["deadline"]),
                opened=dt.date.fromisoformat(i["opened"]),
            )
            svc.investigations[inv.id] = inv
        svc.public_log = list(data["log"])
        return svc


def _derive_key(passphrase: str, salt: bytes) -> bytes:
    kdf = Scrypt(salt=salt, length=32, n=2**14, r=8, p=1)
    return base64.urlsafe_b64encode(kdf.derive(passphrase.encode("utf-8")))


# Module-level spellings of the service operations.


def register(service: EscrowService, identity: Identity) -> str:
    return service.register(identity)


def open_investigation(service: EscrowService, petitioners, reviews, now, min_petitioners=DEFAULT_MIN_PETITIONERS):
    return service.open_investigation(petitioners, reviews, now, min_petitioners)


def resolve_investigation(service: EscrowService, inv_id: str, action: Action, now: dt.date):
    return service.resolve_investigation(inv_id, action, now)


def expire_investigation(service: EscrowService, inv_id: str, now: dt.date) -> InvestigationState:
    return service.expire_investigation(inv_id, now)
