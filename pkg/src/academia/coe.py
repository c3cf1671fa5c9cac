"""Certificates of existence (CoEs).

Two sources are supported side by side:

* registry stamps: an authority signs ``(authority, date, external id,
  fingerprint)`` with Ed25519;
* linked stamps: fingerprints collected during a round are folded into a
  Merkle tree whose root is chained onto the previous round head, and only
  the head is published.

Stamping only ever sees :class:`~academia.canonical.Fingerprint` values.
"""

from __future__ import annotations

import datetime as dt
import enum
import hashlib
import re
import secrets
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from academia.canonical import (
    ALGORITHMS,
    Fingerprint,
    b64url_decode,
    b64url_encode,
    canonical_decode,
    canonical_encode,
    parse_fingerprint,
)
from academia.errors import EmptyRound, MalformedCoE, MalformedEncoding

MAX_AUDIT_PATH = 40
ZERO_HEAD = bytes(32)
SIGNATURE_SCHEME = "ed25519"

_AUTHORITY = re.compile(r"[a-z0-9][a-z0-9._-]*")
_DATE = re.compile(r"\d{4}-\d{2}-\d{2}")


class Verdict(str, enum.Enum):
    VALID = "valid"
    INVALID = "invalid"
    UNKNOWN_AUTHORITY = "unknown_authority"


class Side(str, enum.Enum):
    LEFT = "left"
    RIGHT = "right"


def parse_date(text: str) -> dt.date:
    if not isinstance(text, str) or not _DATE.fullmatch(text):
        raise ValueError(f"expected YYYY-MM-DD, got {text!r}")
    return dt.date.fromisoformat(text)


def _check_authority(authority_id: str) -> str:
    if not isinstance(authority_id, str) or not _AUTHORITY.fullmatch(authority_id) or authority_id == "link":
        raise MalformedCoE(f"bad authority identifier {authority_id!r}")
    return authority_id


# ---------------------------------------------------------------------------
# CoE references


@dataclass(frozen=True)
class RegistryStamp:
    authority: str
    date: dt.date
    external_id: str
    signature: bytes = b""
    scheme: str = SIGNATURE_SCHEME

    def __post_init__(self):
        _check_authority(self.authority)
        if not self.external_id or "#" in self.external_id or any(c.isspace() for c in self.external_id):
            raise MalformedCoE(f"bad external id {self.external_id!r}")

    def signed_message(self, fp: Fingerprint) -> bytes:
        return _registry_message(self.authority, self.date, self.external_id, fp)

    def to_text(self) -> str:
        text = f"{self.authority}:{self.date.isoformat()}:{self.external_id}"
        if self.signature:
            text += f"#{self.scheme}:{b64url_encode(self.signature)}"
        return text

    def to_canonical(self) -> str:
        return self.to_text()

    def __str__(self) -> str:
        return self.to_text()


@dataclass(frozen=True)
class LinkedStamp:
    authority: str
    round: int
    leaf_index: int
    audit_path: tuple[tuple[Side, bytes], ...]
    round_head: bytes
    prev_head: bytes

    def __post_init__(self):
        _check_authority(self.authority)
        if self.round < 0 or self.leaf_index < 0:
            raise MalformedCoE("round and leaf index must be non-negative")
        if len(self.audit_path) > MAX_AUDIT_PATH:
            raise MalformedCoE(f"audit path longer than {MAX_AUDIT_PATH}")
        object.__setattr__(
            self, "audit_path", tuple((Side(side), bytes(d)) for side, d in self.audit_path)
        )

    def receipt_bytes(self) -> bytes:
        return canonical_encode(
            {
                "leaf": self.leaf_index,
                "path": [[side.value, digest] for side, digest in self.audit_path],
                "head": self.round_head,
                "prev": self.prev_head,
            }
        )

    def to_text(self) -> str:
        return f"link:{self.authority}:{self.round}:{b64url_encode(self.receipt_bytes())}"

    def to_canonical(self) -> str:
        return self.to_text()

    def __str__(self) -> str:
        return self.to_text()


CoERef = Union[RegistryStamp, LinkedStamp]


def parse_coe(text: str) -> CoERef:
    """Parse the textual CoE grammar.

    ``authority:YYYY-MM-DD:external_id[#scheme:base64url-signature]`` or
    ``link:authority:round:base64url-receipt``.
    """
    if not isinstance(text, str):
        raise MalformedCoE("CoE must be text")
    if text.startswith("link:"):
        parts = text.split(":")
        if len(parts) != 4 or not parts[2].isdigit():
            raise MalformedCoE(f"bad linked stamp {text!r}")
        try:
            receipt = canonical_decode(b64url_decode(parts[3]))
            path = tuple((Side(side), digest) for side, digest in receipt["path"])
            stamp = LinkedStamp(
                authority=parts[1],
                round=int(parts[2]),
                leaf_index=receipt["leaf"],
                audit_path=path,
                round_head=receipt["head"],
                prev_head=receipt["prev"],
            )
        except MalformedCoE:
            raise
        except (ValueError, KeyError, TypeError, MalformedEncoding) as exc:
            raise MalformedCoE(f"bad linked stamp receipt: {exc}") from None
        if not isinstance(stamp.leaf_index, int) or not all(isinstance(d, bytes) for _, d in path):
            raise MalformedCoE("bad linked stamp receipt types")
        return stamp
    body, _, sig = text.partition("#")
    parts = body.split(":", 2)
    if len(parts) != 3:
        raise MalformedCoE(f"bad registry stamp {text!r}")
    authority, date_text, external_id = parts
    try:
        date = parse_date(date_text)
    except ValueError as exc:
        raise MalformedCoE(str(exc)) from None
    signature, scheme = b"", SIGNATURE_SCHEME
    if sig:
        scheme, _, sig_text = sig.partition(":")
        try:
            signature = b64url_decode(sig_text)
        except ValueError:
            raise MalformedCoE(f"bad signature encoding in {text!r}") from None
        if not scheme or not signature:
            raise MalformedCoE(f"bad signature in {text!r}")
    return RegistryStamp(authority, date, external_id, signature, scheme)


def coe_date(coe: CoERef) -> dt.date | None:
    """Calendar date carried by a CoE; linked stamps are ordered by round only."""
    return coe.date if isinstance(coe, RegistryStamp) else None


# ---------------------------------------------------------------------------
# Merkle rounds


def leaf_hash(fp: Fingerprint) -> bytes:
    return hashlib.sha256(b"\x00" + bytes([ALGORITHMS[fp.algorithm].tag]) + fp.digest).digest()


def node_hash(left: bytes, right: bytes) -> bytes:
    return hashlib.sha256(b"\x01" + left + right).digest()


def chain_head(prev_head: bytes, root: bytes) -> bytes:
    return hashlib.sha256(prev_head + root).digest()


def merkle_levels(leaves: list[bytes]) -> list[list[bytes]]:
    """All tree levels, leaves first; odd levels duplicate their last node."""
    if not leaves:
        raise EmptyRound("no leaves")
    levels = [list(leaves)]
    while len(levels[-1]) > 1:
        level = levels[-1]
        if len(level) % 2:
            level = level + [level[-1]]
        levels.append([node_hash(level[i], level[i + 1]) for i in range(0, len(level), 2)])
    return levels


def audit_path(levels: list[list[bytes]], index: int) -> list[tuple[Side, bytes]]:
    path = []
    for level in levels[:-1]:
        sibling = index ^ 1
        digest = level[sibling] if sibling < len(level) else level[index]
        path.append((Side.LEFT if index & 1 else Side.RIGHT, digest))
        index //= 2
    return path


def fold_path(leaf: bytes, path) -> bytes:
    h = leaf
    for side, digest in path:
        h = node_hash(digest, h) if side == Side.LEFT else node_hash(h, digest)
    return h


# ---------------------------------------------------------------------------
# authorities


def _registry_message(authority: str, date: dt.date, external_id: str, fp: Fingerprint) -> bytes:
    return canonical_encode(
        {
            "kind": "registry-stamp",
            "authority": authority,
            "date": date.isoformat(),
            "external_id": external_id,
            "fingerprint": fp,
        }
    )


def verify_key_for(signing_key: bytes) -> bytes:
    return (
        Ed25519PrivateKey.from_private_bytes(signing_key)
        .public_key()
        .public_bytes(Encoding.Raw, PublicFormat.Raw)
    )


@dataclass(frozen=True)
class PublishedHead:
    round: int
    head: bytes
    note: str = ""


@dataclass(frozen=True)
class PendingReceipt:
    authority: str
    round: int
    leaf_index: int
    fingerprint: Fingerprint


@dataclass(eq=False)
class TimestampAuthority:
    """Single-writer stamping authority.

    ``signing_key`` is a 32-byte Ed25519 seed. Appends and closes take a lock
    so a service may share one instance across request threads.
    """

    authority_id: str
    signing_key: bytes
    published_heads: list[PublishedHead] = field(default_factory=list)
    pending: list[Fingerprint] = field(default_factory=list)
    serial: int = 0

    def __post_init__(self):
        _check_authority(self.authority_id)
        if len(self.signing_key) != 32:
            raise ValueError("signing key must be a 32-byte seed")
        self._lock = threading.Lock()

    @classmethod
    def generate(cls, authority_id: str, seed: bytes | None = None) -> TimestampAuthority:
        return cls(authority_id, seed if seed is not None else secrets.token_bytes(32))

    @property
    def verify_key(self) -> bytes:
        return verify_key_for(self.signing_key)

    @property
    def next_round(self) -> int:
        return self.published_heads[-1].round + 1 if self.published_heads else 0

    @property
    def last_head(self) -> bytes:
        return self.published_heads[-1].head if self.published_heads else ZERO_HEAD

    def stamp(self, fp: Fingerprint, date: dt.date, external_id: str | None = None) -> RegistryStamp:
        if not isinstance(fp, Fingerprint):
            raise TypeError("authorities stamp fingerprints, never content")
        with self._lock:
            if external_id is None:
                self.serial += 1
                external_id = f"{self.authority_id}-{self.serial}"
        key = Ed25519PrivateKey.from_private_bytes(self.signing_key)
        signature = key.sign(_registry_message(self.authority_id, date, external_id, fp))
        return RegistryStamp(self.authority_id, date, external_id, signature)

    def append(self, fp: Fingerprint) -> PendingReceipt:
        if not isinstance(fp, Fingerprint):
            raise TypeError("authorities stamp fingerprints, never content")
        with self._lock:
            self.pending.append(fp)
            return PendingReceipt(self.authority_id, self.next_round, len(self.pending) - 1, fp)

    def close(self, note: str = "") -> tuple[bytes, list[LinkedStamp]]:
        with self._lock:
            if not self.pending:
                raise EmptyRound(f"round {self.next_round} of {self.authority_id} has no pending fingerprints")
            levels = merkle_levels([leaf_hash(fp) for fp in self.pending])
            prev, rnd = self.last_head, self.next_round
            head = chain_head(prev, levels[-1][0])
            stamps = [
                LinkedStamp(self.authority_id, rnd, i, tuple(audit_path(levels, i)), head, prev)
                for i in range(len(self.pending))
            ]
            self.published_heads.append(PublishedHead(rnd, head, note))
            self.pending = []
            return head, stamps

    # -- persistence ------------------------------------------------------

    def to_canonical(self) -> dict:
        return {
            "authority": self.authority_id,
            "key": self.signing_key,
            "heads": [[h.round, h.head, h.note] for h in self.published_heads],
            "pending": [fp.path_form() for fp in self.pending],
            "serial": self.serial,
        }

    @classmethod
    def from_canonical(cls, data: dict) -> TimestampAuthority:
        return cls(
            authority_id=data["authority"],
            signing_key=data["key"],
            published_heads=[PublishedHead(r, h, n) for r, h, n in data["heads"]],
            pending=[parse_fingerprint(p) for p in data["pending"]],
            serial=data["serial"],
        )

    def heads_text(self) -> str:
        return "".join(f"round {h.round} {h.head.hex()}\n" for h in self.published_heads)


def stamp_registry(fp: Fingerprint, authority: TimestampAuthority, date: dt.date, external_id: str | None = None) -> RegistryStamp:
    return authority.stamp(fp, date, external_id)


def round_append(authority: TimestampAuthority, fp: Fingerprint) -> PendingReceipt:
    return authority.append(fp)


def round_close(authority: TimestampAuthority, note: str = "") -> tuple[bytes, list[LinkedStamp]]:
    return authority.close(note)


def parse_heads(text: str) -> dict[int, bytes]:
    """Read an append-only head publication file (``round <n> <hex>`` lines)."""
    heads: dict[int, bytes] = {}
    last = -1
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 3 or parts[0] != "round" or not parts[1].isdigit():
            raise MalformedCoE(f"line {lineno}: expected 'round <n> <hex head>'")
        rnd = int(parts[1])
        if rnd <= last:
            raise MalformedCoE(f"line {lineno}: round numbers must strictly increase")
        try:
            head = bytes.fromhex(parts[2])
        except ValueError:
            raise MalformedCoE(f"line {lineno}: bad hex head") from None
        if len(head) != 32:
            raise MalformedCoE(f"line {lineno}: head must be 32 bytes")
        heads[rnd] = head
        last = rnd
    return heads


# ---------------------------------------------------------------------------
# verification


@dataclass
class AuthorityAnchor:
    verify_key: bytes | None = None
    heads: dict[int, bytes] = field(default_factory=dict)


@dataclass
class TrustAnchors:
    """What a third party trusts: authority keys and witnessed round heads."""

    authorities: dict[str, AuthorityAnchor] = field(default_factory=dict)

    def anchor(self, authority_id: str, verify_key: bytes | None = None, heads: dict[int, bytes] | None = None) -> TrustAnchors:
        entry = self.authorities.setdefault(authority_id, AuthorityAnchor())
        if verify_key is not None:
            entry.verify_key = verify_key
        if heads:
            entry.heads.update(heads)
        return self

    def trust(self, authority: TimestampAuthority) -> TrustAnchors:
        return self.anchor(
            authority.authority_id,
            authority.verify_key,
            {h.round: h.head for h in authority.published_heads},
        )

    def to_canonical(self) -> dict:
        return {
            name: {
                "key": a.verify_key,
                "heads": [[r, h] for r, h in sorted(a.heads.items())],
            }
            for name, a in self.authorities.items()
        }

    @classmethod
    def from_canonical(cls, data: dict) -> TrustAnchors:
        return cls({name: AuthorityAnchor(a["key"], {r: h for r, h in a["heads"]}) for name, a in data.items()})

    @classmethod
    def load(cls, path: Path) -> TrustAnchors:
        return cls.from_canonical(canonical_decode(Path(path).read_bytes()))

    def save(self, path: Path) -> None:
        Path(path).write_bytes(canonical_encode(self))


def _verify_registry(coe: RegistryStamp, fp: Fingerprint, anchor: AuthorityAnchor) -> Verdict:
    if anchor.verify_key is None:
        return Verdict.UNKNOWN_AUTHORITY
    if coe.scheme != SIGNATURE_SCHEME or not coe.signature:
        return Verdict.INVALID
    try:
        Ed25519PublicKey.from_public_bytes(anchor.verify_key).verify(coe.signature, coe.signed_message(fp))
    except (InvalidSignature, ValueError):
        return Verdict.INVALID
    return Verdict.VALID


def _verify_linked(coe: LinkedStamp, fp: Fingerprint, anchor: AuthorityAnchor) -> Verdict:
    if not anchor.heads:
        return Verdict.UNKNOWN_AUTHORITY
    depth = len(coe.audit_path)
    if coe.leaf_index >= 1 << depth:
        return Verdict.INVALID
    for level, (side, digest) in enumerate(coe.audit_path):
        expected = Side.LEFT if (coe.leaf_index >> level) & 1 else Side.RIGHT
        if side != expected or len(digest) != 32:
            return Verdict.INVALID
    root = fold_path(leaf_hash(fp), coe.audit_path)
    if chain_head(coe.prev_head, root) != coe.round_head:
        return Verdict.INVALID
    if anchor.heads.get(coe.round) != coe.round_head:
        return Verdict.INVALID
    expected_prev = ZERO_HEAD if coe.round == 0 else anchor.heads.get(coe.round - 1)
    if expected_prev != coe.prev_head:
        return Verdict.INVALID
    return Verdict.VALID


def verify_coe(coe: CoERef, fp: Fingerprint, anchors: TrustAnchors) -> Verdict:
    """Third-party verdict on ``coe`` for ``fp``; never raises on bad input."""
    anchor = anchors.authorities.get(coe.authority)
    if anchor is None:
        return Verdict.UNKNOWN_AUTHORITY
    if isinstance(coe, RegistryStamp):
        return _verify_registry(coe, fp, anchor)
    return _verify_linked(coe, fp, anchor)
