"""Deterministic byte encoding of semantic values, and content fingerprints.

The encoding is a strict JSON subset extended with one literal for byte
blobs::

    null | true | false | -12 | "text" | b"<base64url, no padding>"
    [v,v,...] | {"key":v,...}

Output has no whitespace, map keys sorted by code point, text in NFC, and
integers in plain base 10. :func:`canonical_decode` only accepts input that
re-encodes to the very same bytes, so every accepted byte string is a
fixpoint.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import json
import re
import unicodedata
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from typing import Any, Callable

from academia.errors import (
    MalformedEncoding,
    MalformedFingerprint,
    UnencodableValue,
    UnknownAlgorithm,
)

__all__ = [
    "ALGORITHMS",
    "Fingerprint",
    "FingerprintHasher",
    "b64url_decode",
    "b64url_encode",
    "canonical_decode",
    "canonical_encode",
    "fingerprint",
    "fingerprint_value",
    "parse_fingerprint",
]

MAX_DEPTH = 128


def b64url_encode(data: bytes) -> str:
    return base64.urlsafe_b64encode(data).rstrip(b"=").decode("ascii")


_B64URL = re.compile(r"[A-Za-z0-9_-]*")


def b64url_decode(text: str) -> bytes:
    """Strict unpadded base64url; rejects padding and non-alphabet characters."""
    if not _B64URL.fullmatch(text) or len(text) % 4 == 1:
        raise ValueError(f"not unpadded base64url: {text!r}")
    try:
        raw = base64.urlsafe_b64decode(text + "=" * (-len(text) % 4))
    except binascii.Error as exc:
        raise ValueError(str(exc)) from None
    # Reject non-zero trailing bits so each blob has exactly one spelling.
    if b64url_encode(raw) != text:
        raise ValueError(f"non-canonical base64url: {text!r}")
    return raw


# ---------------------------------------------------------------------------
# encoding


def _nfc(text: str) -> str:
    out = unicodedata.normalize("NFC", text)
    try:
        out.encode("utf-8")
    except UnicodeEncodeError:
        raise UnencodableValue("text contains unpaired surrogates") from None
    return out


def _encode(value: Any, out: list[str], depth: int) -> None:
    if depth > MAX_DEPTH:
        raise UnencodableValue("value nested too deeply")
    to_canonical = getattr(value, "to_canonical", None)
    if to_canonical is not None and callable(to_canonical):
        value = to_canonical()
    if value is None:
        out.append("null")
    elif value is True:
        out.append("true")
    elif value is False:
        out.append("false")
    elif isinstance(value, int):
        out.append(str(int(value)))
    elif isinstance(value, str):
        out.append(json.dumps(_nfc(value), ensure_ascii=False))
    elif isinstance(value, (bytes, bytearray, memoryview)):
        out.append('b"' + b64url_encode(bytes(value)) + '"')
    elif isinstance(value, Mapping):
        items = []
        for key, item in value.items():
            if not isinstance(key, str):
                raise UnencodableValue(f"map key must be text, got {type(key).__name__}")
            items.append((_nfc(key), item))
        items.sort(key=lambda kv: kv[0])
        for (a, _), (b, _) in zip(items, items[1:]):
            if a == b:
                raise UnencodableValue(f"duplicate map key after normalization: {a!r}")
        out.append("{")
        for i, (key, item) in enumerate(items):
            if i:
                out.append(",")
            out.append(json.dumps(key, ensure_ascii=False))
            out.append(":")
            _encode(item, out, depth + 1)
        out.append("}")
    elif isinstance(value, (list, tuple)):
        out.append("[")
        for i, item in enumerate(value):
            if i:
                out.append(",")
            _encode(item, out, depth + 1)
        out.append("]")
    elif isinstance(value, float):
        raise UnencodableValue(f"floating point number {value!r} is not encodable; use integers or text")
    else:
        raise UnencodableValue(f"cannot encode {type(value).__name__}")


def canonical_encode(value: Any) -> bytes:
    """Encode ``value`` to its unique canonical byte string.

    Objects exposing ``to_canonical()`` are encoded through that method.
    Raises :class:`UnencodableValue` for floats, non-text map keys,
    duplicate keys after NFC normalization and unknown types.
    """
    out: list[str] = []
    _encode(value, out, 0)
    return "".join(out).encode("utf-8")


# ---------------------------------------------------------------------------
# decoding

_INT = re.compile(r"-?(0|[1-9][0-9]*)")


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def fail(self, msg: str):
        raise MalformedEncoding(f"{msg} at offset {self.pos}")

    def string(self) -> str:
        text, start = self.text, self.pos
        i = start + 1
        while True:
            j = text.find('"', i)
            if j < 0:
                self.fail("unterminated text")
            backslashes = 0
            k = j - 1
            while text[k] == "\\":
                backslashes += 1
                k -= 1
            if backslashes % 2 == 0:
                break
            i = j + 1
        try:
            value = json.loads(text[start : j + 1])
        except json.JSONDecodeError:
            self.fail("bad text literal")
        self.pos = j + 1
        return value

    def value(self, depth: int) -> Any:
        if depth > MAX_DEPTH:
            self.fail("nested too deeply")
        text = self.text
        if self.pos >= len(text):
            self.fail("unexpected end of input")
        ch = text[self.pos]
        if ch == "{":
            self.pos += 1
            result: dict[str, Any] = {}
            if text.startswith("}", self.pos):
                self.pos += 1
                return result
            while True:
                if not text.startswith('"', self.pos):
                    self.fail("expected map key")
                key = self.string()
                if not text.startswith(":", self.pos):
                    self.fail("expected ':'")
                self.pos += 1
                result[key] = self.value(depth + 1)
                if text.startswith(",", self.pos):
                    self.pos += 1
                elif text.startswith("}", self.pos):
                    self.pos += 1
                    return result
                else:
                    self.fail("expected ',' or '}'")
        if ch == "[":
            self.pos += 1
            items: list[Any] = []
            if text.startswith("]", self.pos):
                self.pos += 1
                return items
            while True:
                items.append(self.value(depth + 1))
                if text.startswith(",", self.pos):
                    self.pos += 1
                elif text.startswith("]", self.pos):
                    self.pos += 1
                    return items
                else:
                    self.fail("expected ',' or ']'")
        if ch == '"':
            return self.string()
        if text.startswith('b"', self.pos):
            end = text.find('"', self.pos + 2)
            if end < 0:
                self.fail("unterminated byte literal")
            try:
                blob = b64url_decode(text[self.pos + 2 : end])
            except ValueError as exc:
                self.fail(str(exc))
            self.pos = end + 1
            return blob
        for word, val in (("null", None), ("true", True), ("false", False)):
            if text.startswith(word, self.pos):
                self.pos += len(word)
                return val
        m = _INT.match(text, self.pos)
        if m:
            self.pos = m.end()
            return int(m.group())
        self.fail(f"unexpected character {ch!r}")


def canonical_decode(data: bytes) -> Any:
    """Parse canonical bytes back into plain values.

    Maps become ``dict``, sequences ``list``, blobs ``bytes``. Input that is
    well formed but not in canonical form (whitespace, unsorted keys,
    ``-0``...) is rejected with :class:`MalformedEncoding`.
    """
    try:
        text = bytes(data).decode("utf-8")
    except UnicodeDecodeError:
        raise MalformedEncoding("input is not UTF-8") from None
    parser = _Parser(text)
    value = parser.value(0)
    if parser.pos != len(text):
        parser.fail("trailing data")
    if canonical_encode(value) != bytes(data):
        raise MalformedEncoding("input is not in canonical form")
    return value


# ---------------------------------------------------------------------------
# fingerprints


@dataclass(frozen=True)
class _Algorithm:
    name: str
    tag: int
    size: int
    factory: Callable[[], Any]


ALGORITHMS: dict[str, _Algorithm] = {
    "sha256": _Algorithm("sha256", 0x01, 32, hashlib.sha256),
}
_BY_TAG = {alg.tag: alg for alg in ALGORITHMS.values()}


def _algorithm(name: str) -> _Algorithm:
    try:
        return ALGORITHMS[name]
    except KeyError:
        raise UnknownAlgorithm(f"unknown fingerprint algorithm {name!r}") from None


@dataclass(frozen=True, order=True)
class Fingerprint:
    """Content identity: a registered hash algorithm plus its digest."""

    algorithm: str
    digest: bytes

    def __post_init__(self):
        alg = _algorithm(self.algorithm)
        if not isinstance(self.digest, bytes):
            object.__setattr__(self, "digest", bytes(self.digest))
        if len(self.digest) != alg.size:
            raise MalformedFingerprint(
                f"{self.algorithm} digest must be {alg.size} bytes, got {len(self.digest)}"
            )

    @property
    def hex(self) -> str:
        return self.digest.hex()

    def path_form(self) -> str:
        return f"{self.algorithm}/{self.digest.hex()}"

    def compact_form(self) -> str:
        return "fp:" + b64url_encode(bytes([ALGORITHMS[self.algorithm].tag]) + self.digest)

    def to_canonical(self) -> str:
        return self.path_form()

    def __str__(self) -> str:
        return self.path_form()

    def __repr__(self) -> str:
        return f"Fingerprint({self.path_form()!r})"


def fingerprint(data: bytes, algorithm: str = "sha256") -> Fingerprint:
    alg = _algorithm(algorithm)
    return Fingerprint(alg.name, alg.factory(bytes(data)).digest())


def fingerprint_value(value: Any, algorithm: str = "sha256") -> Fingerprint:
    """Fingerprint of the canonical encoding of a semantic value."""
    return fingerprint(canonical_encode(value), algorithm)


class FingerprintHasher:
    """Chunked feeding for content too large to hold in one buffer."""

    def __init__(self, algorithm: str = "sha256"):
        self._alg = _algorithm(algorithm)
        self._h = self._alg.factory()

    def update(self, chunk: bytes) -> FingerprintHasher:
        self._h.update(chunk)
        return self

    def feed(self, chunks: Iterable[bytes]) -> FingerprintHasher:
        for chunk in chunks:
            self._h.update(chunk)
        return self

    def finish(self) -> Fingerprint:
        return Fingerprint(self._alg.name, self._h.copy().digest())


_PATH = re.compile(r"([a-z0-9]+)/([0-9a-f]+)")


def parse_fingerprint(text: str) -> Fingerprint:
    """Parse either ``sha256/<hex>`` or ``fp:<base64url>``.

    Hex must be lowercase; the compact form carries a one-byte algorithm tag
    ahead of the digest.
    """
    if not isinstance(text, str):
        raise MalformedFingerprint(f"fingerprint must be text, got {type(text).__name__}")
    if text.startswith("fp:"):
        try:
            raw = b64url_decode(text[3:])
        except ValueError:
            raise MalformedFingerprint(f"illegal characters in compact fingerprint {text!r}") from None
        if not raw or raw[0] not in _BY_TAG:
            raise MalformedFingerprint(f"unknown algorithm tag in {text!r}")
        alg = _BY_TAG[raw[0]]
        if len(raw) - 1 != alg.size:
            raise MalformedFingerprint(f"wrong digest length in {text!r}")
        return Fingerprint(alg.name, raw[1:])
    m = _PATH.fullmatch(text)
    if not m:
        raise MalformedFingerprint(f"not a fingerprint: {text!r}")
    name, hexdigest = m.groups()
    if name not in ALGORITHMS:
        raise MalformedFingerprint(f"unknown algorithm prefix in {text!r}")
    if len(hexdigest) != 2 * ALGORITHMS[name].size:
        raise MalformedFingerprint(f"wrong digest length in {text!r}")
    return Fingerprint(name, bytes.fromhex(hexdigest))
