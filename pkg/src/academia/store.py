"""Data-store nodes for the institutional and peer-to-peer networks.

Both modes share a content-addressed :class:`ContentStore` and one wire
protocol of canonical-encoded frames (4-byte big-endian length prefix):

``GET_OBJECT``    object lookup; institutional nodes flood it along peering
                  links, p2p nodes answer it like a DHT find-value
``GET_METADATA``  handle record for a fingerprint
``PUT_OBJECT``    submission, subject to the node's policy
``FIND_NODE``     k closest contacts to an id (p2p)
``ADD_PROVIDER``  announce that a node holds an object (p2p)

Nodes never share state; they talk only through a transport object with a
``request(src, dst, message) -> response | None`` method, where ``None``
means the peer did not answer.
"""

from __future__ import annotations

import enum
import hashlib
import socket
import socketserver
import struct
import threading
from collections import OrderedDict
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Union

from academia.canonical import (
    Fingerprint,
    canonical_decode,
    canonical_encode,
    fingerprint,
    parse_fingerprint,
)
from academia.coe import CoERef
from academia.errors import (
    MalformedEncoding,
    MalformedFrame,
    NotOwner,
    SubmissionRefused,
    WrongMode,
)
from academia.model import (
    DEFAULT_MEDIA_TYPE,
    DocumentHandle,
    Identity,
    PublishedObject,
    object_from_bytes,
)

DEFAULT_TTL = 6
DEFAULT_K = 8
DEFAULT_ALPHA = 3
ID_BITS = 256
MAX_FRAME = 64 * 1024 * 1024


class StoreMode(str, enum.Enum):
    INSTITUTIONAL = "institutional"
    P2P = "p2p"


class SubmissionPolicy(str, enum.Enum):
    OPEN = "open"
    AFFILIATED_ONLY = "affiliated_only"


def node_id_for(name: str) -> bytes:
    return hashlib.sha256(name.encode("utf-8")).digest()


@dataclass
class StoreConfig:
    mode: StoreMode
    node_id: bytes
    owner: Identity | None = None
    address: str | None = None
    peers: list[str] = field(default_factory=list)
    home_of: set[Fingerprint] = field(default_factory=set)
    submission_policy: SubmissionPolicy = SubmissionPolicy.OPEN
    affiliation: str | None = None
    request_ttl: int = DEFAULT_TTL
    cache_capacity: int = 64
    metadata_only: set[Fingerprint] = field(default_factory=set)
    k: int = DEFAULT_K
    alpha: int = DEFAULT_ALPHA
    retries: int = 2

    def __post_init__(self):
        self.mode = StoreMode(self.mode)
        self.submission_policy = SubmissionPolicy(self.submission_policy)
        if len(self.node_id) != ID_BITS // 8:
            raise ValueError("node id must be 256 bits")
        if self.mode == StoreMode.P2P and self.owner is None:
            raise ValueError("a peer-to-peer node must name its owner")
        if self.address is None:
            self.address = self.node_id.hex()

    def to_canonical(self) -> dict:
        return {
            "mode": self.mode.value,
            "node_id": self.node_id,
            "owner": self.owner,
            "address": self.address,
            "peers": list(self.peers),
            "home_of": sorted(fp.path_form() for fp in self.home_of),
            "policy": self.submission_policy.value,
            "affiliation": self.affiliation,
            "ttl": self.request_ttl,
            "cache_capacity": self.cache_capacity,
            "metadata_only": sorted(fp.path_form() for fp in self.metadata_only),
            "k": self.k,
            "alpha": self.alpha,
            "retries": self.retries,
        }

    @classmethod
    def from_canonical(cls, d: dict) -> StoreConfig:
        return cls(
            mode=StoreMode(d["mode"]),
            node_id=d["node_id"],
            owner=Identity.from_canonical(d["owner"]) if d.get("owner") else None,
            address=d.get("address"),
            peers=list(d.get("peers", [])),
            home_of={parse_fingerprint(f) for f in d.get("home_of", [])},
            submission_policy=SubmissionPolicy(d.get("policy", "open")),
            affiliation=d.get("affiliation"),
            request_ttl=d.get("ttl", DEFAULT_TTL),
            cache_capacity=d.get("cache_capacity", 64),
            metadata_only={parse_fingerprint(f) for f in d.get("metadata_only", [])},
            k=d.get("k", DEFAULT_K),
            alpha=d.get("alpha", DEFAULT_ALPHA),
            retries=d.get("retries", 2),
        )


# ---------------------------------------------------------------------------
# lookup outcomes


@dataclass(frozen=True)
class Found:
    object: PublishedObject
    handle: DocumentHandle
    provenance: tuple[str, ...]
    served_by: Identity | None = None
    hops: int = 0


@dataclass(frozen=True)
class MetadataOnly:
    """The fingerprint is indexed but no copy of its content is held."""

    handle: DocumentHandle
    provenance: tuple[str, ...] = ()


@dataclass(frozen=True)
class DefinitelyAbsent:
    hops: int = 0


@dataclass(frozen=True)
class PossiblyAbsent:
    hops: int = 0


LookupOutcome = Union[Found, MetadataOnly, DefinitelyAbsent, PossiblyAbsent]


# ---------------------------------------------------------------------------
# content store


@dataclass(frozen=True)
class Record:
    handle: DocumentHandle
    media_type: str


class ContentStore:
    """Content-addressed bytes plus an append-only metadata index.

    With ``root`` set, content lives at ``objects/<alg>/<2 hex>/<rest>`` and
    metadata in ``index.log`` (one canonical-encoded record per line);
    otherwise everything stays in memory.
    """

    def __init__(self, root: Path | None = None):
        self.root = Path(root) if root is not None else None
        self._mem: dict[Fingerprint, bytes] = {}
        self._meta: dict[Fingerprint, Record] = {}
        if self.root is not None:
            (self.root / "objects").mkdir(parents=True, exist_ok=True)
            index = self.root / "index.log"
            if index.exists():
                for line in index.read_bytes().splitlines():
                    if line:
                        self._replay(canonical_decode(line))

    def _path(self, fp: Fingerprint) -> Path:
        h = fp.hex
        return self.root / "objects" / fp.algorithm / h[:2] / h[2:]

    def _replay(self, entry: dict) -> None:
        handle = DocumentHandle.from_canonical(entry["handle"])
        if entry["op"] == "forget":
            self._meta.pop(handle.fingerprint, None)
            return
        prev = self._meta.get(handle.fingerprint)
        if prev is not None:
            handle = _merge_handles(prev.handle, handle)
        self._meta[handle.fingerprint] = Record(handle, entry["media_type"])

    def _append(self, entry: dict) -> None:
        line = canonical_encode(entry)
        self._replay(canonical_decode(line))
        if self.root is not None:
            with open(self.root / "index.log", "ab") as f:
                f.write(line + b"\n")

    def has(self, fp: Fingerprint) -> bool:
        if self.root is not None:
            return self._path(fp).exists()
        return fp in self._mem

    def get_bytes(self, fp: Fingerprint) -> bytes | None:
        if self.root is not None:
            p = self._path(fp)
            data = p.read_bytes() if p.exists() else None
        else:
            data = self._mem.get(fp)
        if data is not None and fingerprint(data, fp.algorithm) != fp:
            return None  # corrupted on disk: never serve it
        return data

    def put(self, data: bytes, handle: DocumentHandle, media_type: str) -> bool:
        """Store content; returns False when it was already present."""
        fp = fingerprint(data, handle.fingerprint.algorithm)
        if fp != handle.fingerprint:
            raise ValueError("handle fingerprint does not match content")
        fresh = not self.has(fp)
        if fresh:
            if self.root is not None:
                p = self._path(fp)
                p.parent.mkdir(parents=True, exist_ok=True)
                tmp = p.with_suffix(".tmp")
                tmp.write_bytes(data)
                tmp.replace(p)
            else:
                self._mem[fp] = bytes(data)
        self.put_metadata(handle, media_type)
        return fresh

    def put_metadata(self, handle: DocumentHandle, media_type: str) -> None:
        prev = self._meta.get(handle.fingerprint)
        if prev is not None and _merge_handles(prev.handle, handle).to_canonical() == prev.handle.to_canonical() and prev.media_type == media_type:
            return
        self._append({"op": "meta", "handle": handle, "media_type": media_type})

    def delete(self, fp: Fingerprint) -> None:
        if self.root is not None:
            self._path(fp).unlink(missing_ok=True)
        else:
            self._mem.pop(fp, None)

    def metadata(self, fp: Fingerprint) -> Record | None:
        return self._meta.get(fp)

    def fingerprints(self) -> list[Fingerprint]:
        if self.root is not None:
            out = []
            for alg_dir in (self.root / "objects").iterdir():
                for sub in alg_dir.iterdir():
                    for f in sub.iterdir():
                        if not f.name.endswith(".tmp"):
                            out.append(parse_fingerprint(f"{alg_dir.name}/{sub.name}{f.name}"))
            return sorted(out)
        return sorted(self._mem)

    def records(self) -> list[Record]:
        return [self._meta[fp] for fp in sorted(self._meta)]


def _merge_handles(a: DocumentHandle, b: DocumentHandle) -> DocumentHandle:
    coes = list(a.coes)
    for c in b.coes:
        if c not in coes:
            coes.append(c)
    return DocumentHandle(
        a.fingerprint,
        a.title if a.title is not None else b.title,
        a.authors if a.authors is not None else b.authors,
        tuple(coes),
    )


# ---------------------------------------------------------------------------
# wire framing


def encode_frame(message: dict) -> bytes:
    body = canonical_encode(message)
    if len(body) > MAX_FRAME:
        raise MalformedFrame("frame too large")
    return struct.pack(">I", len(body)) + body


def decode_frame(frame: bytes) -> dict:
    if len(frame) < 4:
        raise MalformedFrame("short frame")
    (size,) = struct.unpack(">I", frame[:4])
    if size != len(frame) - 4 or size > MAX_FRAME:
        raise MalformedFrame(f"frame declares {size} bytes, carries {len(frame) - 4}")
    try:
        msg = canonical_decode(frame[4:])
    except MalformedEncoding as exc:
        raise MalformedFrame(str(exc)) from None
    if not isinstance(msg, dict) or "op" not in msg and "status" not in msg:
        raise MalformedFrame("frame must carry a map with 'op' or 'status'")
    return msg


def read_frame(stream) -> bytes | None:
    """Read one whole frame from a binary stream; ``None`` at clean EOF."""
    head = stream.read(4)
    if not head:
        return None
    if len(head) < 4:
        raise MalformedFrame("truncated length prefix")
    (size,) = struct.unpack(">I", head)
    if size > MAX_FRAME:
        raise MalformedFrame("frame too large")
    body = stream.read(size)
    if len(body) != size:
        raise MalformedFrame("truncated frame body")
    return head + body


class Transport(Protocol):
    def request(self, src: str, dst: str, message: dict) -> dict | None: ...


class LocalTransport:
    """In-process transport that still round-trips every message through frames."""

    def __init__(self):
        self.nodes: dict[str, StoreNode] = {}

    def attach(self, node: StoreNode) -> StoreNode:
        self.nodes[node.address] = node
        node.transport = self
        return node

    def request(self, src: str, dst: str, message: dict) -> dict | None:
        node = self.nodes.get(dst)
        if node is None:
            return None
        return decode_frame(node.handle_frame(encode_frame(message)))


class TcpTransport:
    """Blocking TCP client; addresses are ``host:port``."""

    def __init__(self, timeout: float = 5.0):
        self.timeout = timeout

    def request(self, src: str, dst: str, message: dict) -> dict | None:
        host, _, port = dst.rpartition(":")
        try:
            with socket.create_connection((host, int(port)), timeout=self.timeout) as sock:
                sock.sendall(encode_frame(message))
                with sock.makefile("rb") as f:
                    frame = read_frame(f)
        except (OSError, ValueError, MalformedFrame):
            return None
        return decode_frame(frame) if frame else None


def serve_tcp(node: StoreNode, host: str = "127.0.0.1", port: int = 0) -> socketserver.ThreadingTCPServer:
    """Start a threaded frame server for ``node``; caller owns ``shutdown()``."""

    class Handler(socketserver.StreamRequestHandler):
        def handle(self):
            while True:
                try:
                    frame = read_frame(self.rfile)
                except MalformedFrame:
                    return
                if frame is None:
                    return
                self.wfile.write(node.handle_frame(frame))
                self.wfile.flush()

    server = socketserver.ThreadingTCPServer((host, port), Handler)
    server.daemon_threads = True
    threading.Thread(target=server.serve_forever, daemon=True).start()
    return server


# ---------------------------------------------------------------------------
# routing table


def xor_distance(a: bytes, b: bytes) -> int:
    return int.from_bytes(a, "big") ^ int.from_bytes(b, "big")


@dataclass(frozen=True)
class Contact:
    node_id: bytes
    address: str

    def to_canonical(self):
        return [self.node_id, self.address]


class RoutingTable:
    """Kademlia k-buckets indexed by the length of the shared id prefix."""

    def __init__(self, own_id: bytes, k: int = DEFAULT_K):
        self.own_id = own_id
        self.k = k
        self.buckets: list[list[Contact]] = [[] for _ in range(ID_BITS)]

    def _bucket(self, node_id: bytes) -> list[Contact]:
        d = xor_distance(self.own_id, node_id)
        return self.buckets[ID_BITS - d.bit_length()] if d else []

    def add(self, contact: Contact) -> None:
        if contact.node_id == self.own_id:
            return
        bucket = self._bucket(contact.node_id)
        for i, c in enumerate(bucket):
            if c.node_id == contact.node_id:
                bucket.append(bucket.pop(i))
                return
        if len(bucket) < self.k:
            bucket.append(contact)

    def remove(self, node_id: bytes) -> None:
        bucket = self._bucket(node_id)
        bucket[:] = [c for c in bucket if c.node_id != node_id]

    def closest(self, target: bytes, count: int | None = None) -> list[Contact]:
        contacts = [c for b in self.buckets for c in b]
        contacts.sort(key=lambda c: xor_distance(c.node_id, target))
        return contacts[: count or self.k]

    def __len__(self):
        return sum(len(b) for b in self.buckets)


# ---------------------------------------------------------------------------
# nodes


def _refused(kind: str, detail: str) -> dict:
    return {"status": "error", "error": kind, "detail": detail}


class StoreNode:
    """One data store. Writes are serialized per node by a re-entrant lock."""

    def __init__(self, config: StoreConfig, transport: Transport | None = None, store: ContentStore | None = None):
        self.config = config
        self.store = store if store is not None else ContentStore()
        self.transport = transport
        self.routing = RoutingTable(config.node_id, config.k)
        self.providers: dict[Fingerprint, set[Contact]] = {}
        self._cache: OrderedDict[Fingerprint, None] = OrderedDict()
        self._lock = threading.RLock()
        for fp in self.store.fingerprints():
            if fp not in config.home_of:
                self._cache[fp] = None

    @property
    def address(self) -> str:
        return self.config.address

    @property
    def contact(self) -> Contact:
        return Contact(self.config.node_id, self.address)

    def __repr__(self):
        return f"StoreNode({self.config.mode.value}, {self.address[:12]})"

    def _request(self, dst: str, message: dict) -> dict | None:
        if self.transport is None:
            return None
        message = dict(message, sender=self.contact)
        return self.transport.request(self.address, dst, message)

    # -- local operations -------------------------------------------------

    def submit(
        self,
        obj: PublishedObject,
        submitter: Identity,
        title: str | None = None,
        authors: Sequence[str] | None = None,
        coes: Iterable[CoERef] = (),
    ) -> DocumentHandle:
        cfg = self.config
        if cfg.mode == StoreMode.P2P:
            if submitter != cfg.owner:
                raise NotOwner("only the node owner can insert objects into a peer-to-peer node")
        elif cfg.submission_policy == SubmissionPolicy.AFFILIATED_ONLY:
            if not submitter.affiliation or submitter.affiliation != cfg.affiliation:
                raise SubmissionRefused(f"this store accepts submissions from {cfg.affiliation!r} affiliates only")
        data = obj.canonical_bytes()
        handle = DocumentHandle(fingerprint(data), title, tuple(authors) if authors is not None else None, tuple(coes))
        with self._lock:
            self.store.put(data, handle, obj.media_type)
            cfg.metadata_only.discard(handle.fingerprint)
            if cfg.mode == StoreMode.INSTITUTIONAL:
                cfg.home_of.add(handle.fingerprint)
            self._cache.pop(handle.fingerprint, None)
        if cfg.mode == StoreMode.P2P and self.transport is not None:
            self.announce(handle.fingerprint)
        return handle

    def index_legacy(self, handle: DocumentHandle, media_type: str = DEFAULT_MEDIA_TYPE) -> None:
        """Index a work by metadata alone, without keeping a copy of its content."""
        with self._lock:
            self.store.put_metadata(handle, media_type)
            if not self.store.has(handle.fingerprint):
                self.config.metadata_only.add(handle.fingerprint)

    def add_home(self, obj: PublishedObject, handle: DocumentHandle) -> None:
        """Peering agreement: this node also becomes a home of ``handle``."""
        if self.config.mode != StoreMode.INSTITUTIONAL:
            raise WrongMode("home stores exist only in the institutional network")
        with self._lock:
            self.store.put(obj.canonical_bytes(), handle, obj.media_type)
            self.config.home_of.add(handle.fingerprint)
            self._cache.pop(handle.fingerprint, None)

    def _local(self, fp: Fingerprint) -> tuple[PublishedObject, DocumentHandle] | None:
        if fp in self.config.metadata_only:
            return None
        data = self.store.get_bytes(fp)
        if data is None:
            return None
        rec = self.store.metadata(fp)
        handle = rec.handle if rec else DocumentHandle(fp)
        media = rec.media_type if rec else DEFAULT_MEDIA_TYPE
        with self._lock:
            if fp in self._cache:
                self._cache.move_to_end(fp)
        return object_from_bytes(data, media), handle

    def get(self, fp: Fingerprint) -> LookupOutcome:
        """Local lookup only. A miss is definitive about this node in institutional mode."""
        hit = self._local(fp)
        if hit is not None:
            return Found(hit[0], hit[1], (self.address,), self.config.owner)
        rec = self.store.metadata(fp)
        if rec is not None and fp in self.config.metadata_only:
            return MetadataOnly(rec.handle, (self.address,))
        if self.config.mode == StoreMode.P2P:
            return PossiblyAbsent()
        return DefinitelyAbsent()

    def get_metadata(self, fp: Fingerprint) -> DocumentHandle | None:
        rec = self.store.metadata(fp)
        return rec.handle if rec else None

    def _cache_copy(self, obj: PublishedObject, handle: DocumentHandle) -> None:
        with self._lock:
            fresh = self.store.put(obj.canonical_bytes(), handle, obj.media_type)
            if handle.fingerprint in self.config.home_of:
                return
            if fresh or handle.fingerprint in self._cache:
                self._cache[handle.fingerprint] = None
                self._cache.move_to_end(handle.fingerprint)
            if self.config.mode == StoreMode.P2P:
                while len(self._cache) > self.config.cache_capacity:
                    old, _ = self._cache.popitem(last=False)
                    self.store.delete(old)

    def cached(self) -> list[Fingerprint]:
        return list(self._cache)

    def evict_non_home(self) -> list[Fingerprint]:
        """Drop least-recently-served non-home copies down to cache capacity."""
        if self.config.mode != StoreMode.INSTITUTIONAL:
            raise WrongMode("eviction of non-home copies is an institutional policy")
        evicted = []
        with self._lock:
            while len(self._cache) > self.config.cache_capacity:
                fp, _ = self._cache.popitem(last=False)
                if fp in self.config.home_of:
                    continue
                self.store.delete(fp)
                evicted.append(fp)
        return evicted

    # -- institutional propagation -----------------------------------------

    def propagate_request(self, fp: Fingerprint, ttl: int | None = None) -> LookupOutcome:
        """Flood a request along peering links, deepening the TTL one step at a time.

        Deepening makes the first hit a shortest path. The verdict is
        DefinitelyAbsent only when the visited set is closed under peering
        (every peer seen was visited) and no peer failed to answer.
        """
        if self.config.mode != StoreMode.INSTITUTIONAL:
            raise WrongMode("request propagation runs on the institutional network")
        ttl = self.config.request_ttl if ttl is None else ttl
        hit = self._local(fp)
        if hit is not None:
            return Found(hit[0], hit[1], (self.address,), self.config.owner)
        outcome: LookupOutcome = PossiblyAbsent()
        for depth in range(1, ttl + 1):
            resp = self._flood(fp, depth, {"visited": {}, "frontier": [], "timeouts": False})
            if resp["status"] == "found":
                obj, handle = _unpack_object(resp, fp)
                self._cache_copy(obj, handle)
                return Found(obj, handle, tuple(resp["path"]), _owner(resp), len(resp["path"]) - 1)
            state = resp["state"]
            visited = state["visited"]
            if not state["timeouts"] and all(f in visited for f in state["frontier"]):
                outcome = DefinitelyAbsent(depth)
                break
            outcome = PossiblyAbsent(depth)
        if ttl == 0:
            complete = not self.config.peers
            outcome = DefinitelyAbsent() if complete else PossiblyAbsent()
        rec = self.store.metadata(fp)
        if rec is not None and fp in self.config.metadata_only:
            return MetadataOnly(rec.handle, (self.address,))
        return outcome

    def _flood(self, fp: Fingerprint, ttl: int, state: dict) -> dict:
        me = self.address
        state["visited"][me] = max(state["visited"].get(me, -1), ttl)
        hit = self._local(fp)
        if hit is not None:
            obj, handle = hit
            return {
                "status": "found",
                "data": obj.canonical_bytes(),
                "media_type": obj.media_type,
                "handle": handle,
                "path": [me],
                "owner": self.config.owner,
            }
        for peer in sorted(self.config.peers):
            if ttl == 0:
                if peer not in state["frontier"]:
                    state["frontier"].append(peer)
                continue
            if state["visited"].get(peer, -1) >= ttl - 1:
                continue
            resp = self._request(peer, {"op": "GET_OBJECT", "fp": fp, "ttl": ttl - 1, "state": state})
            if resp is None or resp.get("status") not in ("found", "absent"):
                state["timeouts"] = True
                continue
            if resp["status"] == "found":
                try:
                    _unpack_object(resp, fp)
                except ValueError:
                    state["timeouts"] = True
                    continue
                return dict(resp, path=[me, *resp["path"]])
            state = resp["state"]
        return {"status": "absent", "state": state}

    # -- p2p DHT ----------------------------------------------------------

    def bootstrap(self, contacts: Iterable[Contact]) -> None:
        for c in contacts:
            self.routing.add(c)
        self.find_nodes(self.config.node_id)

    def find_nodes(self, target: bytes) -> list[Contact]:
        """Iterative FIND_NODE; returns the k closest live contacts found."""
        closest, _, _ = self._iterate(target, lambda c: self._request(c.address, {"op": "FIND_NODE", "target": target}))
        return closest

    def _iterate(self, target: bytes, ask, on_value=None):
        k, alpha = self.config.k, self.config.alpha
        shortlist: dict[bytes, Contact] = {c.node_id: c for c in self.routing.closest(target, k)}
        queried: set[bytes] = set()
        failed: set[bytes] = set()
        rounds = 0
        while True:
            live = sorted(
                (c for c in shortlist.values() if c.node_id not in failed),
                key=lambda c: xor_distance(c.node_id, target),
            )[:k]
            batch = [c for c in live if c.node_id not in queried][:alpha]
            if not batch:
                return live, rounds, None
            rounds += 1
            for c in batch:
                queried.add(c.node_id)
                resp = ask(c)
                if resp is None:
                    # One lost message is no proof of departure; keep the contact.
                    failed.add(c.node_id)
                    continue
                self.routing.add(c)
                if on_value is not None:
                    value = on_value(c, resp, rounds)
                    if value is not None:
                        return live, rounds, value
                for node_id, address in resp.get("nodes", []):
                    if node_id != self.config.node_id and node_id not in shortlist:
                        shortlist[node_id] = Contact(node_id, address)

    def announce(self, fp: Fingerprint) -> int:
        """Tell the k nodes closest to ``fp`` that this node provides it."""
        acked = 0
        for c in self.find_nodes(fp.digest):
            resp = self._request(c.address, {"op": "ADD_PROVIDER", "fp": fp, "provider": self.contact})
            acked += resp is not None
        return acked

    def _fetch(self, provider: Contact, fp: Fingerprint) -> dict | None:
        for _ in range(self.config.retries + 1):
            resp = self._request(provider.address, {"op": "GET_OBJECT", "fp": fp, "dht": True})
            if resp is not None and resp.get("status") == "found":
                try:
                    _unpack_object(resp, fp)
                except ValueError:
                    return None
                return resp
        return None

    def dht_lookup(self, fp: Fingerprint) -> LookupOutcome:
        """Iterative Kademlia lookup; hits are cached at the origin.

        ``hops`` counts sequential rounds of requests, including the final
        fetch from a provider. Failure is never definitive in this network.
        """
        if self.config.mode != StoreMode.P2P:
            raise WrongMode("DHT lookup runs on the peer-to-peer network")
        hit = self._local(fp)
        if hit is not None:
            return Found(hit[0], hit[1], (self.address,), self.config.owner, 0)
        tried: set[bytes] = set()

        def on_value(contact: Contact, resp: dict, rounds: int):
            if resp.get("status") == "found":
                try:
                    _unpack_object(resp, fp)
                except ValueError:
                    return None
                return resp, (self.address, contact.address), rounds
            for node_id, address in resp.get("providers", []):
                if node_id in tried:
                    continue
                tried.add(node_id)
                got = self._fetch(Contact(node_id, address), fp)
                if got is not None:
                    return got, (self.address, contact.address, address), rounds + 1
            return None

        _, rounds, value = self._iterate(
            fp.digest, lambda c: self._request(c.address, {"op": "GET_OBJECT", "fp": fp, "dht": True}), on_value
        )
        if value is None:
            return PossiblyAbsent(rounds)
        resp, path, hops = value
        obj, handle = _unpack_object(resp, fp)
        self._cache_copy(obj, handle)
        return Found(obj, handle, path, _owner(resp), hops)

    # -- wire server ------------------------------------------------------

    def handle_frame(self, frame: bytes) -> bytes:
        try:
            msg = decode_frame(frame)
            resp = self.handle_message(msg)
        except (MalformedFrame, KeyError, TypeError, ValueError) as exc:
            resp = _refused("MalformedRequest", str(exc))
        return encode_frame(resp)

    def handle_message(self, msg: dict) -> dict:
        op = msg.get("op")
        sender = msg.get("sender")
        if sender is not None and self.config.mode == StoreMode.P2P:
            self.routing.add(Contact(sender[0], sender[1]))
        if op == "GET_OBJECT":
            fp = parse_fingerprint(msg["fp"])
            if self.config.mode == StoreMode.INSTITUTIONAL and not msg.get("dht"):
                state = msg.get("state") or {"visited": {}, "frontier": [], "timeouts": False}
                return self._flood(fp, msg.get("ttl", 0), state)
            hit = self._local(fp)
            if hit is not None:
                obj, handle = hit
                return {
                    "status": "found",
                    "data": obj.canonical_bytes(),
                    "media_type": obj.media_type,
                    "handle": handle,
                    "path": [self.address],
                    "owner": self.config.owner,
                }
            return {
                "status": "nodes",
                "providers": sorted(self.providers.get(fp, ()), key=lambda c: c.node_id),
                "nodes": self.routing.closest(fp.digest),
            }
        if op == "GET_METADATA":
            fp = parse_fingerprint(msg["fp"])
            rec = self.store.metadata(fp)
            if rec is None:
                return {"status": "absent"}
            return {
                "status": "found",
                "handle": rec.handle,
                "media_type": rec.media_type,
                "content": fp not in self.config.metadata_only and self.store.has(fp),
            }
        if op == "PUT_OBJECT":
            submitter = Identity.from_canonical(msg["submitter"])
            obj = object_from_bytes(msg["data"], msg.get("media_type", DEFAULT_MEDIA_TYPE))
            try:
                handle = self.submit(obj, submitter, msg.get("title"), msg.get("authors"))
            except (NotOwner, SubmissionRefused) as exc:
                return _refused(type(exc).__name__, str(exc))
            return {"status": "ok", "handle": handle}
        if op == "FIND_NODE":
            return {"status": "nodes", "nodes": self.routing.closest(msg["target"])}
        if op == "ADD_PROVIDER":
            node_id, address = msg["provider"]
            with self._lock:
                self.providers.setdefault(parse_fingerprint(msg["fp"]), set()).add(Contact(node_id, address))
            return {"status": "ok"}
        return _refused("UnknownOp", f"unknown op {op!r}")


def _owner(resp: dict) -> Identity | None:
    owner = resp.get("owner")
    return Identity.from_canonical(owner) if owner else None


def _unpack_object(resp: dict, fp: Fingerprint) -> tuple[PublishedObject, DocumentHandle]:
    """Rebuild a served object, refusing any copy that does not match ``fp``."""
    data = resp["data"]
    if fingerprint(data, fp.algorithm) != fp:
        raise ValueError("served bytes do not match the requested fingerprint")
    handle = DocumentHandle.from_canonical(resp["handle"]) if resp.get("handle") else DocumentHandle(fp)
    if handle.fingerprint != fp:
        handle = DocumentHandle(fp)
    return object_from_bytes(data, resp.get("media_type", DEFAULT_MEDIA_TYPE)), handle


# Module-level spellings of the node operations.


def submit(node: StoreNode, obj: PublishedObject, submitter: Identity, **kw) -> DocumentHandle:
    return node.submit(obj, submitter, **kw)


def get(node: StoreNode, fp: Fingerprint) -> LookupOutcome:
    return node.get(fp)


def propagate_request(node: StoreNode, fp: Fingerprint, ttl: int | None = None) -> LookupOutcome:
    return node.propagate_request(fp, ttl)


def dht_lookup(node: StoreNode, fp: Fingerprint) -> LookupOutcome:
    return node.dht_lookup(fp)


def evict_non_home(node: StoreNode) -> list[Fingerprint]:
    return node.evict_non_home()
