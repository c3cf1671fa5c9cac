import hashlib
import io

import pytest

from academia.canonical import canonical_decode, canonical_encode, fingerprint
from academia.errors import MalformedFrame, NotOwner, SubmissionRefused, WrongMode
from academia.model import Blob, DocumentHandle, Identity, make_handle
from academia.store import (
    ContentStore,
    Contact,
    DefinitelyAbsent,
    Found,
    LocalTransport,
    MetadataOnly,
    PossiblyAbsent,
    RoutingTable,
    StoreConfig,
    StoreMode,
    StoreNode,
    SubmissionPolicy,
    TcpTransport,
    decode_frame,
    encode_frame,
    node_id_for,
    read_frame,
    serve_tcp,
)

ME = Identity("Me", "Uni A")


def inst(name="a", **kw):
    return StoreNode(StoreConfig(StoreMode.INSTITUTIONAL, node_id_for(name), address=name, **kw))


def test_disk_layout_and_reload(tmp_path):
    store = ContentStore(tmp_path)
    blob = Blob(b"hello")
    h = make_handle(blob, "T")
    assert store.put(b"hello", h, "text/plain")
    assert not store.put(b"hello", h, "text/plain")
    hexd = hashlib.sha256(b"hello").hexdigest()
    assert (tmp_path / "objects" / "sha256" / hexd[:2] / hexd[2:]).read_bytes() == b"hello"
    again = ContentStore(tmp_path)
    assert again.fingerprints() == [h.fingerprint]
    assert again.metadata(h.fingerprint).handle.title == "T"
    assert again.metadata(h.fingerprint).media_type == "text/plain"


def test_corrupted_bytes_are_never_served(tmp_path):
    store = ContentStore(tmp_path)
    h = make_handle(Blob(b"hello"))
    store.put(b"hello", h, "x")
    hexd = h.fingerprint.hex
    (tmp_path / "objects" / "sha256" / hexd[:2] / hexd[2:]).write_bytes(b"jello")
    assert store.get_bytes(h.fingerprint) is None


def test_put_checks_fingerprint():
    with pytest.raises(ValueError):
        ContentStore().put(b"a", make_handle(Blob(b"b")), "x")


def test_metadata_merges_coes_and_keeps_first_title():
    store = ContentStore()
    fp = fingerprint(b"x")
    store.put_metadata(DocumentHandle(fp, "First"), "x")
    store.put_metadata(DocumentHandle(fp, "Second", ("A",)), "x")
    rec = store.metadata(fp)
    assert rec.handle.title == "First" and rec.handle.authors == ("A",)


def test_submission_policies():
    node = inst(submission_policy=SubmissionPolicy.AFFILIATED_ONLY, affiliation="Uni A")
    node.submit(Blob(b"ok"), ME)
    with pytest.raises(SubmissionRefused):
        node.submit(Blob(b"no"), Identity("Out", "Uni B"))
    p2p = StoreNode(StoreConfig(StoreMode.P2P, node_id_for("p"), owner=ME))
    p2p.submit(Blob(b"mine"), ME)
    with pytest.raises(NotOwner):
        p2p.submit(Blob(b"theirs"), Identity("Other"))
    with pytest.raises(ValueError):
        StoreConfig(StoreMode.P2P, node_id_for("q"))


def test_submit_is_idempotent_and_makes_home():
    node = inst()
    h1 = node.submit(Blob(b"x"), ME, "T")
    h2 = node.submit(Blob(b"x"), ME, "T")
    assert h1 == h2 and h1.fingerprint in node.config.home_of
    assert isinstance(node.get(h1.fingerprint), Found)
    assert isinstance(node.get(fingerprint(b"nope")), DefinitelyAbsent)


def test_eviction_spares_homes():
    t = LocalTransport()
    a, b = t.attach(inst("a", cache_capacity=1)), t.attach(inst("b"))
    a.config.peers.append("b")
    b.config.peers.append("a")
    home = a.submit(Blob(b"home"), ME)
    remote = [b.submit(Blob(b"r%d" % i), ME) for i in range(3)]
    for h in remote:
        assert isinstance(a.propagate_request(h.fingerprint), Found)
    assert len(a.cached()) == 3
    evicted = a.evict_non_home()
    assert evicted == [h.fingerprint for h in remote[:2]]
    assert isinstance(a.get(home.fingerprint), Found)
    assert isinstance(a.get(remote[2].fingerprint), Found)
    assert isinstance(a.get(remote[0].fingerprint), DefinitelyAbsent)
    with pytest.raises(WrongMode):
        StoreNode(StoreConfig(StoreMode.P2P, node_id_for("p"), owner=ME)).evict_non_home()


def test_metadata_only_entries():
    node = inst()
    h = make_handle(Blob(b"legacy"), "Legacy")
    node.index_legacy(h)
    out = node.get(h.fingerprint)
    assert isinstance(out, MetadataOnly) and out.handle.title == "Legacy"
    assert isinstance(node.propagate_request(h.fingerprint), MetadataOnly)


def test_propagation_without_peers_is_definite():
    node = inst()
    assert isinstance(node.propagate_request(fingerprint(b"x"), ttl=0), DefinitelyAbsent)
    node.config.peers.append("ghost")
    assert isinstance(node.propagate_request(fingerprint(b"x"), ttl=0), PossiblyAbsent)
    assert isinstance(node.propagate_request(fingerprint(b"x")), PossiblyAbsent)  # no transport, peer silent


def test_tampering_peer_is_not_believed():
    class Liar:
        def request(self, src, dst, message):
            return {"status": "found", "data": b"forged", "media_type": "x", "handle": None, "path": [dst]}

    node = StoreNode(StoreConfig(StoreMode.INSTITUTIONAL, node_id_for("a"), address="a", peers=["b"]), Liar())
    assert isinstance(node.propagate_request(fingerprint(b"real"), ttl=1), PossiblyAbsent)


def test_frames():
    msg = {"op": "GET_OBJECT", "fp": fingerprint(b"x")}
    frame = encode_frame(msg)
    assert frame[:4] == len(frame[4:]).to_bytes(4, "big")
    assert decode_frame(frame) == {"op": "GET_OBJECT", "fp": fingerprint(b"x").path_form()}
    assert read_frame(io.BytesIO(frame + frame)) == frame
    assert read_frame(io.BytesIO(b"")) is None
    for bad in (b"\x00\x00", frame[:-1], b"\x00\x00\x00\x02[]", b"\x00\x00\x00\x02{}"):
        with pytest.raises(MalformedFrame):
            decode_frame(bad)
    with pytest.raises(MalformedFrame):
        read_frame(io.BytesIO(frame[:-1]))


def test_wire_errors_do_not_raise():
    node = inst()
    assert decode_frame(node.handle_frame(b"junk"))["error"] == "MalformedRequest"
    assert decode_frame(node.handle_frame(encode_frame({"op": "NOPE"})))["error"] == "UnknownOp"
    assert decode_frame(node.handle_frame(encode_frame({"op": "GET_OBJECT", "fp": "bad"})))["error"] == "MalformedRequest"


def test_tcp_server_round_trip():
    node = inst()
    h = node.submit(Blob(b"over tcp"), ME, "T")
    server = serve_tcp(node)
    try:
        host, port = server.server_address
        client = TcpTransport()
        resp = client.request("c", f"{host}:{port}", {"op": "GET_METADATA", "fp": h.fingerprint})
        assert resp["status"] == "found" and resp["content"] is True
        resp = client.request("c", f"{host}:{port}", {"op": "GET_OBJECT", "fp": h.fingerprint, "ttl": 0})
        assert resp["data"] == b"over tcp"
    finally:
        server.shutdown()
        server.server_close()
    assert TcpTransport(timeout=0.5).request("c", f"{host}:{port}", {"op": "GET_METADATA"}) is None


def test_wire_put_respects_ownership():
    p2p = StoreNode(StoreConfig(StoreMode.P2P, node_id_for("p"), owner=ME))

    def put(who):
        return decode_frame(p2p.handle_frame(encode_frame({"op": "PUT_OBJECT", "data": b"x", "submitter": who})))

    assert put(Identity("Other"))["error"] == "NotOwner"
    assert put(ME)["status"] == "ok"


def test_routing_table_buckets():
    own = bytes(32)
    table = RoutingTable(own, k=2)
    ids = [bytes([0x80]) + bytes([i]) + bytes(30) for i in range(4)]
    for i in ids:
        table.add(Contact(i, i.hex()))
    table.add(Contact(own, "self"))
    assert len(table) == 2  # one bucket, capacity k
    near = bytes(31) + b"\x01"
    table.add(Contact(near, "near"))
    assert table.closest(bytes(32), 1)[0].address == "near"
    table.remove(near)
    assert len(table) == 2


def test_config_round_trip():
    cfg = StoreConfig(StoreMode.P2P, node_id_for("x"), owner=ME, peers=["a"], home_of={fingerprint(b"h")})
    assert StoreConfig.from_canonical(canonical_decode(canonical_encode(cfg.to_canonical()))) == cfg
