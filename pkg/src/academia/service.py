"""HTTP face of a store node and its query engine.

The routes mirror the wire operations: ``/objects`` and ``/metadata`` for
content, ``/wire`` for raw frames from peer nodes, and ``/queries`` for
saved queries with their definition, canonical results and Atom feed.
"""

from __future__ import annotations

import threading
from pathlib import Path

import httpx
from fastapi import FastAPI, HTTPException, Request, Response
from pydantic import BaseModel, Field

from academia.canonical import b64url_decode, b64url_encode, canonical_decode, parse_fingerprint
from academia.coe import parse_coe
from academia.errors import AcademiaError, NotOwner, QueryPrivate, SubmissionRefused
from academia.model import DEFAULT_MEDIA_TYPE, DocumentHandle, Identity, object_from_bytes
from academia.query import KnowledgeGraph, SavedQuery, execute, feed, results_bytes
from academia.store import (
    ContentStore,
    DefinitelyAbsent,
    Found,
    MetadataOnly,
    StoreConfig,
    StoreNode,
    decode_frame,
    encode_frame,
)

CANONICAL_MEDIA_TYPE = "application/vnd.academia.canonical"
ATOM_MEDIA_TYPE = "application/atom+xml"


class IdentityModel(BaseModel):
    name: str = Field(min_length=1)
    affiliation: str | None = None
    contact: str | None = None

    def to_identity(self) -> Identity:
        return Identity(self.name, self.affiliation, self.contact)

    @classmethod
    def of(cls, ident: Identity | None) -> IdentityModel | None:
        if ident is None:
            return None
        return cls(name=ident.display_name, affiliation=ident.affiliation, contact=ident.contact)


class SubmitRequest(BaseModel):
    data: str = Field(description="object bytes, base64url without padding")
    media_type: str = DEFAULT_MEDIA_TYPE
    submitter: IdentityModel
    title: str | None = None
    authors: list[str] | None = None
    coes: list[str] = []


class HandleModel(BaseModel):
    fingerprint: str
    title: str | None = None
    authors: list[str] | None = None
    coes: list[str] = []

    @classmethod
    def of(cls, h: DocumentHandle) -> HandleModel:
        return cls(
            fingerprint=h.fingerprint.path_form(),
            title=h.title,
            authors=list(h.authors) if h.authors is not None else None,
            coes=[c.to_text() for c in h.coes],
        )

    def to_handle(self) -> DocumentHandle:
        return DocumentHandle(
            parse_fingerprint(self.fingerprint),
            self.title,
            tuple(self.authors) if self.authors is not None else None,
            tuple(parse_coe(c) for c in self.coes),
        )


class MetadataResponse(BaseModel):
    handle: HandleModel
    media_type: str
    content_held: bool


class QueryDefinition(BaseModel):
    definition: str = Field(description="saved query in canonical encoding")


class QueryCreated(BaseModel):
    id: str
    public: bool


class HttpTransport:
    """Frame transport between service nodes; peer addresses are base URLs."""

    def __init__(self, timeout: float = 5.0):
        self.client = httpx.Client(timeout=timeout)

    def request(self, src: str, dst: str, message: dict) -> dict | None:
        try:
            resp = self.client.post(f"{dst.rstrip('/')}/wire", content=encode_frame(message))
        except httpx.HTTPError:
            return None
        if resp.status_code != 200:
            return None
        return decode_frame(resp.content)


class ServiceState:
    def __init__(self, data_dir: Path, config: StoreConfig):
        self.data_dir = Path(data_dir)
        self.node = StoreNode(config, HttpTransport(), ContentStore(self.data_dir / "store"))
        self.queries_dir = self.data_dir / "queries"
        self.queries_dir.mkdir(parents=True, exist_ok=True)
        self.graph = KnowledgeGraph()
        self._lock = threading.Lock()
        store = self.node.store
        for rec in store.records():
            data = store.get_bytes(rec.handle.fingerprint)
            if data is not None:
                self.graph.index(object_from_bytes(data, rec.media_type), rec.handle)

    def index(self, data: bytes, handle: DocumentHandle, media_type: str) -> None:
        with self._lock:
            self.graph.index(object_from_bytes(data, media_type), handle)

    def query(self, query_id: str) -> SavedQuery:
        path = self.queries_dir / f"{query_id}.aca"
        if not path.is_file():
            raise HTTPException(404, f"unknown query {query_id!r}")
        return SavedQuery.from_canonical(canonical_decode(path.read_bytes()))

    def save_query(self, q: SavedQuery) -> None:
        if not q.id or "/" in q.id or q.id.startswith("."):
            raise HTTPException(422, "query id must be a plain name")
        (self.queries_dir / f"{q.id}.aca").write_bytes(q.definition_bytes())


def _outcome_headers(outcome) -> dict[str, str]:
    return {"X-Academia-Verdict": type(outcome).__name__}


def create_app(data_dir: Path, config: StoreConfig) -> FastAPI:
    state = ServiceState(data_dir, config)
    app = FastAPI(title="academia store", version="0.1.0")
    app.state.academia = state

    @app.get("/objects/{fp:path}")
    def get_object(fp: str, propagate: bool = True):
        try:
            key = parse_fingerprint(fp)
        except AcademiaError as exc:
            raise HTTPException(400, str(exc)) from None
        node = state.node
        outcome = node.get(key)
        if not isinstance(outcome, Found) and propagate and node.config.peers:
            outcome = node.propagate_request(key) if node.config.mode == "institutional" else node.dht_lookup(key)
        if isinstance(outcome, Found):
            headers = _outcome_headers(outcome)
            if outcome.served_by is not None:
                headers["X-Academia-Served-By"] = str(outcome.served_by)
            return Response(outcome.object.canonical_bytes(), media_type=outcome.object.media_type, headers=headers)
        if isinstance(outcome, MetadataOnly):
            raise HTTPException(404, "metadata only; no copy held", headers=_outcome_headers(outcome))
        status = 404 if isinstance(outcome, DefinitelyAbsent) else 504
        raise HTTPException(status, type(outcome).__name__, headers=_outcome_headers(outcome))

    @app.put("/objects", response_model=HandleModel, status_code=201)
    def put_object(req: SubmitRequest):
        try:
            data = b64url_decode(req.data)
            coes = [parse_coe(c) for c in req.coes]
            obj = object_from_bytes(data, req.media_type)
            handle = state.node.submit(obj, req.submitter.to_identity(), req.title, req.authors, coes)
        except (NotOwner, SubmissionRefused) as exc:
            raise HTTPException(403, str(exc)) from None
        except (AcademiaError, ValueError) as exc:
            raise HTTPException(422, str(exc)) from None
        state.index(data, handle, req.media_type)
        return HandleModel.of(handle)

    @app.get("/metadata/{fp:path}", response_model=MetadataResponse)
    def get_metadata(fp: str):
        try:
            key = parse_fingerprint(fp)
        except AcademiaError as exc:
            raise HTTPException(400, str(exc)) from None
        rec = state.node.store.metadata(key)
        if rec is None:
            raise HTTPException(404, "no metadata for this fingerprint")
        held = key not in state.node.config.metadata_only and state.node.store.has(key)
        return MetadataResponse(handle=HandleModel.of(rec.handle), media_type=rec.media_type, content_held=held)

    @app.post("/wire")
    async def wire(request: Request):
        frame = await request.body()
        return Response(state.node.handle_frame(frame), media_type="application/octet-stream")

    @app.post("/queries", response_model=QueryCreated, status_code=201)
    def define_query(req: QueryDefinition):
        try:
            q = SavedQuery.from_canonical(canonical_decode(req.definition.encode("utf-8")))
        except AcademiaError as exc:
            raise HTTPException(422, str(exc)) from None
        state.save_query(q)
        return QueryCreated(id=q.id, public=q.public)

    @app.get("/queries/{query_id}/definition")
    def query_definition(query_id: str):
        q = state.query(query_id)
        if not q.public:
            raise HTTPException(403, "query is private")
        return Response(q.definition_bytes(), media_type=CANONICAL_MEDIA_TYPE)

    @app.get("/queries/{query_id}/results")
    def query_results(query_id: str):
        q = state.query(query_id)
        try:
            results = execute(state.graph.snapshot(), q)
        except QueryPrivate as exc:
            raise HTTPException(403, str(exc)) from None
        return Response(results_bytes(results), media_type=CANONICAL_MEDIA_TYPE)

    @app.get("/queries/{query_id}/feed")
    def query_feed(query_id: str, request: Request, limit: int = 20):
        q = state.query(query_id)
        try:
            doc = feed(state.graph.snapshot(), q, limit, base_url=str(request.base_url).rstrip("/"))
        except QueryPrivate as exc:
            raise HTTPException(403, str(exc)) from None
        return Response(doc, media_type=ATOM_MEDIA_TYPE)

    return app


def submit_remote(base_url: str, data: bytes, submitter: Identity, media_type: str = DEFAULT_MEDIA_TYPE,
                  title: str | None = None, authors: list[str] | None = None, coes: list[str] = ()) -> DocumentHandle:
    """Thin-client submission used by ``aca publish --store URL``."""
    body = SubmitRequest(
        data=b64url_encode(data), media_type=media_type, submitter=IdentityModel.of(submitter),
        title=title, authors=authors, coes=list(coes),
    )
    try:
        resp = httpx.put(f"{base_url.rstrip('/')}/objects", json=body.model_dump(), timeout=30)
    except httpx.HTTPError as exc:
        raise AcademiaError(f"store unreachable: {exc}") from None
    if resp.status_code == 403:
        raise SubmissionRefused(resp.json().get("detail", "refused"))
    if resp.status_code != 201:
        raise AcademiaError(f"store answered {resp.status_code}: {resp.text}")
    return HandleModel.model_validate(resp.json()).to_handle()
