"""``aca``: command-line entry point.

Local state lives in a data directory (``--data-dir``, default
``~/.academia``) whose ``config.aca`` holds the CLI configuration in
canonical encoding; ``ACA_CONFIG`` points at a different config file.
Exit codes: 0 success, 1 domain error (one line on stderr), 2 usage error.
"""

from __future__ import annotations

import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import click

from academia import harness, review_proc
from academia.canonical import canonical_decode, canonical_encode, fingerprint, parse_fingerprint
from academia.coe import TimestampAuthority, TrustAnchors, Verdict, parse_coe, parse_date, verify_coe
from academia.errors import AcademiaError, MalformedEncoding, MalformedObject
from academia.escrow import Action, EscrowService
from academia.model import (
    Blob,
    DocumentHandle,
    Grade,
    Identity,
    OpenAttribution,
    Orientation,
    ReviewObject,
    ReviewProcessSpec,
    make_handle,
    object_from_bytes,
    review_as_object,
    validate_review,
)
from academia.query import KnowledgeGraph, SavedQuery, execute, feed, results_bytes
from academia.store import ContentStore, StoreConfig, StoreMode, StoreNode, node_id_for

CONFIG_ENV = "ACA_CONFIG"
PASSPHRASE_ENV = "ACA_ESCROW_PASSPHRASE"


@dataclass
class CliConfig:
    data_dir: Path
    node_config: str = "node.aca"
    default_authority: str = "local-tsa"
    trust_anchors: str = "anchors.aca"
    output_format: str = "text"

    def to_canonical(self) -> dict:
        return {
            "data_dir": str(self.data_dir),
            "node_config": self.node_config,
            "default_authority": self.default_authority,
            "trust_anchors": self.trust_anchors,
            "format": self.output_format,
        }

    @classmethod
    def from_canonical(cls, d: dict) -> CliConfig:
        return cls(Path(d["data_dir"]), d["node_config"], d["default_authority"], d["trust_anchors"], d["format"])

    def path(self, *parts: str) -> Path:
        p = self.data_dir.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p


class Ctx:
    def __init__(self, cfg: CliConfig, fmt: str):
        self.cfg = cfg
        self.fmt = fmt

    # -- persistent pieces --------------------------------------------------

    def authority(self, name: str | None, create: bool = True) -> TimestampAuthority:
        name = name or self.cfg.default_authority
        path = self.cfg.path("authorities", f"{name}.aca")
        if path.exists():
            return TimestampAuthority.from_canonical(canonical_decode(path.read_bytes()))
        if not create:
            raise AcademiaError(f"unknown authority {name!r}")
        return TimestampAuthority.generate(name)

    def save_authority(self, auth: TimestampAuthority) -> None:
        self.cfg.path("authorities", f"{auth.authority_id}.aca").write_bytes(canonical_encode(auth))
        self.cfg.path("authorities", f"{auth.authority_id}.heads").write_text(auth.heads_text())
        self.save_anchors(self.anchors().trust(auth))

    def anchors(self) -> TrustAnchors:
        path = self.cfg.path(self.cfg.trust_anchors)
        return TrustAnchors.load(path) if path.exists() else TrustAnchors()

    def save_anchors(self, anchors: TrustAnchors) -> None:
        anchors.save(self.cfg.path(self.cfg.trust_anchors))

    def node(self) -> StoreNode:
        path = self.cfg.path(self.cfg.node_config)
        if path.exists():
            config = StoreConfig.from_canonical(canonical_decode(path.read_bytes()))
        else:
            config = StoreConfig(StoreMode.INSTITUTIONAL, node_id_for(str(self.cfg.data_dir)))
            path.write_bytes(canonical_encode(config))
        return StoreNode(config, None, ContentStore(self.cfg.data_dir / "store"))

    def save_node(self, node: StoreNode) -> None:
        self.cfg.path(self.cfg.node_config).write_bytes(canonical_encode(node.config))

    def graph(self) -> KnowledgeGraph:
        store = self.node().store
        graph = KnowledgeGraph()
        for rec in store.records():
            data = store.get_bytes(rec.handle.fingerprint)
            if data is not None:
                graph.index(object_from_bytes(data, rec.media_type), rec.handle)
        return graph

    def escrow(self, label: str) -> EscrowService:
        path = self.cfg.path("escrows", f"{label}.sealed")
        if not path.exists():
            raise AcademiaError(f"unknown escrow {label!r}")
        return EscrowService.load(path, passphrase())

    def save_escrow(self, esc: EscrowService) -> None:
        esc.save(self.cfg.path("escrows", f"{esc.label}.sealed"), passphrase())

    # -- output -------------------------------------------------------------

    def emit(self, text: str, value=None) -> None:
        if self.fmt == "canonical" and value is not None:
            sys.stdout.buffer.write(canonical_encode(value) + b"\n")
            sys.stdout.flush()
        else:
            click.echo(text.rstrip("\n"))


def passphrase() -> str:
    value = os.environ.get(PASSPHRASE_ENV)
    if not value:
        raise AcademiaError(f"set {PASSPHRASE_ENV} to unlock escrow state")
    return value


def load_structured(path: Path):
    """Read canonical bytes, falling back to JSON for hand-written inputs."""
    data = Path(path).read_bytes()
    try:
        return canonical_decode(data.strip())
    except MalformedEncoding:
        try:
            return json.loads(data)
        except json.JSONDecodeError:
            raise MalformedObject(f"{path}: neither canonical encoding nor JSON") from None


def date_arg(_ctx, _param, value):
    if value is None:
        return None
    try:
        return parse_date(value)
    except ValueError as exc:
        raise click.BadParameter(str(exc)) from None


class DomainErrors(click.Group):
    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except AcademiaError as exc:
            raise click.ClickException(f"{type(exc).__name__}: {exc}") from None


@click.group(cls=DomainErrors)
@click.option("--data-dir", type=click.Path(file_okay=False, path_type=Path), default=None)
@click.option("--format", "fmt", type=click.Choice(["text", "canonical", "feed"]), default=None)
@click.pass_context
def cli(ctx, data_dir, fmt):
    """Stamp, publish, review and query scholarly objects."""
    config_path = os.environ.get(CONFIG_ENV)
    if config_path and Path(config_path).exists():
        cfg = CliConfig.from_canonical(canonical_decode(Path(config_path).read_bytes()))
        if data_dir is not None:
            cfg.data_dir = data_dir
    else:
        cfg = CliConfig(data_dir or Path.home() / ".academia")
    cfg.data_dir.mkdir(parents=True, exist_ok=True)
    target = Path(config_path) if config_path else cfg.data_dir / "config.aca"
    if not target.exists():
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(canonical_encode(cfg))
    ctx.obj = Ctx(cfg, fmt or cfg.output_format)


# ---------------------------------------------------------------------------
# certificates of existence


@cli.command()
@click.argument("file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--authority", default=None)
@click.option("--date", "date", callback=date_arg, required=True, help="stamp date, YYYY-MM-DD")
@click.option("--external-id", default=None)
@click.pass_obj
def stamp(obj: Ctx, file, authority, date, external_id):
    """Registry-stamp the fingerprint of FILE."""
    auth = obj.authority(authority)
    coe = auth.stamp(fingerprint(file.read_bytes()), date, external_id)
    obj.save_authority(auth)
    obj.emit(coe.to_text(), coe)


@cli.command("round-append")
@click.argument("fp")
@click.option("--authority", default=None)
@click.pass_obj
def round_append(obj: Ctx, fp, authority):
    """Queue a fingerprint for the next linked round."""
    auth = obj.authority(authority)
    receipt = auth.append(parse_fingerprint(fp))
    obj.save_authority(auth)
    obj.emit(
        f"pending {auth.authority_id} round {receipt.round} leaf {receipt.leaf_index}",
        {"round": receipt.round, "leaf": receipt.leaf_index, "fingerprint": receipt.fingerprint},
    )


@cli.command("round-close")
@click.option("--authority", default=None)
@click.option("--note", default="")
@click.pass_obj
def round_close(obj: Ctx, authority, note):
    """Close the pending round and print one linked CoE per fingerprint."""
    auth = obj.authority(authority, create=False)
    pending = list(auth.pending)
    head, stamps = auth.close(note)
    obj.save_authority(auth)
    lines = [f"head {head.hex()}"] + [f"{fp.path_form()} {s.to_text()}" for fp, s in zip(pending, stamps)]
    obj.emit("\n".join(lines), {"head": head, "coes": [[fp, s] for fp, s in zip(pending, stamps)]})


@cli.command("verify-coe")
@click.argument("coe")
@click.argument("fp")
@click.option("--anchors", "anchors_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None)
@click.pass_obj
def verify_coe_cmd(obj: Ctx, coe, fp, anchors_path):
    """Check a CoE against a fingerprint using the trusted anchors."""
    anchors = TrustAnchors.load(anchors_path) if anchors_path else obj.anchors()
    verdict = verify_coe(parse_coe(coe), parse_fingerprint(fp), anchors)
    if verdict != Verdict.VALID:
        raise click.ClickException(verdict.value)
    obj.emit(verdict.value, verdict.value)


# ---------------------------------------------------------------------------
# handles and publication


def _handle_for(file: Path, title, authors, coes) -> tuple[Blob, DocumentHandle]:
    blob = Blob(file.read_bytes())
    return blob, make_handle(blob, title, list(authors) or None, [parse_coe(c) for c in coes])


@cli.command()
@click.argument("file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--title", default=None)
@click.option("--author", "authors", multiple=True)
@click.option("--coe", "coes", multiple=True)
@click.pass_obj
def handle(obj: Ctx, file, title, authors, coes):
    """Print the four-line handle of FILE."""
    _, h = _handle_for(file, title, authors, coes)
    obj.emit(h.to_text(), h)


@cli.command()
@click.argument("file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--title", default=None)
@click.option("--author", "authors", multiple=True)
@click.option("--coe", "coes", multiple=True)
@click.option("--submitter", default=None, help="submitter display name (default: first author)")
@click.option("--affiliation", default=None)
@click.option("--media-type", default="application/octet-stream")
@click.option("--store", "store_url", default=None, help="submit to a running store service instead")
@click.pass_obj
def publish(obj: Ctx, file, title, authors, coes, submitter, affiliation, media_type, store_url):
    """Submit FILE to the local store or, with --store, to a store service."""
    name = submitter or (authors[0] if authors else "anonymous submitter")
    who = Identity(name, affiliation)
    data = file.read_bytes()
    if store_url:
        from academia.service import submit_remote

        h = submit_remote(store_url, data, who, media_type, title, list(authors) or None, list(coes))
    else:
        node = obj.node()
        h = node.submit(Blob(data, media_type), who, title, list(authors) or None, [parse_coe(c) for c in coes])
        obj.save_node(node)
    obj.emit(h.to_text(), h)


# ---------------------------------------------------------------------------
# reviews


def _grade(text: str) -> Grade:
    # name=value/scale, optional ":lower" for lower-is-better scales
    try:
        name, rest = text.split("=", 1)
        lower = rest.endswith(":lower")
        value, scale = rest.removesuffix(":lower").split("/")
        orient = Orientation.LOWER_IS_BETTER if lower else Orientation.HIGHER_IS_BETTER
        return Grade(name, int(value), int(scale), orient)
    except ValueError:
        raise click.BadParameter(f"grade {text!r} must look like name=3/5") from None


@cli.group()
def review():
    """Write, validate and seal review objects."""


@review.command("new")
@click.option("--spec", "spec_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--target", "targets", multiple=True, required=True, help="fingerprint[,coe]")
@click.option("--title", required=True)
@click.option("--grade", "grades", multiple=True)
@click.option("--comments", default="")
@click.option("--author", default=None, help="open reviewer display name")
@click.option("--affiliation", default=None)
@click.option("--pseudonym", default=None)
@click.option("--escrow", "escrow_label", default=None)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.pass_obj
def review_new(obj: Ctx, spec_path, targets, title, grades, comments, author, affiliation, pseudonym, escrow_label, out):
    spec = ReviewProcessSpec.from_canonical(load_structured(spec_path))
    if (author is None) == (pseudonym is None):
        raise click.UsageError("give exactly one of --author or --pseudonym")
    if pseudonym is not None:
        if escrow_label is None:
            raise click.UsageError("--pseudonym needs --escrow")
        attribution = obj.escrow(escrow_label).attribution(pseudonym)
    else:
        attribution = OpenAttribution(Identity(author, affiliation))
    handles = []
    for t in targets:
        fp, _, coe = t.partition(",")
        handles.append(DocumentHandle(parse_fingerprint(fp), coes=(parse_coe(coe),) if coe else ()))
    r = ReviewObject(attribution, title, tuple(handles), tuple(_grade(g) for g in grades), comments, spec)
    data = r.canonical_bytes()
    if out:
        out.write_bytes(data)
    obj.emit(data.decode("utf-8"), r)


@review.command("validate")
@click.argument("file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.pass_obj
def review_validate(obj: Ctx, file):
    r = ReviewObject.from_canonical(load_structured(file))
    problems = validate_review(r)
    if problems:
        for p in problems:
            click.echo(str(p))
        raise click.ClickException(f"{len(problems)} violation(s)")
    obj.emit("valid", [])


@review.command("seal")
@click.argument("file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.pass_obj
def review_seal(obj: Ctx, file, out):
    """Re-encode a review canonically and print its handle."""
    r = ReviewObject.from_canonical(load_structured(file))
    problems = validate_review(r)
    if problems:
        raise click.ClickException("; ".join(map(str, problems)))
    blob, h = review_as_object(r)
    if out:
        out.write_bytes(blob.canonical_bytes())
    obj.emit(h.to_text(), h)


# ---------------------------------------------------------------------------
# rounds


@cli.group("round")
def round_group():
    """Orchestrate a review round."""


def _round_path(obj: Ctx, name: str) -> Path:
    return obj.cfg.path("rounds", f"{name}.aca")


def _load_round(obj: Ctx, name: str, escrow_label=None) -> tuple[review_proc.RoundState, EscrowService | None]:
    path = _round_path(obj, name)
    if not path.exists():
        raise AcademiaError(f"unknown round {name!r}")
    esc = obj.escrow(escrow_label) if escrow_label else None
    return review_proc.round_from_canonical(canonical_decode(path.read_bytes()), esc), esc


@round_group.command("start")
@click.argument("name")
@click.option("--spec", "spec_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--work", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--coe", required=True, help="CoE of the non-anonymized work")
@click.option("--anonymized", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None)
@click.option("--title", default=None)
@click.option("--author", "authors", multiple=True)
@click.pass_obj
def round_start(obj: Ctx, name, spec_path, work, coe, anonymized, title, authors):
    spec = ReviewProcessSpec.from_canonical(load_structured(spec_path))
    mode = review_proc.Mode.DOUBLE_BLIND if anonymized else review_proc.Mode.BLIND
    w = review_proc.RoundWork(
        Blob(work.read_bytes()), parse_coe(coe), Blob(anonymized.read_bytes()) if anonymized else None,
        title, tuple(authors) or None,
    )
    state = review_proc.start_round(spec, [w], mode)
    _round_path(obj, name).write_bytes(canonical_encode(review_proc.round_to_canonical(state)))
    template = state.template()
    obj.emit(canonical_encode(template).decode("utf-8"), template)


@round_group.command("submit")
@click.argument("name")
@click.argument("review_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--escrow", "escrow_label", default=None)
@click.pass_obj
def round_submit(obj: Ctx, name, review_file, escrow_label):
    state, esc = _load_round(obj, name, escrow_label)
    r = ReviewObject.from_canonical(load_structured(review_file))
    receipt = review_proc.submit_review(state, r)
    _round_path(obj, name).write_bytes(canonical_encode(review_proc.round_to_canonical(state)))
    if esc is not None:
        obj.save_escrow(esc)
    status = "published" if receipt.published else "held until release"
    obj.emit(f"{receipt.review_handle.fingerprint.path_form()} {status}", receipt.review_handle)


@round_group.command("release")
@click.argument("name")
@click.option("--date", "date", callback=date_arg, required=True)
@click.pass_obj
def round_release(obj: Ctx, name, date):
    state, _ = _load_round(obj, name)
    node = obj.node()
    out = review_proc.release(state, date)
    for o, h in out:
        node.submit(o, Identity(f"round {name}"), h.title, h.authors, h.coes)
    obj.save_node(node)
    _round_path(obj, name).write_bytes(canonical_encode(review_proc.round_to_canonical(state)))
    obj.emit("\n".join(h.fingerprint.path_form() for _, h in out), [h for _, h in out])


# ---------------------------------------------------------------------------
# escrow


@cli.group()
def escrow():
    """Identity escrow boards (state sealed under ACA_ESCROW_PASSPHRASE)."""


@escrow.command("create")
@click.argument("label")
@click.option("--member", "members", multiple=True, required=True)
@click.pass_obj
def escrow_create(obj: Ctx, label, members):
    esc = EscrowService(label, [Identity(m) for m in members])
    obj.save_escrow(esc)
    obj.emit(f"{label} {esc.board_key}", esc.board_key)


@escrow.command("register")
@click.argument("label")
@click.option("--name", required=True)
@click.option("--affiliation", default=None)
@click.option("--contact", default=None)
@click.pass_obj
def escrow_register(obj: Ctx, label, name, affiliation, contact):
    esc = obj.escrow(label)
    pseudonym = esc.register(Identity(name, affiliation, contact))
    obj.save_escrow(esc)
    obj.emit(pseudonym, pseudonym)


@escrow.command("petition")
@click.argument("label")
@click.option("--petitioner", "petitioners", multiple=True, required=True)
@click.option("--review", "reviews", multiple=True, required=True, help="review fingerprint")
@click.option("--date", "date", callback=date_arg, required=True)
@click.pass_obj
def escrow_petition(obj: Ctx, label, petitioners, reviews, date):
    esc = obj.escrow(label)
    inv = esc.open_investigation(
        [Identity(p) for p in petitioners], [DocumentHandle(parse_fingerprint(r)) for r in reviews], date
    )
    obj.save_escrow(esc)
    obj.emit(f"{inv.id} open until {inv.deadline}", inv.id)


@escrow.command("resolve")
@click.argument("label")
@click.argument("investigation")
@click.option("--action", type=click.Choice([a.value for a in Action]), required=True)
@click.option("--date", "date", callback=date_arg, required=True)
@click.pass_obj
def escrow_resolve(obj: Ctx, label, investigation, action, date):
    esc = obj.escrow(label)
    templates = esc.resolve_investigation(investigation, Action(action), date)
    obj.save_escrow(esc)
    lines = [f"{t.author.pseudonym}: {t.title}" for t in templates] or ["no attested reviews in question"]
    obj.emit("\n".join(lines), [{"pseudonym": t.author.pseudonym, "title": t.title} for t in templates])


@escrow.command("expire")
@click.argument("label")
@click.argument("investigation")
@click.option("--date", "date", callback=date_arg, required=True)
@click.pass_obj
def escrow_expire(obj: Ctx, label, investigation, date):
    esc = obj.escrow(label)
    state = esc.expire_investigation(investigation, date)
    obj.save_escrow(esc)
    status_path = obj.cfg.path("escrow-status.aca")
    status = canonical_decode(status_path.read_bytes()) if status_path.exists() else {}
    status[esc.board_key] = False
    status_path.write_bytes(canonical_encode(status))
    obj.emit(f"{investigation} {state.value}; board {esc.board_key} flagged nonresponsive", state.value)


# ---------------------------------------------------------------------------
# queries


@cli.group()
def query():
    """Saved queries over the local store."""


def _query(obj: Ctx, qid: str) -> SavedQuery:
    path = obj.cfg.path("queries", f"{qid}.aca")
    if not path.exists():
        raise AcademiaError(f"unknown query {qid!r}")
    return SavedQuery.from_canonical(canonical_decode(path.read_bytes()))


def _graph_with_escrows(obj: Ctx) -> KnowledgeGraph:
    graph = obj.graph()
    status_path = obj.cfg.path("escrow-status.aca")
    if status_path.exists():
        for key, responsive in canonical_decode(status_path.read_bytes()).items():
            graph.set_escrow_status(key, responsive)
    return graph


@query.command("define")
@click.argument("file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.pass_obj
def query_define(obj: Ctx, file):
    q = SavedQuery.from_canonical(load_structured(file))
    if not q.id or "/" in q.id:
        raise click.BadParameter("query id must be a plain name")
    obj.cfg.path("queries", f"{q.id}.aca").write_bytes(q.definition_bytes())
    obj.emit(q.id, q)


@query.command("run")
@click.argument("qid")
@click.pass_obj
def query_run(obj: Ctx, qid):
    q = _query(obj, qid)
    graph = _graph_with_escrows(obj)
    if obj.fmt == "feed":
        sys.stdout.buffer.write(feed(graph, q))
        return
    results = execute(graph, q, q.owner)
    if obj.fmt == "canonical":
        sys.stdout.buffer.write(results_bytes(results) + b"\n")
        return
    for r in results:
        score = "unscored" if r.score is None else f"{r.score.numerator}/{r.score.denominator}"
        mark = " [posthoc-expansion]" if r.expansion else ""
        click.echo(f"{r.handle.fingerprint.path_form()}\t{score}\t{r.handle.title or '-'}{mark}")
        for n in r.notes:
            click.echo(f"\t{n.relation} ({n.role}) with {n.other.path_form()}: {n.statement}")


@query.command("feed")
@click.argument("qid")
@click.option("--limit", default=20, show_default=True)
@click.option("--updated", callback=date_arg, default=None)
@click.pass_obj
def query_feed(obj: Ctx, qid, limit, updated):
    sys.stdout.buffer.write(feed(_graph_with_escrows(obj), _query(obj, qid), limit, updated))


# ---------------------------------------------------------------------------
# store service and simulation


@cli.group()
def store():
    """Run a store node as an HTTP service."""


@store.command("serve")
@click.option("--mode", type=click.Choice([m.value for m in StoreMode]), default="institutional")
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8470, show_default=True)
@click.option("--owner", default=None, help="owner display name (required for p2p)")
@click.option("--peer", "peers", multiple=True, help="peer base URL")
@click.option("--policy", type=click.Choice(["open", "affiliated_only"]), default="open")
@click.option("--affiliation", default=None)
@click.pass_obj
def store_serve(obj: Ctx, mode, host, port, owner, peers, policy, affiliation):
    import uvicorn

    from academia.service import create_app

    if mode == "p2p" and not owner:
        raise click.UsageError("p2p mode needs --owner")
    config = StoreConfig(
        StoreMode(mode), node_id_for(f"{host}:{port}:{obj.cfg.data_dir}"),
        owner=Identity(owner) if owner else None, address=f"http://{host}:{port}",
        peers=list(peers), submission_policy=policy, affiliation=affiliation,
    )
    uvicorn.run(create_app(obj.cfg.data_dir / "service", config), host=host, port=port, log_level="warning")


@cli.command()
@click.argument("scenario")
@click.option("--seed", type=int, required=True)
@click.option("--param", "params", multiple=True, help="key=value scenario parameter")
@click.option("--params-file", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None)
@click.pass_obj
def simulate(obj: Ctx, scenario, seed, params, params_file):
    """Run a built-in scenario and print its event log and verdict."""
    values = dict(load_structured(params_file)) if params_file else {}
    for p in params:
        key, sep, value = p.partition("=")
        if not sep:
            raise click.BadParameter(f"{p!r} is not key=value")
        values[key] = value
    result = harness.simulate(scenario, seed, values)
    sys.stdout.write(result.log_text())
    click.echo(f"verdict\t{'pass' if result.verdict else 'fail'}")
    if not result.verdict:
        sys.exit(1)


def main(argv=None):
    cli.main(args=argv, prog_name="aca")


if __name__ == "__main__":
    main()
