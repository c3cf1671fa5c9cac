import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from academia.canonical import canonical_decode, fingerprint
from academia.cli import cli

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def run(tmp_path, monkeypatch):
    monkeypatch.setenv("ACA_ESCROW_PASSPHRASE", "board secret")
    monkeypatch.delenv("ACA_CONFIG", raising=False)
    runner = CliRunner()

    def invoke(*args, code=0):
        result = runner.invoke(cli, ["--data-dir", str(tmp_path / "data"), *map(str, args)])
        assert result.exit_code == code, result.output
        return result.output

    return invoke


@pytest.fixture
def document(tmp_path):
    p = tmp_path / "document.pdf"
    p.write_bytes(b"%PDF pretend\n")
    return p


def test_stamp_and_verify(run, document):
    coe = run("stamp", document, "--date", "2014-05-10").strip()
    fp = fingerprint(document.read_bytes()).path_form()
    assert run("verify-coe", coe, fp).strip() == "valid"
    out = run("verify-coe", coe, fingerprint(b"other").path_form(), code=1)
    assert "invalid" in out
    run("stamp", document, "--date", "2014-5-10", code=2)


def test_linked_rounds(run, document):
    fp = fingerprint(document.read_bytes()).path_form()
    assert run("round-append", fp).startswith("pending local-tsa round 0 leaf 0")
    lines = run("round-close").splitlines()
    assert lines[0].startswith("head ")
    got_fp, coe = lines[1].split(" ")
    assert got_fp == fp
    assert run("verify-coe", coe, fp).strip() == "valid"
    run("round-close", code=1)


def test_handle_and_publish(run, document):
    out = run("handle", document, "--title", "T", "--author", "A. B", "--coe", "preprints:2014-05-10:0001.0002v1")
    assert out.splitlines()[0] == "Title: T" and len(out.splitlines()) == 4
    assert run("publish", document, "--title", "T", "--author", "A. B") == out.replace(
        "preprints:2014-05-10:0001.0002v1", "-"
    )


def test_review_commands(run, tmp_path):
    fixture = FIXTURES / "blind_review_example.aca"
    assert run("review", "validate", fixture).strip() == "valid"
    sealed = tmp_path / "sealed.aca"
    out = run("review", "seal", fixture, "--out", sealed)
    assert "Fingerprint: " + fingerprint(sealed.read_bytes()).path_form() in out
    spec = canonical_decode(fixture.read_bytes())["process"]
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(spec))
    run("review", "new", "--spec", spec_path, "--target", fingerprint(b"w").path_form(),
        "--title", "R", "--author", "Open Person", code=0)
    bad = tmp_path / "bad.aca"
    run("review", "new", "--spec", spec_path, "--target", fingerprint(b"w").path_form(),
        "--title", "R", "--author", "Open Person", "--out", bad)
    out = run("review", "validate", bad, code=1)
    assert "AttributionMismatch" in out


def test_round_with_escrow_and_query(run, tmp_path, document):
    coe = run("stamp", document, "--date", "2020-01-01").strip()
    anon = tmp_path / "anon.pdf"
    anon.write_bytes(b"%PDF anonymized\n")
    run("escrow", "create", "pc", "--member", "Chair One", "--member", "Chair Two")
    pseudonym = run("escrow", "register", "pc", "--name", "Secret Reviewer").strip()
    assert "Secret" not in pseudonym
    spec = {
        "start": "2020-01-01", "end": "2020-02-01", "author_known": "prior", "reviewer_mode": "anonymized",
        "reviewer_known_when": "afterwards", "text_published_when": "end_of_process", "text_audience": "public",
        "work_public": "afterwards", "coordinators": [],
        "escrow": [{"name": "Chair One"}, {"name": "Chair Two"}],
    }
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(spec))
    run("round", "start", "r1", "--spec", spec_path, "--work", document, "--coe", coe, "--anonymized", anon,
        "--title", "Spline work", "--author", "Jane")
    fp = fingerprint(document.read_bytes()).path_form()
    review = tmp_path / "review.aca"
    run("review", "new", "--spec", spec_path, "--target", f"{fp},{coe}", "--title", "Review 1",
        "--grade", "overall=2/3", "--pseudonym", pseudonym, "--escrow", "pc", "--out", review)
    assert "held until release" in run("round", "submit", "r1", review, "--escrow", "pc")
    run("round", "release", "r1", "--date", "2020-01-15", code=1)
    released = run("round", "release", "r1", "--date", "2020-02-01").split()
    assert fp in released and len(released) == 2

    qfile = tmp_path / "q.json"
    qfile.write_text(json.dumps({"id": "splines", "owner": {"name": "Editors"},
                                 "filter": {"op": "title", "terms": ["spline"]}}))
    run("query", "define", qfile)
    line = run("query", "run", "splines").splitlines()[0]
    assert line.split("\t")[:2] == [fp, "2/3"]
    assert run("query", "feed", "splines").count("<entry>") == 1

    rev_fp = released[0] if released[0] != fp else released[1]
    inv = run("escrow", "petition", "pc", "--petitioner", "A", "--petitioner", "B", "--petitioner", "C",
              "--review", rev_fp, "--date", "2020-03-01").split()[0]
    run("escrow", "expire", "pc", inv, "--date", "2020-03-02", code=1)
    assert "escrow_nonresponsive" in run("escrow", "expire", "pc", inv, "--date", "2020-06-01")
    assert run("query", "run", "splines").splitlines()[0].split("\t")[1] == "unscored"


def test_escrow_needs_passphrase(run, monkeypatch):
    monkeypatch.delenv("ACA_ESCROW_PASSPHRASE")
    assert "ACA_ESCROW_PASSPHRASE" in run("escrow", "create", "pc", "--member", "X", code=1)


def test_simulate(run):
    out = run("simulate", "credit_loss", "--seed", "42")
    assert out.endswith("verdict\tpass\n")
    assert out == run("simulate", "credit_loss", "--seed", "42")
    run("simulate", "nope", "--seed", "1", code=1)
    run("simulate", "drop_and_retry", "--seed", "1", "--param", "nodes=16", "--param", "trials=5",
        "--param", "min_rate=1.1", code=1)


def test_usage_errors(run):
    run("no-such-command", code=2)
    run("simulate", "credit_loss", code=2)
