import datetime as dt
from fractions import Fraction
from pathlib import Path

import pytest

from academia.canonical import canonical_decode, canonical_encode, fingerprint
from academia.coe import parse_coe
from academia.errors import InvalidReview, MalformedObject
from academia.model import (
    CITATION_MEDIA_TYPE,
    AuthorKnown,
    Blob,
    Dictionary,
    DocumentHandle,
    Grade,
    Identity,
    OpenAttribution,
    Orientation,
    PostHocCitation,
    PseudonymousAttribution,
    Relation,
    ReviewerKnownWhen,
    ReviewerMode,
    ReviewObject,
    ReviewProcessSpec,
    TextAudience,
    TextPublishedWhen,
    WorkPublic,
    citation_as_object,
    make_handle,
    object_fingerprint,
    object_from_bytes,
    parse_semantic,
    review_as_object,
    traverse,
    validate_posthoc,
    validate_review,
)

FIXTURES = Path(__file__).parent / "fixtures"
BOARD = (Identity("Board One", "Uni"),)


def spec(**kw):
    base = dict(
        start_date=dt.date(2020, 1, 1), end_date=dt.date(2020, 2, 1),
        author_identity_known_to_reviewer=AuthorKnown.PRIOR, reviewer_identity_mode=ReviewerMode.OPEN,
        reviewer_identity_known_when=ReviewerKnownWhen.IMMEDIATE,
        review_text_published_when=TextPublishedWhen.END_OF_PROCESS,
        review_text_audience=TextAudience.PUBLIC, reviewed_work_public=WorkPublic.AFTERWARDS,
    )
    base.update(kw)
    return ReviewProcessSpec(**base)


def review(**kw):
    target = make_handle(Blob(b"paper"))
    base = dict(
        author=OpenAttribution(Identity("Ada")), title="Review", targets=(target,),
        grades=(Grade("overall", 2, 3),), comments="fine", process=spec(),
    )
    base.update(kw)
    return ReviewObject(**base)


def rules(r, *known):
    return sorted(v.rule for v in validate_review(r, known))


def test_fixture_review_round_trip():
    data = (FIXTURES / "blind_review_example.aca").read_bytes()
    r = ReviewObject.from_bytes(data)
    assert r.canonical_bytes() == data
    assert validate_review(r) == []
    assert r.quality() == Fraction(11, 15)


def test_fixture_handle_round_trip():
    text = (FIXTURES / "report_handle.txt").read_text()
    h = DocumentHandle.from_text(text)
    assert h.to_text() == text
    coe_line = text.splitlines()[3].removeprefix("CoEs: ")
    assert h.coes == (parse_coe(coe_line),) and h.coes[0].authority == "arxiv"
    assert h.earliest_coe_date() == dt.date(2014, 5, 10)


def test_handle_equality_is_fingerprint_only():
    fp = fingerprint(b"w")
    assert DocumentHandle(fp, "A") == DocumentHandle(fp, "B", ("x",))
    assert len({DocumentHandle(fp, "A"), DocumentHandle(fp)}) == 1


def test_handle_canonical_round_trip_and_missing_fields():
    h = make_handle(Blob(b"w"), "T", ["A, B", "C"], [parse_coe("reg:2020-01-01:1")])
    again = DocumentHandle.from_canonical(canonical_decode(canonical_encode(h)))
    assert again.to_text() == h.to_text()
    assert DocumentHandle.from_text(h.to_text()).authors == ("A, B", "C")
    with pytest.raises(MalformedObject):
        DocumentHandle.from_canonical({"title": "x"})


@pytest.mark.parametrize(
    "kw, expected",
    [
        (dict(title=""), ["EmptyTitle"]),
        (dict(targets=()), ["NoTargets"]),
        (dict(grades=(Grade("g", 4, 3),)), ["GradeOutOfRange"]),
        (dict(grades=(Grade("g", 0, 0),)), ["ScaleInvalid"]),
        (dict(process=spec(start_date=dt.date(2021, 1, 1))), ["DatesInverted"]),
        (dict(process=spec(reviewer_identity_mode=ReviewerMode.ANONYMIZED)), ["AttributionMismatch", "EscrowMissing"]),
        (dict(process=spec(reviewed_work_public=WorkPublic.AFTERWARDS_BEYOND_THRESHOLD)), ["ThresholdMissing"]),
        (dict(author=PseudonymousAttribution("P", BOARD)), ["AttributionMismatch"]),
        (dict(author=PseudonymousAttribution("P", ())), ["AttributionMismatch", "EscrowMissing"]),
    ],
)
def test_validation_rules(kw, expected):
    assert rules(review(**kw)) == expected


def test_identity_leak_is_reported():
    anon = spec(reviewer_identity_mode=ReviewerMode.ANONYMIZED, escrow_board=BOARD)
    r = review(author=PseudonymousAttribution("P", BOARD), process=anon, comments="signed, Grace Hopper")
    assert rules(r, Identity("Grace Hopper")) == ["IdentityLeak"]
    assert rules(r, Identity("Someone Else"), BOARD[0]) == []


def test_invalid_review_cannot_become_an_object():
    with pytest.raises(InvalidReview):
        review_as_object(review(title=""))


def test_grade_normalization():
    assert Grade("g", 1, 4).normalized() == Fraction(1, 4)
    assert Grade("g", 1, 4, Orientation.LOWER_IS_BETTER).normalized() == Fraction(3, 4)
    assert review(grades=()).quality() is None


def test_review_rejects_unknown_fields():
    data = canonical_decode(review().canonical_bytes())
    data["extra"] = 1
    with pytest.raises(MalformedObject):
        ReviewObject.from_canonical(data)
    assert parse_semantic(canonical_encode(data)) is None
    assert parse_semantic(b"not canonical") is None


def test_threshold_serializes_as_reduced_rational():
    s = spec(reviewed_work_public=WorkPublic.AFTERWARDS_BEYOND_THRESHOLD, acceptance_threshold=Fraction(2, 4))
    assert s.to_canonical()["threshold"] == "1/2"
    assert ReviewProcessSpec.from_canonical(s.to_canonical()) == s
    bad = s.to_canonical() | {"threshold": "2/4"}
    with pytest.raises(MalformedObject):
        ReviewProcessSpec.from_canonical(bad)


def test_posthoc_citation():
    a, b = make_handle(Blob(b"a")), make_handle(Blob(b"b"))
    c = PostHocCitation(a, b, Relation.PLAGIARISM, "", Identity("Reader"))
    assert [v.rule for v in validate_posthoc(c)] == ["StatementRequired"]
    ok = PostHocCitation(a, b, Relation.PRIOR_WORK, "b builds on a", Identity("Reader"))
    blob, h = citation_as_object(ok)
    assert blob.media_type == CITATION_MEDIA_TYPE
    assert parse_semantic(blob.data) == ok
    assert [v.rule for v in validate_posthoc(PostHocCitation(a, a, Relation.INFLUENCE, "", Identity("R")))] == [
        "SelfCitation"
    ]


def test_dictionary_objects_and_traversal():
    leaf1, leaf2 = Blob(b"one"), Blob(b"two")
    inner = Dictionary({"b": object_fingerprint(leaf2)})
    root = Dictionary({"a": object_fingerprint(leaf1), "sub": object_fingerprint(inner), "gone": fingerprint(b"?")})
    table = {object_fingerprint(o): o for o in (leaf1, leaf2, inner, root)}
    walked = [(p, o) for p, _, o in traverse(object_fingerprint(root), table.get)]
    assert [p for p, _ in walked] == [(), ("a",), ("gone",), ("sub",), ("sub", "b")]
    assert walked[2][1] is None
    again = object_from_bytes(root.canonical_bytes(), root.media_type)
    assert again == root


def test_traversal_terminates_on_cycles():
    a = Dictionary({"self": fingerprint(b"placeholder")})
    fp_a = object_fingerprint(a)
    cyclic = {fp_a: Dictionary({"self": fp_a})}
    assert len(list(traverse(fp_a, cyclic.get))) == 1


def test_bad_dictionary_bytes():
    with pytest.raises(MalformedObject):
        object_from_bytes(b'{"dictionary":{"a":"nope"}}', "application/vnd.academia.dictionary")
