"""Random corpora built twice: once as a KnowledgeGraph, once as oracle data."""

from __future__ import annotations

import datetime as dt
import random
from dataclasses import dataclass

from oracles import Corpus

from academia.coe import RegistryStamp
from academia.model import (
    AuthorKnown,
    Blob,
    DocumentHandle,
    Grade,
    Identity,
    OpenAttribution,
    Orientation,
    PseudonymousAttribution,
    ReviewerKnownWhen,
    ReviewerMode,
    ReviewObject,
    ReviewProcessSpec,
    TextAudience,
    TextPublishedWhen,
    WorkPublic,
    board_key,
    make_handle,
    review_as_object,
)
from academia.query import KnowledgeGraph

BOARDS = {
    "north": (Identity("Board North One", "North"), Identity("Board North Two", "North")),
    "south": (Identity("Board South One", "South"),),
}


def spec_for(board: tuple[Identity, ...] | None) -> ReviewProcessSpec:
    mode = ReviewerMode.ANONYMIZED if board else ReviewerMode.OPEN
    return ReviewProcessSpec(
        dt.date(2020, 1, 1), dt.date(2020, 2, 1), AuthorKnown.PRIOR, mode,
        ReviewerKnownWhen.AFTERWARDS, TextPublishedWhen.END_OF_PROCESS, TextAudience.PUBLIC,
        WorkPublic.AFTERWARDS, escrow_board=board or (),
    )


DATES = [dt.date(2019, 5, 1), dt.date(2019, 6, 1), dt.date(2019, 7, 1)]


@dataclass
class Built:
    graph: KnowledgeGraph
    oracle: Corpus
    objects: list  # (object, handle) in indexing order
    works: list[DocumentHandle]
    reviews: list[ReviewObject]


def random_grades(rng: random.Random) -> tuple[Grade, ...]:
    n = rng.choices([0, 1, 2, 3], weights=[1, 4, 4, 1])[0]
    out = []
    for i in range(n):
        scale = rng.choice([3, 5, 10])
        orient = rng.choice(list(Orientation))
        out.append(Grade(f"g{i}", rng.randint(0, scale), scale, orient))
    return tuple(out)


def make_review(author, title, targets, grades) -> ReviewObject:
    board = author.escrow_board if isinstance(author, PseudonymousAttribution) else None
    return ReviewObject(author, title, tuple(targets), tuple(grades), "", spec_for(board))


def build(rng: random.Random, max_works: int = 10, max_reviews: int = 20, dismiss: bool = True) -> Built:
    graph = KnowledgeGraph()
    oracle = Corpus()
    objects = []
    works = []
    for i in range(rng.randint(1, max_works)):
        blob = Blob(b"work %d " % i + rng.randbytes(8))
        coes = [] if rng.random() < 0.2 else [RegistryStamp("reg", rng.choice(DATES), f"w{i}")]
        h = make_handle(blob, f"Work {i} on topic {rng.choice(['alpha', 'beta'])}", [f"Author {i}"], coes)
        works.append(h)
        objects.append((blob, h))
        d = h.earliest_coe_date()
        oracle.works[h.fingerprint.hex] = (d.toordinal() if d else None, h.fingerprint.hex)
    reviews: list[ReviewObject] = []
    review_handles: list[DocumentHandle] = []
    for j in range(rng.randint(0, max_reviews)):
        if rng.random() < 0.4:
            author, board = OpenAttribution(Identity(f"Open reviewer {j}")), None
        else:
            label = rng.choice(sorted(BOARDS))
            author = PseudonymousAttribution(f"Anonymous reviewer {j} mandated by {label}", BOARDS[label])
            board = board_key(BOARDS[label])
        pool = works + review_handles
        targets = [rng.choice(works) if (not review_handles or rng.random() < 0.6) else rng.choice(review_handles)]
        if rng.random() < 0.1:
            extra = rng.choice(pool)
            if extra not in targets:
                targets.append(extra)
        r = make_review(author, f"Review {j}", targets, random_grades(rng))
        obj, h = review_as_object(r)
        reviews.append(r)
        review_handles.append(h)
        objects.append((obj, h))
        oracle.reviews[h.fingerprint.hex] = (
            board,
            [(g.value, g.scale_max, g.orientation == Orientation.LOWER_IS_BETTER) for g in r.grades],
            [t.fingerprint.hex for t in targets],
        )
    for obj, h in objects:
        graph.index(obj, h)
    if dismiss:
        for label, members in sorted(BOARDS.items()):
            if rng.random() < 0.25:
                graph.set_escrow_status(board_key(members), False, label)
                oracle.dismissed_boards.add(board_key(members))
    return Built(graph, oracle, objects, works, reviews)
