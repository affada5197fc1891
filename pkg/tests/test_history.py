from dataclasses import replace
from datetime import timedelta

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from revue.corpus import Status
from revue.history import (
    IndexBuildError,
    WindowQuery,
    build_index,
    closed_counts,
    created_count_before,
)

from factories import at, make_change, random_corpus

WINDOW = timedelta(days=60)


def brute_closed(changes, entity, role, anchor, window=WINDOW):
    merged = abandoned = 0
    for c in changes:
        if role == "author":
            hit = c.owner == entity
        elif role == "reviewer":
            hit = entity in {r.account_id for r in c.reviewers}
        elif role == "subproject":
            hit = c.subproject == entity
        else:
            hit = (c.owner, c.subproject) == entity
        if hit and anchor - window <= c.closed_at < anchor:
            merged += c.merged
            abandoned += not c.merged
    return merged, abandoned


def test_empty_corpus():
    idx = build_index([])
    assert idx.by_author_created == {} and idx.by_subproject_closed == {}


def test_created_lists_sorted():
    idx = build_index([make_change("b", 1, 5, 6), make_change("a", 1, 2, 3)])
    assert idx.by_author_created[1] == sorted(idx.by_author_created[1])
    assert len(idx.by_author_created[1]) == 2


def test_corrupt_change_rejected():
    with pytest.raises(IndexBuildError):
        build_index([make_change("x", created=5, closed=4)])


def test_window_boundaries():
    changes = [make_change("a", 1, 0, 90), make_change("b", 1, 0, 30)]
    idx = build_index(changes)
    assert closed_counts(idx, 1, "author", WindowQuery(at(100))) == (1, 0)
    # closure exactly at the anchor is not visible yet
    assert closed_counts(build_index([make_change("c", 1, 0, 50)]), 1, "author", WindowQuery(at(50))) == (0, 0)
    # lower bound is inclusive: exactly 60 days back counts
    assert closed_counts(build_index([make_change("d", 1, 0, 40)]), 1, "author", WindowQuery(at(100))) == (1, 0)
    assert closed_counts(build_index([make_change("e", 1, 0, 39.999)]), 1, "author", WindowQuery(at(100))) == (0, 0)


def test_unknown_entity_is_zero():
    idx = build_index([make_change("a", 1, 0, 1)])
    assert closed_counts(idx, 42, "reviewer", WindowQuery(at(10))) == (0, 0)
    assert created_count_before(idx, 42, at(10)) == 0


def test_created_count_before():
    changes = [make_change(f"c{k}", 3, k, k + 0.5) for k in range(12)]
    idx = build_index(changes + [make_change("now", 3, 20, 21)])
    assert created_count_before(idx, 3, at(20)) == 12
    assert created_count_before(idx, 3, at(0)) == 0


def test_window_query_validation():
    with pytest.raises(ValueError):
        WindowQuery(at(0), 0)


ROLES = ("author", "reviewer", "subproject", "author_subproject")


def _entities(changes):
    return {
        "author": sorted({c.owner for c in changes}),
        "reviewer": sorted({r.account_id for c in changes for r in c.reviewers}),
        "subproject": sorted({c.subproject for c in changes}),
        "author_subproject": sorted({(c.owner, c.subproject) for c in changes}),
    }


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("grid", [None, 1.0])
def test_closed_counts_match_brute_force(seed, grid):
    changes = random_corpus(seed, n=50, grid=grid)
    idx = build_index(changes)
    anchors = [c.created_at for c in changes] + [c.closed_at for c in changes]
    ents = _entities(changes)
    for t in anchors[::3]:
        for role in ROLES:
            for e in ents[role]:
                assert closed_counts(idx, e, role, WindowQuery(t)) == brute_closed(changes, e, role, t)
        for a in ents["author"]:
            assert created_count_before(idx, a, t) == sum(c.owner == a and c.created_at < t for c in changes)


def _perturb_future(changes, t, rng):
    """Drop changes created at/after t; rewrite the outcome of those still open at t."""
    out = []
    for c in changes:
        if c.created_at >= t:
            continue
        if c.closed_at >= t:
            c = replace(c, closed_at=t + timedelta(days=float(rng.uniform(0, 30))),
                        status=Status.MERGED if rng.random() < 0.5 else Status.ABANDONED)
        out.append(c)
    return out


@given(st.integers(0, 10_000), st.integers(0, 99), st.floats(1, 400))
def test_no_leak(seed, pick, window):
    changes = random_corpus(seed, n=100, grid=1.0 if seed % 2 else None)
    t = changes[pick].created_at
    rng = np.random.default_rng(seed)
    full, cut = build_index(changes), build_index(_perturb_future(changes, t, rng))
    as_of = build_index(changes, as_of=t)
    q = WindowQuery(t, window)
    ents = _entities(changes)
    for role in ROLES:
        for e in ents[role]:
            assert closed_counts(full, e, role, q) == closed_counts(cut, e, role, q) == closed_counts(as_of, e, role, q)
    for a in ents["author"]:
        assert created_count_before(full, a, t) == created_count_before(cut, a, t)


@given(st.integers(0, 10_000), st.lists(st.floats(0.5, 500), min_size=2, max_size=5))
def test_counts_monotone_in_window(seed, windows):
    changes = random_corpus(seed, n=60)
    idx = build_index(changes)
    t = at(150)
    ents = _entities(changes)
    for role in ROLES:
        for e in ents[role]:
            totals = [sum(closed_counts(idx, e, role, WindowQuery(t, w))) for w in sorted(windows)]
            assert totals == sorted(totals) and totals[0] >= 0


@given(st.integers(0, 10_000))
def test_unbounded_window_counts_all_prior_creations(seed):
    # every change closes before the anchor, so closed-so-far equals created-so-far
    changes = random_corpus(seed, n=40, span=100)
    t = max(c.closed_at for c in changes) + timedelta(days=1)
    idx = build_index(changes)
    for a in {c.owner for c in changes}:
        assert sum(closed_counts(idx, a, "author", WindowQuery(t, 1e6))) == created_count_before(idx, a, t)
