import json
import math
from dataclasses import replace
from datetime import date, timedelta
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from revue.corpus import AccountRecord, ChangeKind, FileDelta, RevisionRecord
from revue.features import (
    DIMENSIONS,
    FEATURE_NAMES,
    FeatureExtractor,
    code_features,
    extract,
    extract_all,
    extract_at_revision,
    load_features,
    modify_entropy,
    save_features,
    text_features,
    weighted_approval_score,
)
from revue.history import build_index

from factories import T0, accounts_for, at, make_change, random_corpus

DATA = Path(__file__).parent / "data"
YEAR = 365.25 * 86400.0
WINDOW = timedelta(days=60)


# -- hand-computed golden vector -------------------------------------------------

def golden_corpus():
    files = (
        FileDelta("src/core/a.c", 10, 0, ChangeKind.MODIFIED),
        FileDelta("src/core/b.c", 5, 5, ChangeKind.MODIFIED),
        FileDelta("docs/README", 20, 0, ChangeKind.ADDED),
        FileDelta("setup.py", 0, 10, ChangeKind.DELETED),
    )
    target = make_change("X", owner=1, created=70, closed=90, reviewers=[2, 3, (9, True)],
                         subject="Fix crash in parser", files=files)
    history = [
        make_change("h1", 1, 0, 10, True, reviewers=[2]),
        make_change("h2", 1, 5, 20, False, reviewers=[2, 3]),
        make_change("h3", 4, 1, 30, True, reviewers=[1]),
        make_change("h4", 1, 2, 15, True, subproject="ui", reviewers=[3]),
        make_change("h5", 1, -100, -90, True),
        make_change("h6", 5, 60, 80, True, reviewers=[2]),
        make_change("later", 1, 71, 72, False, reviewers=[2, 3]),
    ]
    accounts = {
        1: AccountRecord(1, "A", date(2018, 1, 1)),
        2: AccountRecord(2, "R", date(2016, 1, 1)),
        3: AccountRecord(3, "S", date(2019, 1, 1)),
        4: AccountRecord(4, "B", date(2019, 6, 1)),
        5: AccountRecord(5, "C", date(2019, 6, 1)),
        9: AccountRecord(9, "Jenkins", date(2015, 1, 1)),
    }
    return target, history + [target], accounts


def test_golden_vector():
    golden = json.loads((DATA / "golden_vector.json").read_text())
    target, corpus, accounts = golden_corpus()
    vec = extract(target, build_index(corpus), accounts)
    assert list(vec.values) == list(FEATURE_NAMES)
    for name, expected in golden["features"].items():
        assert vec.values[name] == pytest.approx(expected, rel=1e-12, abs=1e-12), name


def test_feature_order_contract():
    assert len(FEATURE_NAMES) == 25
    assert sorted(sum(map(list, DIMENSIONS.values()), [])) == sorted(FEATURE_NAMES)


# -- worked examples ---------------------------------------------------------------

def test_reviewer_experience_mean():
    # 06:00 anchor so that 1 and 5 years of 365.25 days land on midnights
    t = at(0.25)
    accounts = {2: AccountRecord(2, "a", (t - timedelta(days=1 * 365.25)).date()),
                3: AccountRecord(3, "b", (t - timedelta(days=5 * 365.25)).date())}
    c = make_change("x", created=0.25, closed=1, reviewers=[2, 3])
    fx = FeatureExtractor(build_index([c]), accounts)
    assert fx.reviewer_features(c)["avg_reviewer_experience"] == pytest.approx(3.0, abs=1e-9)


def test_no_human_reviewers():
    c = make_change("x", reviewers=[(8, True), (9, True)])
    got = FeatureExtractor(build_index([c]), {}).reviewer_features(c)
    assert got == {"avg_reviewer_experience": 0.0, "avg_reviewer_review_count": 0.0,
                   "num_of_reviewers": 0, "num_of_bot_reviewers": 2}


def test_reviewer_review_count_seven():
    past = [make_change(f"p{k}", owner=5, created=k, closed=10 + k, reviewers=[2]) for k in range(7)]
    past += [make_change("old", owner=5, created=-80, closed=-70, reviewers=[2])]
    c = make_change("x", created=30, closed=31, reviewers=[2])
    fx = FeatureExtractor(build_index(past + [c]), accounts_for(past + [c]))
    assert fx.reviewer_features(c)["avg_reviewer_review_count"] == 7


def test_default_author_merge_ratio():
    c = make_change("x", created=10, closed=11)
    got = FeatureExtractor(build_index([c]), accounts_for([c])).author_features(c)
    assert got["author_merge_ratio"] == 0.5 and got["author_merge_ratio_in_project"] == 0.5


def test_author_merge_ratio_eight_of_ten():
    past = [make_change(f"p{k}", owner=1, created=k, closed=k + 1, merged=k < 8) for k in range(10)]
    c = make_change("x", created=30, closed=31)
    got = FeatureExtractor(build_index(past + [c]), accounts_for(past + [c])).author_features(c)
    assert got["author_merge_ratio"] == pytest.approx(0.8)


def test_changes_per_week_twelve_closed():
    past = [make_change(f"p{k}", owner=1, created=k, closed=k + 2) for k in range(12)]
    c = make_change("x", created=50, closed=51)
    got = FeatureExtractor(build_index(past + [c]), accounts_for(past + [c])).author_features(c)
    assert got["author_changes_per_week"] == pytest.approx(1.4)
    # per-week bucket view: the 60-day window holds 60/7 weeks
    closes = np.array([(p.closed_at - (c.created_at - WINDOW)).total_seconds() / 86400 for p in past])
    buckets = np.bincount((closes // 7).astype(int), minlength=9)
    assert buckets.sum() / (60 / 7) == pytest.approx(got["author_changes_per_week"])


def test_project_features_empty_window():
    c = make_change("x", created=10, closed=11, subproject="new")
    got = FeatureExtractor(build_index([c]), accounts_for([c])).project_features(c)
    assert got == {"project_changes_per_week": 0.0, "changes_per_author": 0.0, "project_merge_ratio": 0.5}


def test_changes_per_author_thirty_by_five():
    past = [make_change(f"p{k}", owner=10 + k % 5, created=k, closed=k + 1) for k in range(30)]
    c = make_change("x", created=40, closed=41)
    got = FeatureExtractor(build_index(past + [c]), accounts_for(past + [c])).project_features(c)
    assert got["changes_per_author"] == 6


@pytest.mark.parametrize("subject, length, flag", [
    ("add brctl command for neutron-linuxbridge image", 6, "is_feature"),
    ("fix memory leak in parser", 5, "is_bug_fixing"),
    ("update license headers", 3, "is_documentation"),
    ("Fix typo in docs", 4, "is_documentation"),
    ("Defect 123: crash", 3, "is_bug_fixing"),
    ("", 0, "is_feature"),
])
def test_text_features(subject, length, flag):
    got = text_features(subject)
    assert got["description_length"] == length
    assert got[flag] == 1


@given(st.text(max_size=60))
def test_exactly_one_text_flag(subject):
    got = text_features(subject)
    assert got["is_bug_fixing"] + got["is_feature"] + got["is_documentation"] == 1


@pytest.mark.parametrize("lines, expected", [
    ([(50, 0), (0, 50)], 1.0),
    ([(75, 0)], 0.0),
    ([(25, 0)] * 4, 2.0),
    ([(0, 0), (0, 0)], 0.0),
    ([(10, 0), (0, 0)], 0.0),
])
def test_modify_entropy(lines, expected):
    files = [FileDelta(f"f{i}", a, d) for i, (a, d) in enumerate(lines)]
    assert modify_entropy(files) == pytest.approx(expected, abs=1e-12)


@given(st.lists(st.integers(0, 200), min_size=1, max_size=12))
def test_entropy_bounds(counts):
    files = [FileDelta(f"f{i}", c, 0) for i, c in enumerate(counts)]
    h = modify_entropy(files)
    touched = [c for c in counts if c > 0]
    assert h >= 0.0
    if len(counts) > 1 and touched:
        assert h <= math.log2(len(touched)) + 1e-12
        if len(set(touched)) == 1:
            assert h == pytest.approx(math.log2(len(touched)), abs=1e-12)
        elif len(touched) > 1:
            assert h < math.log2(len(touched)) - 1e-12


def test_code_features_paths():
    files = [FileDelta("a/b/x", 1, 0), FileDelta("a/b/y", 1, 0), FileDelta("a/c/z", 1, 0)]
    got = code_features(files)
    assert (got["modified_directories"], got["subsystem_num"]) == (2, 1)
    got = code_features([FileDelta("README", 1, 0)])
    assert (got["modified_directories"], got["subsystem_num"]) == (1, 1)


def test_code_features_line_sums():
    adds, dels = [30, 20, 10, 5, 4, 2], [1, 1, 1, 1, 0, 0]
    got = code_features([FileDelta(f"d/f{i}", a, d) for i, (a, d) in enumerate(zip(adds, dels))])
    assert (got["lines_added"], got["lines_deleted"], got["files_modified"]) == (71, 4, 6)


def test_all_empty_history_defaults():
    c = make_change("x", created=5, closed=6, reviewers=[])
    vec = extract(c, build_index([c]), accounts_for([c]))
    v = vec.values
    assert (v["author_merge_ratio"], v["project_merge_ratio"], v["author_merge_ratio_in_project"]) == (0.5, 0.5, 0.5)
    assert v["total_change_number"] == v["author_review_number"] == v["num_of_reviewers"] == 0


# -- revision extras ---------------------------------------------------------------

def _revisions(days, votes=None):
    votes = votes or {}
    return [RevisionRecord(j, at(d), (FileDelta("src/a.c", j, 0),), tuple(votes.get(j, ())))
            for j, d in enumerate(days, 1)]


def test_first_revision_extras():
    c = make_change("x", created=0, closed=10, revisions=_revisions([0, 2, 6]))
    vec = extract_at_revision(c, 1, build_index([c]), accounts_for([c]), "approach2")
    e = vec.extras
    assert (e.revision_number, e.weighted_approval_score, e.avg_delay_between_revisions, e.number_of_messages) == (1, 0, 0, 0)


def test_average_delay():
    c = make_change("x", created=0, closed=10, revisions=_revisions([0, 2, 6]))
    vec = extract_at_revision(c, 3, build_index([c]), accounts_for([c]), "approach2")
    assert vec.extras.avg_delay_between_revisions == pytest.approx(3.0)
    assert vec.values["lines_added"] == 3


def test_weighted_approval_score():
    c = make_change("x", created=0, closed=10,
                    revisions=_revisions([0, 2], {1: [(at(1), 1), (at(1.5), 1)], 2: [(at(3), -2)]}))
    assert weighted_approval_score(c, 2) == pytest.approx(1.0)
    # independent re-statement: sum_j votes(j) * j / (j + 1) over earlier revisions
    rev3 = make_change("y", created=0, closed=10,
                       revisions=_revisions([0, 2, 4], {1: [(at(1), 2)], 2: [(at(3), -1)]}))
    assert weighted_approval_score(rev3, 3) == pytest.approx(2 * 1 / 2 + (-1) * 2 / 3)


def test_revision_out_of_range():
    c = make_change("x")
    with pytest.raises(IndexError):
        extract_at_revision(c, 2, build_index([c]), accounts_for([c]))


def test_approach1_has_only_revision_number(tmp_path):
    changes = random_corpus(3, n=20)
    table = extract_all(changes, build_index(changes), accounts_for(changes), at_revisions=True, mode="approach1")
    assert list(table.columns[-26:]) == list(FEATURE_NAMES) + ["revision_number"]
    assert len(table) == sum(len(c.revisions) for c in changes)


# -- brute-force oracle on random corpora ------------------------------------------

def _years(t, reg):
    start = np.datetime64(reg.isoformat())
    return max(0.0, (np.datetime64(t.replace(tzinfo=None)) - start) / np.timedelta64(1, "s") / YEAR)


def oracle_vector(c, corpus, accounts):
    t = c.created_at
    lo = t - WINDOW
    win = [d for d in corpus if lo <= d.closed_at < t]

    def ratio(ds):
        return sum(d.merged for d in ds) / len(ds) if ds else 0.5

    def known(a):
        return accounts.get(a) is not None and accounts[a].registered_on is not None

    def exp(a):
        return _years(t, accounts[a].registered_on) if known(a) else 0.0

    humans = [r.account_id for r in c.reviewers if not r.is_bot]
    mine = [d for d in win if d.owner == c.owner]
    proj = [d for d in win if d.subproject == c.subproject]
    out = {
        "avg_reviewer_experience": float(np.mean([exp(h) for h in humans])) if humans else 0.0,
        "avg_reviewer_review_count": float(np.mean([
            sum(h in {r.account_id for r in d.reviewers} for d in win) if known(h) else 0 for h in humans
        ])) if humans else 0.0,
        "num_of_reviewers": len(humans),
        "num_of_bot_reviewers": len(c.reviewers) - len(humans),
        "author_merge_ratio": ratio(mine),
        "author_experience": exp(c.owner),
        "author_merge_ratio_in_project": ratio([d for d in mine if d.subproject == c.subproject]),
        "total_change_number": sum(d.owner == c.owner and d.created_at < t for d in corpus),
        "author_review_number": sum(c.owner in {r.account_id for r in d.reviewers} for d in win),
        "author_changes_per_week": len(mine) * 7 / 60,
        "project_changes_per_week": len(proj) * 7 / 60,
        "changes_per_author": len(proj) / len({d.owner for d in proj}) if proj else 0.0,
        "project_merge_ratio": ratio(proj),
    }
    return out


@pytest.mark.parametrize("seed", range(4))
def test_extractors_match_brute_force(seed):
    changes = random_corpus(seed, n=100, grid=1.0 if seed % 2 else None)
    accounts = accounts_for(changes, seed, missing=0.1)
    fx = FeatureExtractor(build_index(changes), accounts)
    for c in changes:
        got = fx.extract(c).values
        for name, expected in oracle_vector(c, changes, accounts).items():
            assert got[name] == pytest.approx(expected, rel=1e-12, abs=1e-12), (c.change_key, name)


def _truncate(changes, t):
    """The corpus as it looked at ``t``: later changes removed, pending ones reopened."""
    out = []
    for c in changes:
        if c.created_at >= t:
            continue
        if c.closed_at >= t:
            c = replace(c, closed_at=t + timedelta(days=365 * 10))
        out.append(c)
    return out


@given(st.integers(0, 10_000))
def test_extraction_has_no_leak(seed):
    changes = random_corpus(seed, n=60, grid=1.0 if seed % 2 else None)
    accounts = accounts_for(changes, seed)
    full = FeatureExtractor(build_index(changes), accounts)
    for c in changes[::5]:
        past = _truncate(changes, c.created_at) + [c]
        cut = FeatureExtractor(build_index(past), accounts)
        assert full.extract(c).values == cut.extract(c).values


@given(st.integers(0, 10_000))
def test_value_ranges(seed):
    changes = random_corpus(seed, n=60)
    table = extract_all(changes, build_index(changes), accounts_for(changes, seed))
    for col in ("author_merge_ratio", "author_merge_ratio_in_project", "project_merge_ratio"):
        assert table[col].between(0, 1).all()
    counts = ["num_of_reviewers", "num_of_bot_reviewers", "total_change_number", "author_review_number",
              "lines_added", "lines_deleted", "files_modified", "files_added", "files_deleted",
              "modified_directories", "subsystem_num", "description_length"]
    assert (table[counts] >= 0).all().all()
    assert (table[counts] == table[counts].round()).all().all()
    assert (table[["author_experience", "avg_reviewer_experience"]] >= 0).all().all()


def test_negative_experience_is_clamped_and_tallied():
    c = make_change("x", created=0, owner=1)
    fx = FeatureExtractor(build_index([c]), {1: AccountRecord(1, "late", (T0 + timedelta(days=30)).date())})
    assert fx.author_features(c)["author_experience"] == 0.0
    assert fx.tally.clamped_experience == 1


# -- persistence -------------------------------------------------------------------

def test_feature_csv_round_trip(tmp_path):
    changes = random_corpus(9, n=30)
    table = extract_all(changes, build_index(changes), accounts_for(changes))
    save_features(table, tmp_path / "f.csv")
    back = load_features(tmp_path / "f.csv")
    assert back.equals(table)


def test_feature_csv_header_checked(tmp_path):
    changes = random_corpus(9, n=5)
    table = extract_all(changes, build_index(changes), accounts_for(changes))
    save_features(table[table.columns[::-1]], tmp_path / "bad.csv")
    from revue.features import FeatureFormatError
    with pytest.raises(FeatureFormatError):
        load_features(tmp_path / "bad.csv")
