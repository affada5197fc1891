"""Builders for hand-made and randomized corpora used across the test modules."""

from __future__ import annotations

from datetime import date, datetime, timedelta, timezone

import numpy as np

from revue.corpus import (
    AccountRecord,
    ChangeKind,
    ChangeRecord,
    FileDelta,
    MessageRecord,
    ReviewerRef,
    RevisionRecord,
    Status,
)

T0 = datetime(2020, 1, 1, tzinfo=timezone.utc)


def at(days: float) -> datetime:
    return T0 + timedelta(days=days)


def make_change(key, owner=1, created=0.0, closed=1.0, merged=True, subproject="core", reviewers=(),
                subject="add a thing", files=None, revisions=None, messages=(), incomplete=False) -> ChangeRecord:
    """``reviewers`` holds account ids, or ``(id, is_bot)`` pairs."""
    refs = tuple(r if isinstance(r, ReviewerRef) else
                 ReviewerRef(*r) if isinstance(r, tuple) else ReviewerRef(r) for r in reviewers)
    if revisions is None:
        files = files if files is not None else (FileDelta("src/a.c", 3, 1),)
        revisions = (RevisionRecord(1, at(created), tuple(files)),)
    return ChangeRecord(
        change_key=str(key),
        project="p",
        subproject=subproject,
        subject=subject,
        created_at=at(created),
        closed_at=at(closed),
        status=Status.MERGED if merged else Status.ABANDONED,
        owner=owner,
        reviewers=refs,
        revisions=tuple(revisions),
        messages=tuple(messages),
        incomplete=incomplete,
    )


def random_corpus(seed: int, n: int = 100, n_authors: int = 8, n_reviewers: int = 6,
                  subprojects=("core", "ui"), span: float = 200.0, grid: float | None = None) -> list[ChangeRecord]:
    """Random changes; with ``grid`` set, times snap to multiples of it so exact ties occur."""
    rng = np.random.default_rng(seed)
    changes = []
    for k in range(n):
        created = float(rng.uniform(0, span))
        duration = float(rng.exponential(15.0))
        if grid:
            created = round(created / grid) * grid
            duration = round(duration / grid) * grid
        owner = int(rng.integers(1, n_authors + 1))
        people = [int(r) for r in rng.choice(np.arange(1, n_authors + n_reviewers + 1),
                                             int(rng.integers(0, 4)), replace=False)]
        reviewers = [(r, bool(rng.random() < 0.15)) for r in people]
        n_rev = int(rng.integers(1, 4))
        uploads = sorted(float(u) for u in rng.uniform(created, created + duration, n_rev - 1))
        revisions = []
        for j, up in enumerate([created] + uploads, 1):
            files = tuple(
                FileDelta(f"{rng.choice(['a', 'b', 'c'])}/{rng.choice(['x', 'y'])}/f{i}.c",
                          int(rng.integers(0, 50)), int(rng.integers(0, 20)),
                          ChangeKind(str(rng.choice(["Added", "Deleted", "Modified"]))))
                for i in range(int(rng.integers(1, 5)))
            )
            votes = tuple((at(up + 0.1 * duration / n_rev), int(rng.integers(-2, 3))) for _ in range(int(rng.integers(0, 3))))
            revisions.append(RevisionRecord(j, at(up), files, tuple(sorted(votes))))
        messages = tuple(sorted(
            (MessageRecord(at(float(t)), 1, owner) for t in rng.uniform(created, created + duration, int(rng.integers(0, 4)))),
            key=lambda m: m.posted_at,
        ))
        changes.append(make_change(
            f"c{k:04d}", owner, created, created + duration, bool(rng.random() < 0.8),
            str(rng.choice(subprojects)), reviewers, "fix parser" if rng.random() < 0.3 else "add widget",
            revisions=revisions, messages=messages,
        ))
    return changes


def accounts_for(changes, seed: int = 0, missing: float = 0.0) -> dict[int, AccountRecord]:
    rng = np.random.default_rng(seed)
    ids = sorted({c.owner for c in changes} | {r.account_id for c in changes for r in c.reviewers})
    out = {}
    for i in ids:
        reg = None if rng.random() < missing else date(2019, 1, 1) + timedelta(days=int(rng.integers(0, 700)))
        out[i] = AccountRecord(i, f"Dev {i}", reg)
    return out


def gerrit_doc(number: int, status: str = "MERGED", created: str = "2020-01-01 10:00:00.000000000",
               owner: int = 7, project: str = "core", subject: str = "add thing", n_revisions: int = 1, **extra) -> dict:
    revisions = {
        f"sha{number}-{j}": {
            "_number": j,
            "created": created,
            "files": {"/COMMIT_MSG": {"lines_inserted": 10}, f"src/f{j}.c": {"lines_inserted": 5, "lines_deleted": 2}},
        }
        for j in range(1, n_revisions + 1)
    }
    doc = {
        "_number": number,
        "id": f"{project}~master~I{number}",
        "project": project,
        "subject": subject,
        "status": status,
        "created": created,
        "updated": created,
        "owner": {"_account_id": owner, "name": f"Dev {owner}"},
        "reviewers": {"REVIEWER": [{"_account_id": 8, "name": "Dev 8"}]},
        "revisions": revisions,
        "messages": [],
    }
    doc.update(extra)
    return doc
