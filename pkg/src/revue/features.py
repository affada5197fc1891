"""The 25 change-level features, computed as of submission time."""

from __future__ import annotations

import logging
import math
import posixpath
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Mapping

import numpy as np
import pandas as pd

from revue import RevueError
from revue.corpus import AccountRecord, ChangeKind, ChangeRecord, FileDelta
from revue.history import (
    DEFAULT_WINDOW_DAYS,
    TemporalIndex,
    WindowQuery,
    closed_counts,
    closed_owners,
    created_count_before,
)

log = logging.getLogger(__name__)

YEAR_DAYS = 365.25
DEFAULT_MERGE_RATIO = 0.5

DIMENSIONS: dict[str, tuple[str, ...]] = {
    "reviewer": ("avg_reviewer_experience", "avg_reviewer_review_count", "num_of_reviewers", "num_of_bot_reviewers"),
    "author": (
        "author_merge_ratio",
        "author_experience",
        "author_merge_ratio_in_project",
        "total_change_number",
        "author_review_number",
        "author_changes_per_week",
    ),
    "project": ("project_changes_per_week", "changes_per_author", "project_merge_ratio"),
    "text": ("description_length", "is_bug_fixing", "is_feature", "is_documentation"),
    "code": (
        "modified_directories",
        "subsystem_num",
        "modify_entropy",
        "lines_added",
        "lines_deleted",
        "files_modified",
        "files_added",
        "files_deleted",
    ),
}
FEATURE_NAMES: tuple[str, ...] = tuple(f for dim in DIMENSIONS.values() for f in dim)
META_COLUMNS = ("change_key", "created_at", "anchor_at", "label", "author")
EXTRA_COLUMNS = {
    "approach1": ("revision_number",),
    "approach2": ("revision_number", "weighted_approval_score", "avg_delay_between_revisions", "number_of_messages"),
}
MODES = tuple(EXTRA_COLUMNS)

DOC_WORDS = ("doc", "copyright", "license")
BUG_WORDS = ("bug", "fix", "defect")


class FeatureFormatError(RevueError):
    pass


@dataclass
class ExtractionTally:
    unknown_accounts: int = 0
    clamped_experience: int = 0


@dataclass
class RevisionExtras:
    revision_number: int
    weighted_approval_score: float = 0.0
    avg_delay_between_revisions: float = 0.0
    number_of_messages: int = 0


@dataclass
class FeatureVector:
    change_key: str
    created_at: datetime
    anchor_at: datetime
    label: int
    author: int
    values: dict[str, float]
    extras: RevisionExtras | None = None
    mode: str | None = None

    def row(self) -> dict:
        out = {
            "change_key": self.change_key,
            "created_at": self.created_at.isoformat(),
            "anchor_at": self.anchor_at.isoformat(),
            "label": self.label,
            "author": self.author,
        }
        out.update((name, self.values[name]) for name in FEATURE_NAMES)
        if self.extras is not None:
            for col in EXTRA_COLUMNS[self.mode]:
                out[col] = getattr(self.extras, col)
        return out


def _years_between(later: datetime, registered) -> float:
    start = datetime(registered.year, registered.month, registered.day, tzinfo=timezone.utc)
    return (later - start).total_seconds() / (YEAR_DAYS * 86400.0)


def _ratio(merged: int, abandoned: int) -> float:
    total = merged + abandoned
    return merged / total if total else DEFAULT_MERGE_RATIO


class FeatureExtractor:
    """Bundles the temporal index and account registry shared by every extraction."""

    def __init__(self, index: TemporalIndex, accounts: Mapping[int, AccountRecord] | Iterable[AccountRecord],
                 window_days: float = DEFAULT_WINDOW_DAYS):
        self.index = index
        if not isinstance(accounts, Mapping):
            accounts = {a.account_id: a for a in accounts}
        self.accounts = accounts
        self.window_days = window_days
        self.tally = ExtractionTally()

    def experience(self, account_id: int, at: datetime) -> float | None:
        acc = self.accounts.get(account_id)
        if acc is None or acc.registered_on is None:
            self.tally.unknown_accounts += 1
            return None
        years = _years_between(at, acc.registered_on)
        if years < 0:
            self.tally.clamped_experience += 1
            return 0.0
        return years

    def reviewer_features(self, change: ChangeRecord, anchor: datetime | None = None) -> dict[str, float]:
        anchor = anchor or change.created_at
        q = WindowQuery(anchor, self.window_days)
        humans = change.human_reviewers
        experience, reviews = [], []
        for rid in humans:
            exp = self.experience(rid, anchor)
            if exp is None:
                experience.append(0.0)
                reviews.append(0)
            else:
                experience.append(exp)
                reviews.append(sum(closed_counts(self.index, rid, "reviewer", q)))
        return {
            "avg_reviewer_experience": float(np.mean(experience)) if humans else 0.0,
            "avg_reviewer_review_count": float(np.mean(reviews)) if humans else 0.0,
            "num_of_reviewers": len(humans),
            "num_of_bot_reviewers": len(change.reviewers) - len(humans),
        }

    def author_features(self, change: ChangeRecord, anchor: datetime | None = None) -> dict[str, float]:
        anchor = anchor or change.created_at
        q = WindowQuery(anchor, self.window_days)
        m, a = closed_counts(self.index, change.owner, "author", q)
        mp, ap = closed_counts(self.index, (change.owner, change.subproject), "author_subproject", q)
        exp = self.experience(change.owner, anchor)
        return {
            "author_merge_ratio": _ratio(m, a),
            "author_experience": 0.0 if exp is None else exp,
            "author_merge_ratio_in_project": _ratio(mp, ap),
            "total_change_number": created_count_before(self.index, change.owner, anchor),
            "author_review_number": sum(closed_counts(self.index, change.owner, "reviewer", q)),
            "author_changes_per_week": (m + a) * 7 / self.window_days,
        }

    def project_features(self, change: ChangeRecord, anchor: datetime | None = None) -> dict[str, float]:
        anchor = anchor or change.created_at
        q = WindowQuery(anchor, self.window_days)
        m, a = closed_counts(self.index, change.subproject, "subproject", q)
        owners = set(closed_owners(self.index, change.subproject, q))
        return {
            "project_changes_per_week": (m + a) * 7 / self.window_days,
            "changes_per_author": (m + a) / len(owners) if owners else 0.0,
            "project_merge_ratio": _ratio(m, a),
        }

    def extract(self, change: ChangeRecord) -> FeatureVector:
        return self._vector(change, change.created_at, change.revisions[0].files if change.revisions else ())

    def _vector(self, change: ChangeRecord, anchor: datetime, files) -> FeatureVector:
        values: dict[str, float] = {}
        values.update(self.reviewer_features(change, anchor))
        values.update(self.author_features(change, anchor))
        values.update(self.project_features(change, anchor))
        values.update(text_features(change.subject))
        values.update(code_features(files))
        return FeatureVector(change.change_key, change.created_at, anchor, int(change.merged), change.owner, values)

    def extract_at_revision(self, change: ChangeRecord, revision_number: int, mode: str = "approach1") -> FeatureVector:
        if mode not in EXTRA_COLUMNS:
            raise ValueError(f"unknown revision mode {mode!r}")
        rev = change.revision(revision_number)
        anchor = rev.uploaded_at
        vec = self._vector(change, anchor, rev.files)
        extras = RevisionExtras(revision_number)
        if mode == "approach2":
            extras.number_of_messages = sum(1 for m in change.messages if m.posted_at < anchor)
            uploads = [r.uploaded_at for r in change.revisions[:revision_number]]
            if len(uploads) > 1:
                gaps = [(b - a).total_seconds() / 86400.0 for a, b in zip(uploads, uploads[1:])]
                extras.avg_delay_between_revisions = float(np.mean(gaps))
            extras.weighted_approval_score = weighted_approval_score(change, revision_number, anchor)
        vec.extras, vec.mode = extras, mode
        return vec


def weighted_approval_score(change: ChangeRecord, revision_number: int, anchor: datetime | None = None) -> float:
    """Sum over earlier revisions j of (their vote total) * j / (j + 1).

    Votes stamped at or after ``anchor`` are not visible yet and are ignored.
    """
    score = 0.0
    for rev in change.revisions[: revision_number - 1]:
        votes = sum(v for t, v in rev.label_votes if anchor is None or t < anchor)
        score += votes * rev.number / (rev.number + 1)
    return score


def text_features(subject: str) -> dict[str, float]:
    s = (subject or "").lower()
    is_doc = any(w in s for w in DOC_WORDS)
    is_bug = not is_doc and any(w in s for w in BUG_WORDS)
    return {
        "description_length": len((subject or "").split()),
        "is_bug_fixing": int(is_bug),
        "is_feature": int(not (is_doc or is_bug)),
        "is_documentation": int(is_doc),
    }


def modify_entropy(files: Iterable[FileDelta]) -> float:
    lines = [f.lines_added + f.lines_deleted for f in files]
    total = sum(lines)
    if len(lines) <= 1 or total == 0:
        return 0.0
    return -sum((n / total) * math.log2(n / total) for n in lines if n)


def _directory(path: str) -> str:
    return posixpath.dirname(path) or "."


def _subsystem(path: str) -> str:
    head, sep, _ = path.partition("/")
    return head if sep and head else "."


def code_features(files: Iterable[FileDelta]) -> dict[str, float]:
    files = list(files)
    kinds = Counter(f.change_kind for f in files)
    return {
        "modified_directories": len({_directory(f.path) for f in files}),
        "subsystem_num": len({_subsystem(f.path) for f in files}),
        "modify_entropy": modify_entropy(files),
        "lines_added": sum(f.lines_added for f in files),
        "lines_deleted": sum(f.lines_deleted for f in files),
        "files_modified": kinds[ChangeKind.MODIFIED],
        "files_added": kinds[ChangeKind.ADDED],
        "files_deleted": kinds[ChangeKind.DELETED],
    }


# -- module-level conveniences ---------------------------------------------------

def extract(change: ChangeRecord, index: TemporalIndex, accounts) -> FeatureVector:
    return FeatureExtractor(index, accounts).extract(change)


def extract_at_revision(change, revision_number, index, accounts, mode="approach1") -> FeatureVector:
    return FeatureExtractor(index, accounts).extract_at_revision(change, revision_number, mode)


def extract_all(changes: Iterable[ChangeRecord], index: TemporalIndex, accounts,
                at_revisions: bool = False, mode: str = "approach1") -> pd.DataFrame:
    """Feature table for a corpus, one row per change (or per change revision)."""
    fx = FeatureExtractor(index, accounts)
    changes = sorted(changes, key=lambda c: (c.created_at, c.change_key))
    rows = []
    for c in changes:
        if at_revisions:
            rows.extend(fx.extract_at_revision(c, r.number, mode).row() for r in c.revisions)
        else:
            rows.append(fx.extract(c).row())
    if fx.tally.unknown_accounts or fx.tally.clamped_experience:
        log.warning("feature extraction: %d unknown-account lookups, %d negative experiences clamped",
                    fx.tally.unknown_accounts, fx.tally.clamped_experience)
    columns = list(META_COLUMNS) + list(FEATURE_NAMES) + (list(EXTRA_COLUMNS[mode]) if at_revisions else [])
    return pd.DataFrame(rows, columns=columns)


def feature_columns(table: pd.DataFrame) -> list[str]:
    """Model input columns of a feature table, in contract order."""
    extras = [c for c in EXTRA_COLUMNS["approach2"] if c in table.columns]
    return list(FEATURE_NAMES) + extras


def save_features(table: pd.DataFrame, path) -> None:
    table.to_csv(path, index=False, lineterminator="\n")


def load_features(path) -> pd.DataFrame:
    table = pd.read_csv(path, float_precision="round_trip", dtype={"change_key": str})
    header = list(table.columns)
    base = list(META_COLUMNS) + list(FEATURE_NAMES)
    if header[: len(base)] != base:
        raise FeatureFormatError(f"{path}: header does not match the feature column contract")
    extra = header[len(base):]
    if extra and extra not in [list(v) for v in EXTRA_COLUMNS.values()]:
        raise FeatureFormatError(f"{path}: unexpected extra columns {extra}")
    return table
