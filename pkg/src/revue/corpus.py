"""Typed change records, preprocessing filters and corpus persistence."""

from __future__ import annotations

import bisect
import enum
import json
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from datetime import date, datetime, timedelta, timezone
from pathlib import Path
from typing import Any, Iterable

from revue import RevueError

log = logging.getLogger(__name__)

CORPUS_FORMAT = "revue-corpus"
CORPUS_VERSION = 1
MIN_MERGED_PER_SUBPROJECT = 200
SUBJECT_STOPWORDS = ("not merge", "ignore")
BOT_KEYWORDS = ("bot", "chatbot", "jenkins")
EPOCH = date(1970, 1, 1)

_VOTE_RE = re.compile(r"(?<![\w-])([A-Za-z][\w-]*)([+-]\d+)\b")
_PATCH_SET_RE = re.compile(r"^Patch Set (\d+):(.*)$")


class NormalizationError(RevueError):
    pass


class CorpusFormatError(RevueError):
    pass


class Status(str, enum.Enum):
    MERGED = "Merged"
    ABANDONED = "Abandoned"


class ChangeKind(str, enum.Enum):
    ADDED = "Added"
    DELETED = "Deleted"
    MODIFIED = "Modified"


@dataclass(frozen=True)
class FileDelta:
    path: str
    lines_added: int = 0
    lines_deleted: int = 0
    change_kind: ChangeKind = ChangeKind.MODIFIED

    def __post_init__(self):
        if not self.path:
            raise ValueError("FileDelta.path must be non-empty")


@dataclass(frozen=True)
class ReviewerRef:
    account_id: int
    is_bot: bool = False


@dataclass(frozen=True)
class MessageRecord:
    posted_at: datetime
    revision_number: int
    author: int | None = None


@dataclass(frozen=True)
class RevisionRecord:
    number: int
    uploaded_at: datetime
    files: tuple[FileDelta, ...] = ()
    label_votes: tuple[tuple[datetime, int], ...] = ()


@dataclass(frozen=True)
class ChangeRecord:
    change_key: str
    project: str
    subproject: str
    subject: str
    created_at: datetime
    closed_at: datetime
    status: Status
    owner: int
    reviewers: tuple[ReviewerRef, ...] = ()
    revisions: tuple[RevisionRecord, ...] = ()
    messages: tuple[MessageRecord, ...] = ()
    incomplete: bool = False

    @property
    def merged(self) -> bool:
        return self.status is Status.MERGED

    @property
    def human_reviewers(self) -> list[int]:
        return [r.account_id for r in self.reviewers if not r.is_bot]

    def revision(self, number: int) -> RevisionRecord:
        if not 1 <= number <= len(self.revisions):
            raise IndexError(f"{self.change_key} has no revision {number}")
        return self.revisions[number - 1]


@dataclass
class AccountRecord:
    account_id: int
    name: str = ""
    registered_on: date | None = None
    registration_interpolated: bool = False


# -- time helpers -------------------------------------------------------------

def parse_gerrit_time(value: str) -> datetime:
    """Parse ``2018-01-01 12:00:00.000000000`` (always UTC) or ISO-8601."""
    value = value.strip().replace("T", " ")
    if value.endswith("Z"):
        value = value[:-1]
    if "+" in value[10:]:
        value = value[: 10 + value[10:].index("+")]
    main, _, frac = value.partition(".")
    ts = datetime.strptime(main, "%Y-%m-%d %H:%M:%S") if " " in main else datetime.strptime(main, "%Y-%m-%d")
    if frac:
        ts = ts.replace(microsecond=int(frac[:6].ljust(6, "0")))
    return ts.replace(tzinfo=timezone.utc)


def to_gerrit_time(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%d %H:%M:%S.%f") + "000"


def _iso(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).isoformat()


def _from_iso(s: str) -> datetime:
    return datetime.fromisoformat(s).astimezone(timezone.utc)


# -- bot detection ------------------------------------------------------------

def detect_bot(account_name: str, project_name: str = "") -> bool:
    name = (account_name or "").strip().lower()
    if not name:
        return False
    if name == "do not use":
        return True
    if any(k in name for k in BOT_KEYWORDS):
        return True
    project = (project_name or "").strip().lower()
    if project and project in name:
        return True
    return "ci" in re.split(r"[^0-9a-z]+", name)


# -- normalization ------------------------------------------------------------

def _account_name(acc: dict) -> str:
    return acc.get("name") or acc.get("username") or acc.get("email") or ""


def _parse_votes(text: str) -> list[int]:
    first = (text or "").splitlines()[0] if text else ""
    m = _PATCH_SET_RE.match(first)
    if not m:
        return []
    return [int(v) for _, v in _VOTE_RE.findall(m.group(2))]


def _closed_at(payload: dict, status: Status, created: datetime) -> datetime:
    if status is Status.MERGED and payload.get("submitted"):
        closed = parse_gerrit_time(payload["submitted"])
    else:
        closed = None
        marker = "abandoned" if status is Status.ABANDONED else "successfully merged"
        for msg in payload.get("messages") or []:
            if marker in (msg.get("message") or "").lower()[:200] and msg.get("date"):
                ts = parse_gerrit_time(msg["date"])
                closed = ts if closed is None or ts > closed else closed
        if closed is None:
            closed = parse_gerrit_time(payload.get("updated") or payload["created"])
    return max(closed, created)


def _file_kind(status: str | None) -> ChangeKind:
    if status == "A":
        return ChangeKind.ADDED
    if status == "D":
        return ChangeKind.DELETED
    return ChangeKind.MODIFIED


def normalize(raw, project_name: str = "") -> ChangeRecord:
    """Turn a Gerrit change document (dict or RawChangeDocument) into a ChangeRecord."""
    payload: dict[str, Any] = getattr(raw, "payload", raw)
    for key in ("_number", "status", "created", "owner"):
        if key not in payload:
            raise NormalizationError(f"change document is missing mandatory key {key!r}")
    try:
        status = {"MERGED": Status.MERGED, "ABANDONED": Status.ABANDONED}[str(payload["status"]).upper()]
    except KeyError:
        raise NormalizationError(f"unsupported change status {payload['status']!r}") from None
    owner = payload["owner"].get("_account_id") if isinstance(payload["owner"], dict) else None
    if owner is None:
        raise NormalizationError("change document is missing mandatory key 'owner._account_id'")

    created = parse_gerrit_time(payload["created"])
    closed = _closed_at(payload, status, created)
    project = project_name or ""

    reviewers = []
    for acc in (payload.get("reviewers") or {}).get("REVIEWER", []):
        if "_account_id" in acc:
            reviewers.append(ReviewerRef(acc["_account_id"], detect_bot(_account_name(acc), project)))
    reviewers.sort(key=lambda r: r.account_id)

    messages = []
    votes_by_rev: dict[int, list[tuple[datetime, int]]] = {}
    for msg in payload.get("messages") or []:
        if "date" not in msg:
            continue
        posted = min(max(parse_gerrit_time(msg["date"]), created), closed)
        rev_no = int(msg.get("_revision_number") or 1)
        author = (msg.get("author") or {}).get("_account_id")
        messages.append(MessageRecord(posted, rev_no, author))
        for v in _parse_votes(msg.get("message", "")):
            votes_by_rev.setdefault(rev_no, []).append((posted, v))
    messages.sort(key=lambda m: (m.posted_at, m.revision_number))

    incomplete = False
    revisions = []
    for rev in (payload.get("revisions") or {}).values():
        if "files" not in rev or "_number" not in rev:
            incomplete = True
            continue
        files = tuple(
            FileDelta(path, int(info.get("lines_inserted", 0)), int(info.get("lines_deleted", 0)), _file_kind(info.get("status")))
            for path, info in sorted(rev["files"].items())
            if not path.startswith("/")  # /COMMIT_MSG, /MERGE_LIST
        )
        number = int(rev["_number"])
        uploaded = min(max(parse_gerrit_time(rev.get("created") or payload["created"]), created), closed)
        revisions.append(RevisionRecord(number, uploaded, files, tuple(sorted(votes_by_rev.get(number, [])))))
    revisions.sort(key=lambda r: r.number)
    if not revisions or [r.number for r in revisions] != list(range(1, len(revisions) + 1)):
        incomplete = True

    return ChangeRecord(
        change_key=f"{project}:{payload['_number']}" if project else str(payload["_number"]),
        project=project,
        subproject=str(payload.get("project", "")),
        subject=payload.get("subject") or "",
        created_at=created,
        closed_at=closed,
        status=status,
        owner=int(owner),
        reviewers=tuple(reviewers),
        revisions=tuple(revisions),
        messages=tuple(messages),
        incomplete=incomplete,
    )


# -- preprocessing ------------------------------------------------------------

@dataclass
class FilterReport:
    incomplete: int = 0
    subject: int = 0
    self_review: int = 0
    small_subproject: int = 0

    @property
    def removed(self) -> int:
        return self.incomplete + self.subject + self.self_review + self.small_subproject

    def as_dict(self) -> dict[str, int]:
        return {
            "incomplete": self.incomplete,
            "subject": self.subject,
            "self_review": self.self_review,
            "small_subproject": self.small_subproject,
        }


def has_stop_subject(subject: str) -> bool:
    s = subject.lower()
    return any(w in s for w in SUBJECT_STOPWORDS)


def is_self_reviewed(change: ChangeRecord) -> bool:
    humans = set(change.human_reviewers)
    return bool(humans) and humans == {change.owner}


def preprocess(changes: Iterable[ChangeRecord], min_merged: int = MIN_MERGED_PER_SUBPROJECT):
    """Apply the four corpus filters in a fixed order; returns ``(kept, report)``."""
    report = FilterReport()
    kept = []
    for c in changes:
        if c.incomplete:
            report.incomplete += 1
        elif has_stop_subject(c.subject):
            report.subject += 1
        elif is_self_reviewed(c):
            report.self_review += 1
        else:
            kept.append(c)
    merged = Counter(c.subproject for c in kept if c.merged)
    final = [c for c in kept if merged[c.subproject] >= min_merged]
    report.small_subproject = len(kept) - len(final)
    return final, report


# -- registration dates -------------------------------------------------------

def interpolate_registration_dates(accounts: Iterable[AccountRecord]) -> list[AccountRecord]:
    """Fill missing registration dates by linear interpolation over account ids.

    Ids outside the range of known ids take the nearest known date.
    """
    accounts = sorted(accounts, key=lambda a: a.account_id)
    known = [(a.account_id, (a.registered_on - EPOCH).days) for a in accounts if a.registered_on is not None]
    if not known:
        if accounts:
            raise RevueError("cannot interpolate registration dates: no account has a known date")
        return []
    if len(known) == 1 and len(known) < len(accounts):
        log.warning("only one known registration date; using it for every missing account")
    ids = [k[0] for k in known]
    out = []
    for a in accounts:
        if a.registered_on is not None:
            out.append(replace(a))
            continue
        i = bisect.bisect_left(ids, a.account_id)
        if i == 0:
            days = known[0][1]
        elif i == len(known):
            days = known[-1][1]
        else:
            (x0, d0), (x1, d1) = known[i - 1], known[i]
            days = d0 + (d1 - d0) * (a.account_id - x0) / (x1 - x0)
        out.append(replace(a, registered_on=EPOCH + timedelta(days=math.floor(days + 0.5)), registration_interpolated=True))
    return out


# -- persistence --------------------------------------------------------------

def _change_to_dict(c: ChangeRecord) -> dict:
    return {
        "change_key": c.change_key,
        "project": c.project,
        "subproject": c.subproject,
        "subject": c.subject,
        "created_at": _iso(c.created_at),
        "closed_at": _iso(c.closed_at),
        "status": c.status.value,
        "owner": c.owner,
        "reviewers": [[r.account_id, r.is_bot] for r in c.reviewers],
        "revisions": [
            {
                "number": r.number,
                "uploaded_at": _iso(r.uploaded_at),
                "files": [[f.path, f.lines_added, f.lines_deleted, f.change_kind.value] for f in r.files],
                "label_votes": [[_iso(t), v] for t, v in r.label_votes],
            }
            for r in c.revisions
        ],
        "messages": [[_iso(m.posted_at), m.revision_number, m.author] for m in c.messages],
        "incomplete": c.incomplete,
    }


def _change_from_dict(d: dict) -> ChangeRecord:
    return ChangeRecord(
        change_key=d["change_key"],
        project=d["project"],
        subproject=d["subproject"],
        subject=d["subject"],
        created_at=_from_iso(d["created_at"]),
        closed_at=_from_iso(d["closed_at"]),
        status=Status(d["status"]),
        owner=d["owner"],
        reviewers=tuple(ReviewerRef(a, b) for a, b in d["reviewers"]),
        revisions=tuple(
            RevisionRecord(
                r["number"],
                _from_iso(r["uploaded_at"]),
                tuple(FileDelta(p, a, dl, ChangeKind(k)) for p, a, dl, k in r["files"]),
                tuple((_from_iso(t), v) for t, v in r["label_votes"]),
            )
            for r in d["revisions"]
        ),
        messages=tuple(MessageRecord(_from_iso(t), n, a) for t, n, a in d["messages"]),
        incomplete=d.get("incomplete", False),
    )


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def save_corpus(changes: Iterable[ChangeRecord], path) -> None:
    changes = list(changes)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_dumps({"format": CORPUS_FORMAT, "version": CORPUS_VERSION, "count": len(changes)}) + "\n")
        for c in changes:
            fh.write(_dumps(_change_to_dict(c)) + "\n")


def _read_jsonl(path) -> Iterable[tuple[int, Any]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{path}: line {lineno}: invalid JSON ({exc.msg})") from None


def load_corpus(path) -> list[ChangeRecord]:
    rows = _read_jsonl(path)
    try:
        _, header = next(rows)
    except StopIteration:
        raise CorpusFormatError(f"{path}: line 1: missing corpus header") from None
    if not isinstance(header, dict) or header.get("format") != CORPUS_FORMAT:
        raise CorpusFormatError(f"{path}: line 1: not a {CORPUS_FORMAT} file")
    if header.get("version") != CORPUS_VERSION:
        raise CorpusFormatError(f"{path}: line 1: unsupported corpus version {header.get('version')!r}")
    changes = []
    for lineno, d in rows:
        try:
            changes.append(_change_from_dict(d))
        except (KeyError, TypeError, ValueError) as exc:
            raise CorpusFormatError(f"{path}: line {lineno}: malformed change record ({exc})") from None
    if "count" in header and header["count"] != len(changes):
        raise CorpusFormatError(
            f"{path}: line {len(changes) + 2}: expected {header['count']} changes, found {len(changes)} (truncated?)"
        )
    return changes


def save_accounts(accounts: Iterable[AccountRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for a in sorted(accounts, key=lambda a: a.account_id):
            fh.write(_dumps({
                "account_id": a.account_id,
                "name": a.name,
                "registered_on": a.registered_on.isoformat() if a.registered_on else None,
                "registration_interpolated": a.registration_interpolated,
            }) + "\n")


def load_accounts(path) -> list[AccountRecord]:
    out = []
    for lineno, d in _read_jsonl(path):
        try:
            reg = d.get("registered_on")
            out.append(AccountRecord(
                int(d["account_id"]),
                d.get("name") or "",
                date.fromisoformat(reg[:10]) if reg else None,
                bool(d.get("registration_interpolated", False)),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise CorpusFormatError(f"{path}: line {lineno}: malformed account record ({exc})") from None
    return out


def save_raw(payloads: Iterable[dict], path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for p in payloads:
            fh.write(_dumps(getattr(p, "payload", p)) + "\n")
            n += 1
    return n


def load_raw(path) -> list[dict]:
    return [d for _, d in _read_jsonl(path)]


def account_registry(accounts: Iterable[AccountRecord]) -> dict[int, AccountRecord]:
    return {a.account_id: a for a in accounts}
