"""Time-sorted event lists for leak-free "last N days before t" queries.

All windows are half-open, ``[t - window, t)``: an event stamped exactly at the
anchor is never visible to a query anchored there.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass, field
from datetime import datetime
from typing import Hashable, Iterable

from revue import RevueError
from revue.corpus import ChangeRecord

DAY = 86400.0
DEFAULT_WINDOW_DAYS = 60
ROLES = ("author", "reviewer", "subproject", "author_subproject")


class IndexBuildError(RevueError):
    pass


def ts(t: datetime) -> float:
    return t.timestamp()


@dataclass
class ClosedEvents:
    """Closure times of one entity, ascending, with a merged-count prefix sum."""

    times: list[float] = field(default_factory=list)
    merged_prefix: list[int] = field(default_factory=lambda: [0])
    owners: list[int] = field(default_factory=list)

    def span(self, lo: float, hi: float) -> tuple[int, int]:
        return bisect_left(self.times, lo), bisect_left(self.times, hi)

    def counts(self, lo: float, hi: float) -> tuple[int, int]:
        i, j = self.span(lo, hi)
        merged = self.merged_prefix[j] - self.merged_prefix[i]
        return merged, (j - i) - merged


@dataclass(frozen=True)
class WindowQuery:
    anchor: datetime
    window_days: float = DEFAULT_WINDOW_DAYS

    def __post_init__(self):
        if not self.window_days > 0:
            raise ValueError("window_days must be positive")

    @property
    def bounds(self) -> tuple[float, float]:
        hi = ts(self.anchor)
        return hi - self.window_days * DAY, hi


@dataclass
class TemporalIndex:
    by_author_created: dict[int, list[float]] = field(default_factory=dict)
    by_author_closed: dict[int, ClosedEvents] = field(default_factory=dict)
    by_reviewer_closed: dict[int, ClosedEvents] = field(default_factory=dict)
    by_subproject_closed: dict[str, ClosedEvents] = field(default_factory=dict)
    by_author_subproject_closed: dict[tuple[int, str], ClosedEvents] = field(default_factory=dict)

    def _table(self, role: str) -> dict:
        try:
            return {
                "author": self.by_author_closed,
                "reviewer": self.by_reviewer_closed,
                "subproject": self.by_subproject_closed,
                "author_subproject": self.by_author_subproject_closed,
            }[role]
        except KeyError:
            raise ValueError(f"unknown role {role!r}; expected one of {ROLES}") from None

    def closed_events(self, entity: Hashable, role: str) -> ClosedEvents:
        return self._table(role).get(entity) or ClosedEvents()


def build_index(changes: Iterable[ChangeRecord], as_of: datetime | None = None) -> TemporalIndex:
    """Index creation and closure events.

    With ``as_of`` every event at or after that instant is left out, which is
    what the corpus looked like at ``as_of``.
    """
    cutoff = ts(as_of) if as_of is not None else float("inf")
    created: dict[int, list[float]] = {}
    closed: dict[str, dict] = {r: {} for r in ROLES}

    for c in changes:
        t0, t1 = ts(c.created_at), ts(c.closed_at)
        if t1 < t0:
            raise IndexBuildError(f"{c.change_key}: closed_at precedes created_at")
        if t0 < cutoff:
            created.setdefault(c.owner, []).append(t0)
        if t1 >= cutoff:
            continue
        event = (t1, c.merged, c.owner)
        closed["author"].setdefault(c.owner, []).append(event)
        closed["subproject"].setdefault(c.subproject, []).append(event)
        closed["author_subproject"].setdefault((c.owner, c.subproject), []).append(event)
        for rid in {r.account_id for r in c.reviewers}:
            closed["reviewer"].setdefault(rid, []).append(event)

    def pack(events):
        events.sort()
        ev = ClosedEvents()
        for t, merged, owner in events:
            ev.times.append(t)
            ev.merged_prefix.append(ev.merged_prefix[-1] + int(merged))
            ev.owners.append(owner)
        return ev

    return TemporalIndex(
        by_author_created={a: sorted(v) for a, v in created.items()},
        by_author_closed={k: pack(v) for k, v in closed["author"].items()},
        by_reviewer_closed={k: pack(v) for k, v in closed["reviewer"].items()},
        by_subproject_closed={k: pack(v) for k, v in closed["subproject"].items()},
        by_author_subproject_closed={k: pack(v) for k, v in closed["author_subproject"].items()},
    )


def closed_counts(index: TemporalIndex, entity: Hashable, role: str, q: WindowQuery) -> tuple[int, int]:
    """(merged, abandoned) changes of ``entity`` closed in ``[anchor - window, anchor)``."""
    lo, hi = q.bounds
    return index.closed_events(entity, role).counts(lo, hi)


def closed_owners(index: TemporalIndex, subproject: str, q: WindowQuery) -> list[int]:
    lo, hi = q.bounds
    ev = index.closed_events(subproject, "subproject")
    i, j = ev.span(lo, hi)
    return ev.owners[i:j]


def created_count_before(index: TemporalIndex, author: int, t: datetime) -> int:
    return bisect_left(index.by_author_created.get(author, ()), ts(t))
