"""Minimal Gerrit REST client: paginated change queries and account lookups."""

from __future__ import annotations

import base64
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Iterable, Iterator

import requests

from revue import RevueError
from revue.corpus import AccountRecord, parse_gerrit_time

log = logging.getLogger(__name__)

XSSI_PREFIX = b")]}'\n"
CHANGE_OPTIONS = ("ALL_REVISIONS", "ALL_FILES", "DETAILED_ACCOUNTS", "MESSAGES", "DETAILED_LABELS")
REQUIRED_CHANGE_KEYS = ("_number", "status", "created", "owner")
STATUSES = ("merged", "abandoned")
RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class MiningError(RevueError):
    def __init__(self, message: str, status: int | None = None):
        super().__init__(message if status is None else f"{message} (last HTTP status {status})")
        self.status = status


@dataclass
class MinerConfig:
    base_url: str
    time_range: tuple[datetime, datetime]
    projects: list[str] = field(default_factory=list)
    status_filters: frozenset[str] = frozenset(STATUSES)
    page_size: int = 100
    max_retries: int = 3
    request_interval: float = 0.0  # milliseconds
    max_in_flight: int = 1
    auth: tuple[str, str] | None = None

    def __post_init__(self):
        if not self.base_url:
            raise ValueError("base_url must be non-empty")
        start, end = self.time_range
        if not start < end:
            raise ValueError("time_range start must precede end")
        if self.page_size < 1:
            raise ValueError("page_size must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.request_interval < 0:
            raise ValueError("request_interval must be >= 0")
        unknown = set(self.status_filters) - set(STATUSES)
        if unknown:
            raise ValueError(f"unsupported status filters: {sorted(unknown)}")
        self.base_url = self.base_url.rstrip("/")


@dataclass
class RawChangeDocument:
    payload: dict[str, Any]
    fetched_at: datetime

    @property
    def change_id(self):
        return self.payload["_number"]


def strip_xssi_prefix(body: bytes | str) -> str:
    """Remove Gerrit's ``)]}'`` anti-XSSI guard line if present."""
    if isinstance(body, str):
        body = body.encode("utf-8")
    if body.startswith(XSSI_PREFIX):
        body = body[len(XSSI_PREFIX):]
    return body.decode("utf-8")


def auth_from_env(var: str = "REVUE_AUTH") -> tuple[str, str] | None:
    raw = os.environ.get(var)
    if not raw:
        return None
    user, _, password = raw.partition(":")
    return user, password


def format_gerrit_time(ts: datetime) -> str:
    ts = ts.astimezone(timezone.utc) if ts.tzinfo else ts
    return ts.strftime("%Y-%m-%d %H:%M:%S")


def build_query(status: str, start: datetime, end: datetime, project: str | None = None) -> str:
    q = f'status:{status} after:"{format_gerrit_time(start)}" before:"{format_gerrit_time(end)}"'
    if project:
        q += f" project:{project}"
    return q


def _is_well_formed(doc: Any) -> bool:
    return isinstance(doc, dict) and all(k in doc for k in REQUIRED_CHANGE_KEYS) and (
        isinstance(doc["owner"], dict) and "_account_id" in doc["owner"]
    )


class GerritClient:
    """Client for one Gerrit instance.

    ``skipped`` counts malformed change documents dropped by :meth:`fetch_changes`.
    """

    def __init__(self, config: MinerConfig, session: requests.Session | None = None, sleep=time.sleep):
        self.config = config
        self.session = session or requests.Session()
        self.skipped = 0
        self.requests_made = 0
        self._sleep = sleep
        self._lock = threading.Lock()
        self._last_request = 0.0
        if config.auth:
            token = base64.b64encode(f"{config.auth[0]}:{config.auth[1]}".encode()).decode()
            self.session.headers["Authorization"] = f"Basic {token}"

    @property
    def _root(self) -> str:
        # authenticated REST calls live under /a/
        return self.config.base_url + ("/a" if self.config.auth else "")

    def _throttle(self):
        interval = self.config.request_interval / 1000.0
        if interval <= 0:
            return
        with self._lock:
            wait = self._last_request + interval - time.monotonic()
            if wait > 0:
                self._sleep(wait)
            self._last_request = time.monotonic()

    def get_json(self, path: str, params=None, allow_404: bool = False):
        url = self._root + path
        delay = self.config.request_interval / 1000.0
        status = None
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                self._sleep(delay)
                delay = delay * 2 if delay > 0 else 0.0
            self._throttle()
            try:
                resp = self.session.get(url, params=params, timeout=60)
            except requests.RequestException as exc:
                log.warning("GET %s failed: %s (attempt %d)", url, exc, attempt + 1)
                status = None
                continue
            with self._lock:
                self.requests_made += 1
            status = resp.status_code
            if status == 200:
                return json.loads(strip_xssi_prefix(resp.content))
            if status == 404 and allow_404:
                return None
            if status not in RETRYABLE_STATUS:
                raise MiningError(f"GET {url} failed", status)
            log.warning("GET %s returned %d (attempt %d)", url, status, attempt + 1)
        raise MiningError(f"GET {url} failed after {self.config.max_retries} retries", status)

    def _query_pages(self, query: str) -> Iterator[dict]:
        offset = 0
        while True:
            params = [("q", query)] + [("o", o) for o in CHANGE_OPTIONS]
            params += [("S", str(offset)), ("n", str(self.config.page_size))]
            page = self.get_json("/changes/", params=params)
            if not isinstance(page, list):
                raise MiningError(f"unexpected response for query {query!r}: {type(page).__name__}")
            yield from page
            if not page or not (isinstance(page[-1], dict) and page[-1].get("_more_changes")):
                return
            offset += len(page)

    def fetch_changes(self) -> Iterator[RawChangeDocument]:
        """Yield every merged/abandoned change in the configured window once."""
        cfg = self.config
        start, end = cfg.time_range
        seen = set()
        projects = cfg.projects or [None]
        for project in projects:
            for status in STATUSES:
                if status not in cfg.status_filters:
                    continue
                for doc in self._query_pages(build_query(status, start, end, project)):
                    if not _is_well_formed(doc):
                        self.skipped += 1
                        log.warning("skipping malformed change document: %.120r", doc)
                        continue
                    if doc["_number"] in seen:
                        continue
                    seen.add(doc["_number"])
                    doc = {k: v for k, v in doc.items() if k != "_more_changes"}
                    yield RawChangeDocument(doc, datetime.now(timezone.utc))

    def fetch_account(self, account_id: int) -> AccountRecord:
        doc = self.get_json(f"/accounts/{account_id}", allow_404=True)
        if not doc:
            return AccountRecord(account_id)
        registered = doc.get("registered_on")
        return AccountRecord(
            account_id,
            name=doc.get("name") or doc.get("username") or "",
            registered_on=parse_gerrit_time(registered).date() if registered else None,
        )

    def fetch_accounts(self, ids: Iterable[int]) -> list[AccountRecord]:
        ids = sorted(set(ids))
        if not ids:
            raise ValueError("fetch_accounts requires at least one account id")
        workers = max(1, self.config.max_in_flight)
        if workers == 1:
            return [self.fetch_account(i) for i in ids]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(self.fetch_account, ids))


def fetch_changes(config: MinerConfig, session: requests.Session | None = None) -> Iterator[RawChangeDocument]:
    return GerritClient(config, session).fetch_changes()


def fetch_accounts(ids, config: MinerConfig, session: requests.Session | None = None) -> list[AccountRecord]:
    return GerritClient(config, session).fetch_accounts(ids)


def account_ids_in(payloads: Iterable[dict]) -> set[int]:
    """Every owner and reviewer id referenced by a set of change payloads."""
    ids = set()
    for doc in payloads:
        ids.add(doc["owner"]["_account_id"])
        for group in (doc.get("reviewers") or {}).values():
            ids.update(a["_account_id"] for a in group if "_account_id" in a)
    return ids


def dump_payload(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))
