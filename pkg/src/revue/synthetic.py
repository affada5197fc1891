"""Planted-signal generator producing Gerrit-shaped change and account documents.

Merge probability is a logistic function of the reviewers' mean registration
age and of the author's latent merge propensity (which is what the author's
historical merge ratio estimates). Subjects carry no signal. Later revisions
receive votes that lean towards the final outcome.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta, timezone

import numpy as np

from revue.corpus import (
    AccountRecord,
    account_registry,
    interpolate_registration_dates,
    normalize,
    parse_gerrit_time,
    preprocess,
    to_gerrit_time,
)

WORDS = (
    "add update remove refactor support handle improve cleanup move rename parser cache config "
    "build test dialog export import layout widget render filter query index sync api option"
).split()
DOC_WORDS = ("doc", "license", "copyright")
BUG_WORDS = ("fix", "bug", "defect")
DIRS = ("src/core", "src/ui", "src/io", "src/net", "lib/util", "lib/text", "tests/unit", "tests/ui", "docs", "tools/ci")
SUBPROJECTS = ("core", "ui", "tools", "sandbox")
SUBPROJECT_WEIGHTS = (0.45, 0.32, 0.21, 0.02)
BOT_NAMES = ("Jenkins", "Zuul CI", "lint-bot")


@dataclass
class SyntheticConfig:
    n_changes: int = 2000
    abandon_rate: float = 0.12
    seed: int = 0
    project: str = "synth"
    start: datetime = datetime(2016, 1, 1, tzinfo=timezone.utc)
    days: int = 730
    n_authors: int = 80
    n_reviewers: int = 40
    reviewer_weight: float = 1.6
    author_weight: float = 1.2
    vote_weight: float = 1.0
    noise_rate: float = 0.01  # fraction each of stop-word subjects, self reviews, missing patch sets
    missing_registration: float = 0.05


def _solve_intercept(signal: np.ndarray, target: float) -> float:
    lo, hi = -20.0, 20.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if np.mean(1.0 / (1.0 + np.exp(-(mid + signal)))) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _subject(rng) -> str:
    n = int(rng.integers(3, 10))
    words = list(rng.choice(WORDS, n))
    kind = rng.random()
    if kind < 0.15:
        words[int(rng.integers(n))] = str(rng.choice(DOC_WORDS))
    elif kind < 0.45:
        words[int(rng.integers(n))] = str(rng.choice(BUG_WORDS))
    return " ".join(words)


def generate(config: SyntheticConfig | None = None) -> tuple[list[dict], list[dict]]:
    """Return ``(change_documents, account_documents)`` shaped like Gerrit REST output."""
    cfg = config or SyntheticConfig()
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_changes

    # accounts: ids grow with registration date, as on a real instance
    n_acc = cfg.n_authors + cfg.n_reviewers + len(BOT_NAMES)
    reg_days = np.sort(rng.uniform(-8 * 365, 0.0, n_acc))
    ids = 1000 + np.arange(n_acc) * 3
    perm = rng.permutation(n_acc)
    author_ids = ids[perm[: cfg.n_authors]]
    reviewer_ids = ids[perm[cfg.n_authors: cfg.n_authors + cfg.n_reviewers]]
    bot_ids = ids[perm[cfg.n_authors + cfg.n_reviewers:]]
    reg_of = {int(i): cfg.start + timedelta(days=float(d)) for i, d in zip(ids, reg_days)}
    names = {int(i): f"Dev {int(i)}" for i in ids}
    for b, name in zip(bot_ids, BOT_NAMES):
        names[int(b)] = name

    account_docs = []
    for i in ids:
        doc = {"_account_id": int(i), "name": names[int(i)], "username": f"user{int(i)}"}
        if int(i) in map(int, bot_ids) or rng.random() >= cfg.missing_registration:
            doc["registered_on"] = to_gerrit_time(reg_of[int(i)])
        account_docs.append(doc)

    author_activity = rng.zipf(1.6, cfg.n_authors).astype(float)
    author_activity /= author_activity.sum()
    propensity = rng.normal(0.0, 1.0, cfg.n_authors)

    offsets = np.sort(rng.uniform(0, cfg.days, n))
    created = [cfg.start + timedelta(days=float(d)) for d in offsets]
    authors_idx = rng.choice(cfg.n_authors, n, p=author_activity)
    authors_idx[:20] = np.arange(20) % cfg.n_authors  # a handful of early first-timers
    sub = rng.choice(len(SUBPROJECTS), n, p=SUBPROJECT_WEIGHTS)

    # a few authors also review other people's changes
    reviewer_pool = [int(r) for r in reviewer_ids] + [int(a) for a in author_ids[: cfg.n_authors // 8]]
    reviewer_sets, exp_years = [], np.zeros(n)
    for k in range(n):
        owner = int(author_ids[authors_idx[k]])
        pool = [r for r in reviewer_pool if r != owner]
        m = int(rng.integers(1, 4))
        chosen = [int(r) for r in rng.choice(pool, m, replace=False)]
        reviewer_sets.append(chosen)
        exp_years[k] = np.mean([max(0.0, (created[k] - reg_of[r]).days / 365.25) for r in chosen])
    z_exp = (exp_years - exp_years.mean()) / (exp_years.std() or 1.0)
    signal = cfg.reviewer_weight * z_exp + cfg.author_weight * propensity[authors_idx]
    intercept = _solve_intercept(signal, 1.0 - cfg.abandon_rate)
    p_merge = 1.0 / (1.0 + np.exp(-(intercept + signal)))
    merged = rng.random(n) < p_merge

    docs = []
    for k in range(n):
        owner = int(author_ids[authors_idx[k]])
        t0 = created[k]
        duration = rng.exponential(3.0 if merged[k] else 9.0) + 0.01
        t1 = t0 + timedelta(days=float(duration))
        n_rev = 1 + min(int(rng.poisson(1.2)), 6)
        cuts = np.sort(rng.uniform(0, duration * 0.9, n_rev - 1))
        uploads = [t0] + [t0 + timedelta(days=float(c)) for c in cuts]

        reviewers = [{"_account_id": r, "name": names[r]} for r in reviewer_sets[k]]
        if rng.random() < 0.4:
            b = int(rng.choice(bot_ids))
            reviewers.append({"_account_id": b, "name": names[b]})

        subject = _subject(rng)
        special = rng.random()
        if special < cfg.noise_rate:
            subject = "DO NOT MERGE: " + subject
        elif special < 2 * cfg.noise_rate:
            reviewers = [{"_account_id": owner, "name": names[owner]}]

        revisions, messages = {}, []
        n_files = int(rng.integers(1, 7))
        paths = sorted({f"{rng.choice(DIRS)}/file{int(rng.integers(0, 40))}.c" for _ in range(n_files)})
        if rng.random() < 0.1:
            paths.append("README")
        for j, up in enumerate(uploads, 1):
            files = {}
            for p in paths:
                status = rng.choice(["M", "A", "D"], p=[0.75, 0.2, 0.05])
                info = {"lines_inserted": int(rng.integers(0, 120)), "lines_deleted": int(rng.integers(0, 40))}
                if status != "M":
                    info["status"] = str(status)
                files[p] = info
            revisions[f"sha{k:05d}{j:02d}"] = {"_number": j, "created": to_gerrit_time(up), "files": files}
            nxt = uploads[j] if j < n_rev else t1
            messages.append({
                "date": to_gerrit_time(up),
                "_revision_number": j,
                "author": {"_account_id": owner},
                "message": f"Uploaded patch set {j}.",
            })
            # the vote lean strengthens with revision number
            lean = (1 if merged[k] else -1) * cfg.vote_weight * j / n_rev
            vote = int(np.clip(np.round(lean * 2 + rng.normal(0, 0.8)), -2, 2))
            voter = reviewer_sets[k][0]
            vote_time = up + (nxt - up) * 0.5
            messages.append({
                "date": to_gerrit_time(vote_time),
                "_revision_number": j,
                "author": {"_account_id": voter},
                "message": f"Patch Set {j}: Code-Review{vote:+d}\n\nlooks {'good' if vote > 0 else 'questionable'}",
            })
        if rng.random() < cfg.noise_rate:
            revisions = {}
        if merged[k]:
            messages.append({"date": to_gerrit_time(t1), "_revision_number": n_rev,
                             "message": "Change has been successfully merged"})
        else:
            messages.append({"date": to_gerrit_time(t1), "_revision_number": n_rev,
                             "author": {"_account_id": owner}, "message": "Abandoned"})

        doc = {
            "_number": 10000 + k,
            "id": f"{SUBPROJECTS[sub[k]]}~master~I{k:08x}",
            "project": SUBPROJECTS[sub[k]],
            "branch": "master",
            "subject": subject,
            "status": "MERGED" if merged[k] else "ABANDONED",
            "created": to_gerrit_time(t0),
            "updated": to_gerrit_time(t1),
            "owner": {"_account_id": owner, "name": names[owner]},
            "reviewers": {"REVIEWER": reviewers},
            "revisions": revisions,
            "messages": messages,
        }
        if merged[k]:
            doc["submitted"] = to_gerrit_time(t1)
        docs.append(doc)
    return docs, account_docs


def accounts_from_docs(account_docs) -> list[AccountRecord]:
    return [
        AccountRecord(
            d["_account_id"],
            d.get("name", ""),
            parse_gerrit_time(d["registered_on"]).date() if d.get("registered_on") else None,
        )
        for d in account_docs
    ]


def synthetic_corpus(config: SyntheticConfig | None = None):
    """Generated corpus after normalization, filtering and date interpolation."""
    cfg = config or SyntheticConfig()
    docs, account_docs = generate(cfg)
    changes = [normalize(d, cfg.project) for d in docs]
    kept, report = preprocess(changes)
    accounts = account_registry(interpolate_registration_dates(accounts_from_docs(account_docs)))
    return kept, accounts, report
