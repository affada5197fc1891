"""Command-line entry point: mine -> preprocess -> extract -> train -> predict/rank -> evaluate.

Stages talk to each other only through files (JSONL corpora, CSV feature
tables, JSON model and report documents), so any stage can be rerun alone.
Exit codes: 0 success, 1 pipeline error, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pandas as pd

from revue import RevueError
from revue.corpus import (
    account_registry,
    interpolate_registration_dates,
    load_accounts,
    load_corpus,
    load_raw,
    normalize,
    preprocess,
    save_accounts,
    save_corpus,
    save_raw,
)
from revue.evaluation import report as rpt
from revue.evaluation.effort import effort_stats
from revue.evaluation.longitudinal import (
    cross_project_eval,
    dimension_eval,
    grid_tune,
    new_author_eval,
    revision_eval,
    run_longitudinal_cv,
)
from revue.evaluation.metrics import top_k_size
from revue.features import MODES, extract_all, feature_columns, load_features, save_features
from revue.history import build_index
from revue.learner import GbdtParams, LogisticParams, feature_importance, fit_gbdt, fit_logistic, load_model, save_model

log = logging.getLogger("revue")

EVAL_MODES = ("longitudinal", "new-authors", "dimensions", "revisions", "cross-project", "k-sweep", "tune")
RAW_CHANGES = "raw_changes.jsonl"
RAW_ACCOUNTS = "raw_accounts.jsonl"


class UsageError(Exception):
    pass


# -- argument parsing ------------------------------------------------------------

def _timestamp(text: str) -> datetime:
    try:
        ts = datetime.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an ISO date/time: {text!r}") from None
    return ts if ts.tzinfo else ts.replace(tzinfo=timezone.utc)


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v]


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v]


def _add_gbdt_flags(p: argparse.ArgumentParser) -> None:
    d = GbdtParams()
    g = p.add_argument_group("learner")
    g.add_argument("--model", choices=("gbdt", "logistic"), default="gbdt", help="learner (default: gbdt)")
    g.add_argument("--n-estimators", type=int, default=d.n_estimators, help=f"boosting rounds (default {d.n_estimators})")
    g.add_argument("--learning-rate", type=float, default=d.learning_rate, help=f"shrinkage (default {d.learning_rate})")
    g.add_argument("--num-leaves", type=int, default=d.num_leaves, help=f"leaves per tree (default {d.num_leaves})")
    g.add_argument("--min-samples-leaf", type=int, default=d.min_samples_leaf,
                   help=f"minimum rows per leaf (default {d.min_samples_leaf})")
    g.add_argument("--subsample", type=float, default=d.row_subsample,
                   help=f"row fraction redrawn every round (default {d.row_subsample})")
    g.add_argument("--class-weighting", choices=("balanced", "none"), default=d.class_weighting)
    g.add_argument("--epochs", type=int, default=LogisticParams().epochs, help="logistic baseline epochs")


def _add_eval_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--repeats", type=int, default=10, help="reseeded reruns averaged per fold (default 10)")
    p.add_argument("--jobs", type=int, default=1, help="parallel fold workers; results do not depend on it")
    p.add_argument("--timing", action="store_true", help="include per-fold training seconds in the report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="revue", description="Early merge/abandon prediction for Gerrit changes.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("mine", help="download merged/abandoned changes and their accounts")
    p.add_argument("--base-url", required=True, help="Gerrit root URL")
    p.add_argument("--project", action="append", default=[], help="restrict to a Gerrit project (repeatable)")
    p.add_argument("--after", type=_timestamp, required=True, help="window start (ISO date, UTC)")
    p.add_argument("--before", type=_timestamp, required=True, help="window end (ISO date, UTC)")
    p.add_argument("--status", action="append", choices=("merged", "abandoned"), help="status filter (repeatable)")
    p.add_argument("--page-size", type=int, default=100)
    p.add_argument("--max-retries", type=int, default=3)
    p.add_argument("--interval", type=float, default=0.0, help="milliseconds between requests")
    p.add_argument("--jobs", type=int, default=1, help="concurrent account lookups")
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("synth", help="write a planted-signal corpus in the same layout as 'mine'")
    p.add_argument("--n-changes", type=int, default=2000)
    p.add_argument("--abandon-rate", type=float, default=0.12)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("preprocess", help="normalize, filter and interpolate registration dates")
    p.add_argument("--input", type=Path, required=True, help="directory written by 'mine' or 'synth'")
    p.add_argument("--project-name", default="", help="project name used for bot detection")
    p.add_argument("--min-merged", type=int, default=200, help="minimum merged changes per subproject")
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("extract", help="compute the feature table")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--accounts", type=Path, required=True)
    p.add_argument("--at-revisions", action="store_true", help="one row per (change, revision)")
    p.add_argument("--mode", choices=MODES, default="approach1", help="revision extras (with --at-revisions)")
    p.add_argument("--out", type=Path, required=True, help="CSV path")

    p = sub.add_parser("train", help="fit a model on a feature table")
    p.add_argument("--features", type=Path, required=True)
    _add_gbdt_flags(p)
    p.add_argument("--seed", type=int, default=GbdtParams().seed)
    p.add_argument("--out", type=Path, required=True, help="model path")

    p = sub.add_parser("predict", help="score a feature table")
    p.add_argument("--model-file", type=Path, required=True)
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="CSV with change_key, created_at, label, probability")

    p = sub.add_parser("rank", help="order scored changes by merge probability and print the top K%%")
    p.add_argument("--scores", type=Path, required=True, help="CSV written by 'predict'")
    p.add_argument("--k", type=float, default=20.0, help="percentage of changes to print (default 20)")
    p.add_argument("--out", type=Path, help="write the full ranking here")

    p = sub.add_parser("evaluate", help="run an experiment harness")
    p.add_argument("mode", choices=EVAL_MODES)
    p.add_argument("--features", type=Path, help="feature table (all modes except cross-project)")
    p.add_argument("--train", type=Path, help="cross-project: training feature table")
    p.add_argument("--test", type=Path, help="cross-project: test feature table")
    p.add_argument("--dimension-mode", choices=("single", "exclude"), default="single")
    p.add_argument("--grid-estimators", type=_int_list, default=[100, 500], help="tune: comma-separated values")
    p.add_argument("--grid-rates", type=_float_list, default=[0.1, 0.01], help="tune: comma-separated values")
    _add_gbdt_flags(p)
    _add_eval_flags(p)
    p.add_argument("--seed", type=int, default=GbdtParams().seed)
    p.add_argument("--out", type=Path, help="JSON report path (tables always go to stdout)")

    p = sub.add_parser("report", help="descriptive corpus reports")
    p.add_argument("kind", choices=("effort",))
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--out", type=Path, help="JSON report path")

    p = sub.add_parser("importance", help="per-feature split importance of a boosted model")
    p.add_argument("--model-file", type=Path, required=True)
    p.add_argument("--type", choices=("split", "gain"), default="split")
    p.add_argument("--out", type=Path, help="JSON report path")
    return parser


# -- helpers ---------------------------------------------------------------------

def _need_file(path: Path | None, flag: str) -> Path:
    if path is None:
        raise UsageError(f"{flag} is required")
    if not path.is_file():
        raise UsageError(f"{flag}: no such file: {path}")
    return path


def _learner_params(args):
    if args.model == "logistic":
        return LogisticParams(epochs=args.epochs, class_weighting=args.class_weighting)
    try:
        return GbdtParams(
            n_estimators=args.n_estimators,
            learning_rate=args.learning_rate,
            num_leaves=args.num_leaves,
            min_samples_leaf=args.min_samples_leaf,
            row_subsample=args.subsample,
            seed=args.seed,
            class_weighting=args.class_weighting,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _emit(doc, text: str, out: Path | None) -> None:
    sys.stdout.write(text)
    if out is not None:
        out.parent.mkdir(parents=True, exist_ok=True)
        rpt.write_json(doc, out)


# -- subcommands -----------------------------------------------------------------

def cmd_mine(args) -> int:
    from revue.gerrit import GerritClient, MinerConfig, account_ids_in, auth_from_env

    try:
        cfg = MinerConfig(
            base_url=args.base_url,
            time_range=(args.after, args.before),
            projects=args.project,
            status_filters=frozenset(args.status or ("merged", "abandoned")),
            page_size=args.page_size,
            max_retries=args.max_retries,
            request_interval=args.interval,
            max_in_flight=args.jobs,
            auth=auth_from_env(),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    client = GerritClient(cfg)
    payloads = sorted((d.payload for d in client.fetch_changes()), key=lambda p: p["_number"])
    args.out.mkdir(parents=True, exist_ok=True)
    save_raw(payloads, args.out / RAW_CHANGES)
    accounts = client.fetch_accounts(account_ids_in(payloads)) if payloads else []
    save_accounts(accounts, args.out / RAW_ACCOUNTS)
    print(f"mined {len(payloads)} changes, {len(accounts)} accounts, skipped {client.skipped} malformed documents")
    return 0


def cmd_synth(args) -> int:
    from revue.synthetic import SyntheticConfig, accounts_from_docs, generate

    docs, account_docs = generate(SyntheticConfig(n_changes=args.n_changes, abandon_rate=args.abandon_rate,
                                                  seed=args.seed))
    args.out.mkdir(parents=True, exist_ok=True)
    save_raw(docs, args.out / RAW_CHANGES)
    save_accounts(accounts_from_docs(account_docs), args.out / RAW_ACCOUNTS)
    print(f"wrote {len(docs)} synthetic changes to {args.out}")
    return 0


def cmd_preprocess(args) -> int:
    raw = _need_file(args.input / RAW_CHANGES, "--input")
    acc = _need_file(args.input / RAW_ACCOUNTS, "--input")
    changes = [normalize(d, args.project_name) for d in load_raw(raw)]
    kept, tally = preprocess(changes, args.min_merged)
    accounts = interpolate_registration_dates(load_accounts(acc))
    args.out.mkdir(parents=True, exist_ok=True)
    save_corpus(kept, args.out / "corpus.jsonl")
    save_accounts(accounts, args.out / "accounts.jsonl")
    doc = {"input": len(changes), "kept": len(kept), "removed": tally.as_dict()}
    rpt.write_json(doc, args.out / "filter_report.json")
    print(f"kept {len(kept)} of {len(changes)} changes; removed {tally.as_dict()}")
    return 0


def cmd_extract(args) -> int:
    changes = load_corpus(_need_file(args.corpus, "--corpus"))
    accounts = account_registry(load_accounts(_need_file(args.accounts, "--accounts")))
    table = extract_all(changes, build_index(changes), accounts, at_revisions=args.at_revisions, mode=args.mode)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_features(table, args.out)
    print(f"wrote {len(table)} feature rows to {args.out}")
    return 0


def cmd_train(args) -> int:
    table = load_features(_need_file(args.features, "--features"))
    params = _learner_params(args)
    cols = feature_columns(table)
    X, y = table[cols].to_numpy(float), table["label"].to_numpy(int)
    if args.model == "logistic":
        model = fit_logistic(X, y, params, cols)
    else:
        model = fit_gbdt(X, y, params, cols)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, args.out)
    print(f"trained {args.model} on {len(y)} rows -> {args.out}")
    return 0


def cmd_predict(args) -> int:
    model = load_model(_need_file(args.model_file, "--model-file"))
    table = load_features(_need_file(args.features, "--features"))
    missing = [c for c in model.feature_names if c not in table.columns]
    if missing:
        raise RevueError(f"feature table lacks model columns: {missing}")
    proba = model.predict_proba(table[model.feature_names].to_numpy(float))
    out = table[["change_key", "created_at", "label"]].assign(probability=proba)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    out.to_csv(args.out, index=False, lineterminator="\n", float_format="%.17g")
    print(f"scored {len(out)} rows -> {args.out}")
    return 0


def cmd_rank(args) -> int:
    scores = pd.read_csv(_need_file(args.scores, "--scores"), dtype={"change_key": str}, float_precision="round_trip")
    if not 0 < args.k <= 100:
        raise UsageError("--k must lie in (0, 100]")
    if scores.empty:
        raise RevueError("nothing to rank")
    created = pd.to_datetime(scores["created_at"], utc=True, format="ISO8601")
    order = np.lexsort((np.arange(len(scores)), created.to_numpy(), -scores["probability"].to_numpy(float)))
    ranked = scores.iloc[order].reset_index(drop=True)
    top = ranked.head(top_k_size(args.k, len(ranked)))
    for key, p in zip(top["change_key"], top["probability"]):
        print(f"{key}\t{p:.6f}")
    if args.out is not None:
        ranked.to_csv(args.out, index=False, lineterminator="\n", float_format="%.17g")
    return 0


def cmd_evaluate(args) -> int:
    params = _learner_params(args)
    if args.repeats < 1:
        raise UsageError("--repeats must be >= 1")
    common = dict(repeats=args.repeats, model=args.model)
    if args.mode == "cross-project":
        train = load_features(_need_file(args.train, "--train"))
        test = load_features(_need_file(args.test, "--test"))
        report = cross_project_eval(train, test, params, **common)
        return _emit_metrics(report, args)
    table = load_features(_need_file(args.features, "--features"))
    if args.mode == "longitudinal":
        report = run_longitudinal_cv(table, params, jobs=args.jobs, **common)
        return _emit_metrics(report, args)
    if args.mode == "new-authors":
        report = new_author_eval(table, params, jobs=args.jobs, **common)
        return _emit_metrics(report, args)
    if args.mode == "k-sweep":
        report = run_longitudinal_cv(table, params, jobs=args.jobs, label="k-sweep", **common)
        sweep = rpt.k_sweep_table(report)
        doc = {"k_sweep": sweep.to_dict(orient="records"), "report": report.to_dict(args.timing)}
        _emit(doc, "# ER@K sweep\n" + rpt.format_table(sweep), args.out)
        return 0
    if args.mode == "dimensions":
        reports = dimension_eval(table, params, mode=args.dimension_mode, jobs=args.jobs, **common)
        doc = {"mode": args.dimension_mode, "dimensions": {k: r.to_dict(args.timing) for k, r in reports.items()}}
        text = f"# dimensions ({args.dimension_mode})\n" + rpt.format_table(rpt.summary_table(reports))
        _emit(doc, text, args.out)
        return 0
    if args.mode == "revisions":
        report = revision_eval(table, params, **common)
        doc = report.to_dict()
        _emit(doc, "# revisions\n" + rpt.format_table(rpt.revision_table({report.mode: report})), args.out)
        return 0
    if args.mode == "tune":
        if args.model != "gbdt":
            raise UsageError("tune only applies to --model gbdt")
        grid, best = grid_tune(table, args.grid_estimators, args.grid_rates, params, repeats=args.repeats,
                               jobs=args.jobs)
        doc = {"grid": grid.to_dict(orient="records"),
               "best": {"n_estimators": best.n_estimators, "learning_rate": best.learning_rate}}
        text = "# tuning grid\n" + rpt.format_table(grid) + (
            f"best: n_estimators={best.n_estimators} learning_rate={best.learning_rate}\n")
        _emit(doc, text, args.out)
        return 0
    raise UsageError(f"unknown evaluation mode {args.mode}")


def _emit_metrics(report, args) -> int:
    text = rpt.render(report)
    if args.timing:
        text += "\ntraining time\n" + rpt.format_table(rpt.timing_table(report))
    _emit(report.to_dict(args.timing), text, args.out)
    return 0


def cmd_report(args) -> int:
    table = effort_stats(load_corpus(_need_file(args.corpus, "--corpus")))
    doc = {"effort": table.to_dict(orient="records")}
    _emit(doc, "# effort (Tukey-filtered means)\n" + rpt.format_table(table), args.out)
    return 0


def cmd_importance(args) -> int:
    model = load_model(_need_file(args.model_file, "--model-file"))
    if not hasattr(model, "trees"):
        raise UsageError("importance needs a boosted-tree model")
    imp = feature_importance(model, args.type)
    _emit({"type": args.type, "importance": imp}, rpt.format_table(rpt.importance_table(imp)), args.out)
    return 0


COMMANDS = {
    "mine": cmd_mine,
    "synth": cmd_synth,
    "preprocess": cmd_preprocess,
    "extract": cmd_extract,
    "train": cmd_train,
    "predict": cmd_predict,
    "rank": cmd_rank,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
    "importance": cmd_importance,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"revue {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except RevueError as exc:
        print(f"revue {args.command}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
