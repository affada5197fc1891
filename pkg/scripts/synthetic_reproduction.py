"""Run the main experiments on a planted-signal corpus and print the tables.

    python3 scripts/synthetic_reproduction.py --seed 0 --repeats 10 --out results/
"""

import argparse
import logging
from pathlib import Path

from revue.evaluation import (
    cross_project_eval,
    dimension_eval,
    new_author_eval,
    revision_eval,
    run_longitudinal_cv,
)
from revue.evaluation import report as rpt
from revue.evaluation.effort import effort_stats
from revue.features import extract_all
from revue.history import build_index
from revue.learner import GbdtParams, LogisticParams
from revue.synthetic import SyntheticConfig, synthetic_corpus


def corpus(seed, project="synth"):
    changes, accounts, _ = synthetic_corpus(SyntheticConfig(seed=seed, project=project))
    index = build_index(changes)
    return changes, extract_all(changes, index, accounts), extract_all(changes, index, accounts, True, "approach2")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--repeats", type=int, default=10)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", type=Path, help="directory for JSON reports")
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)

    changes, table, revisions = corpus(args.seed)
    _, other, _ = corpus(args.seed + 100, project="other")
    params = GbdtParams(seed=2021 + args.seed)

    reports = {
        "gbdt": run_longitudinal_cv(table, params, args.repeats, jobs=args.jobs),
        "logistic": run_longitudinal_cv(table, LogisticParams(), 1, model="logistic", label="logistic"),
        "new authors": new_author_eval(table, params, args.repeats, jobs=args.jobs),
        "cross project": cross_project_eval(table, other, params),
    }
    print("# longitudinal summary")
    print(rpt.format_table(rpt.summary_table(reports)))
    print("# ER@K sweep")
    print(rpt.format_table(rpt.k_sweep_table(reports["gbdt"])))

    for mode in ("single", "exclude"):
        dims = dimension_eval(table, params, mode, args.repeats, jobs=args.jobs)
        print(f"# dimensions ({mode})")
        print(rpt.format_table(rpt.summary_table(dims)))

    rev = revision_eval(revisions, params, args.repeats)
    print("# revisions")
    print(rpt.format_table(rpt.revision_table({rev.mode: rev})))
    effort = effort_stats(changes)
    print("# effort")
    print(rpt.format_table(effort))

    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        for name, r in reports.items():
            rpt.write_json(r.to_dict(), args.out / f"{name.replace(' ', '_')}.json")
        rpt.write_json(rev.to_dict(), args.out / "revisions.json")
        rpt.write_json({"effort": effort.to_dict(orient="records")}, args.out / "effort.json")


if __name__ == "__main__":
    main()
