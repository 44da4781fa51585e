"""Command-line entry point.

    xpaxos run --script crash_rotation --fd on
    xpaxos suite --class crash --seeds 50 --jobs 4
    xpaxos golden
    xpaxos reliability --t 1 --benign 5 --correct 4 --synchrony 3
    xpaxos tables --t 2 --kind availability

Exit status: 0 everything passed, 1 golden mismatch, 2 invalid script or
arguments, 3 consistency violated, 4 liveness violated, 5 fault-detection
check failed.  With several failures the smallest non-zero code wins.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

from . import goldens, reliability, suites
from .checkers import check_consistency, check_fault_detection, check_liveness
from .core import synchronous_group_for_view
from .scenario import ScenarioError, builtin_names, load
from .sim import RunResult, simulate

EXIT_OK, EXIT_GOLDEN, EXIT_INVALID, EXIT_UNSAFE, EXIT_LIVENESS, EXIT_FD = 0, 1, 2, 3, 4, 5
OUT_ENV = "XPAXOS_OUT"
DEFAULT_SEED = 0


def out_root(arg: Optional[str]) -> Path:
    return Path(arg or os.environ.get(OUT_ENV) or "xpaxos-out")


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


def worst(codes) -> int:
    bad = [c for c in codes if c]
    return min(bad) if bad else EXIT_OK


# ------------------------------------------------------------------ run


def summarize_run(res: RunResult) -> dict:
    records = res.records
    sc = res.scenario
    installed = sorted({r["view"] for r in records if r["k"] == "new-view"})
    entered = sorted({r["view"] for r in records if r["k"] == "enter-view"})
    views = sorted({0} | set(installed))
    top = max((r.view for r in res.replicas), default=0)
    executed = max((r.ex for r in res.replicas), default=0)
    return {
        "scenario": sc.name,
        "seed": sc.seed,
        "n": sc.n,
        "t": sc.t,
        "delta": sc.delta,
        "horizon": sc.horizon,
        "fd": sc.fd,
        "lazy": sc.lazy,
        "batch": sc.batch,
        "chk": sc.chk,
        "commits": executed,
        "delivered": sum(1 for r in records if r["k"] == "deliver"),
        "view_changes": top,
        "views_entered": entered,
        "active_sets": {str(v): [str(a) for a in synchronous_group_for_view(v, sc.n).actives]
                        for v in views},
        "messages": dict(sorted(res.message_counts.items())),
        "inter_replica_messages": res.inter_replica,
        "ever_anarchy": res.ever_anarchy,
    }


def throughput_rows(records: list[dict], horizon: int, width: int) -> list[tuple]:
    per_bucket = Counter(r["t"] // width for r in records if r["k"] == "deliver")
    views = {}
    for r in records:
        if r["k"] == "new-view":
            views[r["t"] // width] = max(views.get(r["t"] // width, 0), r["view"])
    rows, view = [], 0
    for b in range(horizon // width + 1):
        view = max(view, views.get(b, 0))
        rows.append((b * width, min((b + 1) * width, horizon), per_bucket.get(b, 0), view))
    return rows


def verdicts_for(res: RunResult) -> tuple[dict, int]:
    records = res.records
    sc = res.scenario
    cons = check_consistency(records)
    fd = check_fault_detection(records)
    deadline = suites.liveness_deadline(sc)
    lv = check_liveness(records, deadline)
    # liveness is only promised outside anarchy with at most t replicas down
    live_applies = not res.ever_anarchy and len(res.end_crashed) <= sc.t
    codes = []
    if not cons.safe:
        codes.append(EXIT_UNSAFE)
    if live_applies and not lv.ok:
        codes.append(EXIT_LIVENESS)
    if not fd.accuracy_ok or (sc.fd and not res.ever_anarchy and not fd.completeness_ok):
        codes.append(EXIT_FD)
    out = {
        "consistency": cons.as_dict(),
        "liveness": dict(lv.as_dict(), applies=live_applies),
        "fault_detection": fd.as_dict(),
        "exit": worst(codes),
    }
    return out, out["exit"]


def write_artifacts(res: RunResult, out: Path) -> tuple[dict, int]:
    out.mkdir(parents=True, exist_ok=True)
    (out / "trace.jsonl").write_bytes(res.trace_bytes())
    verdicts, code = verdicts_for(res)
    summary = summarize_run(res)
    (out / "verdicts.json").write_text(json.dumps(verdicts, indent=2, default=str) + "\n")
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    with open(out / "throughput.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_start", "t_end", "delivered", "view"])
        w.writerows(throughput_rows(res.records, res.scenario.horizon, 10 * res.scenario.delta))
    return {"summary": summary, "verdicts": verdicts}, code


def _overrides(args) -> dict:
    ov = {"seed": args.seed, "fd": args.fd, "lazy": args.lazy, "batch": args.batch,
          "chk": args.chk, "delta": args.delta, "horizon": args.horizon}
    if args.t is not None:
        ov["n"] = 2 * args.t + 1
        ov["t"] = args.t
    return ov


def cmd_run(args) -> int:
    try:
        sc = load(args.script, **_overrides(args))
    except ScenarioError as e:
        print(f"invalid scenario {args.script}:", file=sys.stderr)
        for path, msg in e.problems:
            print(f"  {path or '<root>'}: {msg}", file=sys.stderr)
        return EXIT_INVALID
    print(f"running {sc.name} (n={sc.n}, seed={sc.seed}, fd={'on' if sc.fd else 'off'}, "
          f"lazy={'on' if sc.lazy else 'off'})")
    res = simulate(sc)
    out = out_root(args.out) / sc.name
    report, code = write_artifacts(res, out)
    s, v = report["summary"], report["verdicts"]
    print(f"  consistency: {v['consistency']['verdict']}"
          + (f" ({v['consistency']['reason']})" if v["consistency"]["reason"] else "")
          + ("  [run entered anarchy]" if s["ever_anarchy"] else ""))
    lv = v["liveness"]
    window = (f"{lv['checked']} requests before t={lv['deadline']}" if lv["deadline"] > 0
              else "horizon shorter than the liveness margin")
    print(f"  liveness: {'ok' if lv['ok'] else 'MISSING ' + str(len(lv['missing']))} ({window})"
          + ("" if lv["applies"] else "  [not applicable]"))
    fd = v["fault_detection"]
    if not s["fd"]:
        completeness = "n/a (fd off)"
    else:
        completeness = "ok" if fd["completeness_ok"] else "FAILED"
    print(f"  fault detection: accuracy {'ok' if fd['accuracy_ok'] else 'FAILED'}, "
          f"completeness {completeness}")
    print(f"  {s['delivered']} delivered, {s['commits']} executed, {s['view_changes']} view changes, "
          f"{s['inter_replica_messages']} inter-replica messages")
    print(f"  artifacts in {out}")
    return code


# ------------------------------------------------------------------ suite


def _suite_job(job: tuple[str, int]) -> dict:
    cls, seed = job
    return suites.run_one(cls, seed).as_dict()


def cmd_suite(args) -> int:
    classes = args.classes or list(suites.ALL_CLASSES)
    for c in classes:
        if c not in suites.ALL_CLASSES:
            print(f"unknown class {c!r}; choose from {', '.join(suites.ALL_CLASSES)}",
                  file=sys.stderr)
            return EXIT_INVALID
    jobs = [(c, s) for c in classes for s in range(args.start, args.start + args.seeds)]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_suite_job, jobs, chunksize=8))
    else:
        results = [_suite_job(j) for j in jobs]
    out = out_root(args.out) / "suite"
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.jsonl").write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in results))
    codes = []
    for c in classes:
        rows = [r for r in results if r["class"] == c]
        bad = [r for r in rows if not (r["safe"] and r["live"] and r["fd_ok"]) or r["ever_anarchy"]]
        print(f"{c:<11} {len(rows) - len(bad):>4}/{len(rows)} passed")
        for r in bad:
            if not r["safe"]:
                codes.append(EXIT_UNSAFE)
            elif not r["live"]:
                codes.append(EXIT_LIVENESS)
            else:
                codes.append(EXIT_FD)
            doc_path = out / "failures" / f"{c}-{r['seed']}.json"
            doc_path.parent.mkdir(exist_ok=True)
            doc_path.write_text(json.dumps(suites.generate(c, r["seed"]), indent=2) + "\n")
            print(f"  seed {r['seed']} failed; replay with: xpaxos run --script {doc_path}")
    return worst(codes)


# ------------------------------------------------------------------ golden


def cmd_golden(args) -> int:
    names = [args.which] if args.which != "all" else sorted(goldens.GOLDENS)
    code = EXIT_OK
    for name in names:
        res = simulate(load(name))
        write_artifacts(res, out_root(args.out) / name)
        diffs = goldens.compare(name, res.records)
        got = goldens.summarize(res.records)
        print(f"{name}: {'match' if not diffs else 'MISMATCH'}")
        for view, slots in got.items():
            print(f"  view {view}: " + ", ".join(f"{sn}:{lab}" for sn, lab in slots.items()))
        for d in diffs:
            print(f"  {d}")
        if diffs:
            code = EXIT_GOLDEN
    return code


# ------------------------------------------------------------------ reliability


def cmd_reliability(args) -> int:
    try:
        fp = reliability.FaultProbabilities.from_nines(args.benign, args.correct, args.synchrony)
    except ValueError as e:
        print(str(e), file=sys.stderr)
        return EXIT_INVALID
    t, n = args.t, 2 * args.t + 1
    rows = [
        ("CFT", reliability.p_consistent_cft(n, fp), reliability.p_available_cft(t, fp)),
        ("XPaxos", reliability.p_consistent_xpaxos(t, fp), reliability.p_available_xpaxos(t, fp)),
        ("BFT", reliability.p_consistent_bft(t, fp), reliability.p_available_bft(t, fp)),
    ]
    print(f"t={t}: 9benign={args.benign:g} 9correct={args.correct:g} 9synchrony={args.synchrony:g}")
    print(f"{'':<8}{'consistency':>14}{'availability':>14}")
    for name, pc, pa in rows:
        print(f"{name:<8}{reliability.nines_of(pc):>14}{reliability.nines_of(pa):>14}")
    return EXIT_OK


def cmd_tables(args) -> int:
    kinds = ["consistency", "availability"] if args.kind == "both" else [args.kind]
    for kind in kinds:
        print(f"# nines of {kind}, t={args.t}")
        print(reliability.render_tables(args.t, kind), end="")
    if args.relations:
        checked, bad = reliability.check_relations(args.t)
        print(f"# difference relations: {checked} points checked, {len(bad)} mismatches")
        for m in bad[:20]:
            print(f"  {m}")
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="xpaxos", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one scenario and check it")
    run.add_argument("--script", required=True,
                     help=f"scenario file or built-in name ({', '.join(builtin_names())})")
    run.add_argument("--seed", type=int)
    run.add_argument("--fd", type=_on_off, metavar="{on,off}")
    run.add_argument("--lazy", type=_on_off, metavar="{on,off}")
    run.add_argument("--batch", type=int)
    run.add_argument("--chk", type=int)
    run.add_argument("--t", type=int, help="fault threshold; sets n = 2t+1")
    run.add_argument("--delta", type=int)
    run.add_argument("--horizon", type=int)
    run.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./xpaxos-out)")
    run.set_defaults(func=cmd_run)

    suite = sub.add_parser("suite", help="randomized scenario classes")
    suite.add_argument("--class", dest="classes", action="append",
                       help=f"repeatable; default all of {', '.join(suites.ALL_CLASSES)}")
    suite.add_argument("--seeds", type=int, default=200)
    suite.add_argument("--start", type=int, default=DEFAULT_SEED)
    suite.add_argument("--jobs", type=int, default=1)
    suite.add_argument("--out")
    suite.set_defaults(func=cmd_suite)

    golden = sub.add_parser("golden", help="replay the view-change walkthroughs")
    golden.add_argument("--which", choices=sorted(goldens.GOLDENS) + ["all"], default="all")
    golden.add_argument("--out")
    golden.set_defaults(func=cmd_golden)

    rel = sub.add_parser("reliability", help="nines of consistency and availability")
    rel.add_argument("--t", type=int, default=1, choices=(1, 2))
    rel.add_argument("--benign", type=float, required=True, help="nines of p_benign")
    rel.add_argument("--correct", type=float, required=True, help="nines of p_correct")
    rel.add_argument("--synchrony", type=float, required=True, help="nines of p_synchrony")
    rel.set_defaults(func=cmd_reliability)

    tab = sub.add_parser("tables", help="regenerate the nines tables")
    tab.add_argument("--t", type=int, default=1, choices=(1, 2))
    tab.add_argument("--kind", choices=("consistency", "availability", "both"), default="both")
    tab.add_argument("--relations", action="store_true",
                     help="also check the difference relations")
    tab.set_defaults(func=cmd_tables)
    return p


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INVALID if e.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
