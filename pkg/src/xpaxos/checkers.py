"""Verdicts computed from a finished trace.

All checkers work on decoded trace records only, so a trace written to
disk can be re-checked later without the simulator.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .core import synchronous_group_for_view

SAFE, UNSAFE = "SAFE", "UNSAFE"


def parse_trace(lines: Iterable[str] | bytes | str) -> list[dict]:
    if isinstance(lines, bytes):
        lines = lines.decode()
    if isinstance(lines, str):
        lines = lines.splitlines()
    return [json.loads(x) for x in lines if x.strip()]


def _meta(records: list[dict]) -> dict:
    for r in records:
        if r["k"] == "start":
            return r
    return {}


def byzantine_replicas(records: list[dict]) -> set[str]:
    return {r["who"] for r in records if r["k"] == "byzantine"}


def ever_anarchy(records: list[dict]) -> bool:
    return any(r["k"] == "census" and r["anarchy"] for r in records)


@dataclass
class ConsistencyVerdict:
    verdict: str
    ever_anarchy: bool
    reason: str = ""
    evidence: list = field(default_factory=list)

    @property
    def safe(self) -> bool:
        return self.verdict == SAFE

    def as_dict(self) -> dict:
        return {"verdict": self.verdict, "ever_anarchy": self.ever_anarchy,
                "reason": self.reason, "evidence": self.evidence}


def check_consistency(records: list[dict]) -> ConsistencyVerdict:
    """Total order over committed requests, plus validity.

    An entry ``(view, sn, digest)`` is *established* once a client delivered
    it or every active of ``view`` logged it as committed.  The run is
    UNSAFE if two clients delivered different batches at one sn, or if a
    benign replica later commits a different batch at an established sn in
    the same or a higher view.  Validity: every committed operation was
    proposed by some client.
    """
    anarchy = ever_anarchy(records)
    meta = _meta(records)
    n = meta.get("n")
    byz = byzantine_replicas(records)

    delivered: dict[int, dict] = {}
    commits_by_key: dict[tuple, set] = defaultdict(set)
    commit_first: dict[tuple, dict] = {}
    benign_commits: list[dict] = []
    proposed = set()
    for r in records:
        k = r["k"]
        if k == "propose":
            proposed.add(r["op"])
        elif k == "deliver":
            first = delivered.get(r["sn"])
            if first is not None and first["d_batch"] != r["d_batch"]:
                return ConsistencyVerdict(UNSAFE, anarchy, f"two deliveries at sn {r['sn']}",
                                          [first, r])
            delivered.setdefault(r["sn"], r)
        elif k in ("commit", "lazy-commit"):
            key = (r["view"], r["sn"], r["d"])
            commits_by_key[key].add(r["who"])
            commit_first.setdefault(key, r)
            if r["who"] not in byz:
                benign_commits.append(r)
                for op in r["ops"]:
                    if op not in proposed:
                        return ConsistencyVerdict(UNSAFE, anarchy,
                                                  f"committed op {op!r} was never proposed", [r])

    established: dict[int, list] = defaultdict(list)
    for sn, r in delivered.items():
        established[sn].append((r["view"], r["d_batch"], r))
    if n is not None:
        for (view, sn, d), who in commits_by_key.items():
            actives = {str(a) for a in synchronous_group_for_view(view, n).actives}
            if actives <= who:
                established[sn].append((view, d, commit_first[(view, sn, d)]))

    for r in benign_commits:
        for view, d, src in established.get(r["sn"], ()):
            if r["view"] >= view and r["d"] != d:
                return ConsistencyVerdict(
                    UNSAFE, anarchy,
                    f"sn {r['sn']}: established in view {view}, replaced in view {r['view']}",
                    [src, r])
    return ConsistencyVerdict(SAFE, anarchy)


@dataclass
class LivenessVerdict:
    ok: bool
    deadline: int
    missing: list = field(default_factory=list)
    checked: int = 0

    def as_dict(self) -> dict:
        return {"ok": self.ok, "deadline": self.deadline, "checked": self.checked,
                "missing": self.missing}


def check_liveness(records: list[dict], deadline: int) -> LivenessVerdict:
    """Every request proposed before ``deadline`` is delivered by the end."""
    done = {(r["who"], r["ts"]) for r in records if r["k"] == "deliver"}
    missing, checked = [], 0
    for r in records:
        if r["k"] == "propose" and r["t"] < deadline:
            checked += 1
            if (r["who"], r["ts"]) not in done:
                missing.append({"client": r["who"], "ts": r["ts"], "op": r["op"], "t": r["t"]})
    return LivenessVerdict(not missing, deadline, missing, checked)


@dataclass
class FDReport:
    fsets: dict
    injected: dict
    completeness_ok: bool
    accuracy_ok: bool
    false_accusations: list = field(default_factory=list)
    undetected: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.completeness_ok and self.accuracy_ok

    def as_dict(self) -> dict:
        return {"fsets": self.fsets, "injected": self.injected,
                "completeness_ok": self.completeness_ok, "accuracy_ok": self.accuracy_ok,
                "false_accusations": self.false_accusations, "undetected": self.undetected}


def check_fault_detection(records: list[dict]) -> FDReport:
    """Accuracy: no benign replica ever lands in a benign replica's FSet.
    Completeness: a Byzantine replica whose view-change hid or contradicted
    an entry that a benign active committed (in a view where the Byzantine
    replica was active too) is in the FSet of every benign replica that is
    up at the end of the run."""
    meta = _meta(records)
    n = meta.get("n", 3)
    byz = byzantine_replicas(records)
    replicas = [f"s{i}" for i in range(n)]
    benign = [r for r in replicas if r not in byz]
    fsets: dict[str, set] = {r: set() for r in replicas}
    down: set[str] = set()
    benign_commits = set()
    injected: dict[str, list] = defaultdict(list)
    false_acc = []
    for r in records:
        k = r["k"]
        if k == "fd-accuse":
            fsets[r["who"]].add(r["accused"])
            if r["who"] in benign and r["accused"] not in byz:
                false_acc.append(r)
        elif k == "crash":
            down.add(r["who"])
        elif k == "recover":
            down.discard(r["who"])
        elif k == "commit" and r["who"] not in byz:
            # lazy copies held by passives are not witnesses: detection needs
            # a view-change message from a replica that was active in the view
            benign_commits.add((r["view"], r["sn"], r["d"]))
        elif k == "byz-inject":
            for sn, view, d in r["lost"]:
                actives = {str(a) for a in synchronous_group_for_view(view, n).actives}
                if sn > r["base"] and r["who"] in actives and (view, sn, d) in benign_commits:
                    injected[r["who"]].append([r["view"], sn, view, d])
    undetected = []
    for culprit in sorted(injected):
        for b in benign:
            if b not in down and culprit not in fsets[b]:
                undetected.append({"culprit": culprit, "missing_at": b})
    return FDReport({k: sorted(v) for k, v in fsets.items()}, dict(injected),
                    not undetected, not false_acc, false_acc, undetected)


def view_summary(records: list[dict], replicas: Optional[set] = None) -> dict:
    """Per view, per sn: operations committed and by whom.

    ``{view: {sn: {"ops": [...], "by": [...]}}}`` using only commit records
    (not lazy copies).  ``replicas`` restricts the committers considered.
    """
    out: dict = defaultdict(dict)
    for r in records:
        if r["k"] != "commit" or (replicas is not None and r["who"] not in replicas):
            continue
        slot = out[r["view"]].setdefault(r["sn"], {"ops": r["ops"], "by": []})
        if slot["ops"] != r["ops"]:
            slot.setdefault("conflict", []).append({"who": r["who"], "ops": r["ops"]})
        if r["who"] not in slot["by"]:
            slot["by"].append(r["who"])
    for view in out:
        for slot in out[view].values():
            slot["by"].sort()
    return {v: dict(sorted(out[v].items())) for v in sorted(out)}


def sg_committed(records: list[dict]) -> dict:
    """``{view: {sn: ops}}`` for entries committed by every active of the view."""
    n = _meta(records).get("n", 3)
    res: dict = {}
    for view, slots in view_summary(records).items():
        actives = {str(a) for a in synchronous_group_for_view(view, n).actives}
        for sn, slot in slots.items():
            if actives <= set(slot["by"]):
                res.setdefault(view, {})[sn] = slot["ops"]
    return res


def new_view_summary(records: list[dict]) -> dict:
    """``{view: [[sn, ops, source_view], ...]}`` as installed by the primary."""
    out = {}
    n = _meta(records).get("n", 3)
    for r in records:
        if r["k"] == "new-view" and r["who"] == str(synchronous_group_for_view(r["view"], n).primary):
            out[r["view"]] = [[sn, ops, src] for sn, _d, ops, src in r["entries"]]
    return out
