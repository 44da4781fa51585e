"""Frozen per-view outcomes of the two view-change walkthroughs.

Each golden names a shipped scenario and the commit sets it must produce:
for every view, the sequence numbers committed by all actives of that view
and the request label (the last word of the operation) at each.  Each
value follows from the scripted schedule and the selection rule, as
traced below.

``recovery_fd_off`` (fault detection off)
    view 0: the primary s0 only hears back about r0 before the partition
    of s1 forces a view change.  View 1 {s0,s2} learns r0 alone (s1 is cut
    off, so its commits of r1 and r2 are not among the n-t view-change
    messages) and commits the new request r3 at sn 2.  s0 then reports only
    r0 at the change to view 2.  The selection takes sn 2 from s2's view-1
    entry (r3) over s1's view-0 entry (r1), and sn 3 from s1's log (r2).
    r1 survives only because its client re-sends it; it is committed anew
    at sn 4.

``recovery_fd_on`` (fault detection on)
    prepare logs travel with view-change messages, so view 1 re-proposes
    r1 and r2 from s0's prepare log and appends r3.  At the change to view
    2, s0 withholds everything past r0; the missing prepare for r3, which
    s2 holds as committed in view 1, convicts s0 and all four requests keep
    their slots.
"""

from __future__ import annotations

from .checkers import check_fault_detection, sg_committed

GOLDENS = {
    "recovery_fd_off": {
        "fd": False,
        "commits": {
            0: {1: "r0"},
            1: {1: "r0", 2: "r3"},
            2: {1: "r0", 2: "r3", 3: "r2", 4: "r1"},
        },
        "fsets": {"s0": [], "s1": [], "s2": []},
    },
    "recovery_fd_on": {
        "fd": True,
        "commits": {
            0: {1: "r0"},
            1: {1: "r0", 2: "r1", 3: "r2", 4: "r3"},
            2: {1: "r0", 2: "r1", 3: "r2", 4: "r3"},
        },
        "fsets": {"s0": ["s0"], "s1": ["s0"], "s2": ["s0"]},
    },
}


def label(ops: list[str]) -> str:
    return " ".join(op.split()[-1] for op in ops)


def summarize(records: list[dict]) -> dict:
    """``{view: {sn: label}}`` over entries committed by every active."""
    return {view: {sn: label(ops) for sn, ops in slots.items()}
            for view, slots in sg_committed(records).items()}


def compare(name: str, records: list[dict]) -> list[str]:
    """Human-readable differences between a run and its golden; empty if equal."""
    want = GOLDENS[name]
    got = summarize(records)
    diffs = []
    for view in sorted(set(want["commits"]) | set(got)):
        w, g = want["commits"].get(view), got.get(view)
        if w != g:
            diffs.append(f"view {view}: expected {w}, got {g}")
    fsets = check_fault_detection(records).fsets
    if fsets != want["fsets"]:
        diffs.append(f"fsets: expected {want['fsets']}, got {fsets}")
    return diffs
