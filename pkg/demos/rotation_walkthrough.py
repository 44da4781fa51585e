"""Walk a three-replica group through three crashes.

Each crash takes out an active replica; the next view's synchronous group
leaves that replica out.  The script prints the group of every installed
view, how many requests each view delivered, and the checker verdicts.

    python demos/rotation_walkthrough.py
"""

from collections import Counter

from xpaxos import load, simulate, synchronous_group_for_view
from xpaxos.checkers import check_consistency, check_liveness
from xpaxos.suites import liveness_deadline


def main():
    sc = load("crash_rotation")
    res = simulate(sc)

    crashes = [(r["t"], r["who"]) for r in res.records if r["k"] == "crash"]
    installs = [(r["t"], r["view"]) for r in res.records
                if r["k"] == "new-view" and r["who"] == str(synchronous_group_for_view(r["view"], sc.n).primary)]
    per_view = Counter(r["view"] for r in res.records if r["k"] == "deliver")

    print(f"{sc.name}: n={sc.n}, horizon={sc.horizon}")
    for t, who in crashes:
        print(f"  t={t:>6}  {who} crashes")
    print()
    for view in sorted(per_view):
        sg = synchronous_group_for_view(view, sc.n)
        when = dict((v, t) for t, v in installs).get(view, 0)
        actives = ", ".join(str(a) for a in sg.actives)
        print(f"  view {view}  installed at t={when:>6}  primary {sg.primary}  actives {{{actives}}}"
              f"  delivered {per_view[view]}")

    cons = check_consistency(res.records)
    live = check_liveness(res.records, liveness_deadline(sc))
    print()
    print(f"consistency {cons.verdict}; liveness {'ok' if live.ok else 'MISSING'} "
          f"({live.checked} requests issued before t={live.deadline})")


if __name__ == "__main__":
    main()
