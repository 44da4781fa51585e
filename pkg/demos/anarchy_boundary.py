"""Two almost identical runs on either side of the anarchy boundary.

``anarchy_demo`` combines a non-crash fault with a partition at t=1, which
is more than the protocol tolerates, and the checker finds two clients that
saw different requests at the same slot.  ``anarchy_twin`` keeps the
Byzantine replica but removes the partition, and stays consistent.

    python demos/anarchy_boundary.py
"""

from xpaxos import load, simulate
from xpaxos.checkers import check_consistency


def describe(name):
    res = simulate(load(name))
    worst = max((c for _, c, _ in res.census_log), key=lambda c: c.crash_count + c.noncrash_count
                + c.partitioned_count)
    v = check_consistency(res.records)
    print(f"{name}")
    print(f"  worst census: crash={worst.crash_count} non-crash={worst.noncrash_count} "
          f"partitioned={worst.partitioned_count}  anarchy={'yes' if v.ever_anarchy else 'no'}")
    print(f"  verdict: {v.verdict}" + (f"  ({v.reason})" if v.reason else ""))
    for rec in v.evidence:
        print(f"    {rec['who']} sn={rec['sn']} view={rec['view']}")


if __name__ == "__main__":
    describe("anarchy_demo")
    print()
    describe("anarchy_twin")
