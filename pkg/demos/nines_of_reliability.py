"""How many nines of consistency and availability each replication model
buys, for a few fault profiles.

Probabilities are given as nines: 4 means 0.9999.  The last block sweeps
p_correct and p_synchrony at fixed p_benign and marks where XPaxos at t=1
stops beating BFT.

    python demos/nines_of_reliability.py
"""

from decimal import Decimal

from xpaxos import reliability as R


def profile(benign, correct, synchrony, t=1):
    fp = R.FaultProbabilities.from_nines(benign, correct, synchrony)
    n = 2 * t + 1
    cons = (R.p_consistent_cft(n, fp), R.p_consistent_xpaxos(t, fp), R.p_consistent_bft(t, fp))
    avail = (R.p_available_cft(t, fp), R.p_available_xpaxos(t, fp), R.p_available_bft(t, fp))
    print(f"t={t} benign={benign} correct={correct} synchrony={synchrony}")
    print("             CFT  XPaxos   BFT")
    print("  consistency " + " ".join(f"{R.nines_of(p):>5}" for p in cons))
    print("  availability" + " ".join(f"{R.nines_of(p):>5}" for p in avail))


def crossover(benign=4):
    print(f"\nXPaxos(t=1) vs BFT(t=1) consistency at benign={benign}")
    pb = R.from_nines(benign)
    for correct in range(1, benign + 1):
        row = []
        for synchrony in range(1, 7):
            fp = R.FaultProbabilities(pb, R.from_nines(correct), R.from_nines(synchrony))
            better = R.p_consistent_xpaxos(1, fp) > R.p_consistent_bft(1, fp)
            row.append("X" if better else ".")
        print(f"  correct={correct}  " + " ".join(row) + "   (synchrony 1..6)")
    print(f"  X where p_available > p_benign^1.5 = {pb ** Decimal('1.5'):.6f}")


if __name__ == "__main__":
    profile(4, 3, 3)
    print()
    profile(4, 3, 4)
    print()
    profile(5, 4, 5, t=2)
    crossover()
