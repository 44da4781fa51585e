"""Nines-of-reliability calculus for CFT, BFT and XPaxos (XFT).

All closed forms are evaluated in :class:`decimal.Decimal` with 60
significant digits.  Inputs of twenty nines (``1 - 1e-20``) are
indistinguishable from 1.0 in binary doubles, so float inputs are converted
through ``str`` before use.

The enumeration oracle classifies every labelled world (machine state x
synchrony for each replica) independently of the closed forms, and is the
reference the formulas are checked against.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from decimal import Decimal, localcontext
from functools import lru_cache
from typing import Iterable, Union

PRECISION = 60
Number = Union[Decimal, float, int, str]

INFINITE_NINES = math.inf


def _dec(x: Number) -> Decimal:
    if isinstance(x, Decimal):
        return x
    if isinstance(x, float):
        return Decimal(repr(x))
    return Decimal(x)


def from_nines(nines: int | float) -> Decimal:
    """Probability with exactly ``nines`` leading nines: ``1 - 10**-nines``."""
    with localcontext() as ctx:
        ctx.prec = PRECISION
        return Decimal(1) - Decimal(10) ** (-_dec(nines))


@dataclass(frozen=True)
class FaultProbabilities:
    """Per-replica i.i.d. fault probabilities.

    Only ``p_benign``, ``p_correct`` and ``p_synchrony`` are free; the other
    three are derived.
    """

    p_benign: Decimal
    p_correct: Decimal
    p_synchrony: Decimal

    def __post_init__(self):
        for name in ("p_benign", "p_correct", "p_synchrony"):
            value = _dec(getattr(self, name))
            object.__setattr__(self, name, value)
            if not Decimal(0) <= value <= Decimal(1):
                raise ValueError(f"{name}={value} outside [0, 1]")
        if self.p_correct > self.p_benign:
            raise ValueError("p_correct must not exceed p_benign")

    @classmethod
    def from_nines(cls, benign: float, correct: float, synchrony: float) -> "FaultProbabilities":
        return cls(from_nines(benign), from_nines(correct), from_nines(synchrony))

    @property
    def p_crash(self) -> Decimal:
        return self.p_benign - self.p_correct

    @property
    def p_non_crash(self) -> Decimal:
        return 1 - self.p_benign

    @property
    def p_available(self) -> Decimal:
        with localcontext() as ctx:
            ctx.prec = PRECISION
            return self.p_correct * self.p_synchrony


def nines_of(p: Number) -> int | float:
    """``floor(-log10(1 - p))``; returns ``math.inf`` for ``p == 1``.

    Values within a relative 1e-12 of an exact decade snap onto it, so
    ``nines_of(0.99999) == 5`` despite binary rounding of the literal.
    """
    p = _dec(p)
    if p < 0 or p > 1:
        raise ValueError(f"probability {p} outside [0, 1]")
    if p == 1:
        return INFINITE_NINES
    with localcontext() as ctx:
        ctx.prec = PRECISION
        x = -(Decimal(1) - p).log10()
        nearest = x.to_integral_value()
        if nearest != 0 and abs(x - nearest) <= abs(nearest) * Decimal("1e-12"):
            return int(nearest)
        if nearest == 0 and abs(x) <= Decimal("1e-12"):
            return 0
        return int(x.to_integral_value(rounding="ROUND_FLOOR"))


def _pow(base: Decimal, k: int) -> Decimal:
    # Decimal refuses 0 ** 0; the combinatorial sums need it to be 1.
    return Decimal(1) if k == 0 else base ** k


def _binom(n: int, k: int) -> Decimal:
    return Decimal(math.comb(n, k))


def _xft_threshold(n: int) -> int:
    return (n - 1) // 2


def _bft_threshold(n: int) -> int:
    return (n - 1) // 3


def p_consistent_cft(n: int, fp: FaultProbabilities) -> Decimal:
    if n < 1:
        raise ValueError("n must be positive")
    with localcontext() as ctx:
        ctx.prec = PRECISION
        return _pow(fp.p_benign, n)


def p_consistent_xpaxos_n(n: int, fp: FaultProbabilities) -> Decimal:
    """Consistency of XPaxos with ``n`` replicas and ``t = floor((n-1)/2)``."""
    t = _xft_threshold(n)
    with localcontext() as ctx:
        ctx.prec = PRECISION
        p_nc, p_crash, p_correct = fp.p_non_crash, fp.p_crash, fp.p_correct
        p_sync = fp.p_synchrony
        total = _pow(fp.p_benign, n)
        for i in range(1, t + 1):
            outer = _binom(n, i) * _pow(p_nc, i)
            middle = Decimal(0)
            for j in range(0, t - i + 1):
                inner = Decimal(0)
                for k in range(0, t - i - j + 1):
                    inner += (_binom(n - i - j, k) * _pow(p_sync, (n - i - j - k))
                              * _pow((1 - p_sync), k))
                middle += _binom(n - i, j) * _pow(p_crash, j) * _pow(p_correct, (n - i - j)) * inner
            total += outer * middle
        return total


def p_consistent_xpaxos(t: int, fp: FaultProbabilities) -> Decimal:
    return p_consistent_xpaxos_n(2 * t + 1, fp)


def p_consistent_bft_n(n: int, fp: FaultProbabilities) -> Decimal:
    with localcontext() as ctx:
        ctx.prec = PRECISION
        return sum((_binom(n, i) * _pow(fp.p_non_crash, i) * _pow(fp.p_benign, (n - i))
                    for i in range(0, _bft_threshold(n) + 1)), Decimal(0))


def p_consistent_bft(t: int, fp: FaultProbabilities) -> Decimal:
    return p_consistent_bft_n(3 * t + 1, fp)


def p_available_xpaxos_n(n: int, fp: FaultProbabilities) -> Decimal:
    with localcontext() as ctx:
        ctx.prec = PRECISION
        pa = fp.p_available
        lo = _xft_threshold(n) + 1
        return sum((_binom(n, i) * _pow(pa, i) * _pow((1 - pa), (n - i)) for i in range(lo, n + 1)),
                   Decimal(0))


def p_available_xpaxos(t: int, fp: FaultProbabilities) -> Decimal:
    return p_available_xpaxos_n(2 * t + 1, fp)


def p_available_cft_n(n: int, fp: FaultProbabilities) -> Decimal:
    with localcontext() as ctx:
        ctx.prec = PRECISION
        pa = fp.p_available
        lo = n - _xft_threshold(n)
        return sum((_binom(n, i) * _pow(pa, i) * _pow((fp.p_benign - pa), (n - i))
                    for i in range(lo, n + 1)), Decimal(0))


def p_available_cft(t: int, fp: FaultProbabilities) -> Decimal:
    return p_available_cft_n(2 * t + 1, fp)


def p_available_bft_n(n: int, fp: FaultProbabilities) -> Decimal:
    with localcontext() as ctx:
        ctx.prec = PRECISION
        pa = fp.p_available
        lo = n - _bft_threshold(n)
        return sum((_binom(n, i) * _pow(pa, i) * _pow((1 - pa), (n - i)) for i in range(lo, n + 1)),
                   Decimal(0))


def p_available_bft(t: int, fp: FaultProbabilities) -> Decimal:
    return p_available_bft_n(3 * t + 1, fp)


# --------------------------------------------------------------------------
# enumeration oracle

CORRECT, CRASH, NON_CRASH = 0, 1, 2

MODELS = (
    "cft-consistency",
    "bft-consistency",
    "xft-consistency",
    "cft-availability",
    "bft-availability",
    "xft-availability",
)


def _world_ok(model: str, n: int, states: tuple[int, ...], sync: tuple[bool, ...]) -> bool:
    non_crash = sum(1 for s in states if s == NON_CRASH)
    crash = sum(1 for s in states if s == CRASH)
    available = sum(1 for s, y in zip(states, sync) if s == CORRECT and y)
    partitioned = sum(1 for s, y in zip(states, sync) if s == CORRECT and not y)
    half = (n - 1) // 2
    third = (n - 1) // 3
    if model == "cft-consistency":
        return non_crash == 0
    if model == "bft-consistency":
        return non_crash <= third
    if model == "xft-consistency":
        return non_crash == 0 or non_crash + crash + partitioned <= half
    if model == "cft-availability":
        return non_crash == 0 and available >= n - half
    if model == "bft-availability":
        return available >= n - third
    if model == "xft-availability":
        return available >= half + 1
    raise ValueError(f"unknown model {model!r}")


@lru_cache(maxsize=None)
def _world_signatures(model: str, n: int) -> dict[tuple[int, ...], int]:
    """Multiplicity of each world signature among the labelled worlds the
    model deems good.

    A signature is (non_crash, crash, correct_sync, correct_unsync,
    faulty_sync, faulty_unsync).  Every labelled world is visited and
    classified on its own; the signature only serves to share the
    probability arithmetic between worlds with identical weight.
    """
    counts: dict[tuple[int, ...], int] = {}
    for states in itertools.product((CORRECT, CRASH, NON_CRASH), repeat=n):
        for sync in itertools.product((True, False), repeat=n):
            if not _world_ok(model, n, states, sync):
                continue
            key = (
                sum(1 for s in states if s == NON_CRASH),
                sum(1 for s in states if s == CRASH),
                sum(1 for s, y in zip(states, sync) if s == CORRECT and y),
                sum(1 for s, y in zip(states, sync) if s == CORRECT and not y),
                sum(1 for s, y in zip(states, sync) if s != CORRECT and y),
                sum(1 for s, y in zip(states, sync) if s != CORRECT and not y),
            )
            counts[key] = counts.get(key, 0) + 1
    return counts


def enumeration_oracle(model: str, n: int, fp: FaultProbabilities) -> Decimal:
    """Sum of probabilities of all good labelled worlds.

    A world assigns each replica a machine state (correct, crash, non-crash)
    and a synchrony bit.  Its probability is the product of per-replica
    factors, synchrony being independent of the machine state.
    """
    if n > 9:
        raise ValueError("enumeration oracle supports n <= 9")
    with localcontext() as ctx:
        ctx.prec = PRECISION
        ps, pu = fp.p_synchrony, 1 - fp.p_synchrony
        total = Decimal(0)
        for (nc, cr, cs, cu, fs, fu), mult in _world_signatures(model, n).items():
            weight = (_pow(fp.p_non_crash, nc) * _pow(fp.p_crash, cr)
                      * _pow(fp.p_correct, (cs + cu)) * _pow(ps, (cs + fs)) * _pow(pu, (cu + fu)))
            total += mult * weight
        return total


# --------------------------------------------------------------------------
# nines tables

CLOSED_FORMS = {
    "cft-consistency": p_consistent_cft,
    "bft-consistency": p_consistent_bft_n,
    "xft-consistency": p_consistent_xpaxos_n,
    "cft-availability": p_available_cft_n,
    "bft-availability": p_available_bft_n,
    "xft-availability": p_available_xpaxos_n,
}


def consistency_nines(t: int, benign: int, correct: int, synchrony: int) -> dict[str, int]:
    fp = FaultProbabilities.from_nines(benign, correct, synchrony)
    return {
        "CFT": nines_of(p_consistent_cft(2 * t + 1, fp)),
        "XPaxos": nines_of(p_consistent_xpaxos(t, fp)),
        "BFT": nines_of(p_consistent_bft(t, fp)),
    }


def availability_nines(t: int, available: int, benign: int) -> dict[str, int]:
    # synchrony is irrelevant beyond p_available; put it all on p_correct.
    fp = FaultProbabilities(from_nines(benign), from_nines(available), Decimal(1))
    return {
        "CFT": nines_of(p_available_cft(t, fp)),
        "BFT": nines_of(p_available_bft(t, fp)),
        "XPaxos": nines_of(p_available_xpaxos(t, fp)),
    }


def consistency_table(t: int, benign_range: Iterable[int] = range(3, 9),
                      synchrony_range: Iterable[int] = range(2, 7)) -> list[dict]:
    """Rows of the nines-of-consistency table for ``t`` (``9_correct`` from 2
    up to ``9_benign - 1``)."""
    rows = []
    synchrony_range = list(synchrony_range)
    for b in benign_range:
        for c in range(2, b):
            row = {"benign": b, "correct": c, "xpaxos": {}}
            for s in synchrony_range:
                values = consistency_nines(t, b, c, s)
                row["xpaxos"][s] = values["XPaxos"]
                row["cft"] = values["CFT"]
                row["bft"] = values["BFT"]
            rows.append(row)
    return rows


def availability_table(t: int, available_range: Iterable[int] = range(2, 7),
                       benign_range: Iterable[int] = range(3, 9)) -> list[dict]:
    rows = []
    benign_range = list(benign_range)
    for a in available_range:
        row = {"available": a, "cft": {}}
        for b in benign_range:
            if b > a:
                row["cft"][b] = availability_nines(t, a, b)["CFT"]
        # BFT and XPaxos availability depend on p_available alone.
        values = availability_nines(t, a, a + 1)
        row["bft"] = values["BFT"]
        row["xpaxos"] = values["XPaxos"]
        rows.append(row)
    return rows


# --------------------------------------------------------------------------
# empirical nines relations, evaluated exactly as stated

def predicted_consistency_gain_over_cft(t: int, b: int, c: int, s: int) -> int:
    """Predicted 9ofC(XPaxos) - 9ofC(CFT) for t in {1, 2}."""
    if t == 1:
        if b > s and s == c:
            return c - 1
        return min(s, c)
    if t == 2:
        if b > s and s == c > 1:
            return 2 * c - 2
        if s > 2 * b and b == c:
            return 2 * c
        return 2 * min(s, c) - 1
    raise ValueError("relations are stated for t in {1, 2} only")


def predicted_bft_gain_over_xpaxos(t: int, b: int, c: int, s: int) -> int:
    """Predicted 9ofC(BFT) - 9ofC(XPaxos) for t in {1, 2}."""
    if t == 1:
        if b > s and s == c:
            return b - c + 1
        return b - min(c, s)
    if t == 2:
        if b > s and s == c:
            return 2 * (b - c) + 1
        if s > 2 * b and b == c:
            return -1
        return 2 * (b - min(c, s))
    raise ValueError("relations are stated for t in {1, 2} only")


def predicted_availability_gain_over_cft(t: int, a: int, b: int) -> int:
    """Predicted 9ofA(XPaxos) - 9ofA(CFT) for t in {1, 2}."""
    if t == 1:
        return max(2 * a - b, 0)
    if t == 2:
        if b < 3 * a:
            return 3 * a - b
        if b < 4 * a:
            return 1
        return 0
    raise ValueError("relations are stated for t in {1, 2} only")


def predicted_xpaxos_availability(t: int, a: int) -> int:
    if t == 1:
        return 2 * a - 1
    if t == 2:
        return 3 * a - 1
    raise ValueError("relations are stated for t in {1, 2} only")


def predicted_bft_availability(t: int, a: int) -> int:
    if t == 1:
        return 2 * a - 1
    if t == 2:
        return 3 * a - 2
    raise ValueError("relations are stated for t in {1, 2} only")


@dataclass(frozen=True)
class RelationMismatch:
    relation: str
    t: int
    inputs: tuple
    predicted: int
    computed: int


def check_relations(t: int, lo: int = 1, hi: int = 20) -> tuple[int, list[RelationMismatch]]:
    """Compare every printed relation against the closed forms on the integer
    nines cube [lo, hi]; returns (cases checked, mismatches)."""
    checked = 0
    mismatches: list[RelationMismatch] = []
    for b in range(lo, hi + 1):
        for c in range(lo, b + 1):
            for s in range(lo, hi + 1):
                v = consistency_nines(t, b, c, s)
                checked += 2
                gain = v["XPaxos"] - v["CFT"]
                pred = predicted_consistency_gain_over_cft(t, b, c, s)
                if gain != pred:
                    mismatches.append(RelationMismatch("xpaxos-cft-consistency", t, (b, c, s), pred, gain))
                gap = v["BFT"] - v["XPaxos"]
                pred = predicted_bft_gain_over_xpaxos(t, b, c, s)
                if gap != pred:
                    mismatches.append(RelationMismatch("bft-xpaxos-consistency", t, (b, c, s), pred, gap))
    for a in range(lo, hi + 1):
        for b in range(a + 1, hi + 1):
            v = availability_nines(t, a, b)
            checked += 3
            for name, pred, got in (
                ("xpaxos-cft-availability", predicted_availability_gain_over_cft(t, a, b),
                 v["XPaxos"] - v["CFT"]),
                ("xpaxos-availability", predicted_xpaxos_availability(t, a), v["XPaxos"]),
                ("bft-availability", predicted_bft_availability(t, a), v["BFT"]),
            ):
                if pred != got:
                    mismatches.append(RelationMismatch(name, t, (a, b), pred, got))
    return checked, mismatches


def render_tables(t: int, kind: str = "consistency",
                  benign_range: Iterable[int] = range(3, 9),
                  synchrony_range: Iterable[int] = range(2, 7),
                  available_range: Iterable[int] = range(2, 7)) -> str:
    """Aligned plain-text rendering of a consistency or availability table."""
    benign_range = list(benign_range)
    lines = []
    if kind == "consistency":
        synchrony_range = list(synchrony_range)
        header = ["9benign", "CFT", "9correct"] + [f"s={s}" for s in synchrony_range] + ["BFT"]
        lines.append(" ".join(f"{h:>8}" for h in header))
        for row in consistency_table(t, benign_range, synchrony_range):
            cells = [row["benign"], row["cft"], row["correct"]]
            cells += [row["xpaxos"][s] for s in synchrony_range] + [row["bft"]]
            lines.append(" ".join(f"{c:>8}" for c in cells))
    elif kind == "availability":
        header = ["9avail"] + [f"b={b}" for b in benign_range] + ["BFT", "XPaxos"]
        lines.append(" ".join(f"{h:>8}" for h in header))
        for row in availability_table(t, available_range, benign_range):
            cells = [row["available"]]
            cells += [row["cft"].get(b, "-") for b in benign_range] + [row["bft"], row["xpaxos"]]
            lines.append(" ".join(f"{c:>8}" for c in cells))
    else:
        raise ValueError(f"unknown table kind {kind!r}")
    return "\n".join(lines) + "\n"
