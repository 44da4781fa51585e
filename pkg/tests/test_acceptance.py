"""Acceptance criteria 1-10.  Each test records one PASS/FAIL line, shown in
the "acceptance criteria" section of the pytest summary."""

import hashlib
import itertools
import time
from concurrent.futures import ProcessPoolExecutor
from decimal import Decimal

import pytest
from published_tables import (
    AVAILABILITY_T1,
    AVAILABILITY_T2,
    CONSISTENCY_T1,
    CONSISTENCY_T2,
    KNOWN_PRINTED_ANOMALIES,
    SYNCHRONY_COLUMNS,
)

from xpaxos import goldens, reliability, suites
from xpaxos.checkers import check_consistency, check_liveness, new_view_summary
from xpaxos.cli import _suite_job
from xpaxos.core import synchronous_group_for_view
from xpaxos.scenario import load, validate
from xpaxos.sim import simulate

SAFETY_SEEDS = 200
FD_SEEDS = 60


@pytest.fixture(scope="module")
def safety_runs():
    start = time.monotonic()
    runs = {cls: suites.run_suite(cls, range(SAFETY_SEEDS)) for cls in suites.SAFETY_CLASSES}
    return runs, time.monotonic() - start


@pytest.fixture(scope="module")
def fd_runs():
    return {cls: suites.run_suite(cls, range(FD_SEEDS)) for cls in suites.FD_CLASSES}


def test_c1_safety_outside_anarchy(acceptance, safety_runs):
    runs, elapsed = safety_runs
    with acceptance(1, "consistency outside anarchy") as a:
        total = sum(len(v) for v in runs.values())
        unsafe = [(c, v.seed) for c, vs in runs.items() for v in vs if not v.safe]
        anarchic = [(c, v.seed) for c, vs in runs.items() for v in vs if v.ever_anarchy]
        sizes = {v.n for vs in runs.values() for v in vs}
        a.note = f"{total} runs, n in {sorted(sizes)}, {elapsed:.0f}s"
        assert total == SAFETY_SEEDS * 4 and sizes == {3, 5}
        assert not anarchic, anarchic[:5]
        assert not unsafe, unsafe[:5]
        assert elapsed < 300


def test_c2_anarchy_boundary(acceptance):
    with acceptance(2, "anarchy boundary pair") as a:
        demo = check_consistency(simulate(load("anarchy_demo")).records)
        twin = check_consistency(simulate(load("anarchy_twin")).records)
        a.note = f"demo {demo.verdict}, twin {twin.verdict}"
        assert not demo.safe and demo.ever_anarchy
        assert twin.safe and not twin.ever_anarchy


def test_c3_liveness_and_rotation(acceptance, safety_runs):
    runs, _ = safety_runs
    with acceptance(3, "liveness and group rotation") as a:
        stuck = [(c, v.seed) for c, vs in runs.items() for v in vs if not v.live]
        rotation = [(c, v.seed) for c, vs in runs.items() for v in vs if not v.rotation_ok]
        rotation_order = [("s0", "s1"), ("s0", "s2"), ("s1", "s2")]
        for view in range(6):
            sg = synchronous_group_for_view(view, 3)
            assert (str(sg.primary), str(sg.followers[0])) == rotation_order[view % 3]
        res = simulate(load("crash_rotation"))
        assert sorted(new_view_summary(res.records)) == [1, 2, 3]
        assert check_liveness(res.records, suites.liveness_deadline(res.scenario)).ok
        a.note = f"{sum(len(v) for v in runs.values())} runs"
        assert not stuck, stuck[:5]
        assert not rotation, rotation[:5]


def test_c4_golden_walkthroughs(acceptance):
    with acceptance(4, "golden view-change walkthroughs (frozen commit sets)") as a:
        diffs = {name: goldens.compare(name, simulate(load(name)).records)
                 for name in sorted(goldens.GOLDENS)}
        a.note = ", ".join(f"{k} {'match' if not v else 'MISMATCH'}" for k, v in diffs.items())
        assert not any(diffs.values()), diffs


@pytest.mark.xfail(strict=True, reason="faithful selection recovers r2 at sn 3 from s1's "
                                       "view-0 commit log")
def test_c4_literal_fd_off_loses_r2(acceptance):
    with acceptance("4b", "literal reading: FD-off run loses r2") as a:
        final = goldens.summarize(simulate(load("recovery_fd_off")).records)[2]
        a.note = f"view 2 commits {final}"
        assert "r2" not in final.values()


def test_c5_fault_detection(acceptance, fd_runs, safety_runs):
    runs, _ = safety_runs
    with acceptance(5, "fault detection completeness and accuracy") as a:
        bad = [(c, v.seed) for c, vs in fd_runs.items() for v in vs if not v.ok]
        benign = list(suites.run_suite("fault-free", range(50)))
        benign += [v for c, vs in runs.items() for v in vs]
        inaccurate = [(v.cls, v.seed) for v in benign if not v.accuracy_ok]
        inaccurate += [(c, v.seed) for c, vs in fd_runs.items() for v in vs if not v.accuracy_ok]
        a.note = (f"{FD_SEEDS} seeds x {len(fd_runs)} attack classes, "
                  f"accuracy over {len(benign)} other runs")
        assert all(len(vs) >= 50 for vs in fd_runs.values())
        assert not bad, bad[:5]
        assert not inaccurate, inaccurate[:5]


def test_c6_message_economy(acceptance):
    with acceptance(6, "inter-replica messages per request/batch") as a:
        one = simulate(load("faultfree_t1"))
        delivered = sum(1 for r in one.records if r["k"] == "deliver")
        two = simulate(validate({"version": 1, "n": 5, "seed": 3, "horizon": 20000,
                                 "lazy": False, "batch": 4, "batch_timeout": 50,
                                 "workload": {"clients": 8, "requests": 5}}))
        batches = max(r.ex for r in two.replicas)
        t = 2
        a.note = (f"t=1: {one.inter_replica}/{delivered} requests, "
                  f"t=2: {two.inter_replica}/{batches} batches")
        assert one.inter_replica == 2 * delivered
        assert two.inter_replica == (t + t * (t + 1)) * batches


def test_c7_oracle_matches_closed_forms(acceptance):
    with acceptance(7, "enumeration oracle vs closed forms, 1e-10") as a:
        start = time.monotonic()
        grid = [Decimal(x) for x in ("0.9", "0.99", "0.999", "0.9999")]
        worst = Decimal(0)
        count = 0
        for model in reliability.MODELS:
            for n in (3, 4, 5, 7):
                for b, c, s in itertools.product(grid, repeat=3):
                    if c > b:
                        continue
                    fp = reliability.FaultProbabilities(b, c, s)
                    want = reliability.enumeration_oracle(model, n, fp)
                    got = reliability.CLOSED_FORMS[model](n, fp)
                    worst = max(worst, abs(want - got) / max(abs(want), Decimal("1e-300")))
                    count += 1
        elapsed = time.monotonic() - start
        a.note = f"{count} points, worst relative error {float(worst):.1e}, {elapsed:.1f}s"
        assert worst <= Decimal("1e-10") and elapsed < 60


def test_c8_published_numbers(acceptance):
    with acceptance(8, "published examples and tables") as a:
        R = reliability
        assert R.nines_of(0.999) == 3
        ex1 = R.FaultProbabilities(Decimal("0.9999"), Decimal("0.999"), Decimal("0.999"))
        ex2 = R.FaultProbabilities(Decimal("0.9999"), Decimal("0.999"), Decimal("0.9999"))
        for fp, want in ((ex1, (3, 5, 7)), (ex2, (3, 6, 7))):
            got = (R.nines_of(R.p_consistent_cft(3, fp)), R.nines_of(R.p_consistent_xpaxos(1, fp)),
                   R.nines_of(R.p_consistent_bft(1, fp)))
            assert got == want
        av = R.availability_nines(1, 3, 5)
        assert (av["XPaxos"], av["CFT"]) == (5, 4)
        mismatches = []
        cells = 0
        for t, table in ((1, CONSISTENCY_T1), (2, CONSISTENCY_T2)):
            for (b, c), (cft, xs, bft) in table.items():
                for s, x in zip(SYNCHRONY_COLUMNS, xs):
                    v = R.consistency_nines(t, b, c, s)
                    cells += 3
                    for name, printed in (("CFT", cft), ("XPaxos", x), ("BFT", bft)):
                        if v[name] != printed:
                            mismatches.append(((t, b, c, s), name, printed, v[name]))
        for t, table in ((1, AVAILABILITY_T1), (2, AVAILABILITY_T2)):
            for av_n, (cfts, bft, xp) in table.items():
                for b, cft in cfts.items():
                    v = R.availability_nines(t, av_n, b)
                    cells += 3
                    for name, printed in (("CFT", cft), ("BFT", bft), ("XPaxos", xp)):
                        if v[name] != printed:
                            mismatches.append(((t, av_n, b), name, printed, v[name]))
        for key, name, printed, computed in mismatches:
            print(f"  table cell {key} {name}: printed {printed}, computed {computed}")
        a.note = (f"{cells} cells; mismatches (printed->computed): "
                  + (", ".join(f"{k}:{p}->{c}" for k, _, p, c in mismatches) or "none"))
        # the t=1 tables must regenerate exactly
        assert not [m for m in mismatches if m[0][0] == 1]
        # every t=2 difference is one of the two cells recorded as misprints
        assert {m[0]: (m[2], m[3]) for m in mismatches} == KNOWN_PRINTED_ANOMALIES


def test_c9_crossover(acceptance):
    with acceptance(9, "t=1 crossover p_available > p_benign^1.5") as a:
        grid = [Decimal(x) for x in ("0.9", "0.99", "0.999", "0.9999")]
        margin = Decimal("1e-12")
        checked = above = 0
        for b, c, s in itertools.product(grid, repeat=3):
            if c > b:
                continue
            fp = reliability.FaultProbabilities(b, c, s)
            gap = reliability.p_consistent_xpaxos(1, fp) - reliability.p_consistent_bft(1, fp)
            edge = fp.p_available - b ** Decimal("1.5")
            assert abs(gap) > margin and abs(edge) > margin
            assert (gap > 0) == (edge > 0), (b, c, s)
            checked += 1
            above += edge > 0
        a.note = f"{checked} grid points, {above} on the XPaxos side"
        assert 0 < above < checked


def test_c10_determinism(acceptance):
    with acceptance(10, "byte-identical traces, serial and parallel") as a:
        names = ["crash_rotation", "recovery_fd_on", "anarchy_demo"]
        first = [hashlib.sha256(simulate(load(n)).trace_bytes()).hexdigest() for n in names]
        second = [hashlib.sha256(simulate(load(n)).trace_bytes()).hexdigest() for n in names]
        assert first == second
        jobs = [(c, s) for c in ("combined", "byzantine", "fork-i") for s in range(4)]
        serial = [suites.trace_digest(c, s) for c, s in jobs]
        serial_verdicts = [_suite_job(j) for j in jobs]
        with ProcessPoolExecutor(2) as pool:
            parallel = list(pool.map(suites.trace_digest, *zip(*jobs)))
            parallel_verdicts = list(pool.map(_suite_job, jobs))
        a.note = f"{len(names)} scripts twice, {len(jobs)} suite runs serial vs 2 workers"
        assert serial == parallel
        assert serial_verdicts == parallel_verdicts
