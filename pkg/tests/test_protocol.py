"""Whole-protocol behaviour on small scripted runs."""

import hashlib

import pytest

from xpaxos import sim as simmod
from xpaxos.checkers import check_consistency, check_liveness, new_view_summary
from xpaxos.client import ClientBusy
from xpaxos.core import synchronous_group_for_view
from xpaxos.replica import KVStore, ProtocolConfig
from xpaxos.scenario import load, validate
from xpaxos.sim import Simulator, simulate


def faultfree(n, requests=12, **kw):
    doc = {"version": 1, "n": n, "seed": 4, "horizon": 20_000, "lazy": False,
           "workload": {"clients": 2, "requests": requests}}
    doc.update(kw)
    return validate(doc)


def test_kvstore_semantics():
    kv = KVStore()
    assert kv.execute(b"SET a 1") == b"OK"
    assert kv.execute(b"APPEND a 2") == b"3"
    assert kv.execute(b"GET a") == b"12;"
    assert kv.execute(b"GET missing") == b""
    assert kv.execute(b"NOOP") == b""
    assert kv.execute(b"DROP TABLE") == b"ERR"
    snap = kv.snapshot()
    kv.execute(b"SET a 9")
    kv.restore(snap)
    assert kv.execute(b"GET a") == b"12;"


def test_timer_defaults():
    cfg = ProtocolConfig(n=3)
    assert (cfg.t, cfg.timer_req, cfg.vc_timeout, cfg.view_change_budget) == (1, 200, 800, 1200)
    cfg = ProtocolConfig(n=5, fd=True)
    assert (cfg.t, cfg.vc_timeout, cfg.view_change_budget) == (2, 1200, 1600)


@pytest.mark.parametrize("n,per_request", [(3, 2), (5, 2 + 2 * 3), (7, 3 + 3 * 4)])
def test_message_pattern(n, per_request):
    res = simulate(faultfree(n))
    delivered = sum(1 for r in res.records if r["k"] == "deliver")
    assert delivered == 24
    assert res.inter_replica == per_request * delivered


def test_batching_amortizes_messages():
    res = simulate(faultfree(5, requests=20, batch=4, batch_timeout=50,
                             workload={"clients": 8, "requests": 5}))
    batches = max(r.ex for r in res.replicas)
    assert batches < 40
    assert res.inter_replica == 8 * batches


def test_client_is_closed_loop():
    sim = Simulator(faultfree(3))
    c = sim.clients[0]
    c.propose(b"SET a 1")
    with pytest.raises(ClientBusy):
        c.propose(b"SET a 2")


def test_same_seed_same_bytes_other_seed_differs():
    sc = load("crash_rotation")
    a = hashlib.sha256(simulate(sc).trace_bytes()).hexdigest()
    b = hashlib.sha256(simulate(load("crash_rotation")).trace_bytes()).hexdigest()
    c = hashlib.sha256(simulate(load("crash_rotation", seed=99)).trace_bytes()).hexdigest()
    assert a == b != c


def test_links_never_exceed_delta(monkeypatch):
    delays = []
    real_push = Simulator._push

    def spy(self, time, kind, payload):
        if kind == simmod._DELIVER:
            delays.append(time - self.now)
        real_push(self, time, kind, payload)

    monkeypatch.setattr(Simulator, "_push", spy)
    simulate(load("crash_rotation"))
    assert delays and max(delays) <= 100 and min(delays) >= 0


def test_crash_rotation_follows_group_order():
    res = simulate(load("crash_rotation"))
    assert check_consistency(res.records).safe
    installed = sorted(new_view_summary(res.records))
    assert installed == [1, 2, 3]
    # each crash knocks out an active of the current group, the next group
    # in the rotation excludes it
    crashes = {1: "s1", 2: "s0", 3: "s2"}
    for view, down in crashes.items():
        before = {str(a) for a in synchronous_group_for_view(view - 1, 3).actives}
        after = {str(a) for a in synchronous_group_for_view(view, 3).actives}
        assert down in before and down not in after
    assert check_liveness(res.records, 4000).ok


def test_crashed_primary_forces_view_change_through_client_path():
    sc = validate({"version": 1, "n": 3, "seed": 2, "horizon": 8000,
                   "workload": {"clients": 1, "requests": 30, "think": 50},
                   "faults": [{"type": "crash", "node": "s0", "at": 500}]})
    res = simulate(sc)
    kinds = [r["k"] for r in res.records]
    assert "timeout" in kinds
    reasons = {r.get("reason") for r in res.records if r["k"] == "suspect"}
    assert "request-timeout" in reasons
    assert res.records[-1]["views"]["s1"] == 2     # first group without s0
    assert check_liveness(res.records, 8000 - 1200 * 3).ok


def test_passive_catches_up_lazily():
    res = simulate(faultfree(3, lazy=True))
    lazy = [r for r in res.records if r["k"] == "lazy-commit" and r["who"] == "s2"]
    assert len(lazy) == 24
    # executed state matches the actives
    states = {str(r.id): r.app.snapshot() for r in res.replicas}
    assert states["s0"] == states["s1"] == states["s2"]


def test_checkpoints_bound_the_logs():
    res = simulate(faultfree(3, chk=5, requests=20))
    for r in res.replicas[:2]:
        assert r.stable is not None and r.stable.sn >= 35
        assert min(r.commit_log, default=r.stable.sn + 1) > r.stable.sn


def test_real_signatures_give_same_outcome():
    sim_run = simulate(faultfree(3, requests=3))
    real_run = simulate(faultfree(3, requests=3, signatures="RealSig"))
    ops = lambda res: [(r["who"], r["sn"], r["d_batch"]) for r in res.records if r["k"] == "deliver"]  # noqa: E731
    assert ops(sim_run) == ops(real_run)


def test_anarchy_boundary_pair():
    demo = simulate(load("anarchy_demo"))
    twin = simulate(load("anarchy_twin"))
    v_demo, v_twin = check_consistency(demo.records), check_consistency(twin.records)
    assert not v_demo.safe and v_demo.ever_anarchy
    assert v_twin.safe and not v_twin.ever_anarchy
