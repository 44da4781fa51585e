import pytest

from xpaxos.byzantine import POLICIES, make_policy
from xpaxos.checkers import check_consistency, check_fault_detection
from xpaxos.core import Principal
from xpaxos.messages import Commit
from xpaxos.scenario import validate
from xpaxos.sim import Simulator, simulate
from xpaxos.suites import generate, run_one


def with_policy(policy, params=None, **kw):
    doc = {"version": 1, "n": 3, "seed": 1, "horizon": 6000, "fd": True,
           "workload": {"clients": 1, "requests": 20, "think": 50},
           "faults": [{"type": "byzantine", "replica": "s0", "policy": policy,
                       "params": params or {}}]}
    doc.update(kw)
    return validate(doc)


def test_unknown_policy():
    with pytest.raises(ValueError):
        make_policy("teleport")
    assert set(POLICIES) >= {"data-loss", "fork-i", "fork-ii"}


def test_policy_start_time():
    p = make_policy("data-loss", start=300)
    assert not p.active(299) and p.active(300)


@pytest.mark.parametrize("policy", sorted(POLICIES))
def test_policy_only_holds_its_own_key(policy):
    sim = Simulator(with_policy(policy))
    bad = sim.replicas[0]
    assert bad.policy is not None and bad.signer.who == Principal("s", 0)
    # whatever it signs cannot pass as a follower's commit
    forged = bad.sign(Commit(0, 1, b"x" * 32, Principal("s", 1)))
    assert not sim.verifier.signed(forged, Principal("s", 1))


@pytest.mark.parametrize("policy", sorted(POLICIES))
def test_single_byzantine_replica_cannot_break_safety(policy):
    # one non-crash fault and nothing else: t = 1 is not in anarchy
    res = simulate(with_policy(policy))
    v = check_consistency(res.records)
    assert v.safe and not v.ever_anarchy
    assert check_fault_detection(res.records).accuracy_ok


def test_mute_policy_drops_selected_messages():
    res = simulate(with_policy("mute", {"to": ["s1"]}, horizon=3000))
    assert not any(r["k"] == "commit" and r["who"] == "s1" and r["view"] == 0 for r in res.records)


@pytest.mark.parametrize("cls,seed", [("state-loss", 0), ("state-loss", 1), ("fork-i", 0),
                                      ("fork-i", 2), ("fork-ii", 0), ("fork-ii", 3)])
def test_detector_classes_catch_their_culprit(cls, seed):
    v = run_one(cls, seed)
    assert v.ok and v.accuracy_ok, v.detail
    doc = generate(cls, seed)
    culprit = next(f["replica"] for f in doc["faults"] if f["type"] == "byzantine")
    rep = check_fault_detection(simulate(validate(doc)).records)
    assert list(rep.injected) == [culprit]
    assert all(fs == [culprit] for who, fs in rep.fsets.items() if who != culprit)
