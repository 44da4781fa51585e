"""Log verification, view-change selection and the three detectors, on
hand-built signed logs."""

import dataclasses

import pytest
from forge import Forge

from xpaxos.core import replica
from xpaxos.fd import (
    detect_fork_i,
    detect_state_loss,
    fork_ii_candidates,
    fork_ii_inconsistent,
    run_detectors,
)
from xpaxos.messages import FORK_I, STATE_LOSS, Suspect, batch_digest
from xpaxos.viewchange import select


@pytest.fixture
def f():
    return Forge(3)


def test_prepare_must_come_from_the_view_primary(f):
    batch = (f.request("SET a 1"),)
    assert f.verifier.prepare_entry(f.prepare_entry(0, 1, batch))
    # s1 is not primary of view 0
    assert not f.verifier.prepare_entry(f.prepare_entry(0, 1, batch, primary=replica(1)))


def test_commit_entry_verification(f):
    batch = (f.request("SET a 1"),)
    e = f.commit_entry(1, 1, batch)
    assert f.verifier.commit_entry(e)
    other = (f.request("SET a 2"),)
    assert not f.verifier.commit_entry(dataclasses.replace(e, batch=other))
    # commits signed for view 1 do not vouch for a view-0 prepare
    e0 = f.commit_entry(0, 1, batch)
    assert not f.verifier.commit_entry(dataclasses.replace(e0, commits=e.commits))


def test_view_change_rejects_entries_from_its_own_view(f):
    e = f.commit_entry(1, 1, (f.request("x"),))
    assert f.verifier.view_change(f.view_change(2, 2, [e]), fd=False)
    assert not f.verifier.view_change(f.view_change(1, 2, [e]), fd=False)
    # with fault detection the prepare log is mandatory
    assert not f.verifier.view_change(f.view_change(2, 2, [e]), fd=True)
    assert f.verifier.view_change(f.view_change(2, 2, [e], prepares=[e.as_prepare_entry()]), fd=True)


def test_suspect_from_passive_is_rejected(f):
    ok = f.sign(replica(1), Suspect(0, replica(1)))
    passive = f.sign(replica(2), Suspect(0, replica(2)))
    assert f.verifier.suspect(ok)
    assert not f.verifier.suspect(passive)


def test_selection_takes_highest_view_and_fills_gaps(f):
    r0, r1, r2, r3 = (f.request(f"APPEND log r{i}", c=i) for i in range(4))
    s1 = f.view_change(2, 1, [f.commit_entry(0, 1, (r0,)), f.commit_entry(0, 2, (r1,)),
                              f.commit_entry(0, 3, (r2,))])
    s2 = f.view_change(2, 2, [f.commit_entry(1, 1, (r0,)), f.commit_entry(1, 2, (r3,))])
    sel = select([s1, s2])
    assert [(c.sn, c.batch[0].op, c.source_view) for c in sel.entries] == [
        (1, b"APPEND log r0", 1), (2, b"APPEND log r3", 1), (3, b"APPEND log r2", 0)]
    # a hole is filled with an empty batch
    s3 = f.view_change(2, 0, [f.commit_entry(0, 5, (r1,))])
    sel = select([s3])
    assert [c.sn for c in sel.entries] == [1, 2, 3, 4, 5]
    assert sel.at(2).d_batch == batch_digest(()) and sel.at(2).source == "gap"


def test_prepare_from_higher_view_beats_commit_only_with_prepares(f):
    a, b = f.request("a", c=0), f.request("b", c=1)
    m = f.view_change(3, 0, [f.commit_entry(0, 1, (a,))], prepares=[f.prepare_entry(1, 1, (b,))])
    assert select([m]).at(1).batch == (a,)
    assert select([m], with_prepares=True).at(1).batch == (b,)


def test_state_loss_detected_only_between_co_actives(f):
    r = f.request("x")
    e = f.commit_entry(1, 1, (r,))               # view 1: s0 and s2 active
    honest_s2 = f.view_change(2, 2, [e], prepares=[e.as_prepare_entry()])
    lossy_s0 = f.view_change(2, 0, [], prepares=[])
    assert detect_state_loss(lossy_s0, honest_s2, 2, 3) == [1]
    # s1 was passive in view 1: an empty log from s1 is not evidence
    empty_s1 = f.view_change(2, 1, [], prepares=[])
    assert detect_state_loss(empty_s1, honest_s2, 2, 3) == []
    assert detect_state_loss(honest_s2, honest_s2, 2, 3) == []
    found, queries = run_detectors([lossy_s0, honest_s2, empty_s1], 2, 3)
    assert [(x.kind, str(x.accused), x.sn) for x in found] == [(STATE_LOSS, "s0", 1)]
    assert queries == []


def test_fork_i_same_view_and_stale(f):
    a, b = f.request("a", c=0), f.request("b", c=1)
    committed = f.commit_entry(1, 1, (a,))
    witness = f.view_change(2, 2, [committed], prepares=[committed.as_prepare_entry()])
    same_view = f.view_change(2, 0, [], prepares=[f.prepare_entry(1, 1, (b,))])
    stale = f.view_change(2, 0, [], prepares=[f.prepare_entry(0, 1, (b,))])
    assert detect_fork_i(same_view, witness, 2, 3) == [1]
    assert detect_fork_i(stale, witness, 2, 3) == [1]
    honest = f.view_change(2, 0, [committed], prepares=[committed.as_prepare_entry()])
    assert detect_fork_i(honest, witness, 2, 3) == []
    found, _ = run_detectors([stale, witness], 2, 3)
    assert [(x.kind, str(x.accused)) for x in found] == [(FORK_I, "s0")]


def test_fork_ii_query_and_answer(f):
    a = f.request("a", c=0)
    old = f.commit_entry(0, 1, (a,))                        # view 0: s0, s1
    witness = f.view_change(3, 1, [old], prepares=[old.as_prepare_entry()])
    forged = f.view_change(3, 0, [], prepares=[f.prepare_entry(1, 1, ())], pre=1)
    assert fork_ii_candidates(forged, witness, 3) == [1]
    # what view 1 actually chose at sn 1: the view-0 commit of a
    final_set = [f.view_change(1, 0, [old], prepares=[old.as_prepare_entry()]),
                 f.view_change(1, 2, [], prepares=[])]
    assert fork_ii_inconsistent(final_set, forged, 1)
    honest = f.view_change(3, 0, [], prepares=[f.prepare_entry(1, 1, (a,))], pre=1)
    assert fork_ii_candidates(honest, witness, 3) == []
    assert not fork_ii_inconsistent(final_set, honest, 1)
