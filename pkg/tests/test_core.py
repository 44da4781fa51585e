import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from xpaxos.core import (
    MAC,
    REAL_SIG,
    ConfigurationError,
    FaultCensus,
    KeyRing,
    Principal,
    census_of,
    client,
    count_partitioned,
    decode,
    digest_of,
    encode,
    in_anarchy,
    max_clique,
    replica,
    synchronous_group_for_view,
    threshold,
    views_per_cycle,
)


def test_principal_round_trip():
    assert str(replica(3)) == "s3"
    assert Principal.parse("c12") == client(12)
    assert replica(0).is_replica and not client(0).is_replica
    with pytest.raises(ValueError):
        Principal("x", 1)
    with pytest.raises(ValueError):
        Principal("s", -1)


@pytest.mark.parametrize("n,t", [(3, 1), (5, 2), (7, 3)])
def test_threshold(n, t):
    assert threshold(n) == t


@pytest.mark.parametrize("n", [1, 2, 4, 6])
def test_threshold_rejects_even_or_tiny(n):
    with pytest.raises(ConfigurationError):
        threshold(n)


values = st.recursive(
    st.none() | st.booleans() | st.integers(-2**70, 2**70) | st.binary(max_size=20)
    | st.text(max_size=20),
    lambda inner: st.lists(inner, max_size=5).map(tuple),
    max_leaves=20,
)


@given(values)
def test_encode_decode_round_trip(v):
    assert decode(encode(v)) == v


@given(values, values)
def test_encoding_is_injective(a, b):
    if a != b:
        assert encode(a) != encode(b)


def test_encoding_distinguishes_types():
    assert encode(1) != encode("1") != encode(b"1")
    assert encode((1, 2)) != encode(((1, 2),))
    assert digest_of(("a", "bc")) != digest_of(("ab", "c"))


def test_sim_signatures_bind_identity():
    ring = KeyRing(7)
    d = digest_of("hello")
    auth = ring.signer(replica(0)).sign(d)
    assert ring.verify(d, auth, replica(0))
    assert not ring.verify(d, auth, replica(1))
    assert not ring.verify(digest_of("other"), auth, replica(0))
    # a different seed means different keys
    assert not KeyRing(8).verify(d, auth, replica(0))


def test_macs_bind_receiver():
    ring = KeyRing(1)
    d = digest_of("m")
    tag = ring.signer(replica(0)).mac(client(0), d)
    assert tag.scheme == MAC
    assert ring.verify(d, tag, replica(0), client(0))
    assert not ring.verify(d, tag, replica(0), client(1))
    assert not ring.verify(d, tag, replica(0))


def test_real_signatures():
    ring = KeyRing(3, REAL_SIG)
    d = digest_of("x")
    auth = ring.signer(replica(2)).sign(d)
    assert auth.scheme == REAL_SIG
    assert ring.verify(d, auth, replica(2))
    assert not ring.verify(digest_of("y"), auth, replica(2))
    # a sim tag never passes under a real-signature ring
    assert not ring.verify(d, KeyRing(3).signer(replica(2)).sign(d), replica(2))


def test_groups_for_three_replicas():
    expected = [("s0", ["s1"]), ("s0", ["s2"]), ("s1", ["s2"])]
    for view in range(9):
        sg = synchronous_group_for_view(view, 3)
        primary, followers = expected[view % 3]
        assert str(sg.primary) == primary
        assert [str(f) for f in sg.followers] == followers
        assert len(sg.passives) == 1


def test_groups_for_five_replicas_cover_every_majority_once():
    assert views_per_cycle(5) == 10
    seen = [tuple(str(a) for a in synchronous_group_for_view(v, 5).actives) for v in range(10)]
    assert seen == [tuple(f"s{i}" for i in c) for c in itertools.combinations(range(5), 3)]
    assert synchronous_group_for_view(10, 5) == synchronous_group_for_view(0, 5).__class__(
        10, replica(0), (replica(1), replica(2)), (replica(3), replica(4)))


def test_max_clique_and_partition_count():
    full = lambda a, b: True  # noqa: E731
    assert max_clique(range(5), full) == (0, 1, 2, 3, 4)
    # s0 cut from everyone
    assert count_partitioned(3, [(1, 2)]) == 1
    # a path 0-1-2: largest clique has two members
    assert count_partitioned(3, [(0, 1), (1, 2)]) == 1
    assert count_partitioned(3, []) == 2
    assert count_partitioned(5, [(a, b) for a in range(5) for b in range(5)]) == 0


@pytest.mark.parametrize("crash,noncrash,part,t,expected", [
    (0, 0, 0, 1, False),
    (1, 0, 0, 1, False),
    (3, 0, 0, 1, False),     # crash faults alone never mean anarchy
    (0, 0, 2, 1, False),     # neither do network faults alone
    (0, 1, 0, 1, False),
    (1, 1, 0, 1, True),
    (0, 1, 1, 1, True),
    (1, 1, 0, 2, False),
    (1, 1, 1, 2, True),
    (0, 2, 0, 2, False),
    (0, 3, 0, 2, True),
])
def test_anarchy_predicate(crash, noncrash, part, t, expected):
    assert in_anarchy(FaultCensus(crash, noncrash, part), t) is expected


def test_census_counts_only_correct_replicas_as_partitioned():
    # s2 is Byzantine and cut off: it is not also counted as partitioned
    links = {frozenset(p) for p in [(0, 1)]}
    conn = lambda a, b: frozenset((a, b)) in links  # noqa: E731
    c = census_of(3, crashed=[], byzantine=[2], connected=conn)
    assert (c.crash_count, c.noncrash_count, c.partitioned_count) == (0, 1, 0)
    # s1 crashed, s0 and s2 cannot talk: one of them is partitioned
    c = census_of(3, crashed=[1], byzantine=[], connected=lambda a, b: False)
    assert (c.crash_count, c.partitioned_count) == (1, 1)
    with pytest.raises(ValueError):
        FaultCensus(-1, 0, 0)
