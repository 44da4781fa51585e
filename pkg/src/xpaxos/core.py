"""Identities, canonical encoding, authentication and model predicates.

Everything here is a value object or a pure function; the protocol modules
build on top of it.
"""

from __future__ import annotations

import hashlib
import hmac
import itertools
import math
import struct
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Sequence

# --------------------------------------------------------------------------
# identities


@dataclass(frozen=True, order=True)
class Principal:
    """A replica (``role='s'``) or a client (``role='c'``)."""

    role: str
    index: int

    def __post_init__(self):
        if self.role not in ("s", "c"):
            raise ValueError(f"unknown role {self.role!r}")
        if self.index < 0:
            raise ValueError("index must be non-negative")

    def __str__(self) -> str:
        return f"{self.role}{self.index}"

    @property
    def is_replica(self) -> bool:
        return self.role == "s"

    @classmethod
    def parse(cls, text: str) -> "Principal":
        return cls(text[0], int(text[1:]))


def replica(i: int) -> Principal:
    return Principal("s", i)


def client(i: int) -> Principal:
    return Principal("c", i)


ReplicaId = Principal
ClientId = Principal


class ConfigurationError(ValueError):
    pass


def threshold(n: int) -> int:
    if n < 3 or n % 2 == 0:
        raise ConfigurationError(f"n must be odd and at least 3, got {n}")
    return (n - 1) // 2


# --------------------------------------------------------------------------
# canonical encoding
#
# Every value is a one-byte type tag followed by a 4-byte big-endian length
# and the payload.  Tuples/lists nest.  Field order is fixed by the caller.

_NONE, _INT, _BYTES, _STR, _SEQ, _BOOL = b"N", b"I", b"B", b"S", b"L", b"T"


def encode(value) -> bytes:
    out = bytearray()
    _encode_into(value, out)
    return bytes(out)


def _frame(tag: bytes, payload: bytes, out: bytearray) -> None:
    out += tag
    out += struct.pack(">I", len(payload))
    out += payload


def _encode_into(value, out: bytearray) -> None:
    if value is None:
        _frame(_NONE, b"", out)
    elif isinstance(value, bool):
        _frame(_BOOL, b"\x01" if value else b"\x00", out)
    elif isinstance(value, int):
        _frame(_INT, str(value).encode(), out)
    elif isinstance(value, (bytes, bytearray)):
        _frame(_BYTES, bytes(value), out)
    elif isinstance(value, str):
        _frame(_STR, value.encode("utf-8"), out)
    elif isinstance(value, Principal):
        _frame(_STR, str(value).encode(), out)
    elif isinstance(value, (tuple, list)):
        inner = bytearray()
        for item in value:
            _encode_into(item, inner)
        _frame(_SEQ, bytes(inner), out)
    elif hasattr(value, "wire"):
        _encode_into(value.wire(), out)
    else:
        raise TypeError(f"cannot encode {type(value).__name__}")


def decode(data: bytes):
    """Inverse of :func:`encode` for plain values.  Principals come back as
    strings and sequences as tuples."""
    value, end = _decode_at(data, 0)
    if end != len(data):
        raise ValueError("trailing bytes after encoded value")
    return value


def _decode_at(data: bytes, pos: int):
    tag = data[pos:pos + 1]
    (size,) = struct.unpack(">I", data[pos + 1:pos + 5])
    start, end = pos + 5, pos + 5 + size
    payload = data[start:end]
    if tag == _NONE:
        return None, end
    if tag == _BOOL:
        return payload == b"\x01", end
    if tag == _INT:
        return int(payload.decode()), end
    if tag == _BYTES:
        return payload, end
    if tag == _STR:
        return payload.decode("utf-8"), end
    if tag == _SEQ:
        items, cur = [], start
        while cur < end:
            item, cur = _decode_at(data, cur)
            items.append(item)
        return tuple(items), end
    raise ValueError(f"unknown tag {tag!r}")


def digest(data: bytes) -> bytes:
    """SHA-256 digest D(m)."""
    return hashlib.sha256(data).digest()


def digest_of(value) -> bytes:
    return digest(encode(value))


def short(d: bytes | None) -> str:
    return "-" if d is None else d.hex()[:12]


# --------------------------------------------------------------------------
# authentication

SIM_SIG, REAL_SIG, MAC = "SimSig", "RealSig", "Mac"


@dataclass(frozen=True)
class Authenticator:
    scheme: str
    signer: Principal
    tag: bytes

    def wire(self):
        return (self.scheme, self.signer, self.tag)


class Signer:
    """Signing capability for a single identity.

    Only the key ring hands these out; a Byzantine policy receives the signer
    of the replica it controls and nothing else.
    """

    def __init__(self, ring: "KeyRing", who: Principal):
        self._ring = ring
        self.who = who

    def sign(self, d: bytes) -> Authenticator:
        return self._ring._sign(self.who, d)

    def mac(self, receiver: Principal, d: bytes) -> Authenticator:
        return self._ring._mac(self.who, receiver, d)


class KeyRing:
    """Deterministic key material for every identity of a scenario.

    ``SimSig`` tags are HMAC-SHA256 over the message digest under a secret
    derived from the seed and the identity; forging them requires the secret,
    which only the owning :class:`Signer` can reach.  ``RealSig`` uses
    Ed25519 keys derived from the same seed.
    """

    def __init__(self, seed: int, scheme: str = SIM_SIG):
        if scheme not in (SIM_SIG, REAL_SIG):
            raise ConfigurationError(f"unknown signature scheme {scheme!r}")
        self.scheme = scheme
        self._root = digest(b"xpaxos-keyring" + str(seed).encode())
        self._verified: dict[tuple, bool] = {}
        self._ed_private: dict[Principal, object] = {}
        self._ed_public: dict[Principal, object] = {}

    def signer(self, who: Principal) -> Signer:
        return Signer(self, who)

    def _secret(self, who: Principal) -> bytes:
        return digest(self._root + b"sig" + str(who).encode())

    def _pair_secret(self, a: Principal, b: Principal) -> bytes:
        lo, hi = sorted((str(a), str(b)))
        return digest(self._root + b"mac" + lo.encode() + b"|" + hi.encode())

    def _ed25519(self, who: Principal):
        key = self._ed_private.get(who)
        if key is None:
            from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey

            key = Ed25519PrivateKey.from_private_bytes(self._secret(who))
            self._ed_private[who] = key
            self._ed_public[who] = key.public_key()
        return key

    def _sign(self, who: Principal, d: bytes) -> Authenticator:
        if self.scheme == REAL_SIG:
            return Authenticator(REAL_SIG, who, self._ed25519(who).sign(d))
        return Authenticator(SIM_SIG, who, hmac.new(self._secret(who), d, hashlib.sha256).digest())

    def _mac(self, sender: Principal, receiver: Principal, d: bytes) -> Authenticator:
        tag = hmac.new(self._pair_secret(sender, receiver), str(receiver).encode() + d,
                       hashlib.sha256).digest()
        return Authenticator(MAC, sender, tag)

    def verify(self, d: bytes, auth: Authenticator | None, signer: Principal | None = None,
               receiver: Principal | None = None) -> bool:
        """True iff ``auth`` was produced over digest ``d`` by ``signer``.

        MACs additionally need the ``receiver`` they were computed for.
        """
        if auth is None:
            return False
        if signer is not None and auth.signer != signer:
            return False
        key = (d, auth.scheme, auth.signer, auth.tag, receiver)
        cached = self._verified.get(key)
        if cached is not None:
            return cached
        ok = False
        if auth.scheme == MAC:
            if receiver is not None:
                expected = self._mac(auth.signer, receiver, d).tag
                ok = hmac.compare_digest(expected, auth.tag)
        elif auth.scheme == SIM_SIG and self.scheme == SIM_SIG:
            expected = self._sign(auth.signer, d).tag
            ok = hmac.compare_digest(expected, auth.tag)
        elif auth.scheme == REAL_SIG and self.scheme == REAL_SIG:
            from cryptography.exceptions import InvalidSignature

            self._ed25519(auth.signer)
            try:
                self._ed_public[auth.signer].verify(auth.tag, d)
                ok = True
            except InvalidSignature:
                ok = False
        self._verified[key] = ok
        return ok


# --------------------------------------------------------------------------
# synchronous groups


@dataclass(frozen=True)
class SynchronousGroup:
    view: int
    primary: Principal
    followers: tuple[Principal, ...]
    passives: tuple[Principal, ...]

    @property
    def actives(self) -> tuple[Principal, ...]:
        return (self.primary,) + self.followers

    def is_active(self, who: Principal) -> bool:
        return who == self.primary or who in self.followers


@lru_cache(maxsize=None)
def _active_sets(n: int) -> tuple[tuple[int, ...], ...]:
    t = threshold(n)
    return tuple(itertools.combinations(range(n), t + 1))


@lru_cache(maxsize=4096)
def synchronous_group_for_view(view: int, n: int) -> SynchronousGroup:
    """Round-robin over the lexicographically ordered (t+1)-subsets.

    The lowest-index member of each set is the primary.  For n=3 this gives
    ({s0,s1}, s0), ({s0,s2}, s0), ({s1,s2}, s1), repeating.
    """
    if view < 0:
        raise ConfigurationError("view must be non-negative")
    sets = _active_sets(n)
    members = sets[view % len(sets)]
    passives = tuple(replica(j) for j in range(n) if j not in members)
    return SynchronousGroup(view, replica(members[0]), tuple(replica(j) for j in members[1:]),
                            passives)


def views_per_cycle(n: int) -> int:
    return len(_active_sets(n))


# --------------------------------------------------------------------------
# partitioned replicas and anarchy


def max_clique(nodes: Sequence, connected: Callable[[object, object], bool]) -> tuple:
    """A maximum set of ``nodes`` that pairwise satisfy ``connected``.

    Exhaustive search from the largest size down; fine for the replica counts
    used here (n <= 9).  Among equal-size cliques the lexicographically first
    is returned.
    """
    nodes = list(nodes)
    for size in range(len(nodes), 0, -1):
        for subset in itertools.combinations(nodes, size):
            if all(connected(a, b) for a, b in itertools.combinations(subset, 2)):
                return subset
    return ()


def count_partitioned(n: int, links: Iterable[tuple[int, int]] | Callable[[int, int], bool]) -> int:
    """n minus the size of the largest pairwise-reachable subset.

    ``links`` is either a set of undirected pairs that communicate within the
    delay bound or a predicate over replica indices.  Self-reachability is
    implied.
    """
    if callable(links):
        connected = links
    else:
        pairs = {frozenset(p) for p in links}
        connected = lambda a, b: a == b or frozenset((a, b)) in pairs  # noqa: E731
    return n - len(max_clique(range(n), connected))


@dataclass(frozen=True)
class FaultCensus:
    crash_count: int
    noncrash_count: int
    partitioned_count: int

    def __post_init__(self):
        if min(self.crash_count, self.noncrash_count, self.partitioned_count) < 0:
            raise ValueError("census counts must be non-negative")

    @property
    def total(self) -> int:
        return self.crash_count + self.noncrash_count + self.partitioned_count


def in_anarchy(census: FaultCensus, t: int) -> bool:
    return census.noncrash_count > 0 and census.total > t


def census_of(n: int, crashed: Iterable[int], byzantine: Iterable[int],
              connected: Callable[[int, int], bool]) -> FaultCensus:
    """Census where only correct replicas can be counted as partitioned."""
    crashed, byzantine = set(crashed), set(byzantine)
    correct = [j for j in range(n) if j not in crashed and j not in byzantine]
    largest = max_clique(correct, connected)
    return FaultCensus(len(crashed - byzantine), len(byzantine), len(correct) - len(largest))


def comb(n: int, k: int) -> int:
    return math.comb(n, k)
