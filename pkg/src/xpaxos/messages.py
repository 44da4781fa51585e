"""Protocol messages and the checks that make them trustworthy.

Messages are frozen dataclasses.  ``body()`` lists the authenticated fields
in wire order; the authenticator, when present, covers the digest of
``(KIND, *body())``.  Log entries are carried inside messages as plain value
objects and are re-verified by every receiver.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

from .core import Authenticator, KeyRing, Principal, digest_of, synchronous_group_for_view


class Message:
    KIND = "message"

    def body(self) -> tuple:
        raise NotImplementedError

    @cached_property
    def payload_digest(self) -> bytes:
        return digest_of((self.KIND,) + tuple(self.body()))

    def wire(self):
        return (self.KIND, self.body(), getattr(self, "auth", None))


def _frozen(cls):
    # eq=False keeps identity hashing cheap; equality of messages is always
    # decided on digests.
    return dataclass(frozen=True, eq=False)(cls)


# --------------------------------------------------------------------------
# client traffic


@_frozen
class Request(Message):
    KIND = "replicate"
    op: bytes
    ts: int
    client: Principal
    auth: Optional[Authenticator] = None

    def body(self):
        return (self.op, self.ts, self.client)

    @property
    def key(self) -> tuple[Principal, int]:
        return (self.client, self.ts)


def batch_digest(batch: tuple[Request, ...]) -> bytes:
    return digest_of(("batch", tuple(r.payload_digest for r in batch)))


def reply_digest(client: Principal, ts: int, result: bytes) -> bytes:
    return digest_of(("rep", client, ts, result))


@_frozen
class Reply(Message):
    """MAC-authenticated reply from one active replica."""

    KIND = "reply"
    view: int
    sn: int
    ts: int
    client: Principal
    result: bytes
    d_batch: bytes
    replica: Principal
    auth: Optional[Authenticator] = None

    def body(self):
        return (self.view, self.sn, self.ts, self.client, self.result, self.d_batch, self.replica)


@_frozen
class ReplyBundle(Message):
    """Single-follower reply: the primary's reply plus the follower's commit."""

    KIND = "reply-bundle"
    reply: Reply
    m1: "Commit"
    request_digests: tuple
    reply_digests: tuple

    def body(self):
        return (self.reply, self.m1, self.request_digests, self.reply_digests)


@_frozen
class SignedReply(Message):
    KIND = "signed-reply"
    view: int
    sn: int
    ts: int
    client: Principal
    d_result: bytes
    d_batch: bytes
    replica: Principal
    auth: Optional[Authenticator] = None

    def body(self):
        return (self.view, self.sn, self.ts, self.client, self.d_result, self.d_batch,
                self.replica)


@_frozen
class SignedReplyBundle(Message):
    KIND = "signed-reply-bundle"
    result: bytes
    replies: tuple

    def body(self):
        return (self.result, self.replies)


@_frozen
class ReSend(Message):
    KIND = "re-send"
    request: Request
    view: int

    def body(self):
        return (self.request, self.view)


# --------------------------------------------------------------------------
# common case


@_frozen
class Prepare(Message):
    KIND = "prepare"
    view: int
    sn: int
    d_batch: bytes
    primary: Principal
    auth: Optional[Authenticator] = None

    def body(self):
        return (self.view, self.sn, self.d_batch, self.primary)


@_frozen
class Commit(Message):
    """Follower commit.  With one follower it also carries the client
    timestamps and the digest of the batch's reply digests."""

    KIND = "commit"
    view: int
    sn: int
    d_batch: bytes
    replica: Principal
    ts: Optional[tuple] = None
    d_reply: Optional[bytes] = None
    auth: Optional[Authenticator] = None

    def body(self):
        return (self.view, self.sn, self.d_batch, self.replica, self.ts, self.d_reply)


@_frozen
class PrepareEntry(Message):
    KIND = "prepare-entry"
    batch: tuple
    prepare: Prepare

    def body(self):
        return (self.batch, self.prepare)

    @property
    def view(self) -> int:
        return self.prepare.view

    @property
    def sn(self) -> int:
        return self.prepare.sn

    @property
    def d_batch(self) -> bytes:
        return self.prepare.d_batch


@_frozen
class CommitEntry(Message):
    KIND = "commit-entry"
    batch: tuple
    prepare: Prepare
    commits: tuple

    def body(self):
        return (self.batch, self.prepare, self.commits)

    @property
    def view(self) -> int:
        return self.prepare.view

    @property
    def sn(self) -> int:
        return self.prepare.sn

    @property
    def d_batch(self) -> bytes:
        return self.prepare.d_batch

    def as_prepare_entry(self) -> PrepareEntry:
        return PrepareEntry(self.batch, self.prepare)


# --------------------------------------------------------------------------
# checkpoints and lazy replication


@_frozen
class PreChk(Message):
    KIND = "prechk"
    view: int
    sn: int
    d_state: bytes
    replica: Principal
    auth: Optional[Authenticator] = None

    def body(self):
        return (self.view, self.sn, self.d_state, self.replica)


@_frozen
class Chkpt(Message):
    KIND = "chkpt"
    view: int
    sn: int
    d_state: bytes
    replica: Principal
    auth: Optional[Authenticator] = None

    def body(self):
        return (self.view, self.sn, self.d_state, self.replica)


@_frozen
class Checkpoint(Message):
    """A stable checkpoint: state snapshot plus t+1 matching chkpt messages."""

    KIND = "checkpoint"
    sn: int
    d_state: bytes
    proof: tuple
    snapshot: bytes

    def body(self):
        return (self.sn, self.d_state, self.proof, self.snapshot)


@_frozen
class LazyChk(Message):
    KIND = "lazychk"
    checkpoint: Checkpoint

    def body(self):
        return (self.checkpoint,)


@_frozen
class LazyEntry(Message):
    KIND = "lazy-entry"
    entry: CommitEntry

    def body(self):
        return (self.entry,)


# --------------------------------------------------------------------------
# view change


@_frozen
class Suspect(Message):
    KIND = "suspect"
    view: int
    replica: Principal
    auth: Optional[Authenticator] = None

    def body(self):
        return (self.view, self.replica)


@_frozen
class VcConfirm(Message):
    KIND = "vc-confirm"
    view: int
    replica: Principal
    d_vcset: bytes
    auth: Optional[Authenticator] = None

    def body(self):
        return (self.view, self.replica, self.d_vcset)


@_frozen
class ViewChange(Message):
    KIND = "view-change"
    view: int
    replica: Principal
    commit_log: tuple
    prepare_log: Optional[tuple] = None
    final_proof: Optional[tuple] = None
    pre: int = 0
    checkpoint: Optional[Checkpoint] = None
    auth: Optional[Authenticator] = None

    def body(self):
        return (self.view, self.replica, self.commit_log, self.prepare_log, self.final_proof,
                self.pre, self.checkpoint)

    @property
    def base(self) -> int:
        return self.checkpoint.sn if self.checkpoint is not None else 0

    @cached_property
    def commits_by_sn(self) -> dict[int, CommitEntry]:
        return {e.sn: e for e in self.commit_log}

    @cached_property
    def prepares_by_sn(self) -> dict[int, PrepareEntry]:
        return {e.sn: e for e in (self.prepare_log or ())}


@_frozen
class VcFinal(Message):
    KIND = "vc-final"
    view: int
    replica: Principal
    vcset: tuple
    auth: Optional[Authenticator] = None

    def body(self):
        return (self.view, self.replica, self.vcset)


@_frozen
class NewView(Message):
    KIND = "new-view"
    view: int
    primary: Principal
    checkpoint: Optional[Checkpoint]
    prepares: tuple
    auth: Optional[Authenticator] = None

    def body(self):
        return (self.view, self.primary, self.checkpoint, self.prepares)


@_frozen
class Hello(Message):
    """Sent by a replica on recovery so peers can bring its view up to date."""

    KIND = "hello"
    view: int
    replica: Principal

    def body(self):
        return (self.view, self.replica)


# --------------------------------------------------------------------------
# fault detection


@_frozen
class ForkIIQuery(Message):
    KIND = "fork-ii-query"
    view: int
    accused: Principal
    sn: int
    m: ViewChange

    def body(self):
        return (self.view, self.accused, self.sn, self.m)


STATE_LOSS, FORK_I, FORK_II = "state-loss", "fork-i", "fork-ii"


@_frozen
class Accusation(Message):
    """Self-certifying evidence that ``accused`` sent a faulty view-change.

    state-loss / fork-i carry the conflicting pair (m, m2); fork-ii carries m
    plus the responder's final proof and the confirmed view-change set of
    the intermediate view.
    """

    KIND = "accusation"
    kind: str
    view: int
    accused: Principal
    sn: int
    m: ViewChange
    m2: Optional[ViewChange] = None
    final_proof: Optional[tuple] = None
    final_set: Optional[tuple] = None

    def body(self):
        return (self.kind, self.view, self.accused, self.sn, self.m, self.m2, self.final_proof,
                self.final_set)


# --------------------------------------------------------------------------
# verification


@dataclass
class Verifier:
    """Re-checks every authenticator inside a message.

    Verification is objective, so a single instance (and its memo) may be
    shared by all honest parties of one simulation.
    """

    ring: KeyRing
    n: int
    _memo: dict = field(default_factory=dict)

    @property
    def t(self) -> int:
        return (self.n - 1) // 2

    def _remember(self, key, fn) -> bool:
        hit = self._memo.get(key)
        if hit is None:
            hit = bool(fn())
            self._memo[key] = hit
        return hit

    def signed(self, msg: Message, signer: Principal) -> bool:
        return self.ring.verify(msg.payload_digest, msg.auth, signer)

    def maced(self, msg: Message, signer: Principal, receiver: Principal) -> bool:
        return self.ring.verify(msg.payload_digest, msg.auth, signer, receiver)

    def request(self, req: Request) -> bool:
        return isinstance(req, Request) and self.signed(req, req.client)

    def batch(self, batch: tuple, d_batch: bytes) -> bool:
        return all(self.request(r) for r in batch) and batch_digest(batch) == d_batch

    def prepare(self, p: Prepare) -> bool:
        if not isinstance(p, Prepare) or p.view < 0 or p.sn < 1:
            return False
        sg = synchronous_group_for_view(p.view, self.n)
        return p.primary == sg.primary and self.signed(p, p.primary)

    def prepare_entry(self, e: PrepareEntry) -> bool:
        return isinstance(e, PrepareEntry) and self._remember(
            ("pe", e.payload_digest),
            lambda: self.prepare(e.prepare) and self.batch(e.batch, e.prepare.d_batch))

    def commit(self, c: Commit, view: int, sn: int, d_batch: bytes) -> bool:
        if not isinstance(c, Commit):
            return False
        if (c.view, c.sn, c.d_batch) != (view, sn, d_batch):
            return False
        sg = synchronous_group_for_view(view, self.n)
        if c.replica not in sg.followers:
            return False
        if self.t == 1:
            if c.ts is None or c.d_reply is None:
                return False
        return self.signed(c, c.replica)

    def commit_entry(self, e: CommitEntry) -> bool:
        def check():
            if not isinstance(e, CommitEntry):
                return False
            if not self.prepare_entry(PrepareEntry(e.batch, e.prepare)):
                return False
            sg = synchronous_group_for_view(e.view, self.n)
            signers = [c.replica for c in e.commits]
            if sorted(signers) != sorted(sg.followers):
                return False
            if self.t == 1:
                ts = tuple(r.ts for r in e.batch)
                if e.commits[0].ts != ts:
                    return False
            return all(self.commit(c, e.view, e.sn, e.d_batch) for c in e.commits)

        return self._remember(("ce", e.payload_digest), check)

    def chkpt(self, c: Chkpt) -> bool:
        if not isinstance(c, Chkpt):
            return False
        return synchronous_group_for_view(c.view, self.n).is_active(c.replica) and \
            self.signed(c, c.replica)

    def checkpoint(self, ck: Checkpoint) -> bool:
        def check():
            if not isinstance(ck, Checkpoint) or ck.sn < 1:
                return False
            if digest_of(("state", ck.snapshot)) != ck.d_state:
                return False
            proof = ck.proof
            if len({c.replica for c in proof}) != self.t + 1 or len(proof) != self.t + 1:
                return False
            views = {c.view for c in proof}
            if len(views) != 1:
                return False
            return all(c.sn == ck.sn and c.d_state == ck.d_state and self.chkpt(c) for c in proof)

        return self._remember(("ck", ck.payload_digest), check)

    def suspect(self, s: Suspect) -> bool:
        if not isinstance(s, Suspect) or s.view < 0:
            return False
        sg = synchronous_group_for_view(s.view, self.n)
        return sg.is_active(s.replica) and self.signed(s, s.replica)

    def vc_confirm(self, c: VcConfirm) -> bool:
        if not isinstance(c, VcConfirm):
            return False
        sg = synchronous_group_for_view(c.view, self.n)
        return sg.is_active(c.replica) and self.signed(c, c.replica)

    def final_proof(self, proof: tuple, view: int) -> bool:
        if len(proof) != self.t + 1:
            return False
        sg = synchronous_group_for_view(view, self.n)
        if sorted(c.replica for c in proof) != sorted(sg.actives):
            return False
        if len({c.d_vcset for c in proof}) != 1:
            return False
        return all(c.view == view and self.vc_confirm(c) for c in proof)

    def view_change(self, m: ViewChange, fd: bool) -> bool:
        def check():
            if not isinstance(m, ViewChange) or not m.replica.is_replica:
                return False
            if not self.signed(m, m.replica):
                return False
            if m.checkpoint is not None and not self.checkpoint(m.checkpoint):
                return False
            sns = [e.sn for e in m.commit_log]
            if len(set(sns)) != len(sns):
                return False
            if not all(self.commit_entry(e) and e.view < m.view for e in m.commit_log):
                return False
            if fd:
                if m.prepare_log is None:
                    return False
                psns = [e.sn for e in m.prepare_log]
                if len(set(psns)) != len(psns):
                    return False
                if not all(self.prepare_entry(e) and e.view < m.view for e in m.prepare_log):
                    return False
                if m.pre >= m.view:
                    return False
                if m.pre > 0 or m.final_proof:
                    if m.final_proof is None or not self.final_proof(m.final_proof, m.pre):
                        return False
            return True

        return self._remember(("vc", fd, m.payload_digest), check)

    def vc_final(self, f: VcFinal, fd: bool) -> bool:
        def check():
            if not isinstance(f, VcFinal):
                return False
            sg = synchronous_group_for_view(f.view, self.n)
            if not sg.is_active(f.replica) or not self.signed(f, f.replica):
                return False
            senders = [m.replica for m in f.vcset]
            if len(set(senders)) != len(senders) or len(senders) < self.n - self.t:
                return False
            return all(m.view == f.view and self.view_change(m, fd) for m in f.vcset)

        return self._remember(("vf", fd, f.payload_digest), check)

    def new_view(self, nv: NewView) -> bool:
        def check():
            if not isinstance(nv, NewView):
                return False
            sg = synchronous_group_for_view(nv.view, self.n)
            if nv.primary != sg.primary or not self.signed(nv, nv.primary):
                return False
            if nv.checkpoint is not None and not self.checkpoint(nv.checkpoint):
                return False
            return all(self.prepare_entry(e) and e.view == nv.view for e in nv.prepares)

        return self._remember(("nv", nv.payload_digest), check)
