"""Replica state machine: common case, checkpoints, lazy replication and
the replica side of client retransmission.

A replica is event driven.  The environment (normally the simulator)
delivers messages through :meth:`Replica.on_message`, fires timers through
:meth:`Replica.on_timer` and provides ``send``/``set_timer``/``trace``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from .core import (
    Principal,
    SynchronousGroup,
    decode,
    digest_of,
    encode,
    replica,
    short,
    synchronous_group_for_view,
)
from .fd import FaultDetectionMixin
from .messages import (
    Accusation,
    Checkpoint,
    Chkpt,
    Commit,
    CommitEntry,
    ForkIIQuery,
    Hello,
    LazyChk,
    LazyEntry,
    NewView,
    Prepare,
    PrepareEntry,
    PreChk,
    Reply,
    ReplyBundle,
    Request,
    ReSend,
    SignedReply,
    SignedReplyBundle,
    Suspect,
    VcConfirm,
    VcFinal,
    ViewChange,
    Verifier,
    batch_digest,
    reply_digest,
)
from .viewchange import NORMAL, VIEW_CHANGE, ViewChangeMixin


def replies_digest(digests) -> bytes:
    return digest_of(("replies", tuple(digests)))


# --------------------------------------------------------------------------
# configuration and application


@dataclass(frozen=True)
class ProtocolConfig:
    n: int
    delta: int = 100
    batch_size: int = 1
    batch_timeout: int = 20
    chk: int = 100
    fd: bool = False
    lazy: bool = True
    reorder_limit: int = 1024
    timer_req_factor: float = 2.0
    vc_timeout_factor: Optional[float] = None
    passive_retransmits: int = 4

    def __post_init__(self):
        if self.batch_size < 1 or self.chk < 1:
            raise ValueError("batch size and checkpoint interval must be >= 1")

    @property
    def t(self) -> int:
        return (self.n - 1) // 2

    @property
    def timer_req(self) -> int:
        return int(self.timer_req_factor * self.delta)

    @property
    def vc_timeout(self) -> int:
        factor = self.vc_timeout_factor
        if factor is None:
            factor = 12 if self.fd else 8
        return int(factor * self.delta)

    @property
    def view_change_budget(self) -> int:
        """Upper estimate of one (possibly failed) view change."""
        return 4 * self.delta + self.vc_timeout


class KVStore:
    """Deterministic toy service.

    Operations are ASCII commands: ``SET k v``, ``GET k``, ``APPEND k v`` and
    ``NOOP``.  Anything else returns ``ERR``.
    """

    def __init__(self):
        self.data: dict[str, str] = {}

    def execute(self, op: bytes) -> bytes:
        parts = op.decode("utf-8", "replace").split(" ", 2)
        cmd = parts[0].upper()
        if cmd == "SET" and len(parts) == 3:
            self.data[parts[1]] = parts[2]
            return b"OK"
        if cmd == "GET" and len(parts) >= 2:
            return self.data.get(parts[1], "").encode()
        if cmd == "APPEND" and len(parts) == 3:
            self.data[parts[1]] = self.data.get(parts[1], "") + parts[2] + ";"
            return str(len(self.data[parts[1]])).encode()
        if cmd == "NOOP":
            return b""
        return b"ERR"

    def snapshot(self) -> tuple:
        return tuple(sorted(self.data.items()))

    def restore(self, snap: tuple) -> None:
        self.data = dict(snap)


# --------------------------------------------------------------------------
# replica


class Replica(ViewChangeMixin, FaultDetectionMixin):
    def __init__(self, index: int, config: ProtocolConfig, env, signer, verifier: Verifier,
                 app_factory: Callable[[], KVStore] = KVStore, policy=None):
        self.id = replica(index)
        self.config = config
        self.n, self.t = config.n, config.t
        self.env = env
        self.signer = signer
        self.verifier = verifier
        self.app_factory = app_factory
        self.policy = policy
        self.app = app_factory()
        self.dedupe: dict[Principal, tuple[int, bytes, int]] = {}
        self.view = 0
        self.status = NORMAL
        self.sn = 0
        self.ex = 0
        self.prepare_log: dict[int, PrepareEntry] = {}
        self.commit_log: dict[int, CommitEntry] = {}
        self.results_by_sn: dict[int, tuple] = {}
        self.exec_digest: dict[int, bytes] = {}
        self.stable: Optional[Checkpoint] = None
        self.snapshots: dict[int, bytes] = {}
        self.prechk_votes: dict[tuple, set] = {}
        self.chkpt_votes: dict[tuple, dict] = {}
        self.chkpt_sent: set[int] = set()
        self.lazy_pending: dict[int, CommitEntry] = {}
        # view change / fault detection state that survives views
        self.sus_set: dict[int, Suspect] = {}
        self.my_suspects: dict[int, Suspect] = {}
        self.catchup_sent: dict = {}
        self.hello_sent: dict = {}
        self.future: dict[int, list] = {}
        self.pre = 0
        self.final_proof: dict[int, tuple] = {}
        self.final_set: dict[int, tuple] = {}
        self.fset: set[Principal] = set()
        self.accusations: list[Accusation] = []
        self.accusations_seen: set[bytes] = set()
        self.my_vc: Optional[ViewChange] = None
        self.vc_retransmits = 0
        self.reset_view_state()

    # ------------------------------------------------------------ plumbing

    @property
    def now(self) -> int:
        return self.env.now

    def group(self, view: Optional[int] = None) -> SynchronousGroup:
        return synchronous_group_for_view(self.view if view is None else view, self.n)

    def sign(self, msg):
        return _with_auth(msg, self.signer.sign(msg.payload_digest))

    def mac(self, msg, receiver: Principal):
        return _with_auth(msg, self.signer.mac(receiver, msg.payload_digest))

    def send(self, dst: Principal, msg) -> None:
        if self.policy_active() and not self.policy.allow_send(self, dst, msg):
            return
        self.env.send(self.id, dst, msg)

    def broadcast_replicas(self, msg, exclude=()) -> None:
        for j in range(self.n):
            dst = replica(j)
            if dst != self.id and dst not in exclude:
                self.send(dst, msg)

    def set_timer(self, key: str, delay: int) -> None:
        self.env.set_timer(self.id, key, delay)

    def cancel_timer(self, key: str) -> None:
        self.env.cancel_timer(self.id, key)

    def trace(self, kind: str, /, **fields) -> None:
        self.env.trace(kind, str(self.id), **fields)

    def policy_active(self) -> bool:
        return self.policy is not None and self.policy.active(self.now)

    @staticmethod
    def label(batch) -> list[str]:
        return [r.op.decode("utf-8", "replace") for r in batch]

    def reset_view_state(self) -> None:
        self.pending: list[Request] = []
        self.pending_keys: set = set()
        self.prepare_buffer: dict[int, PrepareEntry] = {}
        self.commit_votes: dict[tuple, dict] = {}
        self.req_waits: dict[tuple, Request] = {}
        self.signed_replies: dict[tuple, dict] = {}
        self.signed_sent: set[tuple] = set()
        self.vcset: dict[Principal, ViewChange] = {}
        self.net_expired = False
        self.vc_final_sent: Optional[VcFinal] = None
        self.vc_finals: dict[Principal, VcFinal] = {}
        self.finals_done = False
        self.selection = None
        self.pending_new_view: Optional[NewView] = None
        self.fd_union = None
        self.fd_filtered = None
        self.my_confirm: Optional[VcConfirm] = None
        self.vc_confirms: dict[Principal, VcConfirm] = {}
        self.confirmed = False
        for key in ("batch", "net", "vc", "fd-wait"):
            if hasattr(self, "env"):
                self.cancel_timer(key)
        for key in list(getattr(self, "_req_timer_keys", ())):
            self.cancel_timer(key)
        self._req_timer_keys: set[str] = set()

    def buffer_future(self, view: int, src, msg) -> None:
        queue = self.future.setdefault(view, [])
        if len(queue) < self.config.reorder_limit:
            queue.append((src, msg))
        if src.is_replica and src != self.id:
            # the sender is ahead of us; ask it to replay what we missed
            last = self.hello_sent.get(src)
            if last is None or self.now - last >= self.config.delta:
                self.hello_sent[src] = self.now
                self.send(src, Hello(self.view, self.id))

    def drain_future(self, view: int) -> None:
        for v in [v for v in self.future if v < view]:
            del self.future[v]
        queue = self.future.pop(view, [])
        for src, msg in queue:
            self.on_message(src, msg)

    def waiting_clients(self) -> list[Principal]:
        return sorted({k[0] for k in self.req_waits})

    # ------------------------------------------------------------ dispatch

    def on_message(self, src: Principal, msg) -> None:
        handler = _HANDLERS.get(type(msg))
        if handler is not None:
            handler(self, src, msg)

    def on_timer(self, key: str) -> None:
        if key == "batch":
            self.flush_batch()
        elif key == "net":
            self.on_net_timer()
        elif key == "vc":
            self.on_vc_timer()
        elif key == "vc-retransmit":
            self.on_vc_retransmit()
        elif key == "fd-wait":
            self.on_fd_wait()
        elif key.startswith("req:"):
            self.on_req_timer(key)

    def on_crash(self) -> None:
        self.trace("crash")

    def on_recover(self) -> None:
        self.trace("recover", view=self.view)
        hello = Hello(self.view, self.id)
        self.broadcast_replicas(hello)
        if self.pending:
            self.set_timer("batch", self.config.batch_timeout)
        for key in sorted(self._req_timer_keys):
            self.set_timer(key, self.config.timer_req)
        if self.status == VIEW_CHANGE:
            self.net_expired = True
            self.maybe_send_final()
            if self.vc_final_sent is not None:
                self.set_timer("vc", self.config.vc_timeout)
        self.set_timer("vc-retransmit", self.config.delta)

    # ------------------------------------------------------------ execution

    def state_snapshot(self) -> bytes:
        dedupe = tuple(sorted((str(c), ts, res, sn) for c, (ts, res, sn) in self.dedupe.items()))
        return encode((self.app.snapshot(), dedupe))

    def restore_to_checkpoint(self) -> None:
        self.app = self.app_factory()
        self.dedupe = {}
        self.results_by_sn = {}
        self.exec_digest = {k: v for k, v in self.exec_digest.items()
                            if self.stable is not None and k <= self.stable.sn}
        if self.stable is not None:
            self._load_snapshot(self.stable.snapshot)
            self.ex = self.stable.sn
        else:
            self.ex = 0

    def _load_snapshot(self, snapshot: bytes) -> None:
        app_state, dedupe = _decode_snapshot(snapshot)
        self.app.restore(app_state)
        self.dedupe = {Principal.parse(c): (ts, res, sn) for c, ts, res, sn in dedupe}

    def execute_batch(self, sn: int, batch: tuple, replay: bool = False) -> tuple:
        """Apply one batch at ``sn = ex + 1``; at-most-once per (client, ts)."""
        assert sn == self.ex + 1, (self.id, sn, self.ex)
        results = []
        for req in batch:
            last = self.dedupe.get(req.client)
            if last is not None and req.ts <= last[0]:
                result = last[1] if req.ts == last[0] else b""
            else:
                result = self.app.execute(req.op)
                self.dedupe[req.client] = (req.ts, result, sn)
            results.append((req.client, req.ts, result))
        self.ex = sn
        self.results_by_sn[sn] = tuple(results)
        self.exec_digest[sn] = batch_digest(batch)
        self.trace("execute", sn=sn, d=short(self.exec_digest[sn]), ops=self.label(batch),
                   replay=replay)
        if sn % self.config.chk == 0:
            self.snapshots[sn] = self.state_snapshot()
            if not replay:
                self.begin_checkpoint(sn)
        if not replay:
            # a re-sent request that was still in flight, or a peer that asked
            # for our signature before we had executed it
            for c, ts, _ in results:
                key = (c, ts)
                if key in self.signed_replies and key not in self.signed_sent:
                    self.send_signed_reply(c, ts)
                    self._flush_signed(key)
        return tuple(results)

    def reply_digests(self, sn: int) -> tuple:
        return tuple(reply_digest(c, ts, res) for c, ts, res in self.results_by_sn[sn])

    # ------------------------------------------------------------ requests

    def on_request(self, src, req: Request) -> None:
        if self.status != NORMAL or not self.verifier.request(req):
            return
        sg = self.group()
        if not sg.is_active(self.id):
            return
        if sg.primary != self.id:
            self.send(sg.primary, req)
            return
        last = self.dedupe.get(req.client)
        if last is not None and req.ts <= last[0]:
            if req.ts == last[0]:
                self.resend_reply(req)
            return
        if req.key in self.pending_keys or self._in_flight(req):
            return
        self.pending.append(req)
        self.pending_keys.add(req.key)
        if len(self.pending) >= self.config.batch_size:
            self.flush_batch()
        else:
            self.set_timer("batch", self.config.batch_timeout)

    def _in_flight(self, req: Request) -> bool:
        for sn in range(self.ex + 1, self.sn + 1):
            e = self.prepare_log.get(sn)
            if e is not None and any(r.key == req.key for r in e.batch):
                return True
        return False

    def flush_batch(self) -> None:
        self.cancel_timer("batch")
        sg = self.group()
        if self.status != NORMAL or sg.primary != self.id or not self.pending:
            return
        while self.pending:
            batch = tuple(self.pending[: self.config.batch_size])
            del self.pending[: self.config.batch_size]
            for r in batch:
                self.pending_keys.discard(r.key)
            self.sn += 1
            d = batch_digest(batch)
            entry = PrepareEntry(batch, self.sign(Prepare(self.view, self.sn, d, self.id)))
            if self.policy_active():
                entry = self.policy.forge_prepare(self, entry) or entry
            self.prepare_log[self.sn] = entry
            self.trace("prepare", view=self.view, sn=self.sn, d=short(d), ops=self.label(batch))
            for f in sg.followers:
                self.send(f, entry)
            if len(self.pending) < self.config.batch_size:
                break
        if self.pending:
            self.set_timer("batch", self.config.batch_timeout)

    def resend_reply(self, req: Request) -> None:
        ts, result, sn = self.dedupe[req.client]
        sg = self.group()
        d_batch = self.exec_digest.get(sn, b"")
        if self.t == 1:
            e = self.commit_log.get(sn)
            if e is not None and e.view == self.view and sg.primary == self.id and sn in self.results_by_sn:
                self.send_t1_replies(sn, only=req.client)
            return
        self.send(req.client, self.mac(Reply(self.view, sn, ts, req.client, result, d_batch,
                                             self.id), req.client))

    # ------------------------------------------------------------ follower

    def on_prepare_entry(self, src, e: PrepareEntry) -> None:
        if e.view > self.view:
            self.buffer_future(e.view, src, e)
            return
        if e.view < self.view:
            self.catch_up(src, e.view)
            return
        if self.status != NORMAL:
            self.buffer_future(e.view, src, e)
            return
        sg = self.group()
        if self.id not in sg.followers or src != sg.primary:
            return
        if not self.verifier.prepare_entry(e):
            self.suspect_view("bad-prepare")
            return
        if e.sn <= self.sn:
            return
        if e.sn > self.sn + 1:
            if len(self.prepare_buffer) < self.config.reorder_limit:
                self.prepare_buffer[e.sn] = e
            return
        self.prepare_log[e.sn] = e
        self.sn = e.sn
        self.commit_prepared(e)
        nxt = self.prepare_buffer.pop(self.sn + 1, None)
        if nxt is not None:
            self.on_prepare_entry(src, nxt)

    def commit_prepared(self, e: PrepareEntry) -> None:
        """Follower side of a prepared entry (also used for re-proposals)."""
        sg = self.group()
        if self.t == 1:
            if e.sn == self.ex + 1:
                self.execute_batch(e.sn, e.batch)
            digests = self.reply_digests(e.sn)
            m1 = self.sign(Commit(self.view, e.sn, e.d_batch, self.id,
                                  tuple(r.ts for r in e.batch), replies_digest(digests)))
            if self.policy_active():
                m1 = self.policy.forge_commit(self, m1) or m1
            entry = CommitEntry(e.batch, e.prepare, (m1,))
            self.store_commit(entry)
            self.send(sg.primary, m1)
            self.lazy_replicate(entry)
            self.signed_replies_for(e.sn)
        else:
            c = self.sign(Commit(self.view, e.sn, e.d_batch, self.id))
            for a in sg.actives:
                self.send(a, c)

    def store_commit(self, entry: CommitEntry) -> None:
        self.commit_log[entry.sn] = entry
        self.trace("commit", view=entry.view, sn=entry.sn, d=short(entry.d_batch),
                   ops=self.label(entry.batch))

    # ------------------------------------------------------------ commits

    def on_commit(self, src, c: Commit) -> None:
        if c.view > self.view:
            self.buffer_future(c.view, src, c)
            return
        if c.view < self.view:
            self.catch_up(src, c.view)
            return
        sg = self.group()
        if not sg.is_active(self.id) or c.replica != src or c.replica not in sg.followers:
            return
        if self.t == 1 and self.id != sg.primary:
            return
        votes = self.commit_votes.setdefault((c.view, c.sn), {})
        if c.replica in votes:
            return
        votes[c.replica] = c
        self.try_commit(c.sn)

    def try_commit(self, sn: int) -> None:
        sg = self.group()
        e = self.prepare_log.get(sn)
        votes = self.commit_votes.get((self.view, sn))
        if e is None or e.view != self.view or not votes:
            return
        if sn in self.commit_log and self.commit_log[sn].view == self.view:
            return
        good = {}
        for r, c in votes.items():
            if self.verifier.commit(c, self.view, sn, e.d_batch):
                good[r] = c
            else:
                self.suspect_view("bad-commit")
                return
        if len(good) < self.t:
            return
        commits = tuple(good[f] for f in sg.followers)
        entry = CommitEntry(e.batch, e.prepare, commits)
        self.store_commit(entry)
        if sn <= self.ex and sn in self.results_by_sn:
            self.after_commit(sn)
        self.try_execute()
        if self.t > 1 and self.id in sg.followers:
            self.lazy_replicate(entry)

    def try_execute(self) -> None:
        while True:
            sn = self.ex + 1
            e = self.commit_log.get(sn)
            if e is None or e.view != self.view or self.status != NORMAL:
                return
            self.execute_batch(sn, e.batch)
            self.after_commit(sn)

    def after_commit(self, sn: int) -> None:
        """Replies for a committed and executed sn."""
        sg = self.group()
        if self.t == 1:
            if sg.primary != self.id:
                return
            m1 = self.commit_log[sn].commits[0]
            if m1.d_reply != replies_digest(self.reply_digests(sn)):
                self.trace("reply-mismatch", sn=sn)
                self.suspect_view("reply-mismatch")
                return
            self.send_t1_replies(sn)
        else:
            e = self.commit_log[sn]
            for c, ts, result in self.results_by_sn[sn]:
                if self.is_latest(c, ts):
                    r = Reply(self.view, sn, ts, c, result, e.d_batch, self.id)
                    self.send(c, self.mac(r, c))
        self.signed_replies_for(sn)

    def is_latest(self, c: Principal, ts: int) -> bool:
        """Only a client's newest request can still be awaited."""
        last = self.dedupe.get(c)
        return last is not None and last[0] == ts

    def signed_replies_for(self, sn: int) -> None:
        for c, ts, result in self.results_by_sn[sn]:
            if (c, ts) in self.req_waits and (c, ts) not in self.signed_sent:
                self.send_signed_reply(c, ts)

    def send_t1_replies(self, sn: int, only: Optional[Principal] = None) -> None:
        e = self.commit_log[sn]
        m1 = e.commits[0]
        req_digests = tuple(r.payload_digest for r in e.batch)
        rep_digests = self.reply_digests(sn)
        for c, ts, result in self.results_by_sn[sn]:
            if (only is not None and c != only) or not self.is_latest(c, ts):
                continue
            r = self.mac(Reply(self.view, sn, ts, c, result, e.d_batch, self.id), c)
            self.send(c, ReplyBundle(r, m1, req_digests, rep_digests))

    # ------------------------------------------------------------ retransmission

    def on_resend(self, src, rs: ReSend) -> None:
        req = rs.request
        if not self.verifier.request(req) or src != req.client:
            return
        if rs.view < self.view:
            self.catch_up(src, rs.view)
        sg = self.group()
        if self.status != NORMAL or not sg.is_active(self.id):
            return
        key = req.key
        last = self.dedupe.get(req.client)
        if last is not None and req.ts < last[0]:
            return
        self.req_waits[key] = req
        timer = f"req:{req.client}:{req.ts}"
        if timer not in self._req_timer_keys:
            self._req_timer_keys.add(timer)
            self.set_timer(timer, self.config.timer_req)
        if last is not None and req.ts == last[0]:
            self.send_signed_reply(req.client, req.ts)
            self.resend_reply(req)
        elif sg.primary == self.id:
            self.on_request(self.id, req)
        else:
            self.send(sg.primary, req)

    def send_signed_reply(self, c: Principal, ts: int) -> None:
        last = self.dedupe.get(c)
        if last is None or last[0] != ts:
            return
        _, result, sn = last
        self.signed_sent.add((c, ts))
        sr = self.sign(SignedReply(self.view, sn, ts, c, digest_of(("result", result)),
                                   self.exec_digest.get(sn, b""), self.id))
        for a in self.group().actives:
            self.send(a, sr)

    def on_signed_reply(self, src, sr: SignedReply) -> None:
        if sr.view != self.view or self.status != NORMAL:
            return
        sg = self.group()
        if not sg.is_active(self.id) or not sg.is_active(sr.replica):
            return
        if not self.verifier.signed(sr, sr.replica):
            return
        key = (sr.client, sr.ts)
        bucket = self.signed_replies.setdefault(key, {})
        bucket[sr.replica] = sr
        last = self.dedupe.get(sr.client)
        if last is None or last[0] != sr.ts:
            return
        if key not in self.signed_sent:
            # a peer is collecting signatures for this reply; add ours
            self.send_signed_reply(sr.client, sr.ts)
        self._flush_signed(key)

    def _flush_signed(self, key: tuple) -> None:
        if key not in self.req_waits:
            return
        c, ts = key
        last = self.dedupe.get(c)
        if last is None or last[0] != ts:
            return
        mine = digest_of(("result", last[1]))
        bucket = self.signed_replies.get(key, {})
        match = sorted((r for r in bucket.values() if (r.sn, r.d_result) == (last[2], mine)),
                       key=lambda r: r.replica)
        if len(match) >= self.t + 1:
            self.send(c, SignedReplyBundle(last[1], tuple(match[: self.t + 1])))
            del self.req_waits[key]
            timer = f"req:{c}:{ts}"
            self._req_timer_keys.discard(timer)
            self.cancel_timer(timer)

    def on_req_timer(self, key: str) -> None:
        self._req_timer_keys.discard(key)
        if self.status == NORMAL:
            self.suspect_view("request-timeout")

    # ------------------------------------------------------------ checkpoints

    def begin_checkpoint(self, sn: int) -> None:
        sg = self.group()
        if not sg.is_active(self.id) or self.status != NORMAL:
            return
        d = digest_of(("state", self.snapshots[sn]))
        for a in sg.actives:
            self.send(a, self.mac(PreChk(self.view, sn, d, self.id), a))

    def on_prechk(self, src, p: PreChk) -> None:
        sg = self.group(p.view)
        if p.view != self.view or not sg.is_active(self.id) or not sg.is_active(p.replica):
            return
        if p.replica != src or not self.verifier.maced(p, p.replica, self.id):
            return
        votes = self.prechk_votes.setdefault((p.sn, p.d_state), set())
        votes.add(p.replica)
        if len(votes) >= self.t + 1 and p.sn not in self.chkpt_sent and p.sn in self.snapshots:
            mine = digest_of(("state", self.snapshots[p.sn]))
            if mine != p.d_state:
                self.suspect_view("checkpoint-mismatch")
                return
            self.chkpt_sent.add(p.sn)
            c = self.sign(Chkpt(self.view, p.sn, p.d_state, self.id))
            for a in sg.actives:
                self.send(a, c)

    def on_chkpt(self, src, c: Chkpt) -> None:
        if not self.verifier.chkpt(c):
            return
        votes = self.chkpt_votes.setdefault((c.view, c.sn, c.d_state), {})
        votes[c.replica] = c
        if len(votes) < self.t + 1 or c.sn not in self.snapshots:
            return
        if self.stable is not None and self.stable.sn >= c.sn:
            return
        snap = self.snapshots[c.sn]
        if digest_of(("state", snap)) != c.d_state:
            return
        proof = tuple(votes[k] for k in sorted(votes))[: self.t + 1]
        self.make_stable(Checkpoint(c.sn, c.d_state, proof, snap))
        sg = self.group(c.view)
        if self.id in sg.followers and c.view == self.view:
            for p in sg.passives:
                self.send(p, LazyChk(self.stable))

    def make_stable(self, ck: Checkpoint) -> None:
        self.stable = ck
        self.trace("checkpoint", sn=ck.sn, d=short(ck.d_state))
        for log in (self.prepare_log, self.commit_log, self.results_by_sn, self.lazy_pending):
            for k in [k for k in log if k <= ck.sn]:
                del log[k]
        for k in [k for k in self.snapshots if k < ck.sn]:
            del self.snapshots[k]
        for key in [k for k in self.chkpt_votes if k[1] <= ck.sn]:
            del self.chkpt_votes[key]
        for key in [k for k in self.prechk_votes if k[0] <= ck.sn]:
            del self.prechk_votes[key]

    def adopt_checkpoint(self, ck: Checkpoint) -> None:
        """Take over a verified stable checkpoint from someone else."""
        self.snapshots[ck.sn] = ck.snapshot
        self.make_stable(ck)
        if self.ex < ck.sn:
            self.restore_to_checkpoint()

    # ------------------------------------------------------------ lazy replication

    def lazy_replicate(self, entry: CommitEntry) -> None:
        if not self.config.lazy:
            return
        sg = self.group(entry.view)
        if self.id not in sg.followers:
            return
        k = sg.followers.index(self.id)
        if (entry.sn - 1) % self.t != k:
            return
        for p in sg.passives:
            self.send(p, LazyEntry(entry))

    def on_lazy_entry(self, src, le: LazyEntry) -> None:
        e = le.entry
        if e.view > self.view:
            self.buffer_future(e.view, src, le)
            return
        sg = self.group(e.view)
        if sg.is_active(self.id) and e.view == self.view:
            return
        if src not in sg.followers or not self.verifier.commit_entry(e):
            return
        base = self.stable.sn if self.stable is not None else 0
        if e.sn <= base:
            return
        cur = self.commit_log.get(e.sn)
        if cur is not None and cur.view >= e.view:
            return
        rebuild = e.sn <= self.ex and self.exec_digest.get(e.sn) != e.d_batch
        if rebuild:
            # a newer view replaced an entry we already applied
            for k in [k for k in self.commit_log if k >= e.sn and self.commit_log[k].view < e.view]:
                del self.commit_log[k]
        self.commit_log[e.sn] = e
        self.trace("lazy-commit", view=e.view, sn=e.sn, d=short(e.d_batch), ops=self.label(e.batch))
        if rebuild:
            self.restore_to_checkpoint()
        self.passive_execute()

    def passive_execute(self) -> None:
        while self.ex + 1 in self.commit_log:
            sn = self.ex + 1
            self.execute_batch(sn, self.commit_log[sn].batch, replay=True)

    def on_lazychk(self, src, lc: LazyChk) -> None:
        ck = lc.checkpoint
        if not self.verifier.checkpoint(ck):
            return
        if self.stable is not None and self.stable.sn >= ck.sn:
            return
        if self.ex >= ck.sn and self.snapshots.get(ck.sn) is not None and \
                digest_of(("state", self.snapshots[ck.sn])) == ck.d_state:
            self.make_stable(ck)
            return
        self.adopt_checkpoint(ck)
        self.passive_execute()


def _with_auth(msg, auth):
    fields = {k: v for k, v in msg.__dict__.items() if k in msg.__dataclass_fields__}
    fields["auth"] = auth
    return type(msg)(**fields)


def _decode_snapshot(blob: bytes):
    app_state, dedupe = decode(blob)
    app_state = tuple(tuple(kv) for kv in app_state)
    return app_state, tuple(tuple(x) for x in dedupe)


_HANDLERS = {
    Request: Replica.on_request,
    PrepareEntry: Replica.on_prepare_entry,
    Commit: Replica.on_commit,
    ReSend: Replica.on_resend,
    SignedReply: Replica.on_signed_reply,
    PreChk: Replica.on_prechk,
    Chkpt: Replica.on_chkpt,
    LazyEntry: Replica.on_lazy_entry,
    LazyChk: Replica.on_lazychk,
    Suspect: Replica.on_suspect,
    ViewChange: Replica.on_view_change,
    VcFinal: Replica.on_vc_final,
    NewView: Replica.on_new_view,
    VcConfirm: Replica.on_vc_confirm,
    Accusation: Replica.on_accusation,
    ForkIIQuery: Replica.on_fork_ii_query,
    Hello: Replica.on_hello,
}
