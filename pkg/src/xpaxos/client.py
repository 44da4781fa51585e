"""Closed-loop client: one request in flight, reply matching, and the
re-send/suspect escalation path."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .core import Principal, digest_of, short, synchronous_group_for_view
from .messages import (
    Reply,
    ReplyBundle,
    Request,
    ReSend,
    SignedReplyBundle,
    Suspect,
    Verifier,
    batch_digest,
    reply_digest,
)


class ClientBusy(RuntimeError):
    """Raised by :meth:`Client.propose` while a request is outstanding."""


@dataclass(frozen=True)
class Delivery:
    ts: int
    sn: int
    view: int
    d_batch: bytes
    result: bytes


class Client:
    def __init__(self, cid: Principal, n: int, env, signer, verifier: Verifier, timer_c: int):
        self.id = cid
        self.n = n
        self.t = (n - 1) // 2
        self.env = env
        self.signer = signer
        self.verifier = verifier
        self.timer_c = timer_c
        self.ts = 0
        self.view = 0
        self.in_flight: Optional[Request] = None
        self.replies: dict[tuple, dict] = {}
        self.suspects: dict[int, Suspect] = {}
        self.delivered: list[Delivery] = []
        self.on_deliver = None  # callback(client, delivery), set by the driver

    @property
    def now(self) -> int:
        return self.env.now

    def trace(self, kind: str, /, **fields) -> None:
        self.env.trace(kind, str(self.id), **fields)

    def group(self):
        return synchronous_group_for_view(self.view, self.n)

    # ------------------------------------------------------------ proposing

    def propose(self, op: bytes) -> Request:
        if self.in_flight is not None:
            raise ClientBusy(f"{self.id} already has request ts={self.in_flight.ts} in flight")
        self.ts += 1
        req = Request(op, self.ts, self.id)
        req = Request(op, self.ts, self.id, self.signer.sign(req.payload_digest))
        self.in_flight = req
        self.replies = {}
        self.trace("propose", ts=self.ts, op=op.decode("utf-8", "replace"), view=self.view)
        self.env.send(self.id, self.group().primary, req)
        self.env.set_timer(self.id, "c", self.timer_c)
        return req

    def on_timer(self, key: str) -> None:
        if key != "c" or self.in_flight is None:
            return
        self.trace("timeout", ts=self.in_flight.ts, view=self.view)
        rs = ReSend(self.in_flight, self.view)
        for a in self.group().actives:
            self.env.send(self.id, a, rs)
        self.env.set_timer(self.id, "c", self.timer_c)

    def on_recover(self) -> None:
        if self.in_flight is not None:
            self.env.set_timer(self.id, "c", self.timer_c)

    def on_crash(self) -> None:
        pass

    # ------------------------------------------------------------ replies

    def on_message(self, src: Principal, msg) -> None:
        if isinstance(msg, Suspect):
            self.on_suspect(src, msg)
            return
        req = self.in_flight
        if req is None:
            return
        if isinstance(msg, ReplyBundle):
            self._on_bundle(src, msg, req)
        elif isinstance(msg, SignedReplyBundle):
            self._on_signed_bundle(msg, req)
        elif isinstance(msg, Reply):
            self._on_reply(src, msg, req)

    def _on_bundle(self, src, b: ReplyBundle, req: Request) -> None:
        if self.t != 1:
            return
        r, m1 = b.reply, b.m1
        sg = synchronous_group_for_view(r.view, self.n)
        if src != sg.primary or r.replica != src or r.ts != req.ts or r.client != self.id:
            return
        if not self.verifier.maced(r, r.replica, self.id):
            return
        if not self.verifier.commit(m1, r.view, r.sn, r.d_batch):
            return
        if batch_digest_from(b.request_digests) != r.d_batch or req.payload_digest not in b.request_digests:
            return
        if digest_of(("replies", tuple(b.reply_digests))) != m1.d_reply:
            return
        if reply_digest(self.id, req.ts, r.result) not in b.reply_digests or req.ts not in m1.ts:
            return
        self.accept(Delivery(req.ts, r.sn, r.view, r.d_batch, r.result))

    def _on_signed_bundle(self, b: SignedReplyBundle, req: Request) -> None:
        replies = b.replies
        if len(replies) != self.t + 1:
            return
        head = replies[0]
        sg = synchronous_group_for_view(head.view, self.n)
        signers = {r.replica for r in replies}
        if len(signers) != self.t + 1 or not all(sg.is_active(s) for s in signers):
            return
        d_result = digest_of(("result", b.result))
        for r in replies:
            if (r.view, r.sn, r.ts, r.client, r.d_result, r.d_batch) != \
                    (head.view, head.sn, req.ts, self.id, d_result, head.d_batch):
                return
            if not self.verifier.signed(r, r.replica):
                return
        self.accept(Delivery(req.ts, head.sn, head.view, head.d_batch, b.result))

    def _on_reply(self, src, r: Reply, req: Request) -> None:
        if self.t == 1 or r.replica != src or r.ts != req.ts or r.client != self.id:
            return
        sg = synchronous_group_for_view(r.view, self.n)
        if not sg.is_active(r.replica) or not self.verifier.maced(r, r.replica, self.id):
            return
        key = (r.view, r.sn, r.result, r.d_batch)
        votes = self.replies.setdefault(key, set())
        votes.add(r.replica)
        if len(votes) >= self.t + 1:
            self.accept(Delivery(req.ts, r.sn, r.view, r.d_batch, r.result))

    def accept(self, d: Delivery) -> None:
        self.in_flight = None
        self.replies = {}
        self.env.cancel_timer(self.id, "c")
        self.delivered.append(d)
        self.trace("deliver", ts=d.ts, sn=d.sn, view=d.view, d_batch=short(d.d_batch),
                   result=d.result.decode("utf-8", "replace"))
        if d.view > self.view:
            self.jump(d.view, "reply")
        if self.on_deliver is not None:
            self.on_deliver(self, d)

    # ------------------------------------------------------------ suspects

    def on_suspect(self, src, s: Suspect) -> None:
        if s.view < self.view or s.view in self.suspects or not self.verifier.suspect(s):
            return
        self.suspects[s.view] = s
        if s.view != self.view:
            return  # kept until the client reaches that view
        target = self.view + 1
        while target in self.suspects:
            target += 1
        self.jump(target, "suspect")
        sg = self.group()
        for v in range(s.view, target):
            for a in sg.actives:
                self.env.send(self.id, a, self.suspects[v])
        if self.in_flight is not None:
            self.env.send(self.id, sg.primary, self.in_flight)
            self.env.set_timer(self.id, "c", self.timer_c)

    def jump(self, view: int, how: str) -> None:
        if view <= self.view:
            return
        self.trace("view-jump", frm=self.view, to=view, how=how)
        self.view = view


def batch_digest_from(request_digests) -> bytes:
    return digest_of(("batch", tuple(request_digests)))


__all__ = ["Client", "ClientBusy", "Delivery", "batch_digest", "batch_digest_from"]
