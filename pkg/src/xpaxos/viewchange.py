"""View change: suspicion, state transfer among the new actives, and
new-view installation.

``select`` is the pure part (which entry wins each sequence number); the
``ViewChangeMixin`` holds the event handlers and is mixed into
:class:`xpaxos.replica.Replica`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

from .core import digest_of, short, synchronous_group_for_view
from .messages import (
    Checkpoint,
    CommitEntry,
    Hello,
    NewView,
    Prepare,
    PrepareEntry,
    Suspect,
    VcFinal,
    ViewChange,
    batch_digest,
)

NORMAL, VIEW_CHANGE = "normal", "view-change"


@dataclass(frozen=True)
class Chosen:
    sn: int
    batch: tuple
    d_batch: bytes
    source_view: int  # -1 for a gap filled with an empty batch
    source: str  # "commit", "prepare" or "gap"


@dataclass
class Selection:
    checkpoint: Optional[Checkpoint]
    entries: list[Chosen]
    conflicts: list[tuple[int, int, bytes, bytes]] = field(default_factory=list)

    @property
    def base(self) -> int:
        return self.checkpoint.sn if self.checkpoint is not None else 0

    @property
    def end(self) -> int:
        return self.entries[-1].sn if self.entries else self.base

    def signature(self) -> tuple:
        ck = None if self.checkpoint is None else (self.checkpoint.sn, self.checkpoint.d_state)
        return (ck, tuple((c.sn, c.d_batch) for c in self.entries))

    def at(self, sn: int) -> Optional[Chosen]:
        idx = sn - self.base - 1
        if 0 <= idx < len(self.entries):
            return self.entries[idx]
        return None


def _highest(entries: Iterable, conflicts: list) -> dict:
    best: dict = {}
    for e in entries:
        cur = best.get(e.sn)
        if cur is None or e.view > cur.view:
            best[e.sn] = e
        elif e.view == cur.view and e.d_batch != cur.d_batch:
            # Two valid entries for one sn in one view cannot both be
            # genuine outside anarchy; keep a deterministic winner and
            # report the clash.
            conflicts.append((e.sn, e.view, cur.d_batch, e.d_batch))
            if e.d_batch < cur.d_batch:
                best[e.sn] = e
    return best


def select(vcset: Iterable[ViewChange], with_prepares: bool = False) -> Selection:
    """Per sequence number, the entry generated in the highest view.

    Commit logs always take part.  With fault detection, prepare logs take
    part too and a prepare from a strictly higher view beats the commit.
    Entries at or below the highest checkpoint are covered by it; holes up
    to the last chosen sn are filled with empty batches.
    """
    vcset = list(vcset)
    checkpoint = None
    for m in vcset:
        ck = m.checkpoint
        if ck is not None and (checkpoint is None or ck.sn > checkpoint.sn
                               or (ck.sn == checkpoint.sn and ck.d_state < checkpoint.d_state)):
            checkpoint = ck
    base = checkpoint.sn if checkpoint is not None else 0
    conflicts: list = []
    commits = _highest((e for m in vcset for e in m.commit_log if e.sn > base), conflicts)
    prepares = {}
    if with_prepares:
        prepares = _highest((e for m in vcset for e in (m.prepare_log or ()) if e.sn > base),
                            conflicts)
    last = max(list(commits) + list(prepares) + [base])
    chosen = []
    for sn in range(base + 1, last + 1):
        c, p = commits.get(sn), prepares.get(sn)
        if c is not None and (p is None or p.view <= c.view):
            chosen.append(Chosen(sn, c.batch, c.d_batch, c.view, "commit"))
        elif p is not None:
            chosen.append(Chosen(sn, p.batch, p.d_batch, p.view, "prepare"))
        else:
            chosen.append(Chosen(sn, (), batch_digest(()), -1, "gap"))
    return Selection(checkpoint, chosen, conflicts)


def vcset_digest(vcset: Iterable[ViewChange]) -> bytes:
    return digest_of(("vcset", tuple(m.payload_digest for m in vcset)))


def canonical_vcset(messages: Iterable[ViewChange]) -> tuple:
    unique = {m.payload_digest: m for m in messages}
    return tuple(sorted(unique.values(), key=lambda m: (m.replica, m.payload_digest)))


class ViewChangeMixin:
    """Event handlers for suspicion, view-change collection and new-view
    installation.  Relies on the replica for ``send``, ``sign``, timers,
    tracing and the log/state fields."""

    # ---------------------------------------------------------------- suspect

    def suspect_view(self, reason: str, view: Optional[int] = None) -> None:
        view = self.view if view is None else view
        if view != self.view or not self.group(view).is_active(self.id):
            return
        if view in self.my_suspects:
            return
        s = self.sign(Suspect(view, self.id))
        self.my_suspects[view] = s
        self.trace("suspect", view=view, reason=reason)
        self.broadcast_replicas(s)
        for c in self.waiting_clients():
            self.send(c, s)
        self.on_suspect(self.id, s)

    def on_suspect(self, src, s: Suspect) -> None:
        if s.view in self.sus_set or not self.verifier.suspect(s):
            return
        self.sus_set[s.view] = s
        if s.view < self.view:
            return
        if src != self.id:
            self.broadcast_replicas(s, exclude=(src,))
        target = s.view + 1
        while target in self.sus_set:
            target += 1
        if target > self.view:
            self.enter_view(target)

    def catch_up(self, dst, their_view: int) -> None:
        """Bring a lagging party up to date by replaying the suspects that
        moved us past its view."""
        if their_view >= self.view:
            return
        last = self.catchup_sent.get(dst)
        if last is not None and last[0] == self.view and self.now - last[1] < self.config.delta:
            return
        self.catchup_sent[dst] = (self.view, self.now)
        for v in range(their_view, self.view):
            s = self.sus_set.get(v)
            if s is not None:
                self.send(dst, s)

    def on_hello(self, src, h: Hello) -> None:
        self.catch_up(src, h.view)
        for acc in self.accusations:
            self.send(src, acc)

    # ------------------------------------------------------------ enter view

    def enter_view(self, view: int) -> None:
        while self.view < view:
            self.view += 1
            self.trace("enter-view", view=self.view)
        self.status = VIEW_CHANGE
        self.reset_view_state()
        vc = self.build_view_change(view)
        self.my_vc = vc
        sg = self.group(view)
        for a in sg.actives:
            self.send(a, vc)
        if sg.is_active(self.id):
            self.set_timer("net", 2 * self.config.delta)
        else:
            self.status = NORMAL
        self.vc_retransmits = 0
        self.set_timer("vc-retransmit", self.config.delta)
        if self.policy_active():
            self.policy.on_enter_view(self, view)
        self.drain_future(view)

    def build_view_change(self, view: int) -> ViewChange:
        base = self.stable.sn if self.stable is not None else 0
        commit_log = tuple(e for k, e in sorted(self.commit_log.items())
                           if k > base and e.view < view)
        prepare_log = final_proof = None
        if self.config.fd:
            prepare_log = tuple(e for k, e in sorted(self.prepare_log.items())
                                if k > base and e.view < view)
            final_proof = self.final_proof.get(self.pre)
        fields = dict(view=view, replica=self.id, commit_log=commit_log, prepare_log=prepare_log,
                      final_proof=final_proof, pre=self.pre if self.config.fd else 0,
                      checkpoint=self.stable)
        if self.policy_active():
            fields = self.policy.forge_view_change(self, fields)
        return self.sign(ViewChange(**fields))

    # -------------------------------------------------------- collect phase

    def _vc_context_ok(self, src, msg, view: int) -> bool:
        """Common gatekeeping for view-change traffic of ``view``."""
        if view > self.view:
            self.buffer_future(view, src, msg)
            return False
        if view < self.view:
            self.catch_up(src, view)
            return False
        return self.status == VIEW_CHANGE and self.group(view).is_active(self.id)

    def on_view_change(self, src, m: ViewChange) -> None:
        if not self._vc_context_ok(src, m, m.view):
            return
        if m.replica in self.vcset or self.vc_final_sent is not None:
            return
        if not self.verifier.view_change(m, self.config.fd):
            self.trace("reject", what="view-change", sender=str(m.replica))
            return
        self.vcset[m.replica] = m
        self.maybe_send_final()

    def on_net_timer(self) -> None:
        self.net_expired = True
        self.maybe_send_final()

    def maybe_send_final(self) -> None:
        if self.vc_final_sent is not None or self.status != VIEW_CHANGE:
            return
        n, t = self.n, self.t
        if len(self.vcset) == n or (self.net_expired and len(self.vcset) >= n - t):
            vcs = tuple(self.vcset[k] for k in sorted(self.vcset))
            f = self.sign(VcFinal(self.view, self.id, vcs))
            self.vc_final_sent = f
            self.trace("vc-final", view=self.view, senders=[str(m.replica) for m in vcs])
            for a in self.group(self.view).actives:
                self.send(a, f)
            self.set_timer("vc", self.config.vc_timeout)

    def on_vc_final(self, src, f: VcFinal) -> None:
        if not self._vc_context_ok(src, f, f.view):
            return
        if f.replica in self.vc_finals:
            return
        if not self.verifier.vc_final(f, self.config.fd):
            self.trace("reject", what="vc-final", sender=str(f.replica))
            return
        self.vc_finals[f.replica] = f
        self.maybe_after_finals()

    def maybe_after_finals(self) -> None:
        if self.vc_final_sent is None or self.finals_done:
            return
        actives = self.group(self.view).actives
        if not all(a in self.vc_finals for a in actives):
            return
        self.finals_done = True
        union = canonical_vcset(m for a in actives for m in self.vc_finals[a].vcset)
        if self.config.fd:
            self.fd_stage(union)
        else:
            self.finish_selection(union)

    def on_vc_timer(self) -> None:
        if self.status == VIEW_CHANGE:
            self.suspect_view("vc-timeout")

    def on_vc_retransmit(self) -> None:
        sg = self.group(self.view)
        if self.status == VIEW_CHANGE:
            prev = self.sus_set.get(self.view - 1)
            if prev is not None:
                self.broadcast_replicas(prev)
            for msg in (self.my_vc, self.vc_final_sent, self.my_confirm):
                if msg is not None and msg.view == self.view:
                    for a in sg.actives:
                        if a != self.id:
                            self.send(a, msg)
        elif (not sg.is_active(self.id) and self.my_vc is not None
              and self.my_vc.view == self.view and self.vc_retransmits < self.config.passive_retransmits):
            # passives hand over their logs a few more times, then go quiet
            self.vc_retransmits += 1
            for a in sg.actives:
                self.send(a, self.my_vc)
        else:
            return
        self.set_timer("vc-retransmit", self.config.delta)

    # ------------------------------------------------------- select/install

    def finish_selection(self, vcset: tuple) -> None:
        sel = select(vcset, with_prepares=self.config.fd)
        self.selection = sel
        for sn, view, d1, d2 in sel.conflicts:
            self.trace("selection-conflict", sn=sn, at_view=view, d1=short(d1), d2=short(d2))
        sg = self.group(self.view)
        if sg.primary == self.id:
            prepares = tuple(
                PrepareEntry(c.batch, self.sign(Prepare(self.view, c.sn, c.d_batch, self.id)))
                for c in sel.entries)
            nv = self.sign(NewView(self.view, self.id, sel.checkpoint, prepares))
            for f in sg.followers:
                self.send(f, nv)
            self.install(nv)
        elif self.pending_new_view is not None:
            nv, self.pending_new_view = self.pending_new_view, None
            self.on_new_view(nv.primary, nv)

    def on_new_view(self, src, nv: NewView) -> None:
        if not self._vc_context_ok(src, nv, nv.view):
            return
        sg = self.group(nv.view)
        if self.id not in sg.followers:
            return
        if not self.verifier.new_view(nv):
            self.suspect_view("bad-new-view")
            return
        if self.selection is None:
            self.pending_new_view = nv
            return
        ck = None if nv.checkpoint is None else (nv.checkpoint.sn, nv.checkpoint.d_state)
        theirs = (ck, tuple((e.sn, e.d_batch) for e in nv.prepares))
        if theirs != self.selection.signature():
            self.trace("new-view-mismatch", view=nv.view)
            self.suspect_view("new-view-mismatch")
            return
        self.install(nv)

    def install(self, nv: NewView) -> None:
        ck = nv.checkpoint
        if ck is not None and (self.stable is None or ck.sn > self.stable.sn):
            self.adopt_checkpoint(ck)
        base = self.stable.sn if self.stable is not None else 0
        entries = [e for e in nv.prepares if e.sn > base]
        self.restore_to_checkpoint()
        for e in entries:
            self.execute_batch(e.sn, e.batch, replay=True)
        self.prepare_log = {e.sn: e for e in entries}
        self.sn = self.ex = max([base] + [e.sn for e in entries])
        self.status = NORMAL
        self.cancel_timer("vc")
        self.cancel_timer("net")
        if self.config.fd:
            self.pre = nv.view
        self.trace("new-view", view=nv.view, actives=[str(a) for a in self.group(nv.view).actives],
                   base=base, entries=[[e.sn, short(e.d_batch), self.label(e.batch),
                                        self.selection.at(e.sn).source_view
                                        if self.selection and self.selection.at(e.sn) else None]
                                       for e in entries])
        sg = self.group(nv.view)
        if self.id in sg.followers:
            for e in entries:
                self.commit_prepared(e)
        if self.policy_active():
            self.policy.on_installed(self)
        if self.config.fd and sg.is_active(self.id) and any(a in self.fset for a in sg.actives):
            self.suspect_view("accused-active")
            return
        self.drain_future(nv.view)
