"""Fault detection during view change.

The detectors are pure predicates over pairs of view-change messages.  Each
returns the sequence numbers at which the sender of ``m`` is caught; the
evidence (``m`` plus the witness ``m2``) lets any third party re-run the
same predicate, so accusations need no trust in whoever relays them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

from .core import Principal, short, synchronous_group_for_view
from .messages import (
    FORK_I,
    FORK_II,
    STATE_LOSS,
    Accusation,
    ForkIIQuery,
    VcConfirm,
    ViewChange,
    Verifier,
)
from .viewchange import NORMAL, VIEW_CHANGE, select, vcset_digest


def _shared_old_views(m: ViewChange, m2: ViewChange, view: int, n: int):
    """Commit entries of ``m2`` from an older view in which both senders
    were active, above ``m``'s checkpoint."""
    for e in m2.commit_log:
        if e.view >= view or e.sn <= m.base:
            continue
        sg = synchronous_group_for_view(e.view, n)
        if sg.is_active(m.replica) and sg.is_active(m2.replica):
            yield e


def detect_state_loss(m: ViewChange, m2: ViewChange, view: int, n: int) -> list[int]:
    """``m`` lacks a prepare for a request its sender helped commit."""
    if m.prepare_log is None or m.replica == m2.replica:
        return []
    return sorted({e.sn for e in _shared_old_views(m, m2, view, n)
                   if e.sn not in m.prepares_by_sn})


def detect_fork_i(m: ViewChange, m2: ViewChange, view: int, n: int) -> list[int]:
    """``m``'s prepare contradicts a commit from a view its sender was
    active in: same view with another request, or an older view."""
    if m.prepare_log is None or m.replica == m2.replica:
        return []
    hits = set()
    for e in _shared_old_views(m, m2, view, n):
        p = m.prepares_by_sn.get(e.sn)
        if p is None:
            continue
        if (p.view == e.view and p.d_batch != e.d_batch) or p.view < e.view:
            hits.add(e.sn)
    return sorted(hits)


def fork_ii_candidates(m: ViewChange, m2: ViewChange, view: int) -> list[int]:
    """Sequence numbers where ``m``'s prepare log, generated in view
    ``m.pre``, disagrees with a commit from an older view.  Only the actives
    of ``m.pre`` can tell whether the disagreement is legitimate."""
    if m.prepare_log is None or m.replica == m2.replica:
        return []
    hits = set()
    for e in m2.commit_log:
        if e.sn <= m.base or not (e.view < m.pre < view):
            continue
        p = m.prepares_by_sn.get(e.sn)
        if p is None or p.d_batch != e.d_batch:
            hits.add(e.sn)
    return sorted(hits)


def fork_ii_inconsistent(final_set: Iterable[ViewChange], m: ViewChange, sn: int) -> bool:
    """Does ``m``'s prepare at ``sn`` contradict what view ``m.pre`` chose?"""
    sel = select(final_set, with_prepares=True)
    chosen = sel.at(sn)
    if chosen is None:
        return False
    p = m.prepares_by_sn.get(sn)
    return p is None or p.d_batch != chosen.d_batch


@dataclass(frozen=True)
class Finding:
    kind: str
    accused: Principal
    sn: int
    m: ViewChange
    m2: ViewChange


def run_detectors(vcset: Iterable[ViewChange], view: int, n: int) -> tuple[list[Finding], list[Finding]]:
    """All pairwise detections over one view-change set.

    Returns (accusations, fork-II queries).  At most one finding of each
    kind per accused replica is kept; one is enough to convict.
    """
    vcset = list(vcset)
    found: dict[tuple, Finding] = {}
    queries: dict[tuple, Finding] = {}
    for m in vcset:
        for m2 in vcset:
            for kind, fn in ((STATE_LOSS, detect_state_loss), (FORK_I, detect_fork_i)):
                for sn in fn(m, m2, view, n):
                    found.setdefault((kind, m.replica), Finding(kind, m.replica, sn, m, m2))
            for sn in fork_ii_candidates(m, m2, view):
                queries.setdefault((m.replica, m.pre, sn), Finding(FORK_II, m.replica, sn, m, m2))
    return list(found.values()), list(queries.values())


def verify_accusation(acc: Accusation, verifier: Verifier) -> bool:
    n = verifier.n
    if not isinstance(acc, Accusation) or acc.m.replica != acc.accused:
        return False
    if not verifier.view_change(acc.m, fd=True):
        return False
    if acc.kind in (STATE_LOSS, FORK_I):
        if acc.m2 is None or not verifier.view_change(acc.m2, fd=True):
            return False
        fn = detect_state_loss if acc.kind == STATE_LOSS else detect_fork_i
        return acc.sn in fn(acc.m, acc.m2, acc.view, n)
    if acc.kind == FORK_II:
        if acc.final_proof is None or acc.final_set is None:
            return False
        pre = acc.m.pre
        if not verifier.final_proof(acc.final_proof, pre):
            return False
        if acc.final_proof[0].d_vcset != vcset_digest(acc.final_set):
            return False
        if not all(v.view == pre and verifier.view_change(v, fd=True) for v in acc.final_set):
            return False
        return fork_ii_inconsistent(acc.final_set, acc.m, acc.sn)
    return False


class FaultDetectionMixin:
    """vc-confirm round, accusation gossip and fork-II query handling."""

    def fd_stage(self, union: tuple) -> None:
        accusations, queries = run_detectors(union, self.view, self.n)
        for f in accusations:
            self.record_accusation(Accusation(f.kind, self.view, f.accused, f.sn, f.m, f.m2))
        self.fd_union = union
        sent = False
        for q in queries:
            if q.accused in self.fset:
                continue
            sg = synchronous_group_for_view(q.m.pre, self.n)
            query = ForkIIQuery(self.view, q.accused, q.sn, q.m)
            self.trace("fd-query", accused=str(q.accused), sn=q.sn, about_view=q.m.pre)
            for a in sg.actives:
                self.send(a, query)
            sent = True
        if sent:
            self.set_timer("fd-wait", 2 * self.config.delta)
        else:
            self.fd_confirm()

    def on_fd_wait(self) -> None:
        if self.status == VIEW_CHANGE and self.fd_union is not None and self.my_confirm is None:
            self.fd_confirm()

    def fd_confirm(self) -> None:
        filtered = tuple(m for m in self.fd_union if m.replica not in self.fset)
        self.fd_filtered = filtered
        c = self.sign(VcConfirm(self.view, self.id, vcset_digest(filtered)))
        self.my_confirm = c
        for a in self.group(self.view).actives:
            self.send(a, c)
        self.maybe_confirmed()

    def on_vc_confirm(self, src, c: VcConfirm) -> None:
        if not self._vc_context_ok(src, c, c.view):
            return
        if c.replica in self.vc_confirms or not self.verifier.vc_confirm(c):
            return
        self.vc_confirms[c.replica] = c
        self.maybe_confirmed()

    def maybe_confirmed(self) -> None:
        if self.my_confirm is None or self.confirmed:
            return
        actives = self.group(self.view).actives
        if not all(a in self.vc_confirms for a in actives):
            return
        self.confirmed = True
        digests = {self.vc_confirms[a].d_vcset for a in actives}
        if digests != {self.my_confirm.d_vcset}:
            self.trace("vc-confirm-mismatch", view=self.view)
            self.suspect_view("vc-confirm-mismatch")
            return
        self.final_proof[self.view] = tuple(self.vc_confirms[a] for a in actives)
        self.final_set[self.view] = self.fd_filtered
        self.finish_selection(self.fd_filtered)

    def record_accusation(self, acc: Accusation) -> None:
        key = acc.payload_digest
        if key in self.accusations_seen:
            return
        self.accusations_seen.add(key)
        if not verify_accusation(acc, self.verifier):
            self.trace("reject", what="accusation", accused=str(acc.accused))
            return
        self.accusations.append(acc)
        if acc.accused not in self.fset:
            self.fset.add(acc.accused)
            self.trace("fd-accuse", kind=acc.kind, accused=str(acc.accused), at_view=acc.view,
                       sn=acc.sn)
        self.broadcast_replicas(acc)
        sg = self.group(self.view)
        if self.status == NORMAL and sg.is_active(self.id) and sg.is_active(acc.accused):
            self.suspect_view("accused-active")

    def on_accusation(self, src, acc: Accusation) -> None:
        self.record_accusation(acc)

    def on_fork_ii_query(self, src, q: ForkIIQuery) -> None:
        pre = q.m.pre
        final_set = self.final_set.get(pre)
        if final_set is None or not self.group(pre).is_active(self.id):
            return
        if not self.verifier.view_change(q.m, fd=True) or q.m.replica != q.accused:
            return
        if fork_ii_inconsistent(final_set, q.m, q.sn):
            self.trace("fd-respond", accused=str(q.accused), sn=q.sn, about_view=pre,
                       d=short(q.m.payload_digest))
            self.record_accusation(Accusation(FORK_II, q.view, q.accused, q.sn, q.m,
                                              final_proof=self.final_proof[pre],
                                              final_set=final_set))
