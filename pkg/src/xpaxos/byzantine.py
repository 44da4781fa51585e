"""Scripted non-crash behaviour.

A policy is attached to one replica and can only act through that replica's
own signer, so it never produces a valid authenticator for anyone else.
Hooks default to honest behaviour; each policy overrides what it needs.
Whenever a policy hands out a view-change message that hides or contradicts
committed state it writes a ``byz-inject`` trace record listing the
affected entries, which the fault-detection checker later matches against
accusations.
"""

from __future__ import annotations

from typing import Iterable

from .core import short, synchronous_group_for_view
from .messages import Accusation, NewView, Prepare, PrepareEntry, batch_digest


class ByzantinePolicy:
    kind = "honest"

    def __init__(self, start: int = 0, **params):
        self.start = start
        self.params = params
        self.setup(**params)

    def setup(self) -> None:
        pass

    def describe(self) -> dict:
        return {"policy": self.kind, **self.params}

    def active(self, now: int) -> bool:
        return now >= self.start

    # hooks ---------------------------------------------------------------

    def allow_send(self, r, dst, msg) -> bool:
        # never help others convict us
        return not (isinstance(msg, Accusation) and msg.accused == r.id)

    def forge_view_change(self, r, fields: dict) -> dict:
        return fields

    def forge_prepare(self, r, entry):
        return None

    def forge_commit(self, r, m1):
        return None

    def on_enter_view(self, r, view: int) -> None:
        pass

    def on_installed(self, r) -> None:
        pass

    # helpers -------------------------------------------------------------

    @staticmethod
    def inject(r, fields: dict, lost: Iterable[tuple]) -> None:
        lost = sorted(set(lost))
        if lost:
            base = fields["checkpoint"].sn if fields.get("checkpoint") is not None else 0
            r.trace("byz-inject", policy=r.policy.kind, view=fields["view"], base=base,
                    lost=[list(x) for x in lost])


def _committed(fields: dict):
    return {e.sn: e for e in fields["commit_log"]}


class DataLoss(ByzantinePolicy):
    """Reports only log entries up to ``keep_through`` at view changes."""

    kind = "data-loss"

    def setup(self, keep_through: int = 0) -> None:
        self.keep_through = keep_through

    def forge_view_change(self, r, fields):
        k = self.keep_through
        lost = [(e.sn, e.view, short(e.d_batch)) for e in fields["commit_log"] if e.sn > k]
        fields = dict(fields)
        fields["commit_log"] = tuple(e for e in fields["commit_log"] if e.sn <= k)
        if fields["prepare_log"] is not None:
            lost += [(e.sn, e.view, short(e.d_batch)) for e in fields["prepare_log"] if e.sn > k]
            fields["prepare_log"] = tuple(e for e in fields["prepare_log"] if e.sn <= k)
        self.inject(r, fields, lost)
        return fields


class ForkI(ByzantinePolicy):
    """Contradicts committed entries in the prepare log.

    ``same-view``: for entries committed in a view where this replica was
    primary, report a freshly signed prepare of that view for an empty batch.
    ``stale``: report the oldest prepare ever held for the sequence number
    instead of the current one.
    """

    kind = "fork-i"

    def setup(self, variant: str = "same-view") -> None:
        if variant not in ("same-view", "stale"):
            raise ValueError(f"unknown fork-i variant {variant!r}")
        self.variant = variant
        self.history: dict[int, PrepareEntry] = {}

    def _remember(self, r) -> None:
        for sn, e in r.prepare_log.items():
            old = self.history.get(sn)
            if old is None or e.view < old.view:
                self.history[sn] = e

    def on_enter_view(self, r, view: int) -> None:
        self._remember(r)

    def on_installed(self, r) -> None:
        self._remember(r)

    def forge_view_change(self, r, fields):
        if fields["prepare_log"] is None:
            return fields
        prepares = {e.sn: e for e in fields["prepare_log"]}
        lost = []
        for sn, e in _committed(fields).items():
            if self.variant == "same-view":
                if synchronous_group_for_view(e.view, r.n).primary != r.id:
                    continue
                empty = batch_digest(())
                if e.d_batch == empty:
                    continue
                prepares[sn] = PrepareEntry((), r.sign(Prepare(e.view, sn, empty, r.id)))
            else:
                old = self.history.get(sn)
                if old is None or old.view >= e.view:
                    continue
                prepares[sn] = old
            lost.append((sn, e.view, short(e.d_batch)))
        fields = dict(fields, prepare_log=tuple(prepares[k] for k in sorted(prepares)))
        self.inject(r, fields, lost)
        return fields


class ForkII(ByzantinePolicy):
    """After acting as primary of the view recorded in ``pre``, reports
    prepares of that view for empty batches in place of the re-proposals
    it actually signed, and withholds its new-view so the view never
    commits anything that would give the lie away."""

    kind = "fork-ii"

    def setup(self, withhold: bool = True) -> None:
        self.withhold = withhold

    def allow_send(self, r, dst, msg) -> bool:
        if self.withhold and isinstance(msg, NewView):
            return False
        return super().allow_send(r, dst, msg)

    def forge_view_change(self, r, fields):
        pre = fields["pre"]
        if pre <= 0 or fields["prepare_log"] is None:
            return fields
        if synchronous_group_for_view(pre, r.n).primary != r.id:
            return fields
        empty = batch_digest(())
        prepares = {e.sn: e for e in fields["prepare_log"]}
        lost = []
        for sn, e in list(prepares.items()):
            if e.view != pre or e.d_batch == empty:
                continue
            prepares[sn] = PrepareEntry((), r.sign(Prepare(pre, sn, empty, r.id)))
            # what the re-proposal stood for: the older commit it carried
            ce = r.commit_log.get(sn)
            if ce is not None and ce.d_batch == e.d_batch:
                lost.append((sn, ce.view, short(ce.d_batch)))
        fields = dict(fields, prepare_log=tuple(prepares[k] for k in sorted(prepares)))
        self.inject(r, fields, lost)
        return fields


class Mute(ByzantinePolicy):
    """Selectively drops outgoing messages by destination and/or kind."""

    kind = "mute"

    def setup(self, to: Iterable[str] = (), kinds: Iterable[str] = ()) -> None:
        self.to = set(to)
        self.kinds = set(kinds)

    def allow_send(self, r, dst, msg) -> bool:
        if (not self.to or str(dst) in self.to) and (not self.kinds or msg.KIND in self.kinds):
            return False
        return super().allow_send(r, dst, msg)


class SuspectWhenActive(ByzantinePolicy):
    """Forces a view change every time it becomes active."""

    kind = "suspect-when-active"

    def on_installed(self, r) -> None:
        if r.group().is_active(r.id):
            r.suspect_view("byzantine")


class WithholdNewView(ByzantinePolicy):
    kind = "withhold-new-view"

    def allow_send(self, r, dst, msg) -> bool:
        if isinstance(msg, NewView):
            return False
        return super().allow_send(r, dst, msg)


POLICIES = {cls.kind: cls for cls in (DataLoss, ForkI, ForkII, Mute, SuspectWhenActive,
                                      WithholdNewView)}


def make_policy(kind: str, start: int = 0, params: dict | None = None) -> ByzantinePolicy:
    try:
        cls = POLICIES[kind]
    except KeyError:
        raise ValueError(f"unknown byzantine policy {kind!r}") from None
    return cls(start=start, **(params or {}))
