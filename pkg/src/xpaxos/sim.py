"""Deterministic discrete-event harness.

Events are kept in a heap ordered by ``(time, insertion counter)`` and all
randomness comes from one ``random.Random(seed)``, so a script and a seed
fully determine the trace.  Processing is instantaneous; every delay lives
on the links.
"""

from __future__ import annotations

import heapq
import json
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

from .byzantine import make_policy
from .client import Client
from .core import (
    REAL_SIG,
    SIM_SIG,
    FaultCensus,
    KeyRing,
    Principal,
    census_of,
    in_anarchy,
    synchronous_group_for_view,
)
from .messages import Verifier
from .replica import ProtocolConfig, Replica
from .scenario import Scenario

_DELIVER, _TIMER, _CALL = 0, 1, 2


def dump_record(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True, separators=(",", ":"))


@dataclass
class RunResult:
    scenario: Scenario
    trace: list[str]
    records: list[dict]
    replicas: list[Replica]
    clients: list[Client]
    message_counts: Counter
    inter_replica: int
    census_log: list[tuple[int, FaultCensus, bool]]
    ever_anarchy: bool
    end_crashed: frozenset
    byzantine: frozenset
    verdicts: dict = field(default_factory=dict)

    def trace_bytes(self) -> bytes:
        return ("\n".join(self.trace) + "\n").encode() if self.trace else b""

    def census_at(self, time: int) -> tuple[FaultCensus, bool]:
        current = self.census_log[0]
        for entry in self.census_log:
            if entry[0] > time:
                break
            current = entry
        return current[1], current[2]


class Simulator:
    def __init__(self, scenario: Scenario, keep_records: bool = True):
        self.sc = scenario
        self.n = scenario.n
        self.now = 0
        self._heap: list = []
        self._seq = 0
        self.rng = random.Random(scenario.seed)
        self.trace_lines: list[str] = []
        self.records: list[dict] = []
        self.keep_records = keep_records
        self.counts: Counter = Counter()
        self.inter_replica = 0
        self._timers: dict[tuple, int] = {}
        self.crashed: set[Principal] = set()
        self.down: Counter = Counter()  # frozenset pair -> active outages
        self.drops: list[dict] = []
        self.byz_active: set[int] = set()
        self.census_log: list = []
        self.ever_anarchy = False

        self.config = ProtocolConfig(
            n=scenario.n, delta=scenario.delta, batch_size=scenario.batch,
            batch_timeout=scenario.batch_timeout, chk=scenario.chk, fd=scenario.fd,
            lazy=scenario.lazy)
        ring = KeyRing(scenario.seed, REAL_SIG if scenario.signatures == REAL_SIG else SIM_SIG)
        self.verifier = Verifier(ring, scenario.n)
        policies = {}
        for f in scenario.faults:
            if f["type"] == "byzantine":
                idx = Principal.parse(f["replica"]).index
                policies[idx] = make_policy(f["policy"], f.get("from", 0), f.get("params"))
        self.policies = policies
        self.replicas = [Replica(i, self.config, self, ring.signer(Principal("s", i)),
                                 self.verifier, policy=policies.get(i)) for i in range(self.n)]
        timer_c = 4 * scenario.delta + scenario.batch_timeout
        self.client_ops = scenario.client_ops()
        n_clients = max(self.client_ops, default=-1) + 1
        self.clients = [Client(Principal("c", j), self.n, self, ring.signer(Principal("c", j)),
                               self.verifier, timer_c) for j in range(n_clients)]
        self._next_op = [0] * n_clients
        self._client_waiting = [False] * n_clients
        for c in self.clients:
            c.on_deliver = self._on_deliver
        lat = scenario.latency
        self._lat_default = (lat["base"], lat["jitter"])
        self._lat_links = {}
        for link in lat["links"]:
            key = frozenset((Principal.parse(link["a"]), Principal.parse(link["b"])))
            self._lat_links[key] = (link.get("base", lat["base"]), link.get("jitter", lat["jitter"]))

    # ------------------------------------------------------------ environment API

    def node(self, who: Principal):
        return self.replicas[who.index] if who.is_replica else self.clients[who.index]

    def _push(self, time: int, kind: int, payload) -> None:
        heapq.heappush(self._heap, (time, self._seq, kind, payload))
        self._seq += 1

    def trace(self, kind: str, who: str, /, **fields) -> None:
        rec = {"t": self.now, "k": kind, "who": who, **fields}
        self.trace_lines.append(dump_record(rec))
        if self.keep_records:
            self.records.append(rec)

    def link_up(self, a: Principal, b: Principal) -> bool:
        return a == b or self.down[frozenset((a, b))] == 0

    def _dropped_by_rule(self, src, dst, msg) -> bool:
        for d in self.drops:
            if d["src"] == src and d["dst"] == dst and (not d["kinds"] or msg.KIND in d["kinds"]):
                return True
        return False

    def send(self, src: Principal, dst: Principal, msg) -> None:
        self.counts[msg.KIND] += 1
        if src.is_replica and dst.is_replica:
            self.inter_replica += 1
        if self.sc.trace_sends:
            self.trace("send", str(src), to=str(dst), m=msg.KIND)
        if not self.link_up(src, dst) or self._dropped_by_rule(src, dst, msg):
            self.counts["dropped"] += 1
            return
        if src == dst:
            delay = 0
        else:
            base, jitter = self._lat_links.get(frozenset((src, dst)), self._lat_default)
            delay = base + (self.rng.randint(0, jitter) if jitter else 0)
            delay = max(delay, 1)
        self._push(self.now + delay, _DELIVER, (src, dst, msg))

    def set_timer(self, who: Principal, key: str, delay: int) -> None:
        token = self._seq
        self._timers[(who, key)] = token
        self._push(self.now + delay, _TIMER, (who, key, token))

    def cancel_timer(self, who: Principal, key: str) -> None:
        self._timers.pop((who, key), None)

    def at(self, time: int, fn, *args) -> None:
        self._push(time, _CALL, (fn, args))

    # ------------------------------------------------------------ faults

    def _schedule_faults(self) -> None:
        for f in self.sc.faults:
            kind = f["type"]
            if kind == "crash":
                who = Principal.parse(f["node"])
                self.at(f["at"], self._crash, who)
                if "recover_at" in f:
                    self.at(f["recover_at"], self._recover, who)
            elif kind == "partition":
                pairs = self._partition_pairs(f)
                self.at(f["from"], self._links_down, pairs, f)
                if "to" in f:
                    self.at(f["to"], self._links_up, pairs, f)
            elif kind == "drop":
                rule = {"src": Principal.parse(f["src"]), "dst": Principal.parse(f["dst"]),
                        "kinds": tuple(f.get("kinds", ()))}
                self.at(f["from"], self._drop_on, rule)
                if "to" in f:
                    self.at(f["to"], self._drop_off, rule)
            elif kind == "byzantine":
                self.at(f.get("from", 0), self._byz_on, Principal.parse(f["replica"]).index)
            elif kind == "suspect":
                self.at(f["at"], self._scripted_suspect, Principal.parse(f["replica"]).index,
                        f.get("view"))

    def _partition_pairs(self, f) -> list[frozenset]:
        if "links" in f:
            return [frozenset(map(Principal.parse, p)) for p in f["links"]]
        groups = [[Principal.parse(x) for x in g] for g in f["groups"]]
        pairs = []
        for i, g in enumerate(groups):
            for h in groups[i + 1:]:
                pairs += [frozenset((a, b)) for a in g for b in h]
        return pairs

    def _crash(self, who: Principal) -> None:
        if who in self.crashed:
            return
        self.crashed.add(who)
        self.node(who).on_crash()
        if not who.is_replica:
            self.trace("crash", str(who))
        self._census()

    def _recover(self, who: Principal) -> None:
        if who not in self.crashed:
            return
        self.crashed.discard(who)
        if not who.is_replica:
            self.trace("recover", str(who))
        self.node(who).on_recover()
        if not who.is_replica and self._client_waiting[who.index]:
            self._client_waiting[who.index] = False
            self._issue(who.index)
        self._census()

    def _links_down(self, pairs, f) -> None:
        for p in pairs:
            self.down[p] += 1
        self.trace("partition", "net", state="down", links=sorted(sorted(map(str, p)) for p in pairs))
        self._census()

    def _links_up(self, pairs, f) -> None:
        for p in pairs:
            self.down[p] -= 1
        self.trace("partition", "net", state="up", links=sorted(sorted(map(str, p)) for p in pairs))
        self._census()

    def _drop_on(self, rule) -> None:
        self.drops.append(rule)
        self.trace("drop", "net", state="on", src=str(rule["src"]), dst=str(rule["dst"]),
                   kinds=list(rule["kinds"]))
        self._census()

    def _drop_off(self, rule) -> None:
        self.drops.remove(rule)
        self.trace("drop", "net", state="off", src=str(rule["src"]), dst=str(rule["dst"]),
                   kinds=list(rule["kinds"]))
        self._census()

    def _byz_on(self, idx: int) -> None:
        self.byz_active.add(idx)
        self.trace("byzantine", f"s{idx}", **self.policies[idx].describe())
        self._census()

    def _scripted_suspect(self, idx: int, view: Optional[int]) -> None:
        r = self.replicas[idx]
        if Principal("s", idx) in self.crashed:
            return
        if view is not None and r.view != view:
            if r.view < view:
                # not there yet: try again a little later
                self.at(self.now + max(1, self.sc.delta // 10), self._scripted_suspect, idx, view)
            return
        r.suspect_view("scripted")

    def connected(self, i: int, j: int) -> bool:
        a, b = Principal("s", i), Principal("s", j)
        if not self.link_up(a, b):
            return False
        return not any({d["src"], d["dst"]} == {a, b} for d in self.drops)

    def current_census(self) -> FaultCensus:
        crashed = [p.index for p in self.crashed if p.is_replica]
        return census_of(self.n, crashed, self.byz_active, self.connected)

    def _census(self) -> None:
        c = self.current_census()
        anarchy = in_anarchy(c, self.sc.t)
        if self.census_log and self.census_log[-1][1] == c:
            return
        self.census_log.append((self.now, c, anarchy))
        self.ever_anarchy |= anarchy
        self.trace("census", "net", crash=c.crash_count, noncrash=c.noncrash_count,
                   partitioned=c.partitioned_count, anarchy=anarchy)

    # ------------------------------------------------------------ workload

    def _issue(self, j: int) -> None:
        c = self.clients[j]
        ops = self.client_ops[j]
        k = self._next_op[j]
        if k >= len(ops) or c.in_flight is not None:
            return
        if c.id in self.crashed:
            self._client_waiting[j] = True
            return
        op, not_before = ops[k]
        if not_before is not None and not_before > self.now:
            self.at(not_before, self._issue, j)
            return
        self._next_op[j] = k + 1
        c.propose(op.encode())

    def _on_deliver(self, c: Client, d) -> None:
        j = c.id.index
        think = self.sc.workload.get("think", 0)
        if think:
            self.at(self.now + think, self._issue, j)
        else:
            self._issue(j)

    # ------------------------------------------------------------ main loop

    def run(self) -> RunResult:
        self.trace("start", "net", scenario=self.sc.name, n=self.n, seed=self.sc.seed,
                   fd=self.sc.fd, lazy=self.sc.lazy, batch=self.sc.batch, chk=self.sc.chk,
                   delta=self.sc.delta, horizon=self.sc.horizon)
        self._census()
        self._schedule_faults()
        for j, ops in self.client_ops.items():
            if ops:
                self.at(ops[0][1] or 0, self._issue, j)
        horizon = self.sc.horizon
        heap = self._heap
        while heap and heap[0][0] <= horizon:
            time, _, kind, payload = heapq.heappop(heap)
            self.now = time
            if kind == _DELIVER:
                src, dst, msg = payload
                if dst in self.crashed or not self.link_up(src, dst):
                    self.counts["dropped"] += 1
                    continue
                self.node(dst).on_message(src, msg)
            elif kind == _TIMER:
                who, key, token = payload
                if self._timers.get((who, key)) != token:
                    continue
                del self._timers[(who, key)]
                if who in self.crashed:
                    continue
                self.node(who).on_timer(key)
            else:
                fn, args = payload
                fn(*args)
        self.now = horizon
        self.trace("end", "net", views={str(r.id): r.view for r in self.replicas},
                   crashed=sorted(str(p) for p in self.crashed))
        return RunResult(
            scenario=self.sc, trace=self.trace_lines, records=self.records,
            replicas=self.replicas, clients=self.clients, message_counts=self.counts,
            inter_replica=self.inter_replica, census_log=self.census_log,
            ever_anarchy=self.ever_anarchy,
            end_crashed=frozenset(p for p in self.crashed if p.is_replica),
            byzantine=frozenset(Principal("s", i) for i in self.policies))


def simulate(scenario: Scenario, keep_records: bool = True) -> RunResult:
    return Simulator(scenario, keep_records=keep_records).run()


def group_actives(view: int, n: int) -> list[str]:
    return [str(a) for a in synchronous_group_for_view(view, n).actives]
