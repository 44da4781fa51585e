"""Scenario scripts: a versioned JSON document describing one simulated run.

Example::

    {
      "version": 1,
      "name": "faultfree_t1",
      "n": 3, "delta": 100, "seed": 7, "horizon": 5000,
      "workload": {"clients": 1, "requests": 10},
      "faults": [{"type": "crash", "node": "s1", "at": 1000, "recover_at": 3000}]
    }

Times are integers in abstract units; ``delta`` is the synchrony bound.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import jsonschema

from .core import ConfigurationError, Principal, threshold
from .byzantine import POLICIES

SCHEMA_VERSION = 1

_node = {"type": "string", "pattern": "^[sc][0-9]+$"}
_replica = {"type": "string", "pattern": "^s[0-9]+$"}
_time = {"type": "integer", "minimum": 0}
_latency = {
    "type": "object",
    "properties": {"base": {"type": "integer", "minimum": 0},
                   "jitter": {"type": "integer", "minimum": 0}},
    "additionalProperties": False,
}

SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["version", "n"],
    "additionalProperties": False,
    "properties": {
        "version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "description": {"type": "string"},
        "n": {"type": "integer", "minimum": 3},
        "t": {"type": "integer", "minimum": 1},
        "delta": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "horizon": {"type": "integer", "minimum": 1},
        "fd": {"type": "boolean"},
        "lazy": {"type": "boolean"},
        "batch": {"type": "integer", "minimum": 1},
        "batch_timeout": {"type": "integer", "minimum": 0},
        "chk": {"type": "integer", "minimum": 1},
        "signatures": {"enum": ["SimSig", "RealSig"]},
        "trace_sends": {"type": "boolean"},
        "latency": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "base": {"type": "integer", "minimum": 0},
                "jitter": {"type": "integer", "minimum": 0},
                "links": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["a", "b"],
                        "additionalProperties": False,
                        "properties": {"a": _node, "b": _node, **_latency["properties"]},
                    },
                },
            },
        },
        "workload": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "clients": {"type": "integer", "minimum": 0},
                "requests": {"type": "integer", "minimum": 0},
                "think": {"type": "integer", "minimum": 0},
                "start": _time,
                "op": {"type": "string"},
                "scripts": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["client", "ops"],
                        "additionalProperties": False,
                        "properties": {
                            "client": {"type": "integer", "minimum": 0},
                            "ops": {
                                "type": "array",
                                "items": {
                                    "type": "object",
                                    "required": ["op"],
                                    "additionalProperties": False,
                                    "properties": {"op": {"type": "string"}, "at": _time},
                                },
                            },
                        },
                    },
                },
            },
        },
        "faults": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["type"],
                "properties": {"type": {"enum": ["crash", "partition", "drop", "byzantine",
                                                 "suspect"]}},
                "allOf": [
                    {"if": {"properties": {"type": {"const": "crash"}}},
                     "then": {"required": ["node", "at"],
                              "properties": {"type": {}, "node": _node, "at": _time,
                                             "recover_at": _time},
                              "additionalProperties": False}},
                    {"if": {"properties": {"type": {"const": "partition"}}},
                     "then": {"required": ["from"],
                              "properties": {
                                  "type": {},
                                  "links": {"type": "array",
                                            "items": {"type": "array", "items": _node,
                                                      "minItems": 2, "maxItems": 2}},
                                  "groups": {"type": "array",
                                             "items": {"type": "array", "items": _node}},
                                  "from": _time, "to": _time},
                              "oneOf": [{"required": ["links"]}, {"required": ["groups"]}],
                              "additionalProperties": False}},
                    {"if": {"properties": {"type": {"const": "drop"}}},
                     "then": {"required": ["src", "dst", "from"],
                              "properties": {"type": {}, "src": _node, "dst": _node,
                                             "kinds": {"type": "array",
                                                       "items": {"type": "string"}},
                                             "from": _time, "to": _time},
                              "additionalProperties": False}},
                    {"if": {"properties": {"type": {"const": "byzantine"}}},
                     "then": {"required": ["replica", "policy"],
                              "properties": {"type": {}, "replica": _replica,
                                             "policy": {"enum": sorted(POLICIES)},
                                             "from": _time, "params": {"type": "object"}},
                              "additionalProperties": False}},
                    {"if": {"properties": {"type": {"const": "suspect"}}},
                     "then": {"required": ["replica", "at"],
                              "properties": {"type": {}, "replica": _replica, "at": _time,
                                             "view": {"type": "integer", "minimum": 0}},
                              "additionalProperties": False}},
                ],
            },
        },
    },
}

_validator = jsonschema.Draft202012Validator(SCHEMA)


class ScenarioError(ValueError):
    """A script failed validation.  ``problems`` lists ``(path, message)``."""

    def __init__(self, problems: list[tuple[str, str]]):
        self.problems = problems
        lines = "\n".join(f"  {p or '<root>'}: {m}" for p, m in problems)
        super().__init__(f"invalid scenario ({len(problems)} problem(s)):\n{lines}")


@dataclass
class Scenario:
    """Validated script with defaults filled in."""

    name: str
    n: int
    delta: int
    seed: int
    horizon: int
    fd: bool
    lazy: bool
    batch: int
    batch_timeout: int
    chk: int
    signatures: str
    trace_sends: bool
    latency: dict
    workload: dict
    faults: list
    description: str = ""
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def t(self) -> int:
        return (self.n - 1) // 2

    def client_ops(self) -> dict[int, list[tuple[str, Optional[int]]]]:
        """Per client index, the ordered list of (op, earliest issue time)."""
        w = self.workload
        out: dict[int, list] = {}
        start = w.get("start", 0)
        template = w.get("op", "APPEND x {client}:{j}")
        for c in range(w.get("clients", 0)):
            out[c] = [(template.format(client=f"c{c}", j=j), start if j == 0 else None)
                      for j in range(w.get("requests", 0))]
        for s in w.get("scripts", ()):
            out[s["client"]] = [(o["op"], o.get("at")) for o in s["ops"]]
        return out

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)


def _semantic_problems(doc: dict) -> list[tuple[str, str]]:
    problems = []
    n = doc["n"]
    try:
        t = threshold(n)
    except ConfigurationError as e:
        return [("n", str(e))]
    if "t" in doc and doc["t"] != t:
        problems.append(("t", f"t must equal (n-1)/2 = {t} for n={n}"))
    delta = doc.get("delta", 100)
    horizon = doc.get("horizon", 100 * delta)
    lat = doc.get("latency", {})
    base, jitter = lat.get("base", delta // 10), lat.get("jitter", delta // 2 - delta // 10)
    if base + jitter > delta:
        problems.append(("latency", f"base+jitter={base + jitter} exceeds delta={delta}"))
    if base + jitter <= 0:
        problems.append(("latency", "links need a positive delay"))
    n_clients = _client_count(doc.get("workload", {}))

    def node_ok(path, text):
        p = Principal.parse(text)
        limit = n if p.is_replica else n_clients
        if p.index >= limit:
            problems.append((path, f"{text} does not exist (n={n}, clients={n_clients})"))

    for i, link in enumerate(lat.get("links", ())):
        node_ok(f"latency.links.{i}.a", link["a"])
        node_ok(f"latency.links.{i}.b", link["b"])
        if link.get("base", base) + link.get("jitter", jitter) > delta:
            problems.append((f"latency.links.{i}", "link delay can exceed delta"))
    for i, f in enumerate(doc.get("faults", ())):
        path = f"faults.{i}"
        for key in ("node", "replica", "src", "dst"):
            if key in f:
                node_ok(f"{path}.{key}", f[key])
        for key in ("links", "groups"):
            for j, grp in enumerate(f.get(key, ())):
                for k, x in enumerate(grp):
                    node_ok(f"{path}.{key}.{j}.{k}", x)
        for key in ("at", "from", "to", "recover_at"):
            if key in f and f[key] > horizon:
                problems.append((f"{path}.{key}", f"time {f[key]} is past the horizon {horizon}"))
        start = f.get("at", f.get("from"))
        for key in ("to", "recover_at"):
            if key in f and start is not None and f[key] < start:
                problems.append((f"{path}.{key}", "ends before it starts"))
        if f["type"] == "byzantine":
            try:
                POLICIES[f["policy"]](**f.get("params", {}))
            except (TypeError, ValueError) as e:
                problems.append((f"{path}.params", str(e)))
    byz = [f["replica"] for f in doc.get("faults", ()) if f["type"] == "byzantine"]
    if len(byz) != len(set(byz)):
        problems.append(("faults", "at most one byzantine policy per replica"))
    return problems


def _client_count(w: dict) -> int:
    scripted = [s["client"] + 1 for s in w.get("scripts", ())]
    return max([w.get("clients", 0)] + scripted)


def validate(doc: Any) -> Scenario:
    """Validate a decoded script; raise :class:`ScenarioError` listing every
    offending field."""
    if not isinstance(doc, dict):
        raise ScenarioError([("", "scenario must be a JSON object")])
    problems = [(".".join(str(p) for p in e.absolute_path), e.message)
                for e in sorted(_validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))]
    if problems:
        raise ScenarioError(problems)
    problems = _semantic_problems(doc)
    if problems:
        raise ScenarioError(problems)
    delta = doc.get("delta", 100)
    lat = dict(doc.get("latency", {}))
    lat.setdefault("base", delta // 10)
    lat.setdefault("jitter", delta // 2 - delta // 10)
    lat.setdefault("links", [])
    return Scenario(
        name=doc.get("name", "unnamed"),
        n=doc["n"],
        delta=delta,
        seed=doc.get("seed", 0),
        horizon=doc.get("horizon", 100 * delta),
        fd=doc.get("fd", False),
        lazy=doc.get("lazy", True),
        batch=doc.get("batch", 1),
        batch_timeout=doc.get("batch_timeout", delta // 5),
        chk=doc.get("chk", 100),
        signatures=doc.get("signatures", "SimSig"),
        trace_sends=doc.get("trace_sends", True),
        latency=lat,
        workload=dict(doc.get("workload", {})),
        faults=list(doc.get("faults", [])),
        description=doc.get("description", ""),
        raw=copy.deepcopy(doc),
    )


SCENARIO_DIR = Path(__file__).with_name("scenarios")


def builtin_names() -> list[str]:
    return sorted(p.stem for p in SCENARIO_DIR.glob("*.json"))


def load(ref: str | Path, **overrides) -> Scenario:
    """Load a script by path or by built-in name, then apply overrides
    (``None`` values are ignored)."""
    path = Path(ref)
    if not path.exists():
        candidate = SCENARIO_DIR / f"{ref}.json"
        if not candidate.exists():
            raise ScenarioError([("script", f"no such file or built-in scenario: {ref}")])
        path = candidate
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ScenarioError([("", f"{path}: not valid JSON ({e})")]) from None
    return validate(apply_overrides(doc, **overrides))


def apply_overrides(doc: dict, **overrides) -> dict:
    doc = copy.deepcopy(doc)
    for key, value in overrides.items():
        if value is not None:
            doc[key] = value
    return doc
