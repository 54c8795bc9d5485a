"""Data model for L-DPNs: rules, dynamic pushdown systems, configurations,
multi-automata, valuations, and the JSON model / formula file formats.

Stacks are tuples with the top of stack first.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Optional

from ldpnmc.errors import LtlSyntaxError, ModelError
from ldpnmc.ltl import atoms, parse_ltl


@dataclass(frozen=True, order=True)
class Action:
    kind: str  # "tau" | "acq" | "rel"
    lock: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("tau", "acq", "rel"):
            raise ModelError(f"unknown action kind {self.kind!r}")
        if (self.kind == "tau") != (self.lock is None):
            raise ModelError(f"malformed action {self.kind}({self.lock})")

    def __str__(self):
        return "tau" if self.kind == "tau" else f"{self.kind}({self.lock})"


TAU = Action("tau")


def acq(lock):
    return Action("acq", lock)


def rel(lock):
    return Action("rel", lock)


@dataclass(frozen=True)
class Rule:
    """``source symbol --action--> target push [▷ spawn]``."""

    source: Hashable
    symbol: Hashable
    action: Action
    target: Hashable
    push: tuple
    spawn: Optional[tuple] = None  # (control, stack)

    @property
    def head(self):
        return (self.source, self.symbol)

    def __str__(self):
        s = f"{self.source} {self.symbol} -{self.action}-> {self.target} {' '.join(map(str, self.push))}"
        if self.spawn is not None:
            s += f" |> {self.spawn[0]} {' '.join(map(str, self.spawn[1]))}"
        return s


@dataclass(frozen=True)
class Pds:
    """One dynamic pushdown system ``(P_i, Gamma_i, Delta_i)``."""

    name: str
    controls: frozenset
    stack: frozenset
    rules: tuple

    def rules_at(self, control, symbol):
        return self._index.get((control, symbol), ())

    @property
    def _index(self):
        idx = self.__dict__.get("_idx")
        if idx is None:
            idx = {}
            for r in self.rules:
                idx.setdefault(r.head, []).append(r)
            idx = {k: tuple(v) for k, v in idx.items()}
            object.__setattr__(self, "_idx", idx)
        return idx


@dataclass(frozen=True, order=True)
class LocalConfiguration:
    control: Hashable
    stack: tuple
    locks: frozenset = frozenset()

    def __str__(self):
        locks = "{" + ",".join(sorted(self.locks)) + "}"
        return f"({self.control} {' '.join(map(str, self.stack)) or 'ε'}, {locks})"


def config_key(c: LocalConfiguration):
    return (repr(c.control), tuple(map(repr, c.stack)), tuple(sorted(c.locks)))


class GlobalConfiguration:
    """A multiset of local configurations whose held-lock sets are pairwise disjoint."""

    __slots__ = ("_items", "_hash")

    def __init__(self, configs=()):
        counts = Counter(configs)
        owners = {}
        for c, n in counts.items():
            for lock in c.locks:
                if lock in owners or n > 1:
                    raise ModelError(f"lock {lock!r} held by more than one instance")
                owners[lock] = c
        self._items = tuple(sorted(counts.items(), key=lambda kv: config_key(kv[0])))
        self._hash = hash(self._items)

    def __iter__(self):
        for c, n in self._items:
            for _ in range(n):
                yield c

    def __len__(self):
        return sum(n for _, n in self._items)

    def items(self):
        return self._items

    def __eq__(self, other):
        return isinstance(other, GlobalConfiguration) and self._items == other._items

    def __hash__(self):
        return self._hash

    def held(self):
        out = set()
        for c, _ in self._items:
            out |= c.locks
        return frozenset(out)

    def free(self, locks):
        return frozenset(locks) - self.held()

    def replace(self, old, new):
        rest = list(self)
        rest.remove(old)
        return GlobalConfiguration(rest + list(new))

    def __repr__(self):
        return "{" + ", ".join(str(c) for c in self) + "}"


@dataclass(frozen=True)
class MultiAutomaton:
    """(L-)multi-automaton over stack words.

    ``initials`` maps ``(control, frozenset(locks))`` to the state the run
    starts in; transitions are ``(q, symbol, D, q')`` with ``D`` a frozenset of
    DCLICs.
    """

    states: frozenset
    initials: Mapping
    accepting: frozenset
    transitions: frozenset
    symbols: Optional[frozenset] = None  # declared stack alphabet, if known

    def __post_init__(self):
        for q in self.initials.values():
            if q not in self.states:
                raise ModelError(f"initial state {q!r} is not a state")
        if not self.accepting <= self.states:
            raise ModelError("accepting states must be states")
        for q, _, _, r in self.transitions:
            if q not in self.states or r not in self.states:
                raise ModelError(f"transition endpoint outside states: {(q, r)}")

    def out(self, q, symbol):
        idx = self.__dict__.get("_out")
        if idx is None:
            idx = {}
            for s, a, d, t in self.transitions:
                idx.setdefault((s, a), []).append((d, t))
            object.__setattr__(self, "_out", idx)
        return idx.get((q, symbol), ())

    @property
    def alphabet(self):
        return frozenset(a for _, a, _, _ in self.transitions)


def ma_accepts(a: MultiAutomaton, control, locks, stack):
    """All ``D`` with ``(control stack, locks, D)`` in the language of ``a``."""
    start = a.initials.get((control, frozenset(locks)))
    if start is None:
        return set()
    current = {start: {frozenset()}}
    for sym in stack:
        if a.symbols is not None and sym not in a.symbols:
            raise ModelError(f"stack symbol {sym!r} outside the automaton alphabet")
        nxt = {}
        for q, ds in current.items():
            for d, r in a.out(q, sym):
                nxt.setdefault(r, set()).update(x | d for x in ds)
        current = nxt
    out = set()
    for q, ds in current.items():
        if q in a.accepting:
            out |= ds
    return out


@dataclass(frozen=True)
class SimpleValuation:
    """``ap -> {(control, locks)}``."""

    map: Mapping
    kind = "simple"

    def holds(self, ap, control, locks):
        return (control, frozenset(locks)) in self.map[ap]


@dataclass(frozen=True)
class RegularValuation:
    """``ap -> L-MA``; ``(p w, L)`` satisfies ``ap`` iff ``(p w, L, {})`` is accepted."""

    map: Mapping
    kind = "regular"


def valuation_holds(v, ap, c: LocalConfiguration) -> bool:
    if ap not in v.map:
        raise ModelError(f"undeclared proposition {ap!r}")
    if v.kind == "simple":
        return v.holds(ap, c.control, c.locks)
    return frozenset() in ma_accepts(v.map[ap], c.control, c.locks, c.stack)


def props_at(v, props, c: LocalConfiguration):
    """The letter emitted at a local configuration."""
    if v is None:
        return frozenset()
    return frozenset(ap for ap in props if ap in v.map and valuation_holds(v, ap, c))


@dataclass(frozen=True)
class LockDpnModel:
    """``(Act, locks, P_1 ... P_n)`` plus declared propositions, a valuation and
    an optional initial local configuration."""

    locks: frozenset
    pds: tuple
    props: frozenset = frozenset()
    valuation: object = None
    initial: Optional[LocalConfiguration] = None
    owner: dict = field(default=None, compare=False, repr=False, hash=False)

    def __post_init__(self):
        owner = {}
        for i, p in enumerate(self.pds):
            for c in p.controls:
                if c in owner:
                    raise ModelError(f"controls not disjoint: {c!r} in {self.pds[owner[c]].name} and {p.name}")
                owner[c] = i
        object.__setattr__(self, "owner", owner)
        names = [p.name for p in self.pds]
        if len(set(names)) != len(names):
            raise ModelError("duplicate pds names")
        for p in self.pds:
            for r in p.rules:
                self._check_rule(p, r)
        if self.initial is not None:
            self._check_config(self.initial, "initial configuration")
        self._check_valuation()

    def _check_rule(self, p, r):
        def fail(msg):
            raise ModelError(f"rule '{r}' of {p.name}: {msg}")

        if r.source not in p.controls or r.target not in p.controls:
            fail("unknown control")
        if r.symbol not in p.stack or not p.stack.issuperset(r.push):
            fail("unknown stack symbol")
        if r.action.lock is not None and r.action.lock not in self.locks:
            fail(f"undeclared lock {r.action.lock!r}")
        if r.spawn is not None:
            c, w = r.spawn
            if c not in self.owner:
                fail(f"spawn of unknown control {c!r}")
            q = self.pds[self.owner[c]]
            if not q.stack.issuperset(w):
                fail(f"spawned stack uses symbols outside {q.name}")

    def _check_config(self, c, what):
        if c.control not in self.owner:
            raise ModelError(f"{what}: unknown control {c.control!r}")
        p = self.pds[self.owner[c.control]]
        if any(s not in p.stack for s in c.stack):
            raise ModelError(f"{what}: unknown stack symbol")
        if not c.locks <= self.locks:
            raise ModelError(f"{what}: undeclared lock")

    def _check_valuation(self):
        v = self.valuation
        if v is None:
            return
        for ap in v.map:
            if ap not in self.props:
                raise ModelError(f"valuation for undeclared proposition {ap!r}")
        if v.kind == "simple":
            for ap, pairs in v.map.items():
                for c, locks in pairs:
                    if c not in self.owner:
                        raise ModelError(f"valuation of {ap!r} names unknown control {c!r}")
                    if not locks <= self.locks:
                        raise ModelError(f"valuation of {ap!r} uses undeclared locks")

    def pds_of(self, control) -> int:
        return self.owner[control]

    @property
    def rules(self):
        return [r for p in self.pds for r in p.rules]

    @property
    def lock_free(self):
        return all(r.action.kind == "tau" for r in self.rules)

    def by_name(self, name):
        for i, p in enumerate(self.pds):
            if p.name == name:
                return i
        raise ModelError(f"no pds named {name!r}")


Dclic = LocalConfiguration


def dclics_of(m: LockDpnModel) -> frozenset:
    """The spawned local initial configurations of all form-(II) rules."""
    return frozenset(
        LocalConfiguration(r.spawn[0], tuple(r.spawn[1])) for r in m.rules if r.spawn is not None
    )


# -- JSON I/O -----------------------------------------------------------------


def _locks(x):
    return frozenset(x or ())


def _action(obj):
    if obj == "tau":
        return TAU
    if isinstance(obj, dict) and len(obj) == 1:
        (kind, lock), = obj.items()
        if kind in ("acq", "rel"):
            return Action(kind, lock)
    raise ModelError(f"malformed action {obj!r}")


def _rule(obj):
    try:
        src, sym = obj["from"]
        tgt, push = obj["to"]
        spawn = obj.get("spawn")
        if spawn is not None:
            spawn = (spawn[0], tuple(spawn[1]))
        return Rule(src, sym, _action(obj.get("action", "tau")), tgt, tuple(push), spawn)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelError):
            raise
        raise ModelError(f"malformed rule {obj!r}") from exc


def lma_from_json(obj) -> MultiAutomaton:
    """L-MA object: ``states``, ``initials``, ``accepting``, ``transitions``.

    An initial entry is ``{"control": c, "locks": [...], "state": q}``; the
    short form ``[c, [locks...], q]`` is also accepted.
    """
    try:
        states = frozenset(obj["states"])
        initials = {}
        for entry in obj["initials"]:
            if isinstance(entry, dict):
                c, locks, q = entry["control"], entry.get("locks", []), entry["state"]
            else:
                c, locks, q = entry
            initials[(c, _locks(locks))] = q
        trans = frozenset((q, a, frozenset(), r) for q, a, r in obj["transitions"])
        symbols = frozenset(obj["stack"]) if "stack" in obj else None
        return MultiAutomaton(states, initials, frozenset(obj["accepting"]), trans, symbols)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelError):
            raise
        raise ModelError(f"malformed multi-automaton: {exc}") from exc


def lma_to_json(a: MultiAutomaton, name=str):
    """Inverse of ``lma_from_json``; ``name`` renders controls, states and symbols."""
    initials = sorted(
        ({"control": name(c), "locks": sorted(l), "state": name(q)} for (c, l), q in a.initials.items()),
        key=lambda e: (e["control"], e["locks"]),
    )
    doc = {
        "states": sorted(name(q) for q in a.states),
        "initials": initials,
        "accepting": sorted(name(q) for q in a.accepting),
        "transitions": sorted([name(q), name(g), name(r)] for q, g, _, r in a.transitions),
    }
    if a.symbols is not None:
        doc["stack"] = sorted(name(g) for g in a.symbols)
    return doc


def _valuation(obj, props):
    if obj is None:
        return None
    kind = obj.get("type")
    entries = obj.get("map", {})
    if kind == "simple":
        m = {}
        for ap, pairs in entries.items():
            m[ap] = frozenset((e["control"], _locks(e.get("locks"))) for e in pairs)
        for ap in props:
            m.setdefault(ap, frozenset())
        return SimpleValuation(m)
    if kind == "regular":
        return RegularValuation({ap: lma_from_json(x) for ap, x in entries.items()})
    raise ModelError(f"unknown valuation type {kind!r}")


def model_from_dict(doc) -> LockDpnModel:
    if not isinstance(doc, dict):
        raise ModelError("model document must be a JSON object")
    missing = [k for k in ("locks", "props", "pds") if k not in doc]
    if missing:
        raise ModelError(f"missing required key(s): {', '.join(missing)}")
    pds = []
    for i, p in enumerate(doc["pds"]):
        for key in ("name", "controls", "stack", "rules"):
            if key not in p:
                raise ModelError(f"pds #{i}: missing key {key!r}")
        pds.append(
            Pds(
                p["name"],
                frozenset(p["controls"]),
                frozenset(p["stack"]),
                tuple(_rule(r) for r in p["rules"]),
            )
        )
    initial = doc.get("initial")
    if initial is not None:
        initial = LocalConfiguration(
            initial["control"], tuple(initial.get("stack", ())), _locks(initial.get("locks"))
        )
    props = frozenset(doc["props"])
    return LockDpnModel(
        locks=frozenset(doc["locks"]),
        pds=tuple(pds),
        props=props,
        valuation=_valuation(doc.get("valuation"), props),
        initial=initial,
    )


def load_model(document) -> LockDpnModel:
    """Parse and validate a JSON model document (bytes or str)."""
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ModelError(f"parse error: {exc}") from exc
    return model_from_dict(doc)


def _action_json(a):
    return "tau" if a.kind == "tau" else {a.kind: a.lock}


def _rule_json(r, name):
    doc = {
        "from": [name(r.source), name(r.symbol)],
        "action": _action_json(r.action),
        "to": [name(r.target), [name(s) for s in r.push]],
    }
    if r.spawn is not None:
        doc["spawn"] = [name(r.spawn[0]), [name(s) for s in r.spawn[1]]]
    return doc


def model_to_dict(m: LockDpnModel, name=str) -> dict:
    """Serialize; ``name`` renders controls and stack symbols (must be injective)."""
    doc = {
        "locks": sorted(m.locks),
        "props": sorted(m.props),
        "pds": [
            {
                "name": p.name,
                "controls": sorted(name(c) for c in p.controls),
                "stack": sorted(name(s) for s in p.stack),
                "rules": sorted((_rule_json(r, name) for r in p.rules), key=lambda d: json.dumps(d, sort_keys=True)),
            }
            for p in m.pds
        ],
    }
    v = m.valuation
    if v is not None and v.kind == "simple":
        doc["valuation"] = {
            "type": "simple",
            "map": {
                ap: sorted(
                    ({"control": name(c), "locks": sorted(l)} for c, l in pairs),
                    key=lambda e: (e["control"], e["locks"]),
                )
                for ap, pairs in sorted(v.map.items())
            },
        }
    elif v is not None:
        doc["valuation"] = {"type": "regular", "map": {ap: lma_to_json(a, name) for ap, a in sorted(v.map.items())}}
    if m.initial is not None:
        doc["initial"] = {
            "control": name(m.initial.control),
            "stack": [name(s) for s in m.initial.stack],
            "locks": sorted(m.initial.locks),
        }
    return doc


def dump_model(m: LockDpnModel, name=str) -> str:
    return json.dumps(model_to_dict(m, name), indent=2)


def load_formulas(text: str, m: LockDpnModel) -> dict:
    """Parse ``<pds-name>: <ltl>`` lines; every pds needs exactly one line."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" not in line:
            raise ModelError(f"line {lineno}: expected '<pds-name>: <ltl>'")
        name, body = (s.strip() for s in line.split(":", 1))
        idx = m.by_name(name)
        if idx in out:
            raise ModelError(f"line {lineno}: second formula for {name}")
        try:
            f = parse_ltl(body)
        except LtlSyntaxError as exc:
            raise ModelError(f"line {lineno}: {exc}") from exc
        unknown = atoms(f) - m.props
        if unknown:
            raise ModelError(f"line {lineno}: undeclared proposition(s) {sorted(unknown)}")
        out[idx] = f
    missing = [p.name for i, p in enumerate(m.pds) if i not in out]
    if missing:
        raise ModelError(f"no formula for: {', '.join(missing)}")
    return [out[i] for i in range(len(m.pds))]
