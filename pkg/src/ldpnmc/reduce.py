"""Reduction of a lock-using network to a lock-free one.

Every control ``p`` is paired with an acquisition structure ``as`` summarising
the lock behaviour of the remaining run of that instance and everything it
spawns. Rules become ``tau`` rules whose annotations are related by the
backward transformers of :mod:`ldpnmc.acq`.
"""

from __future__ import annotations

import hashlib
from collections import Counter, deque
from dataclasses import dataclass, field, replace
from typing import Hashable, NamedTuple

from ldpnmc.acq import (
    EMPTY,
    AcquisitionStructure,
    _compatible,
    enumerate_all,
    is_consistent,
    is_tight,
    merge,
    merge_splits,
    preimages,
    render,
    tight_structures,
    update,
)
from ldpnmc.errors import ResourceLimit
from ldpnmc.model import (
    TAU,
    LocalConfiguration,
    LockDpnModel,
    MultiAutomaton,
    Pds,
    RegularValuation,
    Rule,
    SimpleValuation,
)


class AControl(NamedTuple):
    """A control annotated with the acquisition structure of its remaining run.

    ``pending`` lists locks that the remaining run may use only finitely
    often, because another instance finally acquires them.
    """

    control: Hashable
    structure: AcquisitionStructure
    pending: frozenset = frozenset()

    def settled(self) -> bool:
        """No outstanding initial release and no pending lock."""
        return not self.structure.R and not self.pending


@dataclass(frozen=True)
class ReducedDpn:
    model: LockDpnModel  # lock-free; controls are AControl
    source: LockDpnModel
    origin: dict  # reduced rule -> (source rule, as, as', as'' or None)
    discarded: Counter = field(default_factory=Counter)
    roots: tuple = ()  # annotated start controls, lazy mode only
    materialized: bool = False

    def controls(self, i):
        return self.model.pds[i].controls

    def sizes(self):
        return [(len(p.controls), len(p.rules)) for p in self.model.pds]

    def within_bounds(self, as_count: int) -> bool:
        """``|P'_i| <= |P_i| |AS|`` and ``|Delta'_i| <= |Delta_i| |AS|^2`` for every ``i``."""
        return all(
            len(r.controls) <= len(s.controls) * as_count and len(r.rules) <= len(s.rules) * as_count**2
            for r, s in zip(self.model.pds, self.source.pds)
        )


def project_config(c: LocalConfiguration) -> LocalConfiguration:
    """``((p, as), w)`` to ``(p w, as_X)``."""
    a = c.control
    return LocalConfiguration(a.control, c.stack, a.structure.X)


def _spawn_rule(r, source, target, spawned):
    return Rule(source, r.symbol, TAU, target, r.push, (spawned, r.spawn[1]))


def _assemble(m, controls, rules, origin, discarded, roots=(), materialized=False):
    pds = tuple(
        Pds(p.name, frozenset(controls[i]), p.stack, tuple(rules[i])) for i, p in enumerate(m.pds)
    )
    reduced = LockDpnModel(frozenset(), pds, m.props)
    return ReducedDpn(reduced, m, origin, discarded, tuple(roots), materialized)


def reduce_ldpn(
    m: LockDpnModel, materialize=False, start=None, tight=True, infinite=False, max_controls=200_000
) -> ReducedDpn:
    """Build the annotated lock-free network.

    With ``materialize`` every consistent structure is attached to every
    control (only feasible for very few locks). Otherwise only the fragment
    reachable from ``start`` is built; ``start`` defaults to the model's
    initial configuration, and its held locks fix the root structures' ``X``.
    With ``tight`` the lazy construction only follows structures that actual
    runs can have. With ``infinite`` controls also track pending locks (see
    ``AControl``), which infinite runs need.
    """
    if materialize:
        return _materialize(m)
    start = start if start is not None else m.initial
    if start is None:
        raise ValueError("lazy reduction needs a start configuration")
    roots = [AControl(start.control, s) for s in _root_structures(m.locks, start.locks, tight)]
    return _lazy(m, roots, tight, infinite, max_controls)


def _root_structures(locks, held, tight):
    if tight:
        return tight_structures(locks, held)
    return [s for s in enumerate_all(locks, max_locks=len(locks)) if s.X == frozenset(held)]


def _materialize(m: LockDpnModel) -> ReducedDpn:
    structures = enumerate_all(m.locks)
    spawnable = [s for s in structures if not s.R and not s.X]
    controls = [[AControl(p, s) for p in sorted(pd.controls, key=repr) for s in structures] for pd in m.pds]
    rules = [[] for _ in m.pds]
    origin = {}
    discarded = Counter()
    for i, pd in enumerate(m.pds):
        for r in pd.rules:
            for s1 in structures:
                pairs = [(s1, None)]
                if r.spawn is not None:
                    pairs = []
                    for s2 in spawnable:
                        if _compatible(s1, s2):
                            pairs.append((s1, s2))
                        else:
                            discarded["incompatible"] += 1
                for s1_, s2 in pairs:
                    base = s1_ if s2 is None else merge(s1_, s2)
                    s = update(base, r.action)
                    if s is None:
                        discarded["undefined"] += 1
                        continue
                    if not is_consistent(s):
                        discarded["inconsistent"] += 1
                        continue
                    if s2 is None:
                        nr = Rule(AControl(r.source, s), r.symbol, TAU, AControl(r.target, s1_), r.push)
                    else:
                        nr = _spawn_rule(r, AControl(r.source, s), AControl(r.target, s1_), AControl(r.spawn[0], s2))
                    rules[i].append(nr)
                    origin[nr] = (r, s, s1_, s2)
    return _assemble(m, controls, rules, origin, discarded, materialized=True)


def _lazy(m, roots, tight, infinite, max_controls):
    controls = [set() for _ in m.pds]
    rules = [[] for _ in m.pds]
    origin = {}
    discarded = Counter()
    todo = deque()

    def visit(c):
        i = m.owner[c.control]
        if c not in controls[i]:
            controls[i].add(c)
            if sum(map(len, controls)) > max_controls:
                raise ResourceLimit(f"reduction exceeded {max_controls} annotated controls")
            todo.append(c)

    def admissible(s):
        if not is_consistent(s):
            discarded["inconsistent"] += 1
            return False
        if tight and not is_tight(s):
            discarded["untight"] += 1
            return False
        return True

    split_cache = {}

    def splits(merged):
        if merged not in split_cache:
            out = []
            if not is_consistent(merged):
                discarded["inconsistent"] += 1
            else:
                for s1, s2 in merge_splits(merged, tight=tight):
                    if not (admissible(s1) and admissible(s2)):
                        continue
                    if not _compatible(s1, s2):
                        discarded["incompatible"] += 1
                        continue
                    out.append((s1, s2))
            split_cache[merged] = out
        return split_cache[merged]

    pre_cache = {}

    def steps(s, action):
        key = (s, action)
        if key not in pre_cache:
            pre_cache[key] = [s1 for s1 in preimages(s, action, m.locks) if admissible(s1)]
        return pre_cache[key]

    by_source = {}
    for pd in m.pds:
        for r in sorted(pd.rules, key=str):
            by_source.setdefault(r.source, []).append(r)

    for c in roots:
        visit(c)
    while todo:
        c = todo.popleft()
        p, s, pending = c
        for r in by_source.get(p, ()):
            if r.spawn is None:
                for s1 in steps(s, r.action):
                    t = AControl(r.target, s1, pending & s1.U)
                    nr = Rule(c, r.symbol, TAU, t, r.push)
                    rules[m.owner[p]].append(nr)
                    origin[nr] = (r, s, s1, None)
                    visit(t)
                continue
            for merged in preimages(s, r.action, m.locks):
                for s1, s2 in splits(merged):
                    p1 = p2 = frozenset()
                    if infinite:
                        p1 = (pending | s2.A) & s1.U
                        p2 = (pending | s1.A) & s2.U
                    t1, t2 = AControl(r.target, s1, p1), AControl(r.spawn[0], s2, p2)
                    nr = _spawn_rule(r, c, t1, t2)
                    rules[m.owner[p]].append(nr)
                    origin[nr] = (r, s, s1, s2)
                    visit(t1)
                    visit(t2)
    for i in range(len(rules)):
        rules[i] = list(dict.fromkeys(rules[i]))
    return _assemble(m, controls, rules, origin, discarded, roots=roots)


# -- valuations ---------------------------------------------------------------------


def lift_valuation(v, reduced: ReducedDpn):
    """Carry a valuation over to annotated controls: ``(p, as)`` inherits ``(p, as_X)``."""
    if v is None:
        return None
    controls = [c for p in reduced.model.pds for c in p.controls]
    if v.kind == "simple":
        return SimpleValuation(
            {
                ap: frozenset((c, frozenset()) for c in controls if (c.control, c.structure.X) in pairs)
                for ap, pairs in v.map.items()
            }
        )
    lifted = {}
    for ap, a in v.map.items():
        initials = {}
        for c in controls:
            q = a.initials.get((c.control, c.structure.X))
            if q is not None:
                initials[(c, frozenset())] = q
        lifted[ap] = MultiAutomaton(a.states, initials, a.accepting, a.transitions, a.symbols)
    return RegularValuation(lifted)


def with_valuation(reduced: ReducedDpn, v) -> ReducedDpn:
    props = frozenset(v.map) if v is not None else reduced.model.props
    model = replace(reduced.model, props=props | reduced.model.props, valuation=v, owner=None)
    return replace(reduced, model=model)


# -- nested-lock monitor ------------------------------------------------------------


def enforce_nesting(m: LockDpnModel, start=None) -> LockDpnModel:
    """Restrict ``m`` to runs that use locks in nested style.

    Controls become ``(p, (open, initial))`` where ``open`` is the stack of
    locks acquired and not yet released and ``initial`` the initially held
    locks not yet released. Only the part reachable from ``start`` is built.
    """
    start = start if start is not None else m.initial
    root = (start.control, ((), frozenset(start.locks)))
    controls = [set() for _ in m.pds]
    rules = [[] for _ in m.pds]
    todo = deque()

    def visit(c):
        i = m.owner[c[0]]
        if c not in controls[i]:
            controls[i].add(c)
            todo.append(c)

    visit(root)
    while todo:
        p, (opened, initial) = c = todo.popleft()
        i = m.owner[p]
        for r in m.pds[i].rules:
            if r.source != p:
                continue
            a = r.action
            nxt = (opened, initial)
            if a.kind == "acq":
                if a.lock in opened or a.lock in initial:
                    continue
                nxt = (opened + (a.lock,), initial)
            elif a.kind == "rel":
                if opened and opened[-1] == a.lock:
                    nxt = (opened[:-1], initial)
                elif not opened and a.lock in initial:
                    nxt = (opened, initial - {a.lock})
                else:
                    continue
            spawn = None
            if r.spawn is not None:
                spawn = ((r.spawn[0], ((), frozenset())), r.spawn[1])
                visit(spawn[0])
            rules[i].append(Rule(c, r.symbol, a, (r.target, nxt), r.push, spawn))
            visit((r.target, nxt))
    pds = tuple(Pds(p.name, frozenset(controls[i]), p.stack, tuple(rules[i])) for i, p in enumerate(m.pds))
    all_controls = [c for cs in controls for c in cs]
    v = m.valuation
    if v is not None and v.kind == "simple":
        v = SimpleValuation(
            {
                ap: frozenset((c, locks) for c in all_controls for p, locks in pairs if c[0] == p)
                for ap, pairs in v.map.items()
            }
        )
    elif v is not None:
        v = RegularValuation(
            {
                ap: MultiAutomaton(
                    a.states,
                    {(c, L): q for (p, L), q in a.initials.items() for c in all_controls if c[0] == p},
                    a.accepting,
                    a.transitions,
                    a.symbols,
                )
                for ap, a in v.map.items()
            }
        )
    initial = LocalConfiguration(root, start.stack, frozenset(start.locks))
    return LockDpnModel(m.locks, pds, m.props, v, initial)


def original_control(c):
    """Strip structure and monitor annotations down to the source control."""
    if isinstance(c, AControl):
        c = c.control
    if _is_monitor(c):
        c = c[0]
    return c


def structure_id(s: AcquisitionStructure) -> str:
    return hashlib.sha1(render(s).encode()).hexdigest()[:10]


def _is_monitor(c):
    return (
        isinstance(c, tuple)
        and len(c) == 2
        and isinstance(c[1], tuple)
        and len(c[1]) == 2
        and isinstance(c[1][0], tuple)
        and isinstance(c[1][1], frozenset)
    )


def control_name(c) -> str:
    """Readable, injective name for annotated controls, stable across processes."""
    if isinstance(c, AControl):
        name = f"{control_name(c.control)}#{structure_id(c.structure)}"
        if c.pending:
            name += "!" + ".".join(sorted(c.pending))
        return name
    if _is_monitor(c):
        opened, initial = c[1]
        return f"{control_name(c[0])}[{'.'.join(opened)}|{'.'.join(sorted(initial))}]"
    if isinstance(c, LocalConfiguration):
        stack = " ".join(control_name(x) for x in c.stack) or "ε"
        return f"({control_name(c.control)} {stack}, {control_name(c.locks)})"
    if isinstance(c, tuple):
        return "(" + ",".join(control_name(x) for x in c) + ")"
    if isinstance(c, (frozenset, set)):
        return "{" + ",".join(sorted(control_name(x) for x in c)) + "}"
    return str(c)


__all__ = [
    "EMPTY",
    "AControl",
    "ReducedDpn",
    "control_name",
    "enforce_nesting",
    "lift_valuation",
    "original_control",
    "project_config",
    "reduce_ldpn",
    "structure_id",
    "with_valuation",
]
