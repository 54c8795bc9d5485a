"""LTL model checking for lock-free dynamic pushdown networks.

Each pushdown system is multiplied with the Büchi automaton of its formula.
A local configuration has an accepting run iff it can reach a repeating head
(a head that returns to itself above a grown stack while passing an
accepting state). Spawned initial configurations are handled by a greatest
fixpoint: only rules whose spawn target itself satisfies its formula may be
used.
"""

from __future__ import annotations

import itertools
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Callable

from ldpnmc._graph import sccs
from ldpnmc.errors import ModelError, ResourceLimit
from ldpnmc.ltl import BuchiAutomaton, Formula, atoms, build_buchi
from ldpnmc.model import (
    TAU,
    LocalConfiguration,
    LockDpnModel,
    MultiAutomaton,
    Pds,
    Rule,
    dclics_of,
)

FINAL = "⊤"  # accepting sink of the configuration automata


@dataclass(frozen=True)
class HeadValuation:
    """``ap -> {(control, top symbol)}``; what regular valuations compile to."""

    map: dict
    kind = "head"


def make_labeler(v) -> Callable:
    """``(control, symbol) -> letter`` for a simple or head valuation."""
    if v is None:
        return lambda p, g: frozenset()
    if v.kind == "simple":
        table = defaultdict(set)
        for ap, pairs in v.map.items():
            for c, locks in pairs:
                if not locks:
                    table[c].add(ap)
        return lambda p, g: frozenset(table.get(p, ()))
    if v.kind == "head":
        table = defaultdict(set)
        for ap, heads in v.map.items():
            for h in heads:
                table[h].add(ap)
        return lambda p, g: frozenset(table.get((p, g), ()))
    raise ModelError("regular valuations must be compiled with annotate_regular first")


def as_buchi(f) -> BuchiAutomaton:
    if isinstance(f, BuchiAutomaton):
        return f
    if isinstance(f, Formula):
        return build_buchi(f, props=atoms(f))
    raise TypeError(f"expected a formula or Büchi automaton, got {type(f).__name__}")


@dataclass
class BuchiDpds:
    pds: Pds
    ba: BuchiAutomaton
    controls: frozenset
    rules: tuple  # Rules over (control, Büchi state); spawn targets unchanged
    accepting: frozenset
    letters: tuple = field(repr=False)  # letter read by each product rule
    spawned: tuple = field(repr=False, default=())  # spawn target of each product rule, or None

    def start(self, c: LocalConfiguration):
        return ((c.control, self.ba.initial), tuple(c.stack))


def build_bpds(pds: Pds, ba, valuation=None, labeler=None) -> BuchiDpds:
    ba = as_buchi(ba)
    label = labeler or make_labeler(valuation)
    controls = frozenset((p, g) for p in pds.controls for g in ba.states)
    rules = []
    letters = []
    states = sorted(ba.states, key=repr)
    for r in pds.rules:
        letter = label(r.source, r.symbol) & ba.props
        for g in states:
            for g2 in ba.successors(g, letter):
                rules.append(Rule((r.source, g), r.symbol, TAU, (r.target, g2), r.push, r.spawn))
                letters.append(letter)
    accepting = frozenset((p, g) for p, g in controls if g in ba.accepting)
    spawned = tuple(None if r.spawn is None else _dclic(r) for r in rules)
    return BuchiDpds(pds, ba, controls, tuple(rules), accepting, tuple(letters), spawned)


# -- saturation ---------------------------------------------------------------------


def _normalize(b: BuchiDpds, allowed, label):
    """Rules with pushes of length at most two as ``(p, g, q, w, weight)``.

    Longer pushes go through fresh intermediate controls; the weight of the
    original rule sits on its first piece.
    """
    out = []
    for idx, r in enumerate(b.rules):
        target = b.spawned[idx]
        if target is not None and allowed is not None and target not in allowed:
            continue
        w = tuple(r.push)
        weight = label(r)
        if len(w) <= 2:
            out.append((r.source, r.symbol, r.target, w, weight))
            continue
        # p g -> m1 (w[-2] w[-1]); m1 w[-2] -> m2 (w[-3] w[-2]); ...; -> target (w[0] w[1])
        k = len(w)
        mids = [("·", idx, j) for j in range(k - 2)]
        out.append((r.source, r.symbol, mids[0], w[k - 2 :], weight))
        for j in range(k - 2):
            nxt = mids[j + 1] if j + 1 < k - 2 else r.target
            top = k - 2 - j
            out.append((mids[j], w[top], nxt, (w[top - 1], w[top]), None))
    return out


def _dclic(r: Rule) -> LocalConfiguration:
    return LocalConfiguration(r.spawn[0], tuple(r.spawn[1]))


def _saturate(rules, initial, join, comb):
    """Weighted pre* saturation.

    ``rules`` are normalized rules, ``initial`` maps automaton transitions
    ``(q, symbol, s)`` to weights. Returns the saturated transition weights.
    Weights of a path combine with ``comb``; alternatives merge with ``join``.
    """
    rel = {}
    out = defaultdict(dict)
    by1 = defaultdict(list)
    by2 = defaultdict(list)
    for p, g, q, w, f in rules:
        if len(w) == 1:
            by1[(q, w[0])].append((p, g, f))
        elif len(w) == 2:
            by2[(q, w[0])].append((p, g, w[1], f))
    aux = defaultdict(list)
    work = deque()

    def add(t, lab):
        if t in rel:
            new = join(rel[t], lab)
            if new == rel[t]:
                return
        else:
            new = lab
        rel[t] = new
        out[(t[0], t[1])][t[2]] = new
        work.append(t)

    for t, lab in initial.items():
        add(t, lab)
    for p, g, q, w, f in rules:
        if not w:
            add((p, g, q), f)
    while work:
        t = work.popleft()
        q, g, s = t
        lab = rel[t]
        for p1, g1, f in by1[(q, g)]:
            add((p1, g1, s), comb(f, lab))
        for p1, g1, g2, f in by2[(q, g)]:
            a = comb(f, lab)
            aux[(s, g2)].append((p1, g1, a))
            for s2, lab2 in list(out[(s, g2)].items()):
                add((p1, g1, s2), comb(a, lab2))
        for p1, g1, a in list(aux[(q, g)]):
            add((p1, g1, s), comb(a, lab))
    return rel


def _or(a, b):
    return bool(a) or bool(b)


def _first(a, b):
    return a


def _flag(b: BuchiDpds):
    return lambda r: r.source in b.accepting


def repeating_heads(b: BuchiDpds, D=None) -> frozenset:
    """Heads that can return to themselves over a grown stack through an
    accepting control, using only rules whose spawn target is in ``D``
    (``None`` allows every rule)."""
    rules = _normalize(b, D, _flag(b))
    pops = _saturate(rules, {}, _or, _or)
    pops_from = defaultdict(list)
    for (q, g, s), flag in pops.items():
        pops_from[(q, g)].append((s, flag))
    edges = {}
    for p, g, q, w, f in rules:
        if not w:
            continue
        head = (p, g)
        _edge(edges, head, (q, w[0]), bool(f))
        if len(w) == 2:
            for s, flag in pops_from[(q, w[0])]:
                _edge(edges, head, (s, w[1]), bool(f) or flag)
    succ = defaultdict(list)
    for (u, v), flag in edges.items():
        succ[u].append(v)
    nodes = sorted({u for u, _ in edges} | {v for _, v in edges}, key=repr)
    comp_of = {}
    comps = sccs(nodes, lambda n: succ[n])
    for k, comp in enumerate(comps):
        for n in comp:
            comp_of[n] = k
    good = {comp_of[u] for (u, v), flag in edges.items() if flag and comp_of[u] == comp_of[v]}
    out = {n for k in good for n in comps[k]}
    return frozenset(h for h in out if h[0] in b.controls)


def _edge(edges, u, v, flag):
    edges[(u, v)] = edges.get((u, v), False) or flag


def _accepting_automaton(b: BuchiDpds, D):
    heads = repeating_heads(b, D)
    initial = {(q, g, FINAL): None for q, g in heads}
    for g in b.pds.stack:
        initial[(FINAL, g, FINAL)] = None
    rules = _normalize(b, D, lambda r: None)
    return _index(_saturate(rules, initial, _first, _first))


def _index(rel):
    idx = defaultdict(set)
    for q, g, s in rel:
        idx[(q, g)].add(s)
    return idx


def _run(idx, state, stack):
    current = {state}
    for g in stack:
        current = {s for q in current for s in idx.get((q, g), ())}
        if not current:
            return False
    return FINAL in current


def accepting_from(b: BuchiDpds, c, D=None) -> bool:
    """Does ``c`` (a local configuration, started in the initial Büchi state)
    have an accepting run using only spawns into ``D``?"""
    state, stack = b.start(c)
    return _run(_accepting_automaton(b, D), state, stack)


# -- the network level -----------------------------------------------------------------


class DpnChecker:
    """Caches products and saturations for one network and formula vector."""

    def __init__(self, dpn: LockDpnModel, formulas, valuation=None, labeler=None):
        if len(formulas) != len(dpn.pds):
            raise ModelError("one formula per pushdown system is required")
        self.dpn = dpn
        self.bas = [as_buchi(f) for f in formulas]
        if labeler is None:
            labeler = make_labeler(valuation if valuation is not None else dpn.valuation)
        self.label = labeler
        self._bpds = {}
        self._auto = {}
        self._dfp = None
        self.rounds = 0

    def bpds(self, i) -> BuchiDpds:
        if i not in self._bpds:
            self._bpds[i] = build_bpds(self.dpn.pds[i], self.bas[i], labeler=self.label)
        return self._bpds[i]

    def dclics(self) -> frozenset:
        return dclics_of(self.dpn)

    def _automaton(self, i, D):
        key = (i, D)
        if key not in self._auto:
            self._auto[key] = _accepting_automaton(self.bpds(i), D)
        return self._auto[key]

    def accepting_from(self, c: LocalConfiguration, D=None) -> bool:
        i = self.dpn.pds_of(c.control)
        D = None if D is None else frozenset(D)
        state, stack = self.bpds(i).start(c)
        return _run(self._automaton(i, D), state, stack)

    def dfp(self) -> frozenset:
        if self._dfp is None:
            current = self.dclics()
            rounds = 0
            while True:
                rounds += 1
                nxt = frozenset(c for c in current if self.accepting_from(c, current))
                if nxt == current:
                    break
                current = nxt
            self._dfp, self.rounds = current, rounds
        return self._dfp

    def check(self, c: LocalConfiguration) -> bool:
        return self.accepting_from(c, self.dfp())

    def result_ma(self, i, exact_limit=4) -> MultiAutomaton:
        """Multi-automaton of configurations of system ``i`` with accepting runs.

        Transitions carry the spawned initial configurations the run relies on.
        With at most ``exact_limit`` of those in the network, every minimal
        set is recorded; otherwise only runs spawning inside the fixpoint are
        represented, each labelled with its spawn targets.
        """
        b = self.bpds(i)
        dfp = self.dfp()
        universe = self.dclics()
        exact = len(universe) <= exact_limit
        initial = {}
        if exact:
            for D in _subsets_by_size(universe):
                for q, g in repeating_heads(b, D):
                    t = (q, g, FINAL)
                    initial[t] = _ac_join(initial.get(t, frozenset()), frozenset({D}))
            allowed = None
        else:
            used = frozenset(_dclic(r) for r in b.rules if r.spawn is not None) & dfp
            for q, g in repeating_heads(b, dfp):
                initial[(q, g, FINAL)] = frozenset({used})
            allowed = dfp
        for g in b.pds.stack:
            initial[(FINAL, g, FINAL)] = frozenset({frozenset()})

        def weight(r):
            return frozenset({frozenset({_dclic(r)}) if r.spawn is not None else frozenset()})

        rel = _saturate(_normalize(b, allowed, weight), initial, _ac_join, _ac_comb)
        states = {FINAL} | {(p, g) for p, g in b.controls}
        transitions = set()
        for (q, g, s), sets in rel.items():
            states.update((q, s))
            for D in sets:
                transitions.add((q, g, D, s))
        initials = {(p, frozenset()): (p, b.ba.initial) for p in b.pds.controls}
        return MultiAutomaton(frozenset(states), initials, frozenset({FINAL}), frozenset(transitions), b.pds.stack)


def _subsets_by_size(items):
    items = sorted(items, key=repr)
    for k in range(len(items) + 1):
        for c in itertools.combinations(items, k):
            yield frozenset(c)


def _minimal(sets):
    sets = sorted(set(sets), key=len)
    out = []
    for s in sets:
        if not any(t <= s for t in out):
            out.append(s)
    return frozenset(out)


def _ac_join(a, b):
    return _minimal(a | b)


def _ac_comb(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return _minimal(x | y for x in a for y in b)


# -- functional entry points ---------------------------------------------------------


def compute_dfp(dpn: LockDpnModel, formulas, valuation=None) -> frozenset:
    return DpnChecker(dpn, formulas, valuation).dfp()


def check_config(dpn: LockDpnModel, formulas, valuation, c: LocalConfiguration) -> bool:
    return DpnChecker(dpn, formulas, valuation).check(c)


def build_result_ma(dpn: LockDpnModel, formulas, valuation, i: int, exact_limit=4) -> MultiAutomaton:
    return DpnChecker(dpn, formulas, valuation).result_ma(i, exact_limit)


def theorem_membership(ma: MultiAutomaton, c: LocalConfiguration, allowed) -> bool:
    """``exists D <= allowed`` with ``(c, D)`` accepted."""
    from ldpnmc.model import ma_accepts

    allowed = frozenset(allowed)
    return any(D <= allowed for D in ma_accepts(ma, c.control, frozenset(), c.stack))


# -- regular valuations ----------------------------------------------------------------


@dataclass
class Annotated:
    """A network whose stack symbols carry, per proposition, the automaton
    states from which the stack below the symbol is accepted."""

    model: LockDpnModel
    valuation: HeadValuation
    props: tuple
    base: tuple  # annotation of the empty stack
    _pre: dict = field(repr=False)

    def stack(self, stack) -> tuple:
        out = []
        below = self.base
        for g in reversed(tuple(stack)):
            out.append((g, below))
            below = self._pre[g](below)
        return tuple(reversed(out))

    def config(self, c: LocalConfiguration) -> LocalConfiguration:
        return LocalConfiguration(c.control, self.stack(c.stack), c.locks)


def annotate_regular(dpn: LockDpnModel, valuation=None, starts=(), max_symbols=50_000) -> Annotated:
    """Compile a regular valuation into a head valuation.

    Only annotated symbols reachable from ``starts`` and the spawned initial
    configurations are generated; more than ``max_symbols`` of them raises
    ``ResourceLimit``.
    """
    v = valuation if valuation is not None else dpn.valuation
    if v is None or v.kind != "regular":
        raise ModelError("annotate_regular needs a regular valuation")
    props = tuple(sorted(v.map))
    autos = [v.map[ap] for ap in props]
    back = []
    for a in autos:
        idx = defaultdict(set)
        for q, g, _, r in a.transitions:
            idx[(r, g)].add(q)
        back.append(idx)
    base = tuple(frozenset(a.accepting) for a in autos)
    cache = {}

    def pre_of(g):
        def pre(S):
            key = (g, S)
            if key not in cache:
                cache[key] = tuple(frozenset(q for r in s for q in idx.get((r, g), ())) for s, idx in zip(S, back))
            return cache[key]

        return pre

    stacks = set()
    for p in dpn.pds:
        stacks |= p.stack
    pre = {g: pre_of(g) for g in stacks}
    ann = Annotated(None, None, props, base, pre)

    symbols = [set() for _ in dpn.pds]
    todo = deque()

    def visit(i, sym):
        if sym not in symbols[i]:
            symbols[i].add(sym)
            if sum(map(len, symbols)) > max_symbols:
                raise ResourceLimit(f"regular valuation annotation exceeded {max_symbols} stack symbols")
            todo.append((i, sym))

    def visit_stack(i, stack):
        for sym in ann.stack(stack):
            visit(i, sym)

    for c in starts:
        visit_stack(dpn.pds_of(c.control), c.stack)
    for c in dclics_of(dpn):
        visit_stack(dpn.pds_of(c.control), c.stack)
    rules = [[] for _ in dpn.pds]
    while todo:
        i, (g, S) = todo.popleft()
        for r in dpn.pds[i].rules:
            if r.symbol != g:
                continue
            push = []
            below = S
            for h in reversed(r.push):
                push.append((h, below))
                below = pre[h](below)
            push.reverse()
            for sym in push:
                visit(i, sym)
            spawn = None
            if r.spawn is not None:
                spawn = (r.spawn[0], ann.stack(r.spawn[1]))
            rules[i].append(Rule(r.source, (g, S), r.action, r.target, tuple(push), spawn))
    pds = tuple(
        Pds(p.name, p.controls, frozenset(symbols[i]), tuple(rules[i])) for i, p in enumerate(dpn.pds)
    )
    model = LockDpnModel(dpn.locks, pds, dpn.props)
    heads = {ap: set() for ap in props}
    for k, ap in enumerate(props):
        a = autos[k]
        for i, p in enumerate(pds):
            for c in p.controls:
                q0 = a.initials.get((c, frozenset()))
                if q0 is None:
                    continue
                for sym in p.stack:
                    g, S = sym
                    if any(t in S[k] for _, t in a.out(q0, g)):
                        heads[ap].add((c, sym))
    hv = HeadValuation({ap: frozenset(h) for ap, h in heads.items()})
    ann.model = model
    ann.valuation = hv
    return ann
