"""Executable semantics of global runs, plus brute-force oracles.

A global run is a binary tree: the right child of a node continues the same
instance, the left child is the root of a spawned instance. The leaves form
the current global configuration.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import networkx as nx

from ldpnmc.acq import AcquisitionStructure
from ldpnmc.errors import BoundExceeded, ModelError, ResourceLimit
from ldpnmc.ltl import atoms, build_buchi
from ldpnmc.model import (
    GlobalConfiguration,
    LocalConfiguration,
    LockDpnModel,
    config_key,
    props_at,
)

log = logging.getLogger(__name__)


def _rule_order(r):
    return (repr(r.source), repr(r.symbol), str(r.action), repr(r.target), repr(r.push), repr(r.spawn))


def step_guard(c: LocalConfiguration, rule, held) -> bool:
    """Lock guard of a rule at ``c`` when ``held`` locks are taken globally."""
    a = rule.action
    if a.kind == "acq":
        return a.lock not in held
    if a.kind == "rel":
        return a.lock in c.locks
    return True


def apply_rule(c: LocalConfiguration, rule):
    """``(continuation, spawned-or-None)`` after firing ``rule`` at ``c``."""
    locks = c.locks
    if rule.action.kind == "acq":
        locks = locks | {rule.action.lock}
    elif rule.action.kind == "rel":
        locks = locks - {rule.action.lock}
    nxt = LocalConfiguration(rule.target, tuple(rule.push) + c.stack[1:], locks)
    spawned = None
    if rule.spawn is not None:
        spawned = LocalConfiguration(rule.spawn[0], tuple(rule.spawn[1]), frozenset())
    return nxt, spawned


def _candidates(m: LockDpnModel, c: LocalConfiguration):
    if not c.stack or c.control not in m.owner:
        return ()
    return m.pds[m.owner[c.control]].rules_at(c.control, c.stack[0])


def enabled_steps(g: GlobalConfiguration, m: LockDpnModel):
    """All ``(leaf, rule)`` pairs whose guard holds in ``g``; one entry per distinct leaf."""
    held = g.held()
    out = []
    for c, _ in g.items():
        for r in sorted(_candidates(m, c), key=_rule_order):
            if step_guard(c, r, held):
                out.append((c, r))
    return out


# -- run trees -----------------------------------------------------------------


@dataclass
class RunNode:
    config: LocalConfiguration
    parent: Optional[int] = None
    rule: object = None  # rule applied here, None for leaves
    step: Optional[int] = None  # scheduler step at which the node was expanded
    right: Optional[int] = None
    left: Optional[int] = None


@dataclass
class GlobalRunTree:
    model: LockDpnModel
    nodes: list = field(default_factory=list)
    trace: list = field(default_factory=list)  # (step, leaf id, rule)

    @classmethod
    def start(cls, model, config: LocalConfiguration):
        return cls(model, [RunNode(config)])

    @classmethod
    def replay(cls, model, config, trace):
        t = cls.start(model, config)
        for _, leaf, rule in trace:
            t.expand(leaf, rule)
        return t

    def copy(self):
        nodes = [RunNode(n.config, n.parent, n.rule, n.step, n.right, n.left) for n in self.nodes]
        return GlobalRunTree(self.model, nodes, list(self.trace))

    def leaves(self):
        return [i for i, n in enumerate(self.nodes) if n.rule is None]

    def configuration(self) -> GlobalConfiguration:
        return GlobalConfiguration(self.nodes[i].config for i in self.leaves())

    def enabled(self):
        held = self.configuration().held()
        out = []
        for i in self.leaves():
            c = self.nodes[i].config
            for r in sorted(_candidates(self.model, c), key=_rule_order):
                if step_guard(c, r, held):
                    out.append((i, r))
        return out

    def expand(self, leaf: int, rule):
        node = self.nodes[leaf]
        if node.rule is not None:
            raise ValueError(f"node {leaf} is not a leaf")
        c = node.config
        if not c.stack or rule.head != (c.control, c.stack[0]):
            raise ValueError(f"rule '{rule}' does not match {c}")
        if not step_guard(c, rule, self.configuration().held()):
            raise ValueError(f"rule '{rule}' is not enabled at {c}")
        nxt, spawned = apply_rule(c, rule)
        step = len(self.trace)
        node.rule, node.step = rule, step
        node.right = len(self.nodes)
        self.nodes.append(RunNode(nxt, leaf))
        if spawned is not None:
            node.left = len(self.nodes)
            self.nodes.append(RunNode(spawned, leaf))
        self.trace.append((step, leaf, rule))
        return node.right

    def local_runs(self, root=0):
        """Node-id paths of all local runs inside the subtree at ``root``."""
        runs = []
        todo = [root]
        while todo:
            start = todo.pop()
            path = []
            i = start
            while i is not None:
                path.append(i)
                n = self.nodes[i]
                if n.left is not None:
                    todo.append(n.left)
                i = n.right
            runs.append(path)
        return runs

    def find(self, control, occurrence=0, locks=None):
        """Id of the ``occurrence``-th node (by id) with ``control`` (and ``locks``)."""
        hits = [
            i
            for i, n in enumerate(self.nodes)
            if n.config.control == control and (locks is None or n.config.locks == frozenset(locks))
        ]
        return hits[occurrence]


def check_nested(t: GlobalRunTree) -> bool:
    """Does every local run release only its most recent open acquisition, never re-acquiring?"""
    for path in t.local_runs():
        first = t.nodes[path[0]].config
        initial = set(first.locks)
        opened = []
        for i in path:
            rule = t.nodes[i].rule
            if rule is None or rule.action.kind == "tau":
                continue
            lock = rule.action.lock
            if rule.action.kind == "acq":
                if lock in opened or lock in initial:
                    return False
                opened.append(lock)
            elif opened:
                if opened[-1] != lock:
                    return False
                opened.pop()
            elif lock in initial:
                initial.discard(lock)
            else:
                return False
    return True


def acq_structure_of_tree(t: GlobalRunTree, X, root=0) -> AcquisitionStructure:
    """Acquisition structure of the finite subtree at ``root``.

    Unmatched acquisitions count as final. "Before" and "after" compare the
    global scheduler steps of the acquisitions involved.
    """
    initial_release = {}  # lock -> step
    final = {}  # lock -> step of the final acquisition
    usages = []  # (lock, step of acquisition)
    for path in t.local_runs(root):
        opened = []
        for i in path:
            n = t.nodes[i]
            if n.rule is None or n.rule.action.kind == "tau":
                continue
            lock = n.rule.action.lock
            if n.rule.action.kind == "acq":
                opened.append((lock, n.step))
                continue
            match = next((k for k in range(len(opened) - 1, -1, -1) if opened[k][0] == lock), None)
            if match is None:
                initial_release.setdefault(lock, n.step)
            else:
                usages.append((lock, opened.pop(match)[1]))
        for lock, step in opened:
            final[lock] = step
    rh = {(u, r) for u, tu in usages for r, tr in initial_release.items() if tu < tr}
    ah = {(a, u) for a, ta in final.items() for u, tu in usages if tu > ta}
    return AcquisitionStructure.of(
        R=initial_release, RH=rh, U={u for u, _ in usages}, AH=ah, A=final, X=X
    )


# -- bounded exploration ---------------------------------------------------------


@dataclass
class Exploration:
    configurations: dict  # GlobalConfiguration -> witness GlobalRunTree
    frontier: list  # witness trees of the deepest level
    stuck: list  # reachable configurations without enabled steps

    def __len__(self):
        return len(self.configurations)


def explore_bounded(m: LockDpnModel, start, depth: int, max_configs=100_000) -> Exploration:
    """Breadth-first exploration of all interleavings up to ``depth`` steps.

    ``start`` is a single local configuration (the root of the run tree).
    """
    if depth < 0:
        raise ValueError("depth must be non-negative")
    root = GlobalRunTree.start(m, start)
    seen = {root.configuration(): root}
    level = [root]
    stuck = []
    for _ in range(depth):
        nxt = []
        for t in level:
            steps = t.enabled()
            if not steps:
                continue
            for leaf, rule in steps:
                child = t.copy()
                child.expand(leaf, rule)
                g = child.configuration()
                if g in seen:
                    continue
                if len(seen) >= max_configs:
                    raise ResourceLimit(f"exploration exceeded {max_configs} configurations")
                seen[g] = child
                nxt.append(child)
        if not nxt:
            break
        level = nxt
    for g, t in seen.items():
        if not enabled_steps(g, m):
            stuck.append(g)
    return Exploration(seen, level, stuck)


# -- explicit Büchi oracle ---------------------------------------------------------


@dataclass(frozen=True, order=True)
class _Instance:
    control: object
    stack: tuple
    locks: frozenset
    opened: tuple  # acquisition stack of the nesting monitor
    initial: frozenset  # initially held locks not yet released
    state: object  # Büchi state


def _as_list(start):
    if isinstance(start, LocalConfiguration):
        return [start]
    return list(start)


def explicit_buchi_oracle(
    m: LockDpnModel,
    formulas,
    start=None,
    stack_bound=8,
    instance_bound=4,
    max_states=200_000,
    nested=True,
) -> bool:
    """Is there an infinite run in which every instance moves forever and
    satisfies the formula of its pushdown system?

    The reachable product of instance tuples and Büchi states is built
    explicitly; ``BoundExceeded`` is raised when it leaves the bounds.
    """
    if start is None:
        if m.initial is None:
            raise ModelError("no start configuration given and the model declares none")
        start = m.initial
    bas = {}

    def ba(i):
        if i not in bas:
            f = formulas[i]
            bas[i] = build_buchi(f, props=atoms(f))
        return bas[i]

    letters = {}

    def letter(i, c):
        key = (i, c)
        if key not in letters:
            letters[key] = props_at(m.valuation, ba(i).props, c)
        return letters[key]

    def check(inst):
        if len(inst.stack) > stack_bound:
            raise BoundExceeded(f"stack height {len(inst.stack)} exceeds bound {stack_bound}")

    roots = []
    for c in _as_list(start):
        if c.control not in m.owner:
            raise ModelError(f"unknown control {c.control!r}")
        i = m.owner[c.control]
        roots.append(_Instance(c.control, tuple(c.stack), frozenset(c.locks), (), frozenset(c.locks), ba(i).initial))
    init = tuple(roots)
    if len(init) > instance_bound:
        raise BoundExceeded("start configuration exceeds the instance bound")

    graph = nx.DiGraph()
    graph.add_node(init)
    todo = deque([init])
    used = {m.owner[x.control] for x in init}
    while todo:
        s = todo.popleft()
        held = frozenset().union(*(x.locks for x in s))
        for k, x in enumerate(s):
            i = m.owner[x.control]
            b = ba(i)
            c = LocalConfiguration(x.control, x.stack, x.locks)
            targets = b.successors(x.state, letter(i, c))
            if not targets:
                continue
            mark = k if x.state in b.accepting else None
            for r in sorted(_candidates(m, c), key=_rule_order):
                if not step_guard(c, r, held):
                    continue
                opened, initial = x.opened, x.initial
                lock = r.action.lock
                # without the nesting requirement the order of locks is not tracked
                if nested and r.action.kind == "acq":
                    if lock in opened or lock in initial:
                        continue
                    opened = opened + (lock,)
                elif nested and r.action.kind == "rel":
                    if opened and opened[-1] == lock:
                        opened = opened[:-1]
                    elif not opened and lock in initial:
                        initial = initial - {lock}
                    else:
                        continue
                nxt, spawned = apply_rule(c, r)
                extra = ()
                if spawned is not None:
                    j = m.owner[spawned.control]
                    used.add(j)
                    extra = (_Instance(spawned.control, spawned.stack, frozenset(), (), frozenset(), ba(j).initial),)
                for g2 in sorted(targets, key=repr):
                    y = _Instance(nxt.control, nxt.stack, nxt.locks, opened, initial, g2)
                    check(y)
                    for e in extra:
                        check(e)
                    t = s[:k] + (y,) + s[k + 1 :] + extra
                    if len(t) > instance_bound:
                        raise BoundExceeded(f"instance count exceeds bound {instance_bound}")
                    if t not in graph:
                        if graph.number_of_nodes() >= max_states:
                            raise ResourceLimit(f"oracle exceeded {max_states} product states")
                        graph.add_node(t)
                        todo.append(t)
                    marks = graph.edges[s, t]["marks"] if graph.has_edge(s, t) else set()
                    if mark is not None:
                        marks = marks | {mark}
                    graph.add_edge(s, t, marks=marks)
    for i, f in enumerate(formulas):
        if i not in used:
            log.warning("formula for %s is vacuous: no instance of it is ever created", m.pds[i].name)
    for comp in nx.strongly_connected_components(graph):
        sub = graph.subgraph(comp)
        if sub.number_of_edges() == 0:
            continue
        width = len(next(iter(comp)))
        covered = set()
        for _, _, d in sub.edges(data=True):
            covered |= d["marks"]
        if covered >= set(range(width)):
            return True
    return False


def oracle_dclic_verdicts(m: LockDpnModel, formulas, dclics, **bounds):
    """Per spawned initial configuration: does an instance started there have a satisfying run?"""
    return {c: explicit_buchi_oracle(m, formulas, c, **bounds) for c in dclics}


def sorted_configs(configs):
    return sorted(configs, key=lambda g: [config_key(c) for c in g])
