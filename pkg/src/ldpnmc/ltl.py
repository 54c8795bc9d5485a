"""LTL formulas, parsing, negation normal form and translation to Büchi automata.

The translation is the usual on-the-fly tableau (Gerth, Peled, Vardi, Wolper)
producing a generalized Büchi automaton, followed by counter-based
degeneralization. Transitions are labelled with explicit letters, i.e. subsets
of the automaton's proposition set.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field

from ldpnmc._graph import sccs
from ldpnmc.errors import LtlSyntaxError


class Formula:
    kind = ""
    args: tuple = ()

    def __and__(self, other):
        return And(self, other)

    def __or__(self, other):
        return Or(self, other)

    def __invert__(self):
        return Not(self)


@dataclass(frozen=True)
class TrueF(Formula):
    kind = "true"

    def __str__(self):
        return "true"


@dataclass(frozen=True)
class FalseF(Formula):
    kind = "false"

    def __str__(self):
        return "false"


@dataclass(frozen=True)
class Atom(Formula):
    name: str
    kind = "atom"

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Not(Formula):
    operand: Formula
    kind = "not"

    @property
    def args(self):
        return (self.operand,)

    def __str__(self):
        return f"!{_wrap(self.operand)}"


@dataclass(frozen=True)
class Next(Formula):
    operand: Formula
    kind = "next"

    @property
    def args(self):
        return (self.operand,)

    def __str__(self):
        return f"X {_wrap(self.operand)}"


@dataclass(frozen=True)
class _Binary(Formula):
    left: Formula
    right: Formula
    symbol = "?"

    @property
    def args(self):
        return (self.left, self.right)

    def __str__(self):
        return f"({self.left} {self.symbol} {self.right})"


@dataclass(frozen=True)
class And(_Binary):
    kind = "and"
    symbol = "&"


@dataclass(frozen=True)
class Or(_Binary):
    kind = "or"
    symbol = "|"


@dataclass(frozen=True)
class Until(_Binary):
    kind = "until"
    symbol = "U"


@dataclass(frozen=True)
class Release(_Binary):
    kind = "release"
    symbol = "R"


TRUE = TrueF()
FALSE = FalseF()


def _wrap(f):
    s = str(f)
    return s if isinstance(f, (Atom, TrueF, FalseF, Not, Next, _Binary)) else f"({s})"


def eventually(f):
    return Until(TRUE, f)


def always(f):
    return Release(FALSE, f)


def atoms(f):
    """Names of the atomic propositions occurring in ``f``."""
    if isinstance(f, Atom):
        return frozenset({f.name})
    out = frozenset()
    for a in f.args:
        out |= atoms(a)
    return out


def size(f):
    return 1 + sum(size(a) for a in f.args)


# -- parsing -----------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(?P<ident>[a-zA-Z_][a-zA-Z0-9_']*)|(?P<op>[!&|()]))")
_KEYWORDS = {"X", "F", "G", "U", "R", "true", "false"}


def _tokenize(text):
    pos = 0
    tokens = []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            start = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise LtlSyntaxError(f"unknown token {text[start]!r}", start)
        value = m.group("ident") or m.group("op")
        tokens.append((value, m.start(m.lastindex)))
        pos = m.end()
    tokens.append(("<end>", len(text)))
    return tokens


class _Parser:
    def __init__(self, text):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i][0]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, what):
        value, pos = self.tokens[self.i]
        found = "end of input" if value == "<end>" else repr(value)
        raise LtlSyntaxError(f"expected {what}, found {found}", pos)

    def parse(self):
        f = self.disjunction()
        if self.peek() != "<end>":
            self.fail("end of input")
        return f

    def disjunction(self):
        f = self.conjunction()
        while self.peek() == "|":
            self.take()
            f = Or(f, self.conjunction())
        return f

    def conjunction(self):
        f = self.binary_temporal()
        while self.peek() == "&":
            self.take()
            f = And(f, self.binary_temporal())
        return f

    def binary_temporal(self):
        f = self.unary()
        if self.peek() == "U":
            self.take()
            return Until(f, self.binary_temporal())
        if self.peek() == "R":
            self.take()
            return Release(f, self.binary_temporal())
        return f

    def unary(self):
        tok = self.peek()
        if tok == "!":
            self.take()
            return Not(self.unary())
        if tok == "X":
            self.take()
            return Next(self.unary())
        if tok == "F":
            self.take()
            return eventually(self.unary())
        if tok == "G":
            self.take()
            return always(self.unary())
        return self.primary()

    def primary(self):
        tok = self.peek()
        if tok == "(":
            self.take()
            f = self.disjunction()
            if self.peek() != ")":
                self.fail("')'")
            self.take()
            return f
        if tok == "true":
            self.take()
            return TRUE
        if tok == "false":
            self.take()
            return FALSE
        if tok not in _KEYWORDS and tok not in {"<end>", "&", "|", ")", "!"}:
            self.take()
            return Atom(tok)
        self.fail("an operand")


def parse_ltl(text: str) -> Formula:
    """Parse the ASCII syntax; ``F f`` becomes ``true U f`` and ``G f`` becomes ``false R f``."""
    return _Parser(text).parse()


# -- negation normal form ----------------------------------------------------


def to_nnf(f: Formula) -> Formula:
    match f:
        case TrueF() | FalseF() | Atom():
            return f
        case Not(operand=g):
            return _negate(g)
        case Next(operand=g):
            return Next(to_nnf(g))
        case And(left=a, right=b):
            return And(to_nnf(a), to_nnf(b))
        case Or(left=a, right=b):
            return Or(to_nnf(a), to_nnf(b))
        case Until(left=a, right=b):
            return Until(to_nnf(a), to_nnf(b))
        case Release(left=a, right=b):
            return Release(to_nnf(a), to_nnf(b))
    raise TypeError(f"not a formula: {f!r}")


def _negate(f):
    match f:
        case TrueF():
            return FALSE
        case FalseF():
            return TRUE
        case Atom():
            return Not(f)
        case Not(operand=g):
            return to_nnf(g)
        case Next(operand=g):
            return Next(_negate(g))
        case And(left=a, right=b):
            return Or(_negate(a), _negate(b))
        case Or(left=a, right=b):
            return And(_negate(a), _negate(b))
        case Until(left=a, right=b):
            return Release(_negate(a), _negate(b))
        case Release(left=a, right=b):
            return Until(_negate(a), _negate(b))
    raise TypeError(f"not a formula: {f!r}")


def is_nnf(f):
    if isinstance(f, Not):
        return isinstance(f.operand, Atom)
    return all(is_nnf(a) for a in f.args)


# -- Büchi automata ----------------------------------------------------------


def all_letters(props):
    props = sorted(props)
    return [
        frozenset(c)
        for k in range(len(props) + 1)
        for c in itertools.combinations(props, k)
    ]


@dataclass(frozen=True)
class BuchiAutomaton:
    """``(G, 2^props, theta, initial, accepting)`` with explicit letters."""

    states: frozenset
    props: frozenset
    transitions: frozenset  # of (g, letter, g')
    initial: int
    accepting: frozenset
    _succ: dict = field(default=None, compare=False, repr=False, hash=False)

    def __post_init__(self):
        if self.initial not in self.states:
            raise ValueError("initial state is not a state")
        if not self.accepting <= self.states:
            raise ValueError("accepting states must be states")
        succ = {}
        for g, letter, h in self.transitions:
            if g not in self.states or h not in self.states:
                raise ValueError(f"transition endpoint outside states: {(g, h)}")
            if not letter <= self.props:
                raise ValueError(f"letter {set(letter)} outside the alphabet")
            succ.setdefault((g, letter), set()).add(h)
        object.__setattr__(self, "_succ", {k: frozenset(v) for k, v in succ.items()})

    def successors(self, g, letter):
        return self._succ.get((g, letter), frozenset())

    def project(self, letter):
        return frozenset(letter) & self.props


@dataclass
class _Node:
    incoming: set
    new: set
    old: set
    next: set


def _literal(f):
    return isinstance(f, (Atom, TrueF, FalseF)) or (
        isinstance(f, Not) and isinstance(f.operand, Atom)
    )


def _gpvw(f):
    """Tableau nodes for an NNF formula: list of (id, incoming, old)."""
    nodes = {}  # (old, next) -> [id, incoming, old]
    counter = itertools.count(1)
    init = 0

    def expand(node):
        stack = [node]
        while stack:
            node = stack.pop()
            if not node.new:
                key = (frozenset(node.old), frozenset(node.next))
                if key in nodes:
                    nodes[key][1] |= node.incoming
                    continue
                nid = next(counter)
                nodes[key] = [nid, set(node.incoming), frozenset(node.old)]
                stack.append(_Node({nid}, set(node.next), set(), set()))
                continue
            eta = min(node.new, key=str)
            node.new.discard(eta)
            if _literal(eta):
                if isinstance(eta, FalseF):
                    continue
                neg = eta.operand if isinstance(eta, Not) else Not(eta)
                if neg in node.old:
                    continue
                node.old.add(eta)
                stack.append(node)
            elif isinstance(eta, And):
                node.new |= {eta.left, eta.right} - node.old
                node.old.add(eta)
                stack.append(node)
            elif isinstance(eta, Next):
                node.next.add(eta.operand)
                node.old.add(eta)
                stack.append(node)
            else:
                if isinstance(eta, Or):
                    new1, next1, new2 = {eta.left}, set(), {eta.right}
                elif isinstance(eta, Until):
                    new1, next1, new2 = {eta.left}, {eta}, {eta.right}
                else:  # Release
                    new1, next1, new2 = {eta.right}, {eta}, {eta.left, eta.right}
                old = node.old | {eta}
                n1 = _Node(set(node.incoming), node.new | (new1 - old), set(old), node.next | next1)
                n2 = _Node(set(node.incoming), node.new | (new2 - old), set(old), set(node.next))
                stack.append(n2)
                stack.append(n1)

    expand(_Node({init}, {f}, set(), set()))
    return init, [tuple(v) for v in nodes.values()]


def _subformulas(f):
    yield f
    for a in f.args:
        yield from _subformulas(a)


def build_buchi(f: Formula, props=None) -> BuchiAutomaton:
    """Büchi automaton accepting exactly the ω-words over ``2^props`` satisfying ``f``.

    ``props`` defaults to the atoms of ``f`` and must contain them.
    """
    props = atoms(f) if props is None else frozenset(props)
    if not atoms(f) <= props:
        raise ValueError(f"formula uses undeclared propositions {sorted(atoms(f) - props)}")
    f = to_nnf(f)
    init, nodes = _gpvw(f)
    untils = sorted({g for g in _subformulas(f) if isinstance(g, Until)}, key=str)
    letters = all_letters(props)

    def fits(old, letter):
        for lit in old:
            if isinstance(lit, Atom) and lit.name not in letter:
                return False
            if isinstance(lit, Not) and lit.operand.name in letter:
                return False
        return True

    gba_edges = {}  # src -> list of (letter, dst)
    for nid, incoming, old in nodes:
        ok = [a for a in letters if fits(old, a)]
        for src in incoming:
            gba_edges.setdefault(src, []).extend((a, nid) for a in ok)
    acc_sets = [
        frozenset(nid for nid, _, old in nodes if u not in old or u.right in old)
        for u in untils
    ] or [frozenset(nid for nid, _, _ in nodes)]
    k = len(acc_sets)

    # degeneralize: state (node, counter); counter advances when node is in the awaited set
    start = (init, 0)
    index = {start: 0}
    work = [start]
    trans = set()
    accepting = set()
    while work:
        node, i = work.pop()
        src = index[(node, i)]
        if node != init and node in acc_sets[i]:
            j = (i + 1) % k
            if i == 0:
                accepting.add(src)
        else:
            j = i
        for letter, dst in gba_edges.get(node, ()):
            key = (dst, j)
            if key not in index:
                index[key] = len(index)
                work.append(key)
            trans.add((src, letter, index[key]))
    if not any(dst == 0 for _, _, dst in trans):
        # the initial state is visited once, so its flag is irrelevant; this lets it merge
        accepting.add(0)
    return _quotient(frozenset(index.values()), props, trans, frozenset(accepting))


def _quotient(states, props, trans, accepting) -> BuchiAutomaton:
    """Merge bisimilar states (same acceptance, same letters into the same blocks).

    States are renumbered in breadth-first order from the initial state ``0``.
    """
    out = {}
    for g, letter, h in trans:
        out.setdefault(g, set()).add((letter, h))
    block = {g: int(g in accepting) for g in states}
    while True:
        sig = {g: (block[g], frozenset((a, block[h]) for a, h in out.get(g, ()))) for g in states}
        ids = {}
        refined = {g: ids.setdefault(sig[g], len(ids)) for g in sorted(states)}
        if len(ids) == len(set(block.values())):
            break
        block = refined
    rep = {}
    for g in sorted(states):
        rep.setdefault(block[g], g)
    edges = {}
    for g, letter, h in trans:
        edges.setdefault(block[g], set()).add((letter, block[h]))
    order = {block[0]: 0}
    queue = [block[0]]
    for b in queue:
        for _, c in sorted(edges.get(b, ()), key=lambda e: (sorted(e[0]), e[1])):
            if c not in order:
                order[c] = len(order)
                queue.append(c)
    return BuchiAutomaton(
        states=frozenset(order.values()),
        props=props,
        transitions=frozenset((order[b], a, order[c]) for b, es in edges.items() if b in order for a, c in es),
        initial=0,
        accepting=frozenset(order[block[g]] for g in accepting if block[g] in order),
    )


def ba_accepts_lasso(b: BuchiAutomaton, stem, loop) -> bool:
    """Does ``b`` accept the ultimately periodic word ``stem · loop^ω``?"""
    stem = [frozenset(a) for a in stem]
    loop = [frozenset(a) for a in loop]
    if not loop:
        raise ValueError("loop must be nonempty")
    word = stem + loop
    for letter in word:
        if not letter <= b.props:
            raise ValueError(f"letter {sorted(letter)} not in the alphabet over {sorted(b.props)}")
    n = len(word)

    def succ(node):
        g, i = node
        nxt = i + 1 if i + 1 < n else len(stem)
        return [(h, nxt) for h in sorted(b.successors(g, word[i]))]

    start = (b.initial, 0)
    for comp in sccs([start], succ):
        members = set(comp)
        nontrivial = len(comp) > 1 or comp[0] in succ(comp[0])
        if nontrivial and any(g in b.accepting for g, _ in members):
            return True
    return False
