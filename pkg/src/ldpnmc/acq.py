"""Acquisition structures ``(R, RH, U, AH, A, X)`` and their algebra.

``R``  locks with an initial release (released without a matching acquisition)
``RH`` release graph: ``(l, l')`` when a usage of ``l`` precedes the initial release of ``l'``
``U``  locks used by matched acquire/release pairs
``AH`` acquisition graph: ``(l, l')`` when a usage of ``l'`` follows the final acquisition of ``l``
``A``  locks with a final acquisition (never released afterwards)
``X``  locks held at the root

The update functions run backwards: given the structure ``as'`` of the
continuation after a step, they compute the structure of the subtree rooted at
the step's source. ``None`` means the step is impossible under ``as'``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

from ldpnmc._graph import is_acyclic
from ldpnmc.errors import ResourceLimit

_EMPTY = frozenset()


@dataclass(frozen=True)
class AcquisitionStructure:
    R: frozenset = _EMPTY
    RH: frozenset = _EMPTY
    U: frozenset = _EMPTY
    AH: frozenset = _EMPTY
    A: frozenset = _EMPTY
    X: frozenset = _EMPTY

    @classmethod
    def of(cls, R=(), RH=(), U=(), AH=(), A=(), X=()):
        return cls(*(frozenset(v) for v in (R, RH, U, AH, A, X)))

    def __post_init__(self):
        object.__setattr__(self, "_hash", hash((self.R, self.RH, self.U, self.AH, self.A, self.X)))

    def __hash__(self):
        return self._hash

    def locks(self):
        out = set(self.R | self.U | self.A | self.X)
        for a, b in self.RH | self.AH:
            out.update((a, b))
        return frozenset(out)

    def __str__(self):
        return render(self)


EMPTY = AcquisitionStructure()


def _fmt_set(s):
    return "{" + ",".join(sorted(s)) + "}"


def _fmt_edges(s):
    return "{" + ",".join(f"({a},{b})" for a, b in sorted(s)) + "}"


def render(s: AcquisitionStructure) -> str:
    """Canonical one-line rendering with sorted components."""
    return (
        f"R={_fmt_set(s.R)} RH={_fmt_edges(s.RH)} U={_fmt_set(s.U)} "
        f"AH={_fmt_edges(s.AH)} A={_fmt_set(s.A)} X={_fmt_set(s.X)}"
    )


def is_consistent(s: AcquisitionStructure) -> bool:
    return is_acyclic(s.RH) and is_acyclic(s.AH) and not ((s.X - s.R) & (s.U | s.A))


def is_tight(s: AcquisitionStructure) -> bool:
    """Shape constraints every structure read off an actual run satisfies.

    Initial releases release held locks (``R ⊆ X``), release-graph edges go
    from used to initially released locks and acquisition-graph edges from
    finally acquired to used locks. The set of tight structures is closed
    under ``merge``, ``rel_update`` and ``acq_update``.
    """
    return (
        s.R <= s.X
        and all(a in s.U and b in s.R for a, b in s.RH)
        and all(a in s.A and b in s.U for a, b in s.AH)
    )


def compatible(s1: AcquisitionStructure, s2: AcquisitionStructure) -> bool:
    """Can subtrees with these structures be siblings under one node?"""
    if not (is_consistent(s1) and is_consistent(s2)):
        raise ValueError("compatible() needs consistent structures")
    return _compatible(s1, s2)


def _compatible(s1, s2):
    kept1 = s1.X - s1.R
    kept2 = s2.X - s2.R
    return (
        not (s1.X & s2.X)
        and not ((s1.A | kept1) & (s2.A | kept2))
        and is_acyclic(s1.RH | s2.RH)
        and is_acyclic(s1.AH | s2.AH)
        and not ((s1.A | s1.U) & kept2)
        and not ((s2.A | s2.U) & kept1)
    )


def merge(s1: AcquisitionStructure, s2: AcquisitionStructure) -> AcquisitionStructure:
    """Structure of a node whose continuation has ``s1`` and whose spawned child has ``s2``."""
    if s2.R or s2.X:
        raise ValueError("a spawned instance starts without locks: R'' and X'' must be empty")
    if not _compatible(s1, s2):
        raise ValueError("merge() needs compatible structures")
    return AcquisitionStructure(
        s1.R | s2.R, s1.RH | s2.RH, s1.U | s2.U, s1.AH | s2.AH, s1.A | s2.A, s1.X | s2.X
    )


def rel_update(s: AcquisitionStructure, lock) -> AcquisitionStructure | None:
    if lock in s.X or lock in s.R:
        return None
    return AcquisitionStructure(s.R | {lock}, s.RH, s.U, s.AH, s.A, s.X | {lock})


def acq_update(s: AcquisitionStructure, lock) -> AcquisitionStructure | None:
    if lock in s.R and lock in s.X:
        rest = s.R - {lock}
        rh = frozenset(e for e in s.RH if e[1] != lock) | {(lock, r) for r in rest}
        return AcquisitionStructure(rest, rh, s.U | {lock}, s.AH, s.A, s.X - {lock})
    if lock not in s.A and lock in s.X:
        ah = s.AH | {(lock, u) for u in s.U}
        return AcquisitionStructure(s.R, s.RH, s.U, ah, s.A | {lock}, s.X - {lock})
    return None


def update(s: AcquisitionStructure, action) -> AcquisitionStructure | None:
    """Apply the backward transformer for a rule action (``tau`` is the identity)."""
    if action.kind == "tau":
        return s
    if action.kind == "rel":
        return rel_update(s, action.lock)
    return acq_update(s, action.lock)


# -- preimages (used to build the reduction forwards) --------------------------


def _subsets(items):
    items = sorted(items)
    for k in range(len(items) + 1):
        yield from (frozenset(c) for c in itertools.combinations(items, k))


def rel_preimages(s: AcquisitionStructure, lock):
    """All ``s'`` with ``rel_update(s', lock) == s``."""
    if lock in s.R and lock in s.X:
        yield AcquisitionStructure(s.R - {lock}, s.RH, s.U, s.AH, s.A, s.X - {lock})


def acq_preimages(s: AcquisitionStructure, lock, locks):
    """All ``s'`` with ``acq_update(s', lock) == s``; ``locks`` is the lock universe."""
    if lock in s.X:
        return
    # first case: the acquisition closes an initial release of the continuation
    if lock in s.U and lock not in s.R and {(lock, r) for r in s.R} <= s.RH and all(
        b != lock for _, b in s.RH
    ):
        optional = frozenset((lock, r) for r in s.R)
        into = [(a, lock) for a in sorted(locks)]
        for u in dict.fromkeys([s.U, s.U - {lock}]):
            for dropped in _subsets(optional):
                for added in _subsets(into):
                    yield AcquisitionStructure(
                        s.R | {lock}, (s.RH - dropped) | added, u, s.AH, s.A, s.X | {lock}
                    )
    # second case: a final acquisition
    outgoing = frozenset((lock, u) for u in s.U)
    if lock in s.A and lock not in s.R and outgoing <= s.AH:
        for kept in _subsets(outgoing):
            yield AcquisitionStructure(
                s.R, s.RH, s.U, (s.AH - outgoing) | kept, s.A - {lock}, s.X | {lock}
            )


def preimages(s: AcquisitionStructure, action, locks):
    if action.kind == "tau":
        return [s]
    if action.kind == "rel":
        return list(rel_preimages(s, action.lock))
    return list(acq_preimages(s, action.lock, locks))


def _splits(items):
    """Assign every item to the left, the right, or both sides."""
    items = sorted(items)
    for choice in itertools.product((1, 2, 3), repeat=len(items)):
        left = frozenset(x for x, c in zip(items, choice) if c & 1)
        right = frozenset(x for x, c in zip(items, choice) if c & 2)
        yield left, right


def merge_splits(s: AcquisitionStructure, tight=False):
    """All pairs ``(s', s'')`` with ``R''=X''=∅`` whose component-wise union is ``s``.

    Consistency and compatibility are not checked here. With ``tight`` the
    search is pruned to pairs that can be tight and compatible: release-graph
    edges stay on the left, final acquisitions are not shared and each
    acquisition-graph edge goes only to sides holding both endpoints. Callers
    still filter the results.
    """
    for u1, u2 in _splits(s.U):
        for a1, a2 in _splits(s.A):
            if tight:
                if a1 & a2:
                    continue
                rh_choices = [(s.RH, _EMPTY)]
                ah_choices = _ah_splits(s.AH, a1, u1, a2, u2)
            else:
                rh_choices = list(_splits(s.RH))
                ah_choices = _splits(s.AH)
            for ah1, ah2 in ah_choices:
                for rh1, rh2 in rh_choices:
                    yield (
                        AcquisitionStructure(s.R, rh1, u1, ah1, a1, s.X),
                        AcquisitionStructure(_EMPTY, rh2, u2, ah2, a2, _EMPTY),
                    )


def _ah_splits(edges, a1, u1, a2, u2):
    edges = sorted(edges)
    options = []
    for a, b in edges:
        opts = [c for c, (aa, uu) in ((1, (a1, u1)), (2, (a2, u2))) if a in aa and b in uu]
        if len(opts) == 2:
            opts.append(3)
        if not opts:
            return []
        options.append(opts)
    out = []
    for choice in itertools.product(*options):
        left = frozenset(e for e, c in zip(edges, choice) if c & 1)
        right = frozenset(e for e, c in zip(edges, choice) if c & 2)
        out.append((left, right))
    return out


# -- enumeration ---------------------------------------------------------------


def _acyclic_graphs(locks):
    pairs = [(a, b) for a in locks for b in locks if a != b]
    return [g for g in _subsets(pairs) if is_acyclic(g)]


def enumerate_all(locks, max_locks=2):
    """Every consistent acquisition structure over ``locks`` exactly once."""
    locks = sorted(locks)
    if len(locks) > max_locks:
        raise ResourceLimit(
            f"refusing to enumerate acquisition structures over {len(locks)} locks (limit {max_locks})"
        )
    return list(_enumerate(tuple(locks)))


@lru_cache(maxsize=8)
def _enumerate(locks):
    graphs = _acyclic_graphs(locks)
    # per lock: membership in (R, U, A, X) such that X\R never meets U or A
    per_lock = [
        bits for bits in itertools.product((0, 1), repeat=4) if not (bits[3] and not bits[0] and (bits[1] or bits[2]))
    ]
    out = []
    for combo in itertools.product(per_lock, repeat=len(locks)):
        sets = [frozenset(l for l, b in zip(locks, combo) if b[k]) for k in range(4)]
        R, U, A, X = sets
        for rh in graphs:
            for ah in graphs:
                out.append(AcquisitionStructure(R, rh, U, ah, A, X))
    return tuple(out)


def tight_structures(locks, X=_EMPTY):
    """Every consistent tight structure over ``locks`` whose held set is ``X``."""
    locks = sorted(locks)
    X = frozenset(X)
    out = []
    for R in _subsets(X):
        free = [l for l in locks if l not in X - R]
        for U in _subsets(free):
            for A in _subsets(free):
                rhs = [g for g in _subsets((u, r) for u in U for r in R if u != r) if is_acyclic(g)]
                ahs = [g for g in _subsets((a, u) for a in A for u in U if a != u) if is_acyclic(g)]
                for rh in rhs:
                    for ah in ahs:
                        out.append(AcquisitionStructure(R, rh, U, ah, A, X))
    return out


_DAG_COUNTS = {0: 1, 1: 1, 2: 3, 3: 25, 4: 543, 5: 29281, 6: 3781503}


def count_consistent(n_locks: int) -> int:
    """``|AS|`` for ``n_locks`` locks: 13 admissible (R,U,A,X) memberships per
    lock times the number of labelled DAGs, squared (one for RH, one for AH)."""
    return 13**n_locks * _DAG_COUNTS[n_locks] ** 2
