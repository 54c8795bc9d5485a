"""Small directed-graph helpers shared by the automata code."""

from functools import lru_cache


def sccs(nodes, succ):
    """Tarjan's algorithm, iterative. Returns a list of components (lists).

    ``succ`` maps a node to an iterable of successors; nodes reachable through
    ``succ`` but missing from ``nodes`` are visited as well.
    """
    index = {}
    low = {}
    on_stack = set()
    stack = []
    out = []
    counter = 0
    for root in nodes:
        if root in index:
            continue
        work = [(root, iter(succ(root)))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(succ(w))))
                    advanced = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                out.append(comp)
    return out


@lru_cache(maxsize=65536)
def is_acyclic(edges):
    """True iff the edge set (a frozenset of pairs) has no directed cycle."""
    succ = {}
    for a, b in edges:
        if a == b:
            return False
        succ.setdefault(a, []).append(b)
    color = {}
    for start in succ:
        if start in color:
            continue
        color[start] = 1
        work = [(start, iter(succ.get(start, ())))]
        while work:
            v, it = work[-1]
            for w in it:
                c = color.get(w)
                if c == 1:
                    return False
                if c is None:
                    color[w] = 1
                    work.append((w, iter(succ.get(w, ()))))
                    break
            else:
                color[v] = 2
                work.pop()
    return True
