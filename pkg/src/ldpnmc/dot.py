"""Graphviz DOT rendering of automata, models and run trees."""

from __future__ import annotations

from ldpnmc.ltl import BuchiAutomaton
from ldpnmc.model import LockDpnModel, MultiAutomaton
from ldpnmc.reduce import ReducedDpn, control_name
from ldpnmc.runs import GlobalRunTree


def _name(x) -> str:
    return x if isinstance(x, str) else control_name(x)


def _q(x) -> str:
    s = _name(x)
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _letter(letter) -> str:
    return "{" + ",".join(sorted(letter)) + "}"


def _buchi(b: BuchiAutomaton):
    lines = ["  __init [shape=point];"]
    for g in sorted(b.states, key=_name):
        shape = "doublecircle" if g in b.accepting else "circle"
        lines.append(f"  {_q(g)} [shape={shape}];")
    lines.append(f"  __init -> {_q(b.initial)};")
    for g, letter, h in sorted(b.transitions, key=lambda t: (_name(t[0]), sorted(t[1]), _name(t[2]))):
        lines.append(f"  {_q(g)} -> {_q(h)} [label={_q(_letter(letter))}];")
    return lines


def _ma(a: MultiAutomaton):
    lines = []
    for q in sorted(a.states, key=_name):
        shape = "doublecircle" if q in a.accepting else "circle"
        lines.append(f"  {_q(q)} [shape={shape}];")
    for k, ((c, locks), q) in enumerate(sorted(a.initials.items(), key=lambda kv: (_name(kv[0][0]), sorted(kv[0][1])))):
        lines.append(f"  __i{k} [shape=plaintext,label={_q(_q(c)[1:-1] + ' ' + _letter(locks))}];")
        lines.append(f"  __i{k} -> {_q(q)};")
    for q, g, d, r in sorted(a.transitions, key=lambda t: (_name(t[0]), _name(t[1]), _name(t[2]), _name(t[3]))):
        label = _name(g) if not d else f"{_name(g)} / {len(d)} spawn(s)"
        lines.append(f"  {_q(q)} -> {_q(r)} [label={_q(label)}];")
    return lines


def _model(m: LockDpnModel):
    lines = []
    for i, p in enumerate(m.pds):
        lines.append(f"  subgraph cluster_{i} {{")
        lines.append(f"    label={_q(p.name)};")
        for c in sorted(p.controls, key=_name):
            lines.append(f"    {_q(c)};")
        lines.append("  }")
    for p in m.pds:
        for r in sorted(p.rules, key=lambda r: (_name(r.source), _name(r.symbol), _name(r.target), _name(r.push))):
            push = " ".join(map(_name, r.push)) or "ε"
            lines.append(f"  {_q(r.source)} -> {_q(r.target)} [label={_q(f'{_name(r.symbol)} / {r.action} / {push}')}];")
            if r.spawn is not None:
                lines.append(f"  {_q(r.source)} -> {_q(r.spawn[0])} [style=dashed,label=\"spawn\"];")
    return lines


def _tree(t: GlobalRunTree):
    lines = []
    for i, n in enumerate(t.nodes):
        lines.append(f"  n{i} [label={_q(str(n.config))}];")
    for i, n in enumerate(t.nodes):
        if n.right is not None:
            lines.append(f"  n{i} -> n{n.right} [label={_q(str(n.rule.action))}];")
        if n.left is not None:
            lines.append(f"  n{i} -> n{n.left} [style=dashed];")
    return lines


def to_dot(obj, name="G") -> str:
    """DOT source for a Büchi automaton, multi-automaton, model or run tree."""
    if isinstance(obj, BuchiAutomaton):
        body = ["  rankdir=LR;"] + _buchi(obj)
    elif isinstance(obj, MultiAutomaton):
        body = ["  rankdir=LR;"] + _ma(obj)
    elif isinstance(obj, ReducedDpn):
        body = _model(obj.model)
    elif isinstance(obj, LockDpnModel):
        body = _model(obj)
    elif isinstance(obj, GlobalRunTree):
        body = _tree(obj)
    else:
        raise TypeError(f"cannot render {type(obj).__name__} as DOT")
    return "\n".join([f"digraph {name} {{"] + body + ["}"]) + "\n"


def export_dot(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(to_dot(obj))
