"""End-to-end checking of single-indexed LTL properties on lock-using networks.

The verdict answers: is there a global run from the start configuration that
uses locks in nested style and in which every local run is infinite and
satisfies the formula of its pushdown system? It is not a statement about all
runs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

from ldpnmc.acq import count_consistent
from ldpnmc.dpn import DpnChecker, annotate_regular, make_labeler
from ldpnmc.errors import ModelError
from ldpnmc.ltl import And, Atom, always, atoms, eventually
from ldpnmc.model import LocalConfiguration, LockDpnModel, dclics_of
from ldpnmc.reduce import (
    control_name,
    enforce_nesting,
    lift_valuation,
    reduce_ldpn,
    with_valuation,
)

SETTLED = "$settled"  # cannot clash with parsed proposition names

SEMANTICS = (
    "exists a global run from the start configuration, using locks in nested style, "
    "in which every local run is infinite and satisfies the formula of its system"
)


@dataclass
class CheckRequest:
    model: LockDpnModel
    formulas: list  # one formula per pushdown system, in model order
    start: Optional[LocalConfiguration] = None  # defaults to the model's initial configuration
    valuation_kind: Optional[str] = None  # "simple" or "regular"; taken from the model if omitted
    nested: bool = True  # restrict to nested lock usage
    max_symbols: int = 50_000
    max_controls: int = 200_000

    def __post_init__(self):
        m = self.model
        if len(self.formulas) != len(m.pds):
            raise ModelError(f"expected {len(m.pds)} formulas, got {len(self.formulas)}")
        for f in self.formulas:
            unknown = atoms(f) - m.props
            if unknown:
                raise ModelError(f"undeclared proposition(s) {sorted(unknown)}")
        if self.start is None:
            self.start = m.initial
        if self.start is None:
            raise ModelError("no start configuration: give one or declare 'initial' in the model")
        if self.start.control not in m.owner:
            raise ModelError(f"start control {self.start.control!r} belongs to no pushdown system")
        if not frozenset(self.start.locks) <= m.locks:
            raise ModelError("start configuration holds undeclared locks")
        actual = m.valuation.kind if m.valuation is not None else "simple"
        if self.valuation_kind is None:
            self.valuation_kind = actual
        elif self.valuation_kind != actual:
            raise ModelError(f"requested a {self.valuation_kind} valuation but the model has a {actual} one")


@dataclass
class CheckReport:
    verdict: bool
    stats: dict = field(default_factory=dict)
    discarded: dict = field(default_factory=dict)
    dfp: list = field(default_factory=list)
    vacuous: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    semantics: str = SEMANTICS

    @property
    def label(self):
        return "SAT" if self.verdict else "UNSAT"

    def to_json(self, timings=False) -> dict:
        doc = {
            "verdict": self.label,
            "semantics": self.semantics,
            "stats": dict(sorted(self.stats.items())),
            "discarded": dict(sorted(self.discarded.items())),
            "dfp": sorted(self.dfp),
            "vacuous": sorted(self.vacuous),
        }
        if timings:
            doc["timings"] = {k: round(v, 6) for k, v in sorted(self.timings.items())}
        return doc

    def text(self) -> str:
        lines = [self.label, f"  reading: {self.semantics}"]
        for k, v in sorted(self.stats.items()):
            lines.append(f"  {k}: {v}")
        if self.discarded:
            lines.append("  discarded: " + ", ".join(f"{k}={v}" for k, v in sorted(self.discarded.items())))
        if self.vacuous:
            lines.append("  vacuous formulas (never instantiated): " + ", ".join(sorted(self.vacuous)))
        return "\n".join(lines)


def _render_dclic(c):
    stack = " ".join(control_name(s[0] if isinstance(s, tuple) else s) for s in c.stack)
    return f"{control_name(c.control)} {stack}"


def _with_settled(labeler):
    def label(p, g):
        letter = labeler(p, g)
        return letter | {SETTLED} if p.settled() else letter

    return label


def check_ldpn(req: CheckRequest) -> CheckReport:
    timings = {}
    clock = time.perf_counter()

    def lap(name):
        nonlocal clock
        now = time.perf_counter()
        timings[name] = now - clock
        clock = now

    m = req.model
    source = m
    start = req.start
    monitored = None
    if req.nested and not m.lock_free:
        m = enforce_nesting(m, start)
        start = m.initial
        monitored = sum(len(p.controls) for p in m.pds)
        lap("nesting")
    reduced = reduce_ldpn(m, start=start, infinite=True, max_controls=req.max_controls)
    lap("reduce")
    lifted = lift_valuation(m.valuation, reduced)
    dpn = with_valuation(reduced, lifted).model
    roots = [LocalConfiguration(c, tuple(start.stack)) for c in reduced.roots]
    formulas = list(req.formulas)
    if not source.lock_free:
        # every promised release must happen and pending locks must be given up
        formulas = [And(f, always(eventually(Atom(SETTLED)))) for f in formulas]
    if req.valuation_kind == "regular":
        ann = annotate_regular(dpn, lifted, starts=roots, max_symbols=req.max_symbols)
        labeler = make_labeler(ann.valuation)
        dpn, queries = ann.model, [ann.config(r) for r in roots]
        lap("annotate")
    else:
        labeler = make_labeler(lifted)
        queries = roots
    if not source.lock_free:
        labeler = _with_settled(labeler)
    checker = DpnChecker(dpn, formulas, labeler=labeler)
    verdict = any(checker.check(q) for q in queries)
    lap("dpn")
    dfp = checker.dfp()
    instantiated = {m.pds_of(start.control)} | {m.pds_of(c.control.control) for c in dclics_of(dpn)}
    stats = {
        "locks": len(source.locks),
        "as_universe": count_consistent(len(source.locks)) if len(source.locks) <= 6 else None,
        "root_structures": len(roots),
        "source_controls": sum(len(p.controls) for p in source.pds),
        "source_rules": sum(len(p.rules) for p in source.pds),
        "reduced_controls": sum(len(p.controls) for p in reduced.model.pds),
        "reduced_rules": sum(len(p.rules) for p in reduced.model.pds),
        "dclics": len(checker.dclics()),
        "dfp_size": len(dfp),
        "fixpoint_rounds": checker.rounds,
    }
    if monitored is not None:
        stats["monitored_controls"] = monitored
    return CheckReport(
        verdict=verdict,
        stats=stats,
        discarded=dict(reduced.discarded),
        dfp=[_render_dclic(c) for c in dfp],
        vacuous=[source.pds[i].name for i in range(len(source.pds)) if i not in instantiated],
        timings=timings,
    )


def check_ldpn_regular(req: CheckRequest) -> CheckReport:
    if req.valuation_kind != "regular":
        raise ModelError("check_ldpn_regular needs a regular valuation")
    return check_ldpn(req)
