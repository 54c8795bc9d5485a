import pytest

from ldpnmc import corpus
from ldpnmc.acq import EMPTY, compatible, enumerate_all, is_consistent, merge, update
from ldpnmc.errors import ResourceLimit
from ldpnmc.model import (
    TAU,
    LocalConfiguration,
    LockDpnModel,
    Pds,
    Rule,
    SimpleValuation,
    acq,
    rel,
    valuation_holds,
)
from ldpnmc.reduce import (
    AControl,
    control_name,
    enforce_nesting,
    lift_valuation,
    original_control,
    project_config,
    reduce_ldpn,
)

S = EMPTY.of
LOCKS = frozenset({"l1", "l2"})


def _one_rule(action, spawn=None):
    controls = {"p", "p2"} | ({spawn} if spawn else set())
    r = Rule("p", "g", action, "p2", ("g",), (spawn, ("g",)) if spawn else None)
    pds = (Pds("P", frozenset(controls), frozenset({"g"}), (r,)),)
    return LockDpnModel(LOCKS, pds, initial=LocalConfiguration("p", ("g",))), r


@pytest.mark.parametrize("action", [acq("l1"), rel("l2"), TAU])
def test_materialized_rules_follow_the_update_table(action):
    m, r = _one_rule(action)
    reduced = reduce_ldpn(m, materialize=True)
    want = set()
    for s1 in enumerate_all(LOCKS):
        s = update(s1, action)
        if s is not None and is_consistent(s):
            want.add(Rule(AControl("p", s), "g", TAU, AControl("p2", s1), ("g",)))
    assert set(reduced.model.pds[0].rules) == want
    assert all(reduced.origin[nr][0] == r for nr in want)


def test_materialized_spawn_rules_follow_the_merge_table():
    m, _ = _one_rule(acq("l1"), spawn="q")
    reduced = reduce_ldpn(m, materialize=True)
    structures = enumerate_all(LOCKS)
    want = set()
    for s1 in structures:
        for s2 in structures:
            if s2.R or s2.X or not compatible(s1, s2):
                continue
            s = update(merge(s1, s2), acq("l1"))
            if s is not None and is_consistent(s):
                want.add(Rule(AControl("p", s), "g", TAU, AControl("p2", s1), ("g",), (AControl("q", s2), ("g",))))
    assert set(reduced.model.pds[0].rules) == want


@pytest.mark.parametrize("name", ["alternation", "deadlock", "nonnested"])
def test_loose_lazy_reduction_is_a_fragment_of_the_materialized_one(name):
    m = corpus.load(name)
    full = reduce_ldpn(m, materialize=True)
    lazy = reduce_ldpn(m, tight=False)
    for f, z in zip(full.model.pds, lazy.model.pds):
        assert z.controls <= f.controls
        # every reached control keeps exactly its outgoing rules
        assert {r for r in f.rules if r.source in z.controls} == set(z.rules)


@pytest.mark.parametrize("name", corpus.names())
def test_reduced_rules_project_onto_source_rules(name):
    m = corpus.load(name)
    reduced = reduce_ldpn(m, infinite=True)
    source = {r for p in m.pds for r in p.rules}
    assert reduced.model.lock_free
    for p in reduced.model.pds:
        for nr in p.rules:
            r, s, s1, s2 = reduced.origin[nr]
            assert r in source and nr.action == TAU
            assert (original_control(nr.source), nr.symbol, original_control(nr.target), nr.push) == (
                r.source,
                r.symbol,
                r.target,
                r.push,
            )
            assert update(s1 if s2 is None else merge(s1, s2), r.action) == s
            assert nr.source.structure == s and nr.target.structure == s1


def test_lock_free_model_gets_the_empty_structure_only():
    m, _ = _one_rule(TAU)
    m = LockDpnModel(frozenset(), m.pds, initial=m.initial)
    reduced = reduce_ldpn(m, materialize=True)
    assert {c.structure for c in reduced.controls(0)} == {EMPTY}


def test_roots_carry_the_held_locks():
    m = corpus.load("deadlock")
    start = LocalConfiguration(m.initial.control, m.initial.stack, frozenset({"l1"}))
    reduced = reduce_ldpn(m, start=start)
    assert reduced.roots and all(c.structure.X == {"l1"} for c in reduced.roots)


def test_lazy_needs_a_start():
    m, _ = _one_rule(TAU)
    m = LockDpnModel(m.locks, m.pds)
    with pytest.raises(ValueError):
        reduce_ldpn(m)


def test_control_cap():
    with pytest.raises(ResourceLimit):
        reduce_ldpn(corpus.load("fig1"), max_controls=50)


def test_project_config():
    s = S(R={"l1"}, X={"l1", "l2"})
    c = LocalConfiguration(AControl("p", s), ("g", "h"))
    assert project_config(c) == LocalConfiguration("p", ("g", "h"), frozenset({"l1", "l2"}))


def test_lift_simple_valuation():
    v = SimpleValuation({"ap": frozenset({("p", frozenset({"l1"}))})})
    m, _ = _one_rule(acq("l1"))
    lifted = lift_valuation(v, reduce_ldpn(m, materialize=True))
    for s in enumerate_all(LOCKS):
        c = LocalConfiguration(AControl("p", s), ("g",))
        assert valuation_holds(lifted, "ap", c) == (s.X == {"l1"})
    assert lift_valuation(None, None) is None


def test_lifted_valuation_agrees_with_projection_on_the_corpus():
    for name in ("alternation", "server", "server-regular"):
        m = corpus.load(name)
        reduced = reduce_ldpn(m)
        lifted = lift_valuation(m.valuation, reduced)
        for p in reduced.model.pds:
            for c in p.controls:
                for g in sorted(p.stack):
                    lc = LocalConfiguration(c, (g,))
                    for ap in sorted(m.props):
                        assert valuation_holds(lifted, ap, lc) == valuation_holds(m.valuation, ap, project_config(lc))


# -- nesting monitor --------------------------------------------------------------------


def test_monitor_drops_out_of_order_release():
    m = corpus.load("nonnested")
    mon = enforce_nesting(m)
    kept = {(original_control(r.source), r.action) for r in mon.pds[0].rules}
    assert (m.initial.control, TAU) in kept
    assert all(a != rel("l1") for _, a in kept)


def test_monitor_keeps_nested_models_intact():
    m = corpus.load("alternation")
    mon = enforce_nesting(m)
    for p, q in zip(mon.pds, m.pds):
        mapped = {
            (original_control(r.source), r.symbol, r.action, original_control(r.target), r.push) for r in p.rules
        }
        assert mapped == {(r.source, r.symbol, r.action, r.target, r.push) for r in q.rules}


def test_monitor_translates_the_valuation():
    m = corpus.load("alternation")
    mon = enforce_nesting(m)
    for p in mon.pds:
        for c in p.controls:
            for ap in sorted(m.props):
                for locks in (frozenset(), frozenset({"l"})):
                    lc = LocalConfiguration(c, ("x",), locks)
                    plain = LocalConfiguration(c[0], ("x",), locks)
                    assert valuation_holds(mon.valuation, ap, lc) == valuation_holds(m.valuation, ap, plain)


# -- naming -----------------------------------------------------------------------------


def test_control_names_are_injective_and_stable():
    reduced = reduce_ldpn(corpus.load("deadlock"), infinite=True)
    controls = [c for p in reduced.model.pds for c in p.controls]
    names = [control_name(c) for c in controls]
    assert len(set(names)) == len(names)
    again = reduce_ldpn(corpus.load("deadlock"), infinite=True)
    assert sorted(names) == sorted(control_name(c) for p in again.model.pds for c in p.controls)


def test_control_name_examples():
    assert control_name("p") == "p"
    assert control_name(("p", (("l1", "l2"), frozenset({"l3"})))) == "p[l1.l2|l3]"
    assert control_name(AControl("p", EMPTY, frozenset({"b", "a"}))).endswith("!a.b")
