import logging

import pytest

from ldpnmc import corpus
from ldpnmc.acq import EMPTY, is_consistent
from ldpnmc.errors import BoundExceeded
from ldpnmc.ltl import parse_ltl
from ldpnmc.model import (
    TAU,
    GlobalConfiguration,
    LocalConfiguration,
    LockDpnModel,
    Pds,
    Rule,
    SimpleValuation,
    acq,
    rel,
)
from ldpnmc.runs import (
    GlobalRunTree,
    acq_structure_of_tree,
    check_nested,
    enabled_steps,
    explicit_buchi_oracle,
    explore_bounded,
    sorted_configs,
)


def _model(rules, controls=("p", "p2"), locks=("l",), extra=()):
    pds = [Pds("P", frozenset(controls), frozenset({"g"}), tuple(rules))] + list(extra)
    return LockDpnModel(frozenset(locks), tuple(pds))


def C(control, locks=(), stack=("g",)):
    return LocalConfiguration(control, tuple(stack), frozenset(locks))


def test_acquire_free_lock_is_enabled():
    m = _model([Rule("p", "g", acq("l"), "p2", ("g",))])
    assert len(enabled_steps(GlobalConfiguration([C("p")]), m)) == 1


def test_acquire_held_lock_is_disabled():
    q = Pds("Q", frozenset({"q"}), frozenset({"g"}), ())
    m = _model([Rule("p", "g", acq("l"), "p2", ("g",))], extra=[q])
    assert enabled_steps(GlobalConfiguration([C("p"), C("q", {"l"})]), m) == []


def test_release_needs_ownership():
    m = _model([Rule("p", "g", rel("l"), "p2", ("g",))])
    assert enabled_steps(GlobalConfiguration([C("p")]), m) == []
    assert len(enabled_steps(GlobalConfiguration([C("p", {"l"})]), m)) == 1


def test_explore_depth_zero():
    m = corpus.load("alternation")
    ex = explore_bounded(m, m.initial, 0)
    assert list(ex.configurations) == [GlobalConfiguration([m.initial])]


def test_explore_self_loop():
    m = _model([Rule("p", "g", TAU, "p", ("g",))])
    ex = explore_bounded(m, C("p"), 3)
    assert len(ex) == 1 and len(ex.frontier) == 1


def test_deadlock_state_is_reachable():
    m = corpus.load("deadlock")
    ex = explore_bounded(m, m.initial, 4)
    stuck = [g for g in ex.stuck if any(c.locks == {"l1"} for c in g) and any(c.locks == {"l2"} for c in g)]
    assert len(stuck) == 1
    assert enabled_steps(stuck[0], m) == []


def test_explore_rejects_negative_depth():
    with pytest.raises(ValueError):
        explore_bounded(corpus.load("alternation"), corpus.load("alternation").initial, -1)


def test_expand_validates():
    m = _model([Rule("p", "g", rel("l"), "p2", ("g",)), Rule("p2", "g", TAU, "p2", ())])
    t = GlobalRunTree.start(m, C("p"))
    with pytest.raises(ValueError, match="not enabled"):
        t.expand(0, m.pds[0].rules[0])
    with pytest.raises(ValueError, match="does not match"):
        t.expand(0, m.pds[0].rules[1])


def test_root_only_tree():
    t = GlobalRunTree.start(corpus.load("fig1"), C("n1"))
    assert acq_structure_of_tree(t, frozenset()) == EMPTY
    assert check_nested(t)


def test_lock_free_tree_is_nested():
    m = _model([Rule("p", "g", TAU, "p", ("g",))], locks=())
    t = GlobalRunTree.start(m, C("p"))
    t.expand(0, m.pds[0].rules[0])
    assert check_nested(t)


def test_fig1_fixtures():
    assert check_nested(corpus.fig1_T())
    assert not check_nested(corpus.fig1_Tprime())


def test_out_of_order_release_is_not_nested():
    rules = [
        Rule("p", "g", acq("l"), "p2", ("g",)),
        Rule("p2", "g", acq("m"), "p3", ("g",)),
        Rule("p3", "g", rel("l"), "p", ("g",)),
    ]
    m = _model(rules, controls=("p", "p2", "p3"), locks=("l", "m"))
    t = GlobalRunTree.start(m, C("p"))
    for r in rules[:2]:
        t.expand(len(t.nodes) - 1, r)
    assert check_nested(t)
    t.expand(len(t.nodes) - 1, rules[2])
    assert not check_nested(t)


# -- properties over the corpus ---------------------------------------------------------


@pytest.mark.parametrize("name", corpus.names())
def test_replay_reproduces_witnesses(name):
    m = corpus.load(name)
    ex = explore_bounded(m, m.initial, 6)
    for g, t in ex.configurations.items():
        again = GlobalRunTree.replay(m, m.initial, t.trace)
        assert again.nodes == t.nodes and again.configuration() == g


@pytest.mark.parametrize("name", corpus.names())
def test_nested_witnesses_have_consistent_structures(name):
    m = corpus.load(name)
    ex = explore_bounded(m, m.initial, 8)
    for t in list(ex.configurations.values()) + ex.frontier:
        # every prefix is a valid configuration: constructing it checks lock ownership
        for k in range(len(t.trace) + 1):
            GlobalRunTree.replay(m, m.initial, t.trace[:k]).configuration()
        if check_nested(t):
            for i, node in enumerate(t.nodes):
                assert is_consistent(acq_structure_of_tree(t, node.config.locks, root=i))


def test_sorted_configs_is_deterministic():
    m = corpus.load("server-mutex")
    ex = explore_bounded(m, m.initial, 4)
    assert sorted_configs(ex.configurations) == sorted_configs(reversed(list(ex.configurations)))


# -- explicit oracle ----------------------------------------------------------------------


def _loop(formula):
    m = LockDpnModel(
        frozenset(),
        (Pds("P", frozenset({"p"}), frozenset({"a"}), (Rule("p", "a", TAU, "p", ("a",)),)),),
        frozenset({"at_p"}),
        SimpleValuation({"at_p": frozenset({("p", frozenset())})}),
        LocalConfiguration("p", ("a",)),
    )
    return explicit_buchi_oracle(m, [parse_ltl(formula)])


def test_oracle_single_loop():
    assert _loop("G at_p") is True
    assert _loop("F !at_p") is False


def test_oracle_alternation():
    m = corpus.load("alternation")
    assert explicit_buchi_oracle(m, corpus.formulas("alternation")) is True


def test_oracle_monotone_in_bounds():
    for name in ("alternation", "deadlock", "nonnested", "server-regular"):
        m = corpus.load(name)
        fs = corpus.formulas(name)
        small = explicit_buchi_oracle(m, fs)
        assert explicit_buchi_oracle(m, fs, stack_bound=12, instance_bound=6) == small


def test_oracle_bound_exceeded_on_unbounded_spawning():
    m = corpus.load("server")
    with pytest.raises(BoundExceeded):
        explicit_buchi_oracle(m, corpus.formulas("server"))


def test_oracle_warns_about_never_instantiated_systems(caplog):
    m = corpus.load("alternation")
    fs = corpus.formulas("alternation")
    start = LocalConfiguration("b0", ("y",))
    with caplog.at_level(logging.WARNING):
        explicit_buchi_oracle(m, fs, start)
    assert any("A" in r.getMessage() for r in caplog.records)


def test_oracle_can_ignore_nesting():
    m = corpus.load("nonnested")
    fs = corpus.formulas("nonnested")
    assert explicit_buchi_oracle(m, fs) is False
    assert explicit_buchi_oracle(m, fs, nested=False) is True
