"""Acceptance gate: criteria 1 to 9, each at its stated tolerance.

Every test records a one-line PASS/FAIL verdict that is printed in the
terminal summary.
"""

from __future__ import annotations

import logging
import random
import time
from contextlib import contextmanager

import pytest

import oracles
from conftest import ACCEPTANCE
from ldpnmc import corpus
from ldpnmc.acq import (
    AcquisitionStructure,
    acq_update,
    compatible,
    count_consistent,
    enumerate_all,
    is_consistent,
    merge,
    rel_update,
)
from ldpnmc.check import CheckRequest, check_ldpn
from ldpnmc.dpn import DpnChecker, annotate_regular, make_labeler, theorem_membership
from ldpnmc.errors import BoundExceeded
from ldpnmc.ltl import ba_accepts_lasso, build_buchi
from ldpnmc.model import TAU, LocalConfiguration, Rule, acq, dclics_of, load_formulas
from ldpnmc.reduce import original_control, reduce_ldpn
from ldpnmc.runs import acq_structure_of_tree, check_nested, explicit_buchi_oracle


@contextmanager
def criterion(number, title, limit=None):
    start = time.perf_counter()
    detail = {}
    try:
        yield detail
        elapsed = time.perf_counter() - start
        if limit is not None:
            assert elapsed < limit, f"took {elapsed:.1f}s, limit {limit}s"
    except BaseException as exc:
        elapsed = time.perf_counter() - start
        ACCEPTANCE[number] = f"criterion {number} FAIL  {title} ({elapsed:.2f}s): {exc}"
        raise
    extra = ", ".join(f"{k}={v}" for k, v in detail.items())
    ACCEPTANCE[number] = f"criterion {number} PASS  {title} ({elapsed:.2f}s{', ' + extra if extra else ''})"


L2 = ("l1", "l2")
L3 = ("l1", "l2", "l3")


def test_1_fig1_fixtures():
    with criterion(1, "lock-usage example fixtures", limit=1.0):
        t, tp = corpus.fig1_T(), corpus.fig1_Tprime()
        whole = acq_structure_of_tree(t, frozenset())
        assert whole == AcquisitionStructure.of(U={"l2", "l3"}, AH={("l1", "l2"), ("l1", "l3")}, A={"l1"})
        n6 = t.find("n6", 0, {"l1", "l2"})
        sub = acq_structure_of_tree(t, frozenset({"l1", "l2"}), root=n6)
        assert sub == AcquisitionStructure.of(R={"l2"}, RH={("l3", "l2")}, U={"l2", "l3"}, X={"l1", "l2"})
        assert check_nested(t) is True
        assert check_nested(tp) is False


def _rule2_agrees(s1, s2, lock):
    m = merge(s1, s2)
    return oracles.rule2_rel(s1, s2, lock) == rel_update(m, lock) and oracles.rule2_acq(s1, s2, lock) == acq_update(m, lock)


def _closure_ok(s, lock):
    r = rel_update(s, lock)
    if r is not None and not is_consistent(r):
        return False
    a = acq_update(s, lock)
    # the first acquisition case never breaks consistency; the second may
    if a is not None and lock in s.R and lock in s.X and not is_consistent(a):
        return False
    return a is None or is_consistent(a) == oracles.consistent(a)


def test_2_structure_algebra():
    with criterion(2, "acquisition-structure algebra", limit=60.0) as d:
        structures = enumerate_all(L2)
        violations = 0
        pairs = 0
        for i, a in enumerate(structures):
            for b in structures[i:]:
                pairs += 1
                violations += compatible(a, b) != compatible(b, a)
        for s in structures:
            for lock in L2:
                violations += not _closure_ok(s, lock)
        spawnable = [s for s in structures if not s.R and not s.X]
        decompositions = 0
        for s1 in structures:
            for s2 in spawnable:
                if compatible(s1, s2):
                    for lock in L2:
                        decompositions += 1
                        violations += not _rule2_agrees(s1, s2, lock)
        rng = random.Random(2)
        for _ in range(10_000):
            a, b = oracles.random_consistent(rng, L3), oracles.random_consistent(rng, L3)
            lock = rng.choice(L3)
            violations += compatible(a, b) != compatible(b, a)
            violations += not _closure_ok(a, lock)
            b2 = AcquisitionStructure(frozenset(), b.RH, b.U, b.AH, b.A, frozenset())
            if oracles.consistent(b2) and compatible(a, b2):
                violations += not _rule2_agrees(a, b2, lock)
        d.update(pairs=pairs, decompositions=decompositions, violations=violations)
        assert violations == 0


def test_3_enumeration_counts():
    with criterion(3, "enumeration counts") as d:
        counts = {}
        for n in range(3):
            locks = L3[:n]
            ours = enumerate_all(locks)
            brute = oracles.brute_force_structures(locks)
            assert len(set(ours)) == len(ours)
            assert set(ours) == set(brute)
            counts[n] = len(ours)
        assert counts[0] == 1
        d.update(counts=counts)


def test_4_size_bounds():
    with criterion(4, "reduction size bounds") as d:
        checked = []
        for name in corpus.names():
            m = corpus.load(name)
            as_count = count_consistent(len(m.locks))
            lazy = reduce_ldpn(m)
            assert lazy.within_bounds(as_count), name
            checked.append(name)
            if len(m.locks) <= 2:
                full = reduce_ldpn(m, materialize=True)
                assert full.within_bounds(as_count), name
                assert all(len(r.controls) == len(s.controls) * as_count for r, s in zip(full.model.pds, m.pds))
        d.update(models=len(checked))


def test_5_lock_free_oracle():
    with criterion(5, "lock-free single system versus explicit oracle", limit=300.0) as d:
        rng = random.Random(5)
        agree = total = sat = 0
        while total < 250:
            m = oracles.random_single_pds(rng)
            f = oracles.random_formula(rng, ["a", "b"], 3)
            try:
                expected = explicit_buchi_oracle(m, [f], m.initial, stack_bound=6)
            except BoundExceeded:
                continue
            total += 1
            sat += expected
            agree += check_ldpn(CheckRequest(m, [f])).verdict == expected
        d.update(instances=total, sat=sat, agree=agree)
        assert agree == total


def test_6_spawn_fixpoint():
    with criterion(6, "spawn fixpoint versus per-configuration oracle") as d:
        rng = random.Random(6)
        logging.disable(logging.WARNING)
        try:
            instances = dclic_checks = ma_checks = 0
            mismatches = 0
            while instances < 60:
                m = oracles.random_spawning_dpn(rng)
                fs = [oracles.random_formula(rng, ["a", "b"], 2) for _ in m.pds]
                D = dclics_of(m)
                if not D or len(D) > 3:
                    continue
                try:
                    expected = {c: explicit_buchi_oracle(m, fs, c) for c in D}
                except BoundExceeded:
                    continue
                instances += 1
                checker = DpnChecker(m, fs)
                dfp = checker.dfp()
                for c in D:
                    dclic_checks += 1
                    mismatches += (c in dfp) != expected[c]
                for i, p in enumerate(m.pds):
                    ma = checker.result_ma(i)
                    for control in sorted(p.controls):
                        for g in sorted(p.stack):
                            for stack in ((g,), (g, g)):
                                c = LocalConfiguration(control, stack)
                                ma_checks += 1
                                mismatches += checker.check(c) != theorem_membership(ma, c, dfp)
        finally:
            logging.disable(logging.NOTSET)
        d.update(instances=instances, dclics=dclic_checks, ma_queries=ma_checks, mismatches=mismatches)
        assert mismatches == 0


def test_7_locks_end_to_end():
    with criterion(7, "lock corpus end to end", limit=120.0) as d:
        expected = {"deadlock": False, "alternation": True, "nonnested": False}
        got = {}
        for name, want in expected.items():
            m = corpus.load(name)
            fs = corpus.formulas(name)
            ours = check_ldpn(CheckRequest(m, fs)).verdict
            oracle = explicit_buchi_oracle(m, fs, m.initial)
            got[name] = "SAT" if ours else "UNSAT"
            assert ours == oracle == want, name
        d.update(**got)


def test_8_ltl_to_buchi():
    with criterion(8, "LTL to Buchi versus lasso semantics") as d:
        rng = random.Random(8)
        props = frozenset({"p", "q"})
        agree = total = 0
        while total < 500:
            f = oracles.random_formula(rng, sorted(props), 4)
            if oracles.count_operators(f) > 4:
                continue
            stem, loop = oracles.random_lasso(rng, sorted(props), 6)
            total += 1
            agree += ba_accepts_lasso(build_buchi(f, props), stem, loop) == oracles.lasso_holds(f, stem, loop)
        d.update(pairs=total, agree=agree)
        assert agree == total


def _direct_verdict(m, fs):
    if m.valuation is not None and m.valuation.kind == "regular":
        ann = annotate_regular(m, starts=[m.initial])
        return DpnChecker(ann.model, fs, labeler=make_labeler(ann.valuation)).check(ann.config(m.initial))
    return DpnChecker(m, fs).check(m.initial)


def _isomorphic(reduced, m):
    """Controls ``p -> (p, empty)`` is a bijection that maps the rules onto each other."""
    for r, s in zip(reduced.model.pds, m.pds):
        if sorted(map(original_control, r.controls)) != sorted(s.controls) or len(r.controls) != len(s.controls):
            return False
        mapped = set()
        for rule in r.rules:
            spawn = None if rule.spawn is None else (original_control(rule.spawn[0]), rule.spawn[1])
            mapped.add(Rule(original_control(rule.source), rule.symbol, TAU, original_control(rule.target), rule.push, spawn))
        if mapped != set(s.rules) or len(r.rules) != len(s.rules):
            return False
    return True


def test_9_lock_free_degeneration():
    with criterion(9, "lock-free degeneration") as d:
        verdicts = {}
        for name in corpus.names():
            m = oracles.erase_locks(corpus.load(name))
            assert m.lock_free and not m.locks
            assert _isomorphic(reduce_ldpn(m, materialize=True), m), name
            for variant in corpus.ENTRIES[name][1]:
                fs = load_formulas(corpus._read(variant + ".ltl"), m)
                ours = check_ldpn(CheckRequest(m, fs)).verdict
                assert ours == _direct_verdict(m, fs), variant
                verdicts[variant] = "SAT" if ours else "UNSAT"
        d.update(variants=len(verdicts))


def test_deadlock_corpus_is_as_described():
    """Guards criterion 7: the deadlock pair really takes the locks in opposite order."""
    m = corpus.load("deadlock")
    a = [r.action for r in m.pds[0].rules if r.action.kind != "tau"]
    b = [r.action for r in m.pds[1].rules if r.action.kind != "tau"]
    assert acq("l1") in a and acq("l2") in a and acq("l2") in b and acq("l1") in b
    assert a.index(acq("l1")) < a.index(acq("l2")) and b.index(acq("l2")) < b.index(acq("l1"))


@pytest.mark.parametrize("n", [0, 1, 2])
def test_count_formula_matches_enumeration(n):
    assert count_consistent(n) == len(enumerate_all(L3[:n]))

