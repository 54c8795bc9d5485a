import json
import logging
import random

import pytest

import oracles
from ldpnmc import corpus
from ldpnmc.check import SEMANTICS, CheckRequest, check_ldpn, check_ldpn_regular
from ldpnmc.dpn import DpnChecker
from ldpnmc.errors import BoundExceeded, ModelError, ResourceLimit
from ldpnmc.ltl import parse_ltl
from ldpnmc.model import LocalConfiguration
from ldpnmc.runs import explicit_buchi_oracle


def _check(name, **kw):
    return check_ldpn(CheckRequest(corpus.load(name), corpus.formulas(name), **kw))


def test_deadlock_and_alternation():
    assert not _check("deadlock").verdict
    assert _check("alternation").verdict


def test_non_nested_usage_is_excluded_unless_asked():
    assert not _check("nonnested").verdict
    assert _check("nonnested", nested=False).verdict


def test_report_json_is_deterministic():
    a = _check("server").to_json()
    b = _check("server").to_json()
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
    assert a["semantics"] == SEMANTICS and a["verdict"] in ("SAT", "UNSAT")
    assert {"stats", "discarded", "dfp", "vacuous"} <= set(a)
    assert "timings" not in a and "timings" in _check("server").to_json(timings=True)


def test_report_text_mentions_the_verdict():
    r = _check("alternation")
    assert r.text().startswith("SAT") and "reading" in r.text()


def test_lock_free_model_goes_straight_through():
    m = oracles.erase_locks(corpus.load("alternation"))
    fs = corpus.formulas("alternation")
    r = check_ldpn(CheckRequest(m, fs))
    assert r.verdict == DpnChecker(m, fs).check(m.initial)
    assert r.stats["locks"] == 0 and r.stats["as_universe"] == 1
    assert r.stats["reduced_controls"] == r.stats["source_controls"]


@pytest.mark.parametrize("variant", ["server-regular", "server-regular-starve"])
def test_regular_valuation(variant):
    m = corpus.load("server-regular")
    fs = corpus.formulas("server-regular", variant)
    r = check_ldpn_regular(CheckRequest(m, fs))
    assert r.verdict == check_ldpn(CheckRequest(m, fs, valuation_kind="regular")).verdict


def test_regular_entry_point_refuses_simple_models():
    with pytest.raises(ModelError):
        check_ldpn_regular(CheckRequest(corpus.load("server"), corpus.formulas("server")))


def test_resource_caps():
    with pytest.raises(ResourceLimit):
        _check("fig1", max_controls=20)
    with pytest.raises(ResourceLimit):
        _check("server-regular", max_symbols=2)


def test_vacuous_formula_is_reported():
    m = corpus.load("alternation")
    start = LocalConfiguration("b0", ("y",))
    r = check_ldpn(CheckRequest(m, corpus.formulas("alternation"), start=start))
    assert r.vacuous == ["A"]


@pytest.mark.parametrize(
    "kwargs, message",
    [
        ({"formulas": [parse_ltl("true")]}, "expected 2 formulas"),
        ({"formulas": [parse_ltl("zz"), parse_ltl("true")]}, "undeclared proposition"),
        ({"start": LocalConfiguration("ghost", ("x",))}, "belongs to no"),
        ({"start": LocalConfiguration("a0", ("x",), frozenset({"zz"}))}, "undeclared locks"),
        ({"valuation_kind": "regular"}, "requested a regular"),
    ],
)
def test_request_validation(kwargs, message):
    m = corpus.load("alternation")
    args = {"formulas": corpus.formulas("alternation")} | kwargs
    with pytest.raises(ModelError, match=message):
        CheckRequest(m, **args)


def test_missing_start_is_rejected():
    m = corpus.load("alternation")
    m = type(m)(m.locks, m.pds, m.props, m.valuation)
    with pytest.raises(ModelError, match="no start"):
        CheckRequest(m, corpus.formulas("alternation"))


def test_all_corpus_variants_run():
    for name in corpus.names():
        m = corpus.load(name)
        for variant in corpus.ENTRIES[name][1]:
            fs = corpus.formulas(name, variant)
            assert check_ldpn(CheckRequest(m, fs)).label in ("SAT", "UNSAT")


def test_random_lock_pairs_agree_with_the_explicit_oracle():
    rng = random.Random(77)
    logging.disable(logging.WARNING)
    try:
        done = 0
        while done < 40:
            m = oracles.random_lock_pair(rng, rng.choice([1, 2]))
            fs = [oracles.random_formula(rng, ["pa", "pb"], 1) for _ in m.pds]
            try:
                want = explicit_buchi_oracle(m, fs, stack_bound=2, instance_bound=2, max_states=20_000)
            except (BoundExceeded, ResourceLimit):
                continue
            done += 1
            assert check_ldpn(CheckRequest(m, fs)).verdict == want, [str(f) for f in fs]
    finally:
        logging.disable(logging.NOTSET)
