"""Bundled example models and formula files."""

from __future__ import annotations

from importlib import resources

from ldpnmc.model import LocalConfiguration, load_formulas, load_model

ENTRIES = {
    "server": ("server", ["server", "server-fg", "server-leave"], "request server: starvation and related worker properties"),
    "server-mutex": ("server-mutex", ["server-mutex"], "two worker kinds competing for one resource"),
    "server-regular": ("server-regular", ["server-regular", "server-regular-starve"], "server with stack-sensitive propositions, one worker"),
    "fig1": ("fig1", ["fig1"], "nested and non-nested lock usage with a spawned lock user"),
    "deadlock": ("deadlock", ["deadlock"], "two instances taking two locks in opposite order"),
    "alternation": ("alternation", ["alternation"], "two instances alternating on one lock"),
    "nonnested": ("nonnested", ["nonnested"], "an instance that can only release locks out of order"),
}


def _read(name):
    return resources.files(__name__).joinpath(name).read_text()


def names():
    return sorted(ENTRIES)


def model_path(name):
    return resources.files(__name__).joinpath(ENTRIES[name][0] + ".ldpn.json")


def formula_path(name, variant=None):
    return resources.files(__name__).joinpath((variant or ENTRIES[name][1][0]) + ".ltl")


def load(name):
    return load_model(_read(ENTRIES[name][0] + ".ldpn.json"))


def formulas(name, variant=None):
    m = load(name)
    return load_formulas(_read((variant or ENTRIES[name][1][0]) + ".ltl"), m)


def listing():
    for name in names():
        model, variants, about = ENTRIES[name]
        yield name, model + ".ldpn.json", [v + ".ltl" for v in variants], about


# -- the two run trees of the lock-usage example ----------------------------------

_T_LOOP = ["n2", "n3", "n4", "n6", "n7", "n8"]
_TPRIME_LOOP = ["n2", "n3", "n4", "n6", "n7", "n8p"]


def _unroll(loop, times):
    from ldpnmc.runs import GlobalRunTree

    m = load("fig1")
    t = GlobalRunTree.start(m, LocalConfiguration("n1", ("g",), frozenset()))
    t.expand(0, m.pds[0].rules_at("n1", "g")[0])
    for _ in range(times):
        for control in loop:
            leaf = next(i for i in t.leaves() if t.nodes[i].config.control == control)
            rules = m.pds[m.owner[control]].rules_at(control, "g")
            if control == "n7":
                target = "n8" if "n8" in loop else "n8p"
                rules = [r for r in rules if r.target == target]
            t.expand(leaf, rules[0])
    return t


def fig1_T(times=2):
    """The nested run: loop n2 -> n6 -> n7 -> n8 -> n2, each spawned instance running right away."""
    return _unroll(_T_LOOP, times)


def fig1_Tprime(times=2):
    """Same shape, but ``l2`` is released before ``l3``."""
    return _unroll(_TPRIME_LOOP, times)
