"""Command-line interface: ``ldpnmc <subcommand> ...``.

Exit codes: 0 success, 1 UNSAT with ``--fail-on-unsat``, 2 usage or
validation error, 3 resource limit.
"""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from pathlib import Path

from ldpnmc import corpus
from ldpnmc.acq import render
from ldpnmc.check import CheckRequest, check_ldpn
from ldpnmc.dot import to_dot
from ldpnmc.dpn import DpnChecker, as_buchi
from ldpnmc.errors import BoundExceeded, LtlSyntaxError, ModelError, ResourceLimit
from ldpnmc.model import LocalConfiguration, load_formulas, load_model, model_to_dict
from ldpnmc.reduce import control_name, lift_valuation, reduce_ldpn, structure_id, with_valuation
from ldpnmc.runs import check_nested, explicit_buchi_oracle, explore_bounded

EXIT_OK, EXIT_UNSAT, EXIT_USAGE, EXIT_LIMIT = 0, 1, 2, 3

log = logging.getLogger("ldpnmc")


def _read(path: str) -> str:
    if path.startswith("corpus:"):
        name = path.split(":", 1)[1]
        if name.endswith(".ltl"):
            return corpus._read(name)
        if name not in corpus.ENTRIES:
            raise ModelError(f"no bundled example {name!r}; try 'examples --list'")
        return corpus.model_path(name).read_text()
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelError(f"cannot read {path}: {exc.strerror}") from exc


def _formulas_path(args):
    if args.formulas:
        return args.formulas
    if args.model.startswith("corpus:"):
        name = args.model.split(":", 1)[1]
        return "corpus:" + corpus.ENTRIES[name][1][0] + ".ltl"
    raise ModelError("--formulas is required")


def _start(args, m):
    if args.start is None:
        return None
    c = LocalConfiguration(args.start, tuple(args.stack or ()), frozenset(args.locks or ()))
    if c.control not in m.owner:
        raise ModelError(f"unknown start control {c.control!r}")
    return c


def _emit(args, doc, text):
    if getattr(args, "json", False):
        print(json.dumps(doc, indent=2, sort_keys=True))
    else:
        print(text)


# -- subcommands ----------------------------------------------------------------------


def cmd_validate(args):
    m = load_model(_read(args.model))
    parts = [f"{len(m.pds)} pushdown system(s)", f"{len(m.locks)} lock(s)", f"{len(m.rules)} rule(s)"]
    if args.formulas:
        fs = load_formulas(_read(args.formulas), m)
        parts.append(f"{len(fs)} formula(s)")
    _emit(args, {"valid": True, "pds": [p.name for p in m.pds], "locks": sorted(m.locks)}, "valid: " + ", ".join(parts))
    return EXIT_OK


def cmd_reduce(args):
    m = load_model(_read(args.model))
    reduced = reduce_ldpn(m, materialize=args.materialize, start=_start(args, m), infinite=args.infinite)
    lifted = lift_valuation(m.valuation, reduced)
    doc = model_to_dict(with_valuation(reduced, lifted).model, name=control_name)
    table = {}
    for p in reduced.model.pds:
        for c in p.controls:
            table[structure_id(c.structure)] = render(c.structure)
    side = {"structures": dict(sorted(table.items())), "roots": sorted(control_name(c) for c in reduced.roots)}
    side["discarded"] = dict(sorted(reduced.discarded.items()))
    text = json.dumps(doc, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    table_path = args.table or (args.out + ".table.json" if args.out else None)
    if table_path:
        Path(table_path).write_text(json.dumps(side, indent=2) + "\n", encoding="utf-8")
    sizes = ", ".join(f"{p.name}: {len(p.controls)} controls / {len(p.rules)} rules" for p in reduced.model.pds)
    print(f"reduced: {sizes}", file=sys.stderr)
    return EXIT_OK


def cmd_check(args):
    m = load_model(_read(args.model))
    fs = load_formulas(_read(_formulas_path(args)), m)
    req = CheckRequest(
        m,
        fs,
        start=_start(args, m),
        valuation_kind=args.valuation,
        nested=not args.no_nested,
        max_controls=args.max_controls,
        max_symbols=args.max_symbols,
    )
    report = check_ldpn(req)
    _emit(args, report.to_json(timings=args.timings), report.text())
    if args.fail_on_unsat and not report.verdict:
        return EXIT_UNSAT
    return EXIT_OK


def cmd_oracle(args):
    m = load_model(_read(args.model))
    start = _start(args, m) or m.initial
    if start is None:
        raise ModelError("no start configuration: pass --start or declare 'initial'")
    ex = explore_bounded(m, start, args.depth, max_configs=args.max_states)
    trees = list(ex.configurations.values())
    nested = sum(1 for t in trees if check_nested(t))
    doc = {
        "depth": args.depth,
        "configurations": len(ex),
        "stuck": len(ex.stuck),
        "witnesses_nested": nested,
        "witnesses_not_nested": len(trees) - nested,
    }
    lines = [
        f"configurations reachable in <= {args.depth} steps: {len(ex)}",
        f"configurations without enabled steps: {len(ex.stuck)}",
        f"witness runs using locks in nested style: {nested} of {len(trees)}",
    ]
    if args.formulas:
        fs = load_formulas(_read(args.formulas), m)
        verdict = explicit_buchi_oracle(
            m, fs, start, stack_bound=args.stack_bound, instance_bound=args.instance_bound, max_states=args.max_states
        )
        doc["verdict"] = "SAT" if verdict else "UNSAT"
        lines.append(f"explicit verdict: {doc['verdict']}")
    _emit(args, doc, "\n".join(lines))
    return EXIT_OK


def cmd_export_dot(args):
    if args.kind == "tree" and args.fixture:
        obj = getattr(corpus, args.fixture)()
    else:
        if not args.model:
            raise ModelError("a model is required")
        m = load_model(_read(args.model))
        if args.kind == "model":
            obj = m
        elif args.kind == "reduced":
            obj = reduce_ldpn(m, start=_start(args, m))
        elif args.kind == "tree":
            start = _start(args, m) or m.initial
            ex = explore_bounded(m, start, args.depth)
            obj = max(ex.configurations.values(), key=lambda t: len(t.trace))
        else:
            fs = load_formulas(_read(_formulas_path(args)), m)
            i = m.by_name(args.pds) if args.pds else 0
            if args.kind == "buchi":
                obj = as_buchi(fs[i])
            else:
                if not m.lock_free:
                    raise ModelError("result multi-automata are exported for lock-free models; run 'reduce' first")
                obj = DpnChecker(m, fs).result_ma(i)
    text = to_dot(obj)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_examples(args):
    if args.list or not args.name:
        rows = list(corpus.listing())
        doc = [{"name": n, "model": mf, "formulas": fs, "about": about} for n, mf, fs, about in rows]
        lines = [f"{n:15} {mf:26} {' '.join(fs)}\n{'':15} {about}" for n, mf, fs, about in rows]
        _emit(args, doc, "\n".join(lines))
        return EXIT_OK
    if args.name not in corpus.ENTRIES:
        raise ModelError(f"no bundled example {args.name!r}")
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    model, variants, _ = corpus.ENTRIES[args.name]
    for fname in [model + ".ldpn.json"] + [v + ".ltl" for v in variants]:
        with corpus.resources.as_file(corpus.resources.files(corpus.__name__).joinpath(fname)) as src:
            shutil.copyfile(src, out / fname)
        print(out / fname)
    return EXIT_OK


# -- parser ---------------------------------------------------------------------------


def _start_flags(p):
    p.add_argument("--start", help="start control (default: the model's initial configuration)")
    p.add_argument("--stack", nargs="*", help="start stack, top first")
    p.add_argument("--locks", nargs="*", help="locks held at the start")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ldpnmc", description="LTL model checking for pushdown networks with locks")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse and validate a model (and formula file)")
    p.add_argument("model")
    p.add_argument("--formulas")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("reduce", help="emit the annotated lock-free network as a model file")
    p.add_argument("model")
    p.add_argument("-o", "--out")
    p.add_argument("--table", help="sidecar file mapping structure hashes to structures")
    p.add_argument("--materialize", action="store_true", help="attach every structure to every control")
    p.add_argument("--infinite", action="store_true", help="also track locks pending for infinite runs")
    _start_flags(p)
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("check", help="decide whether a satisfying run exists")
    p.add_argument("model")
    p.add_argument("--formulas", help="formula file, one '<pds>: <ltl>' line per system")
    p.add_argument("--valuation", choices=["simple", "regular"])
    p.add_argument("--no-nested", action="store_true", help="do not enforce nested lock usage")
    p.add_argument("--max-controls", type=int, default=200_000)
    p.add_argument("--max-symbols", type=int, default=50_000)
    p.add_argument("--json", action="store_true")
    p.add_argument("--timings", action="store_true", help="include timings in --json output")
    p.add_argument("--fail-on-unsat", action="store_true")
    _start_flags(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("oracle", help="explicit exploration and, with formulas, a brute-force verdict")
    p.add_argument("model")
    p.add_argument("--formulas")
    p.add_argument("--depth", type=int, default=6)
    p.add_argument("--stack-bound", type=int, default=8)
    p.add_argument("--instance-bound", type=int, default=4)
    p.add_argument("--max-states", type=int, default=200_000)
    p.add_argument("--json", action="store_true")
    _start_flags(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("export-dot", help="render a model, automaton or run tree as DOT")
    p.add_argument("model", nargs="?")
    p.add_argument("--kind", choices=["model", "reduced", "buchi", "ma", "tree"], default="model")
    p.add_argument("--formulas")
    p.add_argument("--pds", help="pushdown system for buchi / ma (default: the first)")
    p.add_argument("--depth", type=int, default=6, help="exploration depth for --kind tree")
    p.add_argument("--fixture", choices=["fig1_T", "fig1_Tprime"], help="bundled run tree for --kind tree")
    p.add_argument("-o", "--out")
    _start_flags(p)
    p.set_defaults(func=cmd_export_dot)

    p = sub.add_parser("examples", help="list or copy the bundled examples")
    p.add_argument("name", nargs="?")
    p.add_argument("--list", action="store_true")
    p.add_argument("-o", "--out", help="directory to copy the example into")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_examples)
    return parser


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (ModelError, LtlSyntaxError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BoundExceeded as exc:
        print(f"bound exceeded: {exc}", file=sys.stderr)
        return EXIT_LIMIT
    except ResourceLimit as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return EXIT_LIMIT


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
