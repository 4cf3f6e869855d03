"""Command-line entry point: ``scclab <command> ...``.

Exit status is 0 when everything checked out, 1 when a counterexample
(or a failed demo) was found, and 2 for usage or input errors.
"""

from __future__ import annotations

import argparse
import sys

from .compiler import FLAGS, NO_LOCAL_OPT, CompileError, NameIndex, compile_program
from .gen import GenConfig

EXIT_OK, EXIT_COUNTEREXAMPLE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _read(path: str) -> str:
    try:
        if path == "-":
            return sys.stdin.read()
        with open(path) as fh:
            return fh.read()
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror}") from None


def _write(path: str | None, text: str):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _program(path):
    from .syntax import parse_program

    return parse_program(_read(path))


def _shape(path):
    from .syntax import parse_shape

    return parse_shape(_read(path))


def _image(path):
    from .machine import parse_image

    return parse_image(_read(path))


# --------------------------------------------------------------------------
# commands


def cmd_parse(args) -> int:
    from .lang import check_program_wf
    from .syntax import format_program, format_shape, parse_shape

    text = _read(args.file)
    if text.lstrip().startswith("shape"):
        _write(None, format_shape(parse_shape(text)))
        return EXIT_OK
    P = _program(args.file)
    _write(None, format_program(P))
    if args.check:
        bad = check_program_wf(P)
        for v in bad:
            print(f"# not well formed: {v}", file=sys.stderr)
        return EXIT_COUNTEREXAMPLE if bad else EXIT_OK
    return EXIT_OK


def cmd_run_source(args) -> int:
    from .interp import Terminated, UndefinedBehavior, run

    res = run(_program(args.file), args.fuel)
    if isinstance(res, Terminated):
        print("TERMINATED" + ("" if res.value is None else f" {res.value}") + f"  # {res.steps} steps")
    elif isinstance(res, UndefinedBehavior):
        print(f"UB {res.blamed}  # {res.steps} steps")
    else:
        print(f"FUEL  # {res.steps} steps")
    return EXIT_OK


def _flags(args) -> set:
    flags = set()
    for item in args.insecure or []:
        for f in item.split(","):
            if f and f not in FLAGS:
                raise UsageError(f"unknown protection {f!r}; choose from {', '.join(sorted(FLAGS))}")
            if f:
                flags.add(f)
    if args.no_local_opt:
        flags.add(NO_LOCAL_OPT)
    return flags


def cmd_compile(args) -> int:
    from .machine import format_image

    P = _program(args.file)
    index = NameIndex.from_shape(_shape(args.shape)) if args.shape else NameIndex.from_program(P)
    _write(args.output, format_image(compile_program(P, index, _flags(args))))
    return EXIT_OK


def cmd_run_machine(args) -> int:
    from .isa import REG_NAMES
    from .machine import STUCK, STUCK_REASONS, Runner

    r = Runner(_image(args.file))
    status, reason, _ = r.run(args.fuel)
    if status == STUCK:
        regs = " ".join(f"{n}={v}" for n, v in zip(REG_NAMES, r.reg))
        print(f"HALTED {r.steps + 1} {STUCK_REASONS[reason]}  {regs}")
    else:
        print(f"FUEL {r.steps}")
    return EXIT_OK


def cmd_disasm(args) -> int:
    from .machine import disassemble

    _write(None, disassemble(_image(args.file)))
    return EXIT_OK


def cmd_trace(args) -> int:
    from .traces import decompose, decompose_fine, format_fine, format_trace, ishape

    s = ishape(_shape(args.shape))
    a, p = _image(args.attacker), _image(args.program)
    if args.fine:
        fine, res = decompose_fine(a, p, s, args.fuel)
        text = format_fine(fine)
    else:
        t, res = decompose(a, p, s, args.fuel)
        text = format_trace(t)
    _write(args.output, text + f"# {res}\n")
    return EXIT_OK


def cmd_backtranslate(args) -> int:
    from .backtranslate import BacktransInput, backtranslate
    from .syntax import format_program
    from .traces import canonicalize_fine, parse_action, parse_fine

    s = _shape(args.shape)
    fine = canonicalize_fine(parse_fine(_read(args.file)))
    out = backtranslate(BacktransInput(fine, parse_action(args.gamma1), s))
    _write(args.output, format_program(out.context))
    return EXIT_OK


def _cfg(args) -> GenConfig:
    kw = dict(seed=args.seed, trials=args.trials, fuel_source=args.fuel_source,
              max_components=args.max_components, max_expr_depth=args.max_expr_depth)
    if args.fuel_target is not None:
        kw["fuel_target"] = args.fuel_target
    try:
        return GenConfig(**kw)
    except ValueError as e:
        raise UsageError(str(e)) from None


def cmd_scc_game(args) -> int:
    from .game import Distinguished, GameFailure, UnknownFuel, scc_game
    from .syntax import format_program

    s = _shape(args.shape)
    P, Q, a = _program(args.p), _program(args.q), _image(args.attacker)
    try:
        out = scc_game(P, Q, a, s, _cfg(args), definedness_trials=args.definedness_trials)
    except GameFailure as e:
        print(f"GAME FAILURE: {e}")
        return EXIT_COUNTEREXAMPLE
    if isinstance(out, Distinguished):
        print(f"DISTINGUISHED  # A[P] -> {out.runs[0]}, A[Q] -> {out.runs[1]}")
        _write(args.output, format_program(out.context))
    elif isinstance(out, UnknownFuel):
        print(f"UNKNOWN-FUEL  # {out.reason}")
    else:
        print(f"NOT-DISTINGUISHED  # {out.results[0]} / {out.results[1]}")
    return EXIT_OK


def cmd_check(args) -> int:
    from .properties import PROPERTY_NAMES, Options, run_case, run_property

    names = PROPERTY_NAMES if args.property == "all" else (args.property,)
    for n in names:
        if n not in PROPERTY_NAMES:
            raise UsageError(f"unknown property {n!r}; choose from all, {', '.join(PROPERTY_NAMES)}")
    cfg = _cfg(args)
    opts = Options(definedness_trials=args.definedness_trials)
    if args.replay is not None:
        case, v = run_case(names[0], args.replay, cfg, opts)
        print(f"{names[0]} seed={args.replay} {v.status}" + (f" ({v.note})" if v.note else ""))
        if case is not None and args.verbose:
            print(case.describe())
        return EXIT_COUNTEREXAMPLE if v.status == "fail" else EXIT_OK
    status = EXIT_OK
    for n in names:
        rep = run_property(n, cfg, opts, log=print if args.verbose else None)
        print(rep.summary())
        for seed, case, note in rep.failures:
            print(f"  counterexample seed={seed}: {note}")
            print("    " + case.describe().replace("\n", "\n    "))
            status = EXIT_COUNTEREXAMPLE
    return status


def cmd_demo(args) -> int:
    from .attacks import attack_demos

    reports = attack_demos()
    for r in reports:
        print(r.format())
    return EXIT_OK if all(r.passed for r in reports) else EXIT_COUNTEREXAMPLE


# --------------------------------------------------------------------------
# argument parsing


def _gen_opts(p):
    d = GenConfig()
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--trials", type=int, default=d.trials)
    p.add_argument("--fuel-source", type=int, default=d.fuel_source)
    p.add_argument("--fuel-target", type=int, default=None, help="default: calibrated from --fuel-source")
    p.add_argument("--max-components", type=int, default=d.max_components)
    p.add_argument("--max-expr-depth", type=int, default=d.max_expr_depth)
    p.add_argument("--definedness-trials", type=int, default=20)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="scclab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="parse and pretty-print a program or shape")
    p.add_argument("file")
    p.add_argument("--check", action="store_true", help="also report well-formedness violations")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("run-source", help="run a whole program with the source interpreter")
    p.add_argument("file")
    p.add_argument("--fuel", type=int, default=GenConfig().fuel_source)
    p.set_defaults(func=cmd_run_source)

    p = sub.add_parser("compile", help="compile a (partial) program to a machine image")
    p.add_argument("file")
    p.add_argument("-o", "--output")
    p.add_argument("--shape", help="number components by this shape (needed for partial programs)")
    p.add_argument("--insecure", action="append", metavar="FLAG[,FLAG]",
                   help=f"switch off protections: {', '.join(sorted(FLAGS - {NO_LOCAL_OPT}))}")
    p.add_argument("--no-local-opt", action="store_true", help="compile local calls as cross-compartment calls")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("run-machine", help="run a machine image")
    p.add_argument("file")
    p.add_argument("--fuel", type=int, default=GenConfig().target_fuel)
    p.set_defaults(func=cmd_run_machine)

    p = sub.add_parser("disasm", help="disassemble a machine image")
    p.add_argument("file")
    p.set_defaults(func=cmd_disasm)

    p = sub.add_parser("trace", help="record the trace of an attacker image linked with a program image")
    p.add_argument("attacker")
    p.add_argument("program")
    p.add_argument("--shape", required=True)
    p.add_argument("--fuel", type=int, default=GenConfig().target_fuel)
    p.add_argument("--fine", action="store_true", help="include same-side cross-compartment events")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("backtranslate", help="build a source context from a fine trace")
    p.add_argument("file")
    p.add_argument("--gamma1", required=True, help="the program move to accept, e.g. '! RET com=3'")
    p.add_argument("--shape", required=True)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_backtranslate)

    p = sub.add_parser("scc-game", help="turn a low-level distinguisher into a source one")
    p.add_argument("p")
    p.add_argument("q")
    p.add_argument("attacker")
    p.add_argument("--shape", required=True)
    p.add_argument("-o", "--output", help="where to write the source distinguisher")
    _gen_opts(p)
    p.set_defaults(func=cmd_scc_game)

    p = sub.add_parser("check", help="run a property of the suite (or 'all')")
    p.add_argument("property")
    p.add_argument("--replay", type=int, help="rerun the single case with this case seed")
    p.add_argument("-v", "--verbose", action="store_true")
    _gen_opts(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("demo", help="run fixed demonstrations")
    p.add_argument("which", choices=["attacks"])
    p.set_defaults(func=cmd_demo)
    return ap


def main(argv=None) -> int:
    from .backtranslate import BacktranslateError
    from .interp import InterpError
    from .isa import ResourceLimit
    from .lang import LangError
    from .machine import MachineError
    from .syntax import ParseError
    from .traces import TraceError

    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ParseError, LangError, MachineError, TraceError, CompileError,
            BacktranslateError, InterpError, ResourceLimit) as e:
        print(f"scclab: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
