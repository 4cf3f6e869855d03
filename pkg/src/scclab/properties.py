"""The property suite: seeded generators with three-valued checks and shrinking.

Every property is a generator, which builds a :class:`Case` from a seeded
``random.Random``, and a checker returning a :class:`Verdict`.  A check may
pass, fail, run out of fuel (``unknown``) or find that the generated case
does not meet the property's precondition (``discard``).  Discarded cases
are regenerated from the next attempt seed and never counted.

Each case has its own seed, derived from the run seed, the property name
and the case number, so one failing case can be replayed alone with
:func:`run_case`.
"""

from __future__ import annotations

import random
import zlib
from dataclasses import dataclass, field, replace
from typing import Callable

from . import isa
from .isa import ResourceLimit
from .backtranslate import BacktransInput, backtranslate, verify_definability
from .compiler import NO_LOCAL_OPT, NameIndex, compile_program, compile_whole
from .game import GameFailure, NotDistinguishedLowLevel, UnknownFuel, scc_game
from .gen import (
    GenConfig,
    gen_complete,
    gen_game_shape,
    gen_lowlevel_attacker,
    gen_program_of_shape,
    gen_shape,
    mutate_exposed,
    mutate_image,
    mutate_program,
    split_shape,
)
from .interp import (
    CounterexampleFound,
    InternalStuck,
    Terminated,
    UndefinedBehavior,
    check_fully_defined_bounded,
    classify,
    WfMonitor,
    run,
    run_configs,
)
from .lang import (
    MAIN_COMPONENT,
    MAIN_PROCEDURE,
    Binop,
    Call,
    ComponentDef,
    If,
    Interface,
    IntLit,
    PartialProgram,
    Read,
    Shape,
    Write,
    check_program_wf,
    has_shape_context,
    link,
    subexprs,
)
from .machine import STUCK, Halted, Image, Runner, link_images, mrun
from .traces import (
    CONTEXT,
    PROGRAM,
    TICK,
    ExtAction,
    PreconditionUnmet,
    accepted_prefix,
    canonicalize_fine,
    canonicalize_trace,
    compose_check,
    context_has_trace,
    decompose,
    decompose_fine,
    erase,
    format_fine,
    format_trace,
    ishape,
    parse_fine,
    parse_trace,
    program_has_trace,
)

PASS, FAIL, UNKNOWN, DISCARD = "pass", "fail", "unknown-fuel", "discard"


class UnknownProperty(KeyError):
    pass


@dataclass(frozen=True)
class Verdict:
    status: str
    note: str = ""


def ok(note: str = "") -> Verdict:
    return Verdict(PASS, note)


def fail(note: str) -> Verdict:
    return Verdict(FAIL, note)


def unknown(note: str = "") -> Verdict:
    return Verdict(UNKNOWN, note)


def discard(note: str = "") -> Verdict:
    return Verdict(DISCARD, note)


@dataclass(frozen=True)
class Case:
    """A generated test case.

    ``programs`` maps a role ("W", "A", "P", "Q") to a source program of
    ``shape``; ``extra`` holds everything else (images, traces, cut
    points).  ``complete`` marks single whole-program cases, the only ones
    the component-count shrinker touches.
    """

    shape: Shape | None
    programs: dict
    extra: dict = field(default_factory=dict)
    complete: bool = False

    def describe(self) -> str:
        from .syntax import format_program, format_shape

        parts = []
        if self.shape is not None:
            parts.append(format_shape(self.shape))
        for role, prog in self.programs.items():
            parts.append(f"# {role}\n{format_program(prog)}")
        if "trace" in self.extra:
            parts.append("# trace\n" + format_trace(self.extra["trace"]))
        return "\n".join(parts)


@dataclass
class PropertyReport:
    name: str
    seed: int
    cases_run: int = 0
    passes: int = 0
    failures: list = field(default_factory=list)    # (case seed, shrunk Case, note)
    unknown: int = 0
    discarded: int = 0
    lines: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def summary(self) -> str:
        return (f"{self.name}: seed={self.seed} cases={self.cases_run} pass={self.passes} "
                f"fail={len(self.failures)} unknown={self.unknown} discarded={self.discarded}")


@dataclass(frozen=True)
class Property:
    name: str
    generate: Callable       # (cfg, rng, opts) -> Case
    check: Callable          # (case, cfg, opts) -> Verdict
    shrinkers: tuple = ()
    doc: str = ""


@dataclass(frozen=True)
class Options:
    """Knobs shared by the checks that are not part of ``GenConfig``."""

    definedness_trials: int = 10
    max_attempts: int = 400        # generation attempts per counted case
    isolation_fuel: int = 3000
    shrink_budget: int = 150


REGISTRY: dict[str, Property] = {}


def register(name: str, shrinkers=(), doc: str = ""):
    def wrap(pair):
        gen, check = pair
        REGISTRY[name] = Property(name, gen, check, tuple(shrinkers), doc)
        return pair
    return wrap


def case_seed(seed: int, name: str, i: int, attempt: int = 0) -> int:
    return (seed ^ zlib.crc32(name.encode()) ^ (i << 20) ^ (attempt << 40)) & 0xFFFFFFFFFFFFFFFF


def get_property(name: str) -> Property:
    try:
        return REGISTRY[name]
    except KeyError:
        raise UnknownProperty(f"unknown property {name!r}; known: {', '.join(sorted(REGISTRY))}") from None


def _safe_check(prop: Property, case: Case, cfg: GenConfig, opts: Options) -> Verdict:
    try:
        return prop.check(case, cfg, opts)
    except InternalStuck as e:
        return fail(f"internal abort: {e}")
    except ResourceLimit as e:
        return discard(f"outside simulable resources: {e}")


def run_case(name: str, seed: int, cfg: GenConfig, opts: Options | None = None):
    """Generate and check the single case with this case seed: ``(Case, Verdict)``."""
    prop = get_property(name)
    opts = opts or Options()
    try:
        case = prop.generate(cfg, random.Random(seed), opts)
    except ResourceLimit:
        case = None
    if case is None:
        return None, discard("generator found no suitable case")
    return case, _safe_check(prop, case, cfg, opts)


def run_property(name: str, cfg: GenConfig, opts: Options | None = None, shrink: bool = True,
                 log: Callable[[str], None] | None = None) -> PropertyReport:
    """Run ``cfg.trials`` counted cases of the named property."""
    prop = get_property(name)
    opts = opts or Options()
    rep = PropertyReport(name, cfg.seed)
    for i in range(cfg.trials):
        for attempt in range(opts.max_attempts):
            cs = case_seed(cfg.seed, name, i, attempt)
            case, v = run_case(name, cs, cfg, opts)
            if v.status != DISCARD:
                break
            rep.discarded += 1
        else:
            rep.lines.append(f"{name} case {i}: no case met the precondition")
            continue
        rep.cases_run += 1
        if v.status == PASS:
            rep.passes += 1
        elif v.status == UNKNOWN:
            rep.unknown += 1
        else:
            small = shrink_case(prop, case, cfg, opts) if shrink else case
            rep.failures.append((cs, small, v.note))
        line = f"{name} case {i} seed={cs} {v.status}" + (f" ({v.note})" if v.note else "")
        rep.lines.append(line)
        if log is not None:
            log(line)
    return rep


# --------------------------------------------------------------------------
# shrinking


def _rewrite_calls(e, drop):
    """Replace every call to a (component, procedure) in ``drop`` by 0."""
    if isinstance(e, Call):
        if (e.comp, e.proc) in drop or e.comp in drop:
            return IntLit(0)
        return Call(e.comp, e.proc, _rewrite_calls(e.arg, drop))
    if isinstance(e, Binop):
        return Binop(e.op, _rewrite_calls(e.left, drop), _rewrite_calls(e.right, drop))
    if isinstance(e, If):
        return If(*(_rewrite_calls(x, drop) for x in (e.cond, e.then, e.orelse)))
    if isinstance(e, Read):
        return Read(e.buf, _rewrite_calls(e.index, drop))
    if isinstance(e, Write):
        return Write(e.buf, _rewrite_calls(e.index, drop), _rewrite_calls(e.value, drop))
    return e


def _restrict_iface(iface: Interface, drop) -> Interface:
    exports = iface.exports
    imports = frozenset((c, p) for c, p in iface.imports if c not in drop and (c, p) not in drop)
    return Interface(exports, imports)


def _without(case: Case, comp: str | None = None, proc: tuple | None = None) -> Case:
    drop = {comp} if comp is not None else {proc}
    ifaces = {}
    for name, iface in case.shape.interfaces.items():
        if name == comp:
            continue
        exports = iface.exports - ({proc[1]} if proc is not None and proc[0] == name else set())
        ifaces[name] = Interface(exports, _restrict_iface(iface, drop).imports)
    shape = Shape(ifaces, case.shape.uncompromised - {comp})
    progs = {}
    for role, P in case.programs.items():
        defs = []
        for name, d in P.defs.items():
            if name == comp:
                continue
            procs = {p: _rewrite_calls(b, drop) for p, b in d.procedures.items()
                     if proc is None or (name, p) != proc}
            defs.append(ComponentDef(name, ifaces[name], d.buffers, procs))
        progs[role] = PartialProgram.of(defs)
    return replace(case, shape=shape, programs=progs)


def shrink_components(case: Case):
    if not case.complete or case.shape is None:
        return
    for name in case.shape.names:
        if name != MAIN_COMPONENT:
            yield _without(case, comp=name)


def shrink_procedures(case: Case):
    if case.shape is None:
        return
    seen = set()
    for P in case.programs.values():
        for name, d in P.defs.items():
            for p in d.procedures:
                if (name, p) != (MAIN_COMPONENT, MAIN_PROCEDURE) and (name, p) not in seen:
                    seen.add((name, p))
                    yield _without(case, proc=(name, p))


def _replace_at(e, path, new):
    if not path:
        return new
    i, rest = path[0], path[1:]
    kids = list(subexprs(e))
    kids[i] = _replace_at(kids[i], rest, new)
    if isinstance(e, Binop):
        return Binop(e.op, *kids)
    if isinstance(e, If):
        return If(*kids)
    if isinstance(e, Read):
        return Read(e.buf, *kids)
    if isinstance(e, Write):
        return Write(e.buf, *kids)
    if isinstance(e, Call):
        return Call(e.comp, e.proc, *kids)
    raise ValueError("leaf has no children")


def _paths(e, prefix=()):
    yield prefix, e
    for i, k in enumerate(subexprs(e)):
        yield from _paths(k, prefix + (i,))


def shrink_expressions(case: Case):
    for role, P in case.programs.items():
        for name, d in P.defs.items():
            for p, body in d.procedures.items():
                for path, node in _paths(body):
                    repls = list(subexprs(node))
                    if not (isinstance(node, IntLit) and node.value == 0):
                        repls.append(IntLit(0))
                    for r in repls:
                        procs = dict(d.procedures)
                        procs[p] = _replace_at(body, path, r)
                        defs = dict(P.defs)
                        defs[name] = ComponentDef(name, d.interface, d.buffers, procs)
                        yield replace(case, programs={**case.programs, role: PartialProgram(defs)})


def shrink_trace(case: Case):
    t = case.extra.get("trace")
    if not t:
        return
    for n in range(len(t)):
        yield replace(case, extra={**case.extra, "trace": t[:n]})


SHRINK_ORDER = {
    "components": shrink_components,
    "procedures": shrink_procedures,
    "expressions": shrink_expressions,
    "trace": shrink_trace,
}


def shrink_case(prop: Property, case: Case, cfg: GenConfig, opts: Options) -> Case:
    """Greedy shrinking: keep any smaller candidate that still fails."""
    budget = opts.shrink_budget
    for kind in ("components", "procedures", "expressions", "trace"):
        if kind not in prop.shrinkers:
            continue
        progress = True
        while progress and budget > 0:
            progress = False
            for cand in SHRINK_ORDER[kind](case):
                budget -= 1
                try:
                    v = _safe_check(prop, cand, cfg, opts)
                except Exception:  # a candidate the property cannot even set up
                    v = discard()
                if v.status == FAIL:
                    case, progress = cand, True
                    break
                if budget <= 0:
                    break
    return case


# --------------------------------------------------------------------------
# shared helpers


def _index(s: Shape) -> NameIndex:
    return NameIndex.from_shape(s)


def _status_agreement(W: PartialProgram, img: Image, cfg: GenConfig) -> Verdict:
    """Source and machine agree on terminating versus running out of fuel."""
    fs, ft = cfg.fuel_source, cfg.target_fuel
    rs = run(W, fs)
    if isinstance(rs, UndefinedBehavior):
        return discard("source run has undefined behavior")
    rt = mrun(img, ft)
    src_halts, tgt_halts = isinstance(rs, Terminated), isinstance(rt, Halted)
    if src_halts == tgt_halts:
        return ok()
    if src_halts:
        return fail(f"source terminated in {rs.steps} steps, machine ran out of {ft} steps")
    # the machine halted first: give the source more room
    rs2 = run(W, 4 * fs)
    if isinstance(rs2, Terminated):
        return ok("source needed extra fuel")
    if isinstance(rs2, UndefinedBehavior):
        return fail(f"machine halted ({rt.reason}) where the source has undefined behavior")
    return unknown(f"machine halted ({rt.reason}) but the source is still running")


def _defined(P: PartialProgram, s: Shape, side: str, cfg: GenConfig, opts: Options, seed: int = 0) -> bool:
    v = check_fully_defined_bounded(P, s, opts.definedness_trials, cfg.fuel_source, seed=seed, side=side)
    return not isinstance(v, CounterexampleFound)


def _split_scenario(cfg: GenConfig, rng: random.Random):
    """A split shape with generated (defined) components on both sides."""
    base = gen_shape(cfg, rng, min_components=2)
    s = split_shape(rng, base)
    A = gen_program_of_shape(cfg, s, "context", rng)
    P = gen_program_of_shape(cfg, s, "program", rng)
    return s, A, P


def _attacked_scenario(cfg: GenConfig, rng: random.Random):
    """A split shape, a defined program and a low-level context image."""
    base = gen_shape(cfg, rng, min_components=2)
    s = split_shape(rng, base)
    P = gen_program_of_shape(cfg, s, "program", rng)
    strategy, a, A = gen_lowlevel_attacker(cfg, s, rng)
    return s, P, a, strategy


# --------------------------------------------------------------------------
# source language


def _gen_wild(cfg, rng, opts):
    W, s = gen_complete(cfg, rng, mode="wild")
    return Case(s, {"W": W}, complete=True)


def _check_type_safety(case, cfg, opts):
    W = case.programs["W"]
    if check_program_wf(W):
        return discard("not well formed")
    mon = WfMonitor(W)
    for conf, res in run_configs(W, cfg.fuel_source):
        bad = mon.violations(conf)
        if bad:
            return fail("; ".join(bad))
        kind = classify(res)
        if kind in ("ub-read", "ub-write") and res.comp != conf.current:
            return fail(f"undefined behavior blamed on {res.comp}, but {conf.current} is running")
    return ok()


register("type-safety", ("components", "procedures", "expressions"),
         "every reachable configuration can step or is final, unless the running component is blamed"
         )((_gen_wild, _check_type_safety))


def _gen_defined_complete(cfg, rng, opts):
    W, s = gen_complete(cfg, rng)
    return Case(s, {"W": W}, complete=True)


def _check_correctness(case, cfg, opts):
    W = case.programs["W"]
    return _status_agreement(W, compile_whole(W), cfg)


register("correctness", ("components", "procedures", "expressions"),
         "whole programs terminate at source level exactly when their compilation halts"
         )((_gen_defined_complete, _check_correctness))


# --------------------------------------------------------------------------
# separate compilation


def _gen_split(cfg, rng, opts):
    s, A, P = _split_scenario(cfg, rng)
    return Case(s, {"A": A, "P": P})


def _check_separate_compilation(case, cfg, opts):
    s, A, P = case.shape, case.programs["A"], case.programs["P"]
    whole = compile_whole(link(A, P))
    index = _index(s)
    parts = link_images(compile_program(A, index), compile_program(P, index))
    if whole != parts:
        diff = sorted(c for c in whole.mem0 if whole.mem0[c] != parts.mem0.get(c))
        return fail(f"images differ (memory of compartments {diff})")
    return ok()


register("separate-compilation", ("procedures", "expressions"),
         "compiling then linking gives the same image as linking then compiling"
         )((_gen_split, _check_separate_compilation))


def _check_separate_correctness(case, cfg, opts):
    s, A, P = case.shape, case.programs["A"], case.programs["P"]
    if not (_defined(A, s, "context", cfg, opts) and _defined(P, s, "program", cfg, opts)):
        return discard("a side is not fully defined")
    index = _index(s)
    img = link_images(compile_program(A, index), compile_program(P, index))
    return _status_agreement(link(A, P), img, cfg)


register("separate-correctness", ("procedures", "expressions"),
         "separately compiled fully defined sides behave like their source link"
         )((_gen_split, _check_separate_correctness))


# --------------------------------------------------------------------------
# trace semantics


def _gen_traced(cfg, rng, opts):
    """An attacked scenario plus a mutated program and a mutated attacker."""
    s, P, a, strategy = _attacked_scenario(cfg, rng)
    P2 = mutate_program(rng, P, cfg)
    a2 = mutate_image(rng, a, rng.randint(1, 3))
    return Case(s, {"P": P, "P2": P2}, {"a": a, "a2": a2, "strategy": strategy})


def _images(case):
    index = _index(case.shape)
    return (compile_program(case.programs["P"], index), compile_program(case.programs["P2"], index),
            case.extra["a"], case.extra["a2"])


def _check_extensibility(case, cfg, opts):
    ish = ishape(case.shape)
    ft = cfg.target_fuel
    p, p2, a, a2 = _images(case)
    t, _ = decompose(a, p, ish, ft)
    # t is a trace of both a and p; replaying it against another program on
    # one side may only get stuck at that side's own moves
    for own, img in ((PROGRAM, p2), (CONTEXT, a2)):
        k, why = accepted_prefix(img, ish, own, t, ft)
        if k < len(t) and t[k].direction != own:
            return fail(f"side {own} refused the opponent move {k}: {why.reason}")
    return ok()


register("extensibility", ("expressions",),
         "a trace of one side extended by an opponent move stays a trace of that side"
         )((_gen_traced, _check_extensibility))


def _check_decomposition(case, cfg, opts):
    ish = ishape(case.shape)
    ft = cfg.target_fuel
    p, _, a, _ = _images(case)
    t, res = decompose(a, p, ish, ft)
    fine, res2 = decompose_fine(a, p, ish, ft)
    if erase(fine) != t or res2 != res:
        return fail("the fine trace does not erase to the coarse trace")
    if parse_trace(format_trace(t)) != t or parse_fine(format_fine(fine)) != fine:
        return fail("trace text format does not round-trip")
    if any(x.kind == TICK for x in t[:-1]):
        return fail("tick before the end of the trace")
    if isinstance(res, Halted):
        if not t or t[-1].kind != TICK:
            return fail("halted run without a final tick")
        # replay needs at most the fuel of the joint run
        for own, img in ((PROGRAM, p), (CONTEXT, a)):
            m = program_has_trace(img, ish, t, ft) if own == PROGRAM else context_has_trace(img, ish, t, ft)
            if not m.yes:
                return fail(f"side {own} does not have the decomposed trace: {m.status} at {m.at} {m.reason}")
        return ok()
    if t and t[-1].kind == TICK:
        return fail("run out of fuel, yet the trace ended")
    return ok("run did not halt")


register("decomposition", ("expressions",),
         "a halting joint run yields a trace both sides have"
         )((_gen_traced, _check_decomposition))


def _check_composition(case, cfg, opts):
    ish = ishape(case.shape)
    ft = cfg.target_fuel
    p, p2, a, _ = _images(case)
    t, _ = decompose(a, p, ish, ft)
    # compose the original context with the mutated program on their
    # longest shared trace
    k, why = accepted_prefix(p2, ish, PROGRAM, t, ft)
    if why.unknown:
        return unknown("prefix replay ran out of fuel")
    shared = t if why.yes else t[:k]
    try:
        rep = compose_check(p2, a, ish, shared, ft)
    except PreconditionUnmet as e:
        return discard(str(e))
    if rep.consistent is None:
        return unknown(rep.note)
    if not rep.consistent:
        return fail(f"trace predicts {'halt' if rep.ends_in_tick else 'silence'}, joint run gave {rep.result}")
    return ok()


register("composition", ("expressions",),
         "a shared trace that cannot be extended predicts whether the joint run halts"
         )((_gen_traced, _check_composition))


def _junk(act: ExtAction, rng: random.Random) -> ExtAction:
    if act.kind == TICK:
        return act
    regs = (act.regs[0],) + tuple(rng.randint(-20, 60) for _ in range(isa.NREGS - 1))
    return ExtAction(act.kind, act.direction, act.target, regs)


def _gen_canon(cfg, rng, opts):
    s, P, a, strategy = _attacked_scenario(cfg, rng)
    index = _index(s)
    t, _ = decompose(a, compile_program(P, index), ishape(s, index), cfg.target_fuel)
    junked = tuple(_junk(x, rng) if x.direction == CONTEXT else x for x in t)
    return Case(s, {"P": P}, {"trace": junked, "strategy": strategy})


def drive(image: Image, ish, own: str, t, fuel: int):
    """Replay the opponent moves of ``t`` and record this side's own answers.

    Returns ``(trace, complete)``: the trace the side actually produces
    against those opponent moves, and whether every opponent move of ``t``
    could be used.  Stops early once the side stops answering or the next
    opponent move becomes illegal.
    """
    from .traces import SILENT, OneSided

    rep = OneSided(image, ish, own, fuel)
    out = []
    for act in t:
        if rep.done:
            return tuple(out), False
        if rep.own_turn:
            mine = rep.advance()
            if mine == SILENT:
                return tuple(out), False
            rep.commit()
            out.append(mine)
            if act.direction == own:
                continue
        if act.direction == own:
            return tuple(out), False
        if rep.inject(act) is not None:
            return tuple(out), False
        out.append(act)
    return tuple(out), True


def _check_canonicalization(case, cfg, opts, flags=frozenset()):
    s, P = case.shape, case.programs["P"]
    if not _defined(P, s, "program", cfg, opts):
        return discard("program is not fully defined")
    index = _index(s)
    ish = ishape(s, index)
    p = compile_program(P, index, flags)
    ft = cfg.target_fuel
    t = tuple(case.extra["trace"])
    # both forms of an arbitrary trace get the same answer
    m1 = program_has_trace(p, ish, t, ft)
    m2 = program_has_trace(p, ish, canonicalize_trace(t), ft)
    if not (m1.unknown or m2.unknown) and (m1.status, m1.at) != (m2.status, m2.at):
        return fail(f"membership {m1.status}@{m1.at} versus canonical {m2.status}@{m2.at}")
    # a trace the program really has keeps being accepted once canonicalized
    tj, _ = drive(p, ish, PROGRAM, t, ft)
    m3 = program_has_trace(p, ish, canonicalize_trace(tj), ft)
    if m3.no:
        return fail(f"canonical form of a program trace refused at {m3.at}: {m3.reason}")
    if m1.unknown or m2.unknown or m3.unknown:
        return unknown("membership ran out of fuel")
    return ok()


register("canonicalization", ("trace", "expressions"),
         "zeroing the scratch registers of context moves never changes a program's answer"
         )((_gen_canon, _check_canonicalization))


def _check_register_hygiene(case, cfg, opts, flags=frozenset()):
    s, P = case.shape, case.programs["P"]
    index = _index(s)
    p = compile_program(P, index, flags)
    t = tuple(case.extra["trace"])
    # drive the program along the trace and inspect every move it makes
    from .traces import OneSided, SILENT

    rep = OneSided(p, ishape(s, index), PROGRAM, cfg.target_fuel)
    for i, act in enumerate(t):
        if rep.done:
            break
        if rep.own_turn:
            mine = rep.advance()
            if mine == SILENT:
                return unknown("program ran out of fuel")
            if mine.kind != TICK and any(mine.regs[1:]):
                return fail(f"program move {i} leaks scratch registers {mine.regs[1:]}")
            if mine != act:
                break
            rep.commit()
        elif rep.inject(act) is not None:
            break
    return ok()


register("register-hygiene", ("trace", "expressions"),
         "compiled code clears every register except r_com when it hands over control"
         )((_gen_canon, _check_register_hygiene))


# --------------------------------------------------------------------------
# definability


def _gen_definability(cfg, rng, opts):
    s, P, a, strategy = _attacked_scenario(cfg, rng)
    index = _index(s)
    ish = ishape(s, index)
    p = compile_program(P, index)
    fine, _ = decompose_fine(a, p, ish, cfg.target_fuel)
    t = erase(fine)
    cuts = [k for k, x in enumerate(t) if x.direction == PROGRAM]
    if not cuts:
        return None
    k = rng.choice(cuts)
    return Case(s, {"P": P}, {"fine": fine, "cut": k, "strategy": strategy})


def _check_definability(case, cfg, opts):
    from .game import _fine_prefix

    s, P = case.shape, case.programs["P"]
    if not _defined(P, s, "program", cfg, opts):
        return discard("witness program is not fully defined")
    index = _index(s)
    fine, k = case.extra["fine"], case.extra["cut"]
    t = erase(fine)
    inp = BacktransInput(canonicalize_fine(_fine_prefix(fine, k)), t[k], s)
    out = backtranslate(inp, index)
    if not has_shape_context(out.context, s):
        return fail("generated context does not have the context shape")
    witness = compile_program(P, index)
    rep = verify_definability(out, inp, witness, cfg.target_fuel, index, seed=k)
    if rep.witness_ok.unknown:
        return unknown("witness replay ran out of fuel")
    if rep.witness_ok.no:
        return fail(f"witness lacks the canonical trace: {rep.witness_ok.reason}")
    if rep.passed is None:
        return unknown("a clause ran out of fuel")
    if not rep.passed:
        bad = [f"{g}: {o}" for g, o in rep.clause3 if o not in ("silent", "rejected", "unknown-fuel")]
        return fail(f"clauses: 1={rep.clause1.status} 2={rep.clause2 and rep.clause2.status} 3={bad}")
    v = check_fully_defined_bounded(out.context, s, opts.definedness_trials, cfg.fuel_source,
                                    seed=k, side="context")
    if isinstance(v, CounterexampleFound):
        return fail(f"generated context blamed for undefined behavior (trial {v.trial})")
    return ok()


register("definability", ("expressions",),
         "the back-translated context replays its trace and accepts only the chosen move"
         )((_gen_definability, _check_definability))


# --------------------------------------------------------------------------
# end to end


def _gen_scc(cfg, rng, opts):
    """Rejection-sample a scenario whose compiled pair a low-level context tells apart."""
    s = gen_game_shape(cfg, rng)
    P = gen_program_of_shape(cfg, s, "program", rng)
    Q = mutate_exposed(rng, P, s, cfg)
    if P == Q:
        return None
    _, a, _ = gen_lowlevel_attacker(cfg, s, rng)
    index = _index(s)
    ft = cfg.target_fuel
    hp = isinstance(mrun(link_images(a, compile_program(P, index)), ft), Halted)
    hq = isinstance(mrun(link_images(a, compile_program(Q, index)), ft), Halted)
    if hp == hq:
        return None
    return Case(s, {"P": P, "Q": Q}, {"a": a})


def check_scc_case(s, P, Q, a, cfg, opts) -> Verdict:
    if not (_defined(P, s, "program", cfg, opts) and _defined(Q, s, "program", cfg, opts)):
        return discard("a program is not fully defined")
    try:
        out = scc_game(P, Q, a, s, cfg, definedness_trials=opts.definedness_trials)
    except GameFailure as e:
        return fail(f"game failure: {e}")
    if isinstance(out, UnknownFuel):
        return unknown(out.reason)
    if isinstance(out, NotDistinguishedLowLevel):
        return discard("the attacker does not distinguish")
    # re-verify independently of the game
    A = out.context
    if not has_shape_context(A, s):
        return fail("distinguisher does not have the context shape")
    fs = cfg.fuel_source
    for fuel in (fs, 4 * fs):
        rp, rq = run(link(A, P), fuel), run(link(A, Q), fuel)
        kinds = sorted((type(rp).__name__, type(rq).__name__))
        if kinds == ["FuelExhausted", "Terminated"]:
            break
        if kinds != ["FuelExhausted", "FuelExhausted"]:
            return fail(f"distinguisher does not separate the programs: {rp} / {rq}")
    else:
        return fail("distinguisher terminates with neither program")
    v = check_fully_defined_bounded(A, s, opts.definedness_trials, fs, seed=cfg.seed + 1, side="context")
    if isinstance(v, CounterexampleFound):
        return fail("distinguisher is not fully defined")
    return ok()


def _check_scc(case, cfg, opts):
    return check_scc_case(case.shape, case.programs["P"], case.programs["Q"], case.extra["a"], cfg, opts)


register("scc-end-to-end", ("expressions",),
         "every low-level distinguisher yields a fully defined source distinguisher"
         )((_gen_scc, _check_scc))


# --------------------------------------------------------------------------
# isolation


def _gen_isolation(cfg, rng, opts):
    if rng.random() < 0.4:
        W, s = gen_complete(cfg, rng, mode=rng.choice(("defined", "wild")))
        return Case(s, {"W": W}, {"a": None}, complete=True)
    s, P, a, strategy = _attacked_scenario(cfg, rng)
    return Case(s, {"P": P}, {"a": a, "strategy": strategy})


def isolation_violations(image: Image, fuel: int) -> list[str]:
    """Step the fast run loop one instruction at a time and audit each step.

    Only Call and Return may change the current compartment or the
    protected stack; no instruction may touch another compartment's
    memory; a Call that succeeds must be allowed by the caller's imports
    and land on an entry point; a Return must resume the popped frame.
    """
    r = Runner(image)
    out = []
    saved = {c: dict(m) for c, m in r.mem.items()}
    for _ in range(fuel):
        cur, pc, stack = r.cur, r.pc, list(r.stack)
        raw = r.current_instr()
        status, _, _ = r.run(1)
        if status == STUCK:
            break
        op = raw[0] if raw else None
        if op == isa.OP_CALL:
            a, b = raw[1], raw[2]
            if a != cur and (a, b) not in image.psi.get(cur, ()):
                out.append(f"call {a}.{b} from {cur} is not imported")
            if r.pc != image.entry.get(a, {}).get(b) or r.cur != a:
                out.append(f"call {a}.{b} did not land on its entry point")
            if r.stack != stack + [(cur, pc + 1)]:
                out.append("call did not push exactly its return frame")
        elif op == isa.OP_RETURN:
            if not stack or (r.cur, r.pc) != stack[-1] or r.stack != stack[:-1]:
                out.append("return did not resume the top frame")
        else:
            if r.cur != cur or r.stack != stack:
                out.append(f"instruction {raw} changed the compartment or the stack")
        for c, m in r.mem.items():
            if c != cur and m != saved[c]:
                out.append(f"compartment {c} memory changed while {cur} was running")
        saved[cur] = dict(r.mem[cur])
        if out:
            break
    return out


def _check_isolation(case, cfg, opts):
    index = _index(case.shape)
    if "W" in case.programs:
        img = compile_whole(case.programs["W"])
    else:
        img = link_images(case.extra["a"], compile_program(case.programs["P"], index))
    bad = isolation_violations(img, opts.isolation_fuel)
    return fail("; ".join(bad)) if bad else ok()


register("isolation", ("expressions",),
         "non-transfer instructions leave other compartments and the protected stack alone"
         )((_gen_isolation, _check_isolation))


# --------------------------------------------------------------------------
# the local-call optimization


def _check_local_opt(case, cfg, opts):
    W = case.programs["W"]
    ft = cfg.target_fuel
    fast = mrun(compile_whole(W), ft)
    slow_img = compile_whole(W, {NO_LOCAL_OPT})
    slow = mrun(slow_img, ft)
    if isinstance(fast, Halted) == isinstance(slow, Halted):
        if isinstance(fast, Halted) and fast.reason != slow.reason:
            return fail(f"halting reasons differ: {fast.reason} vs {slow.reason}")
        return ok()
    if isinstance(fast, Halted):
        slow = mrun(slow_img, 4 * ft)
        if isinstance(slow, Halted):
            return ok("the unoptimized build needed more fuel")
        return fail("optimized build halts, unoptimized build does not")
    return fail("unoptimized build halts, optimized build does not")


register("local-opt", ("components", "procedures", "expressions"),
         "compiling local calls as jumps does not change whether a program halts"
         )((_gen_defined_complete, _check_local_opt))


PROPERTY_NAMES = tuple(REGISTRY)

__all__ = [
    "Case", "Verdict", "PropertyReport", "Property", "Options", "REGISTRY", "PROPERTY_NAMES",
    "UnknownProperty", "run_property", "run_case", "shrink_case", "case_seed", "get_property",
    "isolation_violations", "check_scc_case", "PASS", "FAIL", "UNKNOWN", "DISCARD",
]
