"""Back-translation: from a canonical fine trace to a source context.

Every generated context component uses four cells of buffer 0::

    b0[0]  call argument
    b0[1]  activation counter
    b0[2]  how control arrived: 0 for a returning call, pidx+1 for an entry
    b0[3]  the value that came with it (argument or call result)

A component gains control either by being called or by one of its own
calls returning.  Every such activation bumps the counter and performs
the component's next scripted action, found by binary search on the
counter so long scripts stay shallow: a call, or returning a value.  Once
its script is used up, the component makes its final decision.  It
exits if it is the one receiving the distinguishing program move and the
move matches up to canonicalization, and loops forever otherwise.
All buffer indices are constants, so the context is fully defined by
construction.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .compiler import NameIndex, compile_program
from .lang import (
    MAIN_COMPONENT,
    Binop,
    Call,
    ComponentDef,
    Exit,
    If,
    IntLit,
    PartialProgram,
    Read,
    Shape,
    Write,
)
from .traces import (
    CALL,
    CONTEXT,
    PROGRAM,
    RET,
    SILENT,
    TICK,
    ExtAction,
    FineEvent,
    Membership,
    call_act,
    canonicalize_action,
    context_has_trace,
    erase,
    ishape,
    next_context_action,
    program_has_trace,
    ret_act,
    tick,
)

ARG, COUNTER, TAG, VAL = 0, 1, 2, 3
BUFFER_SIZE = 4


class BacktranslateError(Exception):
    pass


class NonCanonicalTrace(BacktranslateError):
    pass


class NonReplayableTrace(BacktranslateError):
    pass


@dataclass(frozen=True)
class BacktransInput:
    fine: tuple
    gamma1: ExtAction
    shape: Shape


@dataclass
class BacktransOutput:
    context: PartialProgram
    report: dict = field(default_factory=dict)   # component -> list of scripted steps


def _cell(i):
    return Read(0, IntLit(i))


def _set(i, e):
    return Write(0, IntLit(i), e)


def _seq(*es):
    out = es[-1]
    for e in reversed(es[:-1]):
        out = Binop("seq", e, out)
    return out


def _fresh(base: str, taken) -> str:
    name, n = base, 0
    while name in taken:
        n += 1
        name = f"{base}{n}"
    return name


def annotate(fine, ish) -> tuple[list, list]:
    """Pair each event with the compartment performing it; also return the final frame stack."""
    cur, stack, out = ish.main, [], []
    for ev in fine:
        act = ev.action
        if act.kind == TICK:
            raise NonReplayableTrace("the trace prefix already terminated")
        out.append((ev, cur))
        if act.kind == CALL:
            stack.append(cur)
            cur = act.target[0]
        else:
            if not stack:
                raise NonReplayableTrace("return with an empty call stack")
            cur = stack.pop()
    return out, stack


def backtranslate(inp: BacktransInput, index: NameIndex | None = None) -> BacktransOutput:
    s = inp.shape
    index = index or NameIndex.from_shape(s)
    ish = ishape(s, index)
    g1 = inp.gamma1
    if g1.direction != PROGRAM:
        raise NonReplayableTrace("the distinguishing move must be a program move")
    for ev in inp.fine:
        if not ev.internal and ev.action.direction == CONTEXT and canonicalize_action(ev.action) != ev.action:
            raise NonCanonicalTrace("context moves must only carry r_com")

    annotated, stack = annotate(inp.fine, ish)
    scripts = {c: [] for c in ish.context}
    for ev, src in annotated:
        if src not in ish.context:
            continue
        act = ev.action
        if act.kind == CALL:
            c, p = act.target
            cname, pname = index.name_of(c), index.proc_name(c, p)
            if (cname, pname) not in s.interfaces[index.name_of(src)].imports:
                raise NonReplayableTrace(f"{index.name_of(src)} does not import {cname}.{pname}")
            scripts[src].append(("call", cname, pname, act.com))
        else:
            scripts[src].append(("ret", act.com))

    # who receives the distinguishing move, and what it looks like there
    accept = None
    if g1.kind == CALL:
        c, p = g1.target
        if c not in ish.context:
            raise NonReplayableTrace("distinguishing call does not enter the context")
        accept = (c, p + 1, g1.com)
    elif g1.kind == RET:
        if not stack or stack[-1] not in ish.context:
            raise NonReplayableTrace("distinguishing return does not resume the context")
        accept = (stack[-1], 0, g1.com)

    defs, report = [], {}
    for name in sorted(s.compromised):
        c = index.cidx(name)
        iface = s.interfaces[name]
        taken = set(iface.exports)
        d = _fresh("step", taken)
        spin = _fresh("spin", taken | {d})
        again = Call(name, d, IntLit(0))
        loop = Call(name, spin, IntLit(0))

        if accept is not None and accept[0] == c:
            match = Binop("mul", Binop("eq", _cell(TAG), IntLit(accept[1])),
                          Binop("eq", _cell(VAL), IntLit(accept[2])))
            decision = If(match, Exit(), loop)
        else:
            decision = loop
        steps = scripts[c]
        actions = []
        for st in steps:
            if st[0] == "call":
                actions.append(_seq(_set(VAL, Call(st[1], st[2], IntLit(st[3]))), _set(TAG, IntLit(0)), again))
            else:
                actions.append(IntLit(st[1]))
        body = If(Binop("leq", _cell(COUNTER), IntLit(len(steps))), _dispatch(actions, 1), decision) \
            if steps else decision
        procs = {
            d: _seq(_set(COUNTER, Binop("add", _cell(COUNTER), IntLit(1))), body),
            spin: Call(name, spin, IntLit(0)),
        }
        for q in iface.exports:
            procs[q] = _seq(_set(TAG, IntLit(index.pidx(name, q) + 1)), _set(VAL, _cell(ARG)), again)
        defs.append(ComponentDef(name, iface, (BUFFER_SIZE,), procs))
        report[name] = [_describe(st) for st in steps] + [
            "decide: exit on match" if accept is not None and accept[0] == c else "decide: loop"]
    return BacktransOutput(PartialProgram.of(defs), report)


def _dispatch(actions, lo: int):
    """Select ``actions[cnt - lo]`` by binary search on the counter, for lo <= cnt < lo + len."""
    if len(actions) == 1:
        return actions[0]
    half = len(actions) // 2
    return If(Binop("leq", _cell(COUNTER), IntLit(lo + half - 1)),
              _dispatch(actions[:half], lo), _dispatch(actions[half:], lo + half))


def _describe(st) -> str:
    return f"call {st[1]}.{st[2]}({st[3]})" if st[0] == "call" else f"return {st[1]}"


# --------------------------------------------------------------------------
# checking the three definability clauses


@dataclass
class DefinabilityReport:
    clause1: Membership
    clause2: Membership | None          # None when vacuous (distinguishing move is a tick)
    clause3: list                       # (probe move, outcome) pairs
    witness_ok: Membership

    @property
    def passed(self) -> bool | None:
        """True, False, or None when fuel left something undecided."""
        parts = [self.clause1] + ([self.clause2] if self.clause2 is not None else [])
        if any(m.no for m in parts) or any(out not in (SILENT, "rejected", "unknown-fuel")
                                           for _, out in self.clause3):
            return False
        if any(m.unknown for m in parts) or any(out == "unknown-fuel" for _, out in self.clause3):
            return None
        return True


def probe_moves(t, g1: ExtAction, ish, rng: random.Random | None = None, extra: int = 3):
    """Program moves whose canonical form differs from that of ``g1``."""
    rng = rng or random.Random(0)
    zero = (0,) * 5
    base = g1.com if g1.com is not None else 0
    vals = sorted({base - 1, base + 1, base + 2, 0, rng.randint(-50, 50)} - {None})
    out = []
    targets = sorted({tp for pc in ish.program for tp in ish.imports.get(pc, ()) if tp[0] in ish.context})
    for v in vals[:extra + 2]:
        out.append(ret_act(PROGRAM, (v,) + zero))
        for tg in targets:
            out.append(call_act(PROGRAM, tg[0], tg[1], (v,) + zero))
    out.append(tick(PROGRAM))
    g = canonicalize_action(g1)
    return [m for m in out if canonicalize_action(m).payload() != g.payload()]


def verify_definability(out: BacktransOutput, inp: BacktransInput, witness, fuel: int,
                        index: NameIndex | None = None, seed: int = 0) -> DefinabilityReport:
    s = inp.shape
    index = index or NameIndex.from_shape(s)
    ish = ishape(s, index)
    a = compile_program(out.context, index)
    t = erase(inp.fine)
    g1 = inp.gamma1
    witness_ok = program_has_trace(witness, ish, t + (g1,), fuel) if witness is not None else Membership("yes")
    c1 = context_has_trace(a, ish, t, fuel)
    c2 = None
    if g1.kind != TICK:
        c2 = context_has_trace(a, ish, t + (g1, tick(CONTEXT)), fuel)
    c3 = []
    for g in probe_moves(t, g1, ish, random.Random(seed)):
        if g.kind == TICK:
            continue  # nothing can follow a tick
        m = context_has_trace(a, ish, t + (g,), fuel)
        if not m.yes:
            c3.append((g, "rejected" if m.no else "unknown-fuel"))
            continue
        c3.append((g, next_context_action(a, ish, t + (g,), fuel)))
    return DefinabilityReport(c1, c2, c3, witness_ok)


__all__ = [
    "BacktransInput", "BacktransOutput", "backtranslate", "verify_definability", "DefinabilityReport",
    "NonCanonicalTrace", "NonReplayableTrace", "annotate", "probe_moves", "FineEvent",
]
