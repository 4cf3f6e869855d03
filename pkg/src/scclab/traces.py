"""Two-player trace semantics over shapes.

A trace is the sequence of cross-side Call/Return transfers of a linked
run, each carrying the full register file at the moment the instruction
executes, optionally closed by a termination tick.  ``!`` marks moves of
the program side and ``?`` moves of the context side.

Membership of a trace in the trace set of one side is decided by replay:
that side's compartments run concretely, while the opponent is only a
shape.  Opponent moves are read off the trace and injected after an
interface check against the shape; own moves must be reproduced exactly.
Where the opponent currently is cannot be observed, so the replay keeps
the set of opponent compartments that could hold control.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .isa import NREGS, OP_CALL, REG_NAMES
from .lang import MAIN_COMPONENT, Shape
from .machine import (
    FUEL,
    STUCK,
    Halted,
    Image,
    MachineState,
    MFuelExhausted,
    Runner,
    STUCK_REASONS,
    init_state,
    link_images,
    mrun,
)

PROGRAM, CONTEXT = "!", "?"
CALL, RET, TICK = "call", "ret", "tick"


class TraceError(Exception):
    pass


class ShapeMismatch(TraceError):
    pass


class MalformedTrace(TraceError):
    pass


class NotOwnTurn(TraceError):
    pass


class PreconditionUnmet(TraceError):
    pass


def other(direction: str) -> str:
    return CONTEXT if direction == PROGRAM else PROGRAM


@dataclass(frozen=True)
class ExtAction:
    kind: str                 # call | ret | tick
    direction: str            # "!" program move, "?" context move
    target: tuple | None = None   # (cidx, pidx) for calls
    regs: tuple | None = None     # full register file for calls and returns

    def __post_init__(self):
        if self.kind not in (CALL, RET, TICK) or self.direction not in (PROGRAM, CONTEXT):
            raise MalformedTrace(f"bad action {self.kind!r}/{self.direction!r}")
        if self.kind == TICK:
            if self.regs is not None or self.target is not None:
                raise MalformedTrace("a tick carries no payload")
        elif self.regs is None or len(self.regs) != NREGS:
            raise MalformedTrace("calls and returns carry a full register file")
        if (self.kind == CALL) != (self.target is not None):
            raise MalformedTrace("only calls have a target")

    @property
    def com(self) -> int | None:
        return None if self.regs is None else self.regs[0]

    def payload(self):
        return (self.kind, self.target, self.regs)

    def flipped(self) -> "ExtAction":
        return ExtAction(self.kind, other(self.direction), self.target, self.regs)


def call_act(direction, cidx, pidx, regs) -> ExtAction:
    return ExtAction(CALL, direction, (cidx, pidx), tuple(regs))


def ret_act(direction, regs) -> ExtAction:
    return ExtAction(RET, direction, None, tuple(regs))


def tick(direction) -> ExtAction:
    return ExtAction(TICK, direction)


Trace = tuple  # of ExtAction


@dataclass(frozen=True)
class FineEvent:
    action: ExtAction   # for internal events, direction is the owning side
    internal: bool = False


FineTrace = tuple  # of FineEvent


def erase(fine) -> Trace:
    return tuple(ev.action for ev in fine if not ev.internal)


@dataclass(frozen=True)
class Membership:
    status: str               # yes | no | unknown-fuel
    at: int | None = None     # index of the offending action
    reason: str = ""

    @property
    def yes(self) -> bool:
        return self.status == "yes"

    @property
    def no(self) -> bool:
        return self.status == "no"

    @property
    def unknown(self) -> bool:
        return self.status == "unknown-fuel"


YES = Membership("yes")
SILENT = "silent"
UNKNOWN_FUEL = "unknown-fuel"


# --------------------------------------------------------------------------
# shapes at the index level


@dataclass(frozen=True)
class IShape:
    program: frozenset
    context: frozenset
    imports: dict = field(hash=False)   # cidx -> frozenset of (cidx, pidx)
    exports: dict = field(hash=False)   # cidx -> frozenset of pidx
    main: int = 0

    def side(self, c: int) -> str:
        if c in self.program:
            return PROGRAM
        if c in self.context:
            return CONTEXT
        raise ShapeMismatch(f"compartment {c} is not part of the shape")

    def comps(self, direction: str) -> frozenset:
        return self.program if direction == PROGRAM else self.context

    @property
    def main_side(self) -> str:
        return self.side(self.main)


def ishape(s, index=None) -> IShape:
    """Index-level view of a shape (identity on an ``IShape``)."""
    if isinstance(s, IShape):
        return s
    from .compiler import NameIndex

    if index is None:
        index = NameIndex.from_shape(s)
    imports, exports = {}, {}
    for name, iface in s.interfaces.items():
        c = index.cidx(name)
        imports[c] = frozenset((index.cidx(tc), index.pidx(tc, tp)) for tc, tp in iface.imports)
        exports[c] = frozenset(index.pidx(name, p) for p in iface.exports)
    prog = frozenset(index.cidx(n) for n in s.uncompromised)
    ctx = frozenset(index.cidx(n) for n in s.interfaces if n not in s.uncompromised)
    return IShape(prog, ctx, imports, exports, index.cidx(MAIN_COMPONENT))


def _check_side(img: Image, ish: IShape, direction: str):
    if img.comps != ish.comps(direction):
        raise ShapeMismatch(f"image compartments {sorted(img.comps)} do not match the "
                            f"{'program' if direction == PROGRAM else 'context'} side "
                            f"{sorted(ish.comps(direction))}")


# --------------------------------------------------------------------------
# recording traces from complete runs


def _record(a: Image, p: Image, s, fuel: int, fine: bool):
    ish = ishape(s)
    _check_side(a, ish, CONTEXT)
    _check_side(p, ish, PROGRAM)
    r = Runner(link_images(a, p))
    events = []
    while True:
        status, reason, detail = r.run(fuel - r.steps, watch=True)
        if status == FUEL or r.steps >= fuel:
            return tuple(events), MFuelExhausted(r.steps)
        src = r.cur
        side = ish.side(src)
        if status == STUCK:
            events.append(FineEvent(tick(side)))
            return tuple(events), Halted(r.steps + 1, STUCK_REASONS[reason], detail)
        raw = r.current_instr()
        regs = tuple(r.reg)
        act = call_act(side, raw[1], raw[2], regs) if raw[0] == OP_CALL else ret_act(side, regs)
        err = r.transfer()
        if err is not None:
            events.append(FineEvent(tick(side)))
            return tuple(events), Halted(r.steps + 1, STUCK_REASONS[err], raw[1:3])
        if r.cur == src:
            continue  # transfer inside one compartment
        if ish.side(r.cur) != side:
            events.append(FineEvent(act))
        elif fine:
            events.append(FineEvent(act, internal=True))


def decompose(a: Image, p: Image, s, fuel: int):
    """Run ``a`` linked with ``p`` and record its trace: ``(Trace, MRunResult)``."""
    events, res = _record(a, p, s, fuel, fine=False)
    return erase(events), res


def decompose_fine(a: Image, p: Image, s, fuel: int):
    """Like ``decompose`` but also keeps same-side cross-compartment transfers."""
    return _record(a, p, s, fuel, fine=True)


# --------------------------------------------------------------------------
# one-sided replay


class OneSided:
    """One side running concretely against a shape-only opponent."""

    def __init__(self, image: Image, s, own: str, fuel: int):
        self.ish = ish = ishape(s)
        _check_side(image, ish, own)
        self.image, self.own, self.budget = image, own, fuel
        self.mine = ish.comps(own)
        self.theirs = ish.comps(other(own))
        self.done = False
        if ish.main in self.mine:
            st = init_state(image, (ish.main, 0))
            self.own_turn = True
            self.opp_cur = frozenset()
        else:
            st = MachineState(-1, (), {c: dict(m) for c, m in image.mem0.items()}, (0,) * NREGS, 0)
            self.own_turn = False
            self.opp_cur = frozenset({ish.main})
        self.r = Runner(image, st)
        self.pending = None

    # -- own moves

    def advance(self):
        """Run own code up to its next external move; SILENT if fuel runs out."""
        if self.pending is not None:
            return self.pending
        r, image = self.r, self.image
        while True:
            if self.budget <= 0:
                return SILENT
            before = r.steps
            status, reason, detail = r.run(self.budget, watch=True)
            self.budget -= r.steps - before
            if status == FUEL:
                return SILENT
            if status == STUCK:
                return self._hold(tick(self.own))
            if self.budget <= 0:
                return SILENT
            raw = r.current_instr()
            cur = r.cur
            if raw[0] == OP_CALL:
                c, p = raw[1], raw[2]
                if c != cur and (c, p) not in image.psi.get(cur, ()):
                    return self._hold(tick(self.own))
                if c in self.mine:
                    target = image.entry.get(c, {}).get(p)
                    if target is None:
                        return self._hold(tick(self.own))
                    r.stack.append((cur, r.pc + 1))
                    r.cur, r.pc = c, target
                    self._spend()
                    continue
                if c not in self.theirs or p not in self.ish.exports.get(c, ()):
                    return self._hold(tick(self.own))
                return self._hold(call_act(self.own, c, p, r.reg))
            if not r.stack:
                return self._hold(tick(self.own))
            top = r.stack[-1]
            if top[1] is not None:
                r.stack.pop()
                r.cur, r.pc = top
                self._spend()
                continue
            return self._hold(ret_act(self.own, r.reg))

    def _spend(self):
        self.budget -= 1
        self.r.steps += 1

    def _hold(self, act):
        self.pending = act
        return act

    def commit(self):
        """Perform the pending own move."""
        act, r = self.pending, self.r
        self.pending = None
        if act.kind == TICK:
            self.done = True
            return
        if act.kind == CALL:
            r.stack.append((r.cur, r.pc + 1))
            self.opp_cur = frozenset({act.target[0]})
        else:
            self.opp_cur = r.stack.pop()[0]
        self._spend()
        self.own_turn = False

    # -- opponent moves

    def reachable(self) -> frozenset:
        """Opponent compartments that may hold control right now."""
        start = set(self.opp_cur)
        for c, pc in reversed(self.r.stack):
            if pc is not None:
                break
            start |= c
        seen, todo = set(start), list(start)
        while todo:
            x = todo.pop()
            for c, _ in self.ish.imports.get(x, ()):
                if c in self.theirs and c not in seen:
                    seen.add(c)
                    todo.append(c)
        return frozenset(seen)

    def inject(self, act: ExtAction) -> str | None:
        """Apply an opponent move; returns a reason string when it is illegal."""
        r = self.r
        if act.kind == TICK:
            self.done = True
            return None
        if act.kind == CALL:
            c, p = act.target
            if c not in self.mine:
                return f"opponent call to {c}.{p} does not cross sides"
            target = self.image.entry.get(c, {}).get(p)
            if target is None or p not in self.ish.exports.get(c, ()):
                return f"{c}.{p} is not exported"
            callers = frozenset(x for x in self.reachable() if (c, p) in self.ish.imports.get(x, ()))
            if not callers:
                return f"no reachable opponent compartment imports {c}.{p}"
            r.stack.append((callers, None))
            r.cur, r.pc = c, target
        else:
            while r.stack and r.stack[-1][1] is None:
                r.stack.pop()
            if not r.stack:
                return "opponent return with no pending own call"
            r.cur, r.pc = r.stack.pop()
        r.reg[:] = act.regs
        self.own_turn = True
        return None


def _replay(image: Image, s, own: str, trace, fuel: int):
    rep = OneSided(image, s, own, fuel)
    for i, act in enumerate(trace):
        if rep.done:
            return rep, Membership("no", i, "action after termination")
        if rep.own_turn:
            if act.direction != own:
                return rep, Membership("no", i, "opponent moved out of turn")
            mine = rep.advance()
            if mine == SILENT:
                return rep, Membership("unknown-fuel", i)
            if mine != act:
                return rep, Membership("no", i, f"own move is {format_action(mine)}")
            rep.commit()
        else:
            if act.direction == own:
                return rep, Membership("no", i, "own move out of turn")
            why = rep.inject(act)
            if why is not None:
                return rep, Membership("no", i, why)
    return rep, YES


def has_trace(image: Image, s, own: str, trace, fuel: int) -> Membership:
    return _replay(image, s, own, trace, fuel)[1]


def program_has_trace(p: Image, s, t, fuel: int) -> Membership:
    return has_trace(p, s, PROGRAM, t, fuel)


def context_has_trace(a: Image, s, t, fuel: int) -> Membership:
    return has_trace(a, s, CONTEXT, t, fuel)


def next_action(image: Image, s, own: str, t, fuel: int):
    """The unique own move extending ``t``, ``SILENT``, or ``UNKNOWN_FUEL``."""
    rep, m = _replay(image, s, own, t, fuel)
    if m.unknown:
        return UNKNOWN_FUEL
    if m.no:
        raise MalformedTrace(f"trace is not in the trace set (action {m.at}: {m.reason})")
    if rep.done or not rep.own_turn:
        raise NotOwnTurn("it is not this side's turn")
    return rep.advance()


def next_program_action(p: Image, s, t, fuel: int):
    return next_action(p, s, PROGRAM, t, fuel)


def next_context_action(a: Image, s, t, fuel: int):
    return next_action(a, s, CONTEXT, t, fuel)


def turn_after(t, ish: IShape) -> str | None:
    """Whose move it is after ``t``; None once the trace has ended."""
    if t and t[-1].kind == TICK:
        return None
    return other(t[-1].direction) if t else ish.main_side


# --------------------------------------------------------------------------
# canonicalization


def canonicalize_action(act: ExtAction) -> ExtAction:
    """Zero every register except r_com."""
    if act.kind == TICK:
        return act
    return ExtAction(act.kind, act.direction, act.target, (act.regs[0],) + (0,) * (NREGS - 1))


def canonicalize_trace(t) -> Trace:
    return tuple(canonicalize_action(a) if a.direction == CONTEXT else a for a in t)


def canonicalize_fine(fine) -> FineTrace:
    return tuple(FineEvent(canonicalize_action(ev.action), ev.internal)
                 if ev.action.direction == CONTEXT else ev for ev in fine)


def is_canonical(t) -> bool:
    return tuple(t) == canonicalize_trace(t)


# --------------------------------------------------------------------------
# composition


@dataclass(frozen=True)
class ComposeReport:
    consistent: bool | None     # None when fuel made the check inconclusive
    ends_in_tick: bool
    result: object = None
    note: str = ""


def compose_check(p: Image, a: Image, s, t, fuel: int) -> ComposeReport:
    """Check that a shared, non-extendable trace predicts the linked run."""
    ish = ishape(s)
    t = tuple(t)
    for own, img in ((PROGRAM, p), (CONTEXT, a)):
        m = has_trace(img, ish, own, t, fuel)
        if m.unknown:
            return ComposeReport(None, False, note=f"membership on side {own} ran out of fuel")
        if m.no:
            raise PreconditionUnmet(f"trace not in side {own}: {m.reason}")
    ticked = bool(t) and t[-1].kind == TICK
    if not ticked:
        mover = turn_after(t, ish)
        img, opp = (p, a) if mover == PROGRAM else (a, p)
        nxt = next_action(img, ish, mover, t, fuel)
        if nxt == UNKNOWN_FUEL:
            return ComposeReport(None, False, note="next move ran out of fuel")
        if nxt != SILENT:
            m = has_trace(opp, ish, other(mover), t + (nxt,), fuel)
            if m.yes:
                raise PreconditionUnmet("trace can be extended by a shared action")
            if m.unknown:
                return ComposeReport(None, False, note="extension check ran out of fuel")
    # a silent mover spent at most `fuel` steps, so the linked run cannot halt within `fuel`
    budget = 2 * fuel + len(t) + 1 if ticked else fuel
    res = mrun(link_images(a, p), budget)
    return ComposeReport(isinstance(res, Halted) == ticked, ticked, res)


# --------------------------------------------------------------------------
# text format


def _fmt_regs(regs) -> str:
    return " ".join(f"{n}={v}" for n, v in zip(REG_NAMES, regs))


def format_action(act: ExtAction) -> str:
    if act.kind == TICK:
        return f"{act.direction} TICK"
    head = f"{act.direction} CALL {act.target[0]}.{act.target[1]}" if act.kind == CALL else f"{act.direction} RET"
    return f"{head} {_fmt_regs(act.regs)}"


def format_trace(t) -> str:
    return "".join(format_action(a) + "\n" for a in t)


def format_fine(fine) -> str:
    out = []
    for ev in fine:
        if ev.internal:
            out.append(("i> " if ev.action.kind == CALL else "i< ") + format_action(ev.action))
        else:
            out.append(format_action(ev.action))
    return "".join(line + "\n" for line in out)


_ACT_RE = re.compile(r"^(?P<dir>[!?])\s+(?P<kind>CALL|RET|TICK)(?:\s+(?P<c>\d+)\.(?P<p>\d+))?(?P<regs>.*)$")


def parse_action(line: str) -> ExtAction:
    m = _ACT_RE.match(line.strip())
    if not m:
        raise MalformedTrace(f"cannot parse action {line!r}")
    d, kind = m["dir"], m["kind"]
    if kind == "TICK":
        if m["c"] or m["regs"].strip():
            raise MalformedTrace(f"a tick takes no operands: {line!r}")
        return tick(d)
    regs = dict.fromkeys(REG_NAMES, 0)
    for item in m["regs"].split():
        k, _, v = item.partition("=")
        if k not in regs or not re.fullmatch(r"-?\d+", v):
            raise MalformedTrace(f"bad register assignment {item!r}")
        regs[k] = int(v)
    vals = tuple(regs[n] for n in REG_NAMES)
    if kind == "CALL":
        if m["c"] is None:
            raise MalformedTrace(f"call without a target: {line!r}")
        return call_act(d, int(m["c"]), int(m["p"]), vals)
    if m["c"] is not None:
        raise MalformedTrace(f"return takes no target: {line!r}")
    return ret_act(d, vals)


def _lines(text: str):
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            yield line


def parse_trace(text: str) -> Trace:
    return tuple(parse_action(line) for line in _lines(text))


def parse_fine(text: str) -> FineTrace:
    out = []
    for line in _lines(text):
        if line.startswith(("i>", "i<")):
            ev = FineEvent(parse_action(line[2:]), internal=True)
            if (ev.action.kind == CALL) != (line[1] == ">"):
                raise MalformedTrace(f"direction marker does not match the action: {line!r}")
            out.append(ev)
        else:
            out.append(FineEvent(parse_action(line)))
    return tuple(out)


def accepted_prefix(image: Image, s, own: str, t, fuel: int) -> tuple[int, Membership]:
    """Length of the longest prefix of ``t`` in the trace set, in a single replay.

    The membership describes why the next action was refused (``YES`` when
    the whole trace is accepted).
    """
    # replaying a prefix is a prefix of replaying the whole trace, so the
    # first refused action of one full replay gives the answer
    rep, m = _replay(image, s, own, tuple(t), fuel)
    return (len(t), m) if m.yes else (m.at, m)
