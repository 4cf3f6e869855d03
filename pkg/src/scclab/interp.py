"""Continuation-based small-step interpreter for the source language.

A configuration is ``(current, store, callstack, kont, expr)``.  The
continuation is a cons list ``(frame, rest)`` with ``()`` for the empty
continuation, innermost frame first; the call stack is a cons list of
``((caller, saved_arg, kont), rest)``.  Undefined behaviour is the only
legitimate way to get stuck and is reported as a result, with the
current component blamed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Union

from .isa import checked_mul
from .lang import (
    MAIN_COMPONENT,
    MAIN_PROCEDURE,
    Binop,
    Call,
    Exit,
    Expr,
    If,
    IntLit,
    PartialProgram,
    Read,
    Write,
    link,
    walk,
)


class InterpError(Exception):
    pass


class MissingMain(InterpError):
    pass


class UnsupportedExpr(InterpError):
    pass


class InternalStuck(InterpError):
    """A stuck configuration that is not one of the two undefined-behaviour forms."""


# --------------------------------------------------------------------------
# flat evaluation contexts


@dataclass(frozen=True)
class BinopL:
    op: str
    right: Expr


@dataclass(frozen=True)
class BinopR:
    left: int
    op: str


@dataclass(frozen=True)
class IfGuard:
    then: Expr
    orelse: Expr


@dataclass(frozen=True)
class ReadIdx:
    buf: int


@dataclass(frozen=True)
class WriteIdx:
    buf: int
    value: Expr


@dataclass(frozen=True)
class WriteVal:
    buf: int
    index: int


@dataclass(frozen=True)
class CallArg:
    comp: str
    proc: str


FlatEvalCtx = Union[BinopL, BinopR, IfGuard, ReadIdx, WriteIdx, WriteVal, CallArg]


def kont_frames(k) -> list:
    out = []
    while k:
        frame, k = k
        out.append(frame)
    return out


def kont_of(frames) -> tuple:
    k: tuple = ()
    for f in reversed(list(frames)):
        k = (f, k)
    return k


@dataclass(frozen=True)
class Config:
    current: str
    store: Mapping[tuple, int]
    callstack: tuple
    kont: tuple
    expr: Expr


# --------------------------------------------------------------------------
# step results


@dataclass(frozen=True)
class Step:
    config: Config


@dataclass(frozen=True)
class FinalValue:
    value: int


@dataclass(frozen=True)
class FinalExit:
    pass


@dataclass(frozen=True)
class UBRead:
    comp: str
    buf: int
    index: int


@dataclass(frozen=True)
class UBWrite:
    comp: str
    buf: int
    index: int


StepResult = Union[Step, FinalValue, FinalExit, UBRead, UBWrite]


@dataclass(frozen=True)
class Terminated:
    steps: int
    value: int | None = None  # None when ended by exit


@dataclass(frozen=True)
class FuelExhausted:
    steps: int


@dataclass(frozen=True)
class UndefinedBehavior:
    blamed: str
    steps: int = 0


RunResult = Union[Terminated, FuelExhausted, UndefinedBehavior]


def arith(op: str, a: int, b: int) -> int:
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return checked_mul(a, b)
    if op == "eq":
        return 1 if a == b else 0
    if op == "leq":
        return 1 if a <= b else 0
    if op == "seq":
        return b
    raise InternalStuck(f"unknown operator {op!r}")


# --------------------------------------------------------------------------
# the reduction relation

# raw results of _reduce
_STEP, _VALUE, _EXIT, _UBREAD, _UBWRITE = range(5)


def _reduce(delta, cur, store, sigma, k, e, cow):
    """One reduction.  With ``cow`` set, ``store`` is never mutated."""
    if type(e) is IntLit:
        i = e.value
        if not k:
            if not sigma:
                return _VALUE, i
            (caller, saved, ck), rest = sigma
            if cow:
                store = dict(store)
            store[(caller, 0, 0)] = saved
            return _STEP, (caller, store, rest, ck, e)
        frame, k = k
        t = type(frame)
        if t is BinopL:
            return _STEP, (cur, store, sigma, (BinopR(i, frame.op), k), frame.right)
        if t is BinopR:
            return _STEP, (cur, store, sigma, k, IntLit(arith(frame.op, frame.left, i)))
        if t is IfGuard:
            return _STEP, (cur, store, sigma, k, frame.then if i != 0 else frame.orelse)
        if t is ReadIdx:
            key = (cur, frame.buf, i)
            if key not in store:
                return _UBREAD, key
            return _STEP, (cur, store, sigma, k, IntLit(store[key]))
        if t is WriteIdx:
            return _STEP, (cur, store, sigma, (WriteVal(frame.buf, i), k), frame.value)
        if t is WriteVal:
            key = (cur, frame.buf, frame.index)
            if key not in store:
                return _UBWRITE, key
            if cow:
                store = dict(store)
            store[key] = i
            return _STEP, (cur, store, sigma, k, e)
        if t is CallArg:
            body = delta.get((frame.comp, frame.proc))
            if body is None:
                raise InternalStuck(f"call to undefined procedure {frame.comp}.{frame.proc}")
            saved = store.get((cur, 0, 0))
            if saved is None:
                raise InternalStuck(f"component {cur} has no argument cell")
            if (frame.comp, 0, 0) not in store:
                raise InternalStuck(f"component {frame.comp} has no argument cell")
            if cow:
                store = dict(store)
            store[(frame.comp, 0, 0)] = i
            return _STEP, (frame.comp, store, ((cur, saved, k), sigma), (), body)
        raise InternalStuck(f"unknown continuation frame {frame!r}")
    t = type(e)
    if t is Binop:
        return _STEP, (cur, store, sigma, (BinopL(e.op, e.right), k), e.left)
    if t is If:
        return _STEP, (cur, store, sigma, (IfGuard(e.then, e.orelse), k), e.cond)
    if t is Read:
        return _STEP, (cur, store, sigma, (ReadIdx(e.buf), k), e.index)
    if t is Write:
        return _STEP, (cur, store, sigma, (WriteIdx(e.buf, e.value), k), e.index)
    if t is Call:
        return _STEP, (cur, store, sigma, (CallArg(e.comp, e.proc), k), e.arg)
    if t is Exit:
        return _EXIT, None
    raise InternalStuck(f"cannot reduce {e!r}")


def step(delta: Mapping, cfg: Config) -> StepResult:
    """Pure single step: ``cfg`` and its store are left untouched."""
    tag, payload = _reduce(delta, cfg.current, cfg.store, cfg.callstack, cfg.kont, cfg.expr, True)
    if tag == _STEP:
        return Step(Config(*payload))
    if tag == _VALUE:
        return FinalValue(payload)
    if tag == _EXIT:
        return FinalExit()
    if tag == _UBREAD:
        return UBRead(*payload)
    return UBWrite(*payload)


def initial_store(W: PartialProgram) -> dict:
    return {(c, b, i): 0 for c, d in W.defs.items() for b, size in enumerate(d.buffers) for i in range(size)}


def init_config(W: PartialProgram) -> Config:
    main = W.defs.get(MAIN_COMPONENT)
    if main is None or MAIN_PROCEDURE not in main.procedures:
        raise MissingMain(f"{MAIN_COMPONENT}.{MAIN_PROCEDURE} is not defined")
    store = initial_store(W)
    store[(MAIN_COMPONENT, 0, 0)] = 0
    return Config(MAIN_COMPONENT, store, (), (), main.procedures[MAIN_PROCEDURE])


def run(W: PartialProgram, fuel: int) -> RunResult:
    """Run ``W`` from its initial configuration for at most ``fuel`` steps."""
    cfg = init_config(W)
    delta = W.procedures()
    cur, store, sigma, k, e = cfg.current, dict(cfg.store), cfg.callstack, cfg.kont, cfg.expr
    reduce = _reduce
    for n in range(1, fuel + 1):
        tag, payload = reduce(delta, cur, store, sigma, k, e, False)
        if tag == _STEP:
            cur, store, sigma, k, e = payload
        elif tag == _VALUE:
            return Terminated(n, payload)
        elif tag == _EXIT:
            return Terminated(n)
        else:
            return UndefinedBehavior(payload[0], n)
    return FuelExhausted(fuel)


def run_configs(W: PartialProgram, fuel: int):
    """Yield ``(config, result)`` for every step of a run, using the pure ``step``."""
    cfg = init_config(W)
    delta = W.procedures()
    for _ in range(fuel):
        res = step(delta, cfg)
        yield cfg, res
        if not isinstance(res, Step):
            return
        cfg = res.config


def eval_expr_closed(e: Expr) -> int:
    for node in walk(e):
        if isinstance(node, (Read, Write, Call, Exit)):
            raise UnsupportedExpr(f"{type(node).__name__} needs a program context")
    k: tuple = ()
    while True:
        tag, payload = _reduce({}, "_", {}, (), k, e, True)
        if tag == _VALUE:
            return payload
        _, _, _, k, e = payload


# --------------------------------------------------------------------------
# configuration well-formedness (used by the type-safety property)


def config_wf_violations(W: PartialProgram, cfg: Config, store_keys=None) -> list[str]:
    out = []
    if store_keys is None:
        store_keys = set(initial_store(W))
    if set(cfg.store) != store_keys:
        out.append("store domain differs from declared buffers")
    if cfg.current not in W.defs:
        out.append(f"current component {cfg.current} undefined")
    sigma = cfg.callstack
    while sigma:
        (comp, saved, _), sigma = sigma
        if comp not in W.defs:
            out.append(f"call-stack frame for undefined component {comp}")
        if not isinstance(saved, int):
            out.append("call-stack frame with non-integer saved argument")
    for v in cfg.store.values():
        if not isinstance(v, int):
            out.append("non-integer store value")
            break
    return out


class WfMonitor:
    """Incremental ``config_wf_violations`` along one run.

    Stores are only rechecked when the store object changes, and call-stack
    cells only the first time they are seen (the stack is a persistent
    cons list, so older cells never change).
    """

    def __init__(self, W: PartialProgram):
        self.W = W
        self.keys = set(initial_store(W))
        self._store = None
        self._frames: dict = {}   # id -> cell, kept alive so ids stay unique

    def violations(self, cfg: Config) -> list[str]:
        out = []
        if cfg.store is not self._store:
            if cfg.store.keys() != self.keys:
                out.append("store domain differs from declared buffers")
            if not all(isinstance(v, int) for v in cfg.store.values()):
                out.append("non-integer store value")
            self._store = cfg.store
        if cfg.current not in self.W.defs:
            out.append(f"current component {cfg.current} undefined")
        sigma = cfg.callstack
        while sigma and id(sigma) not in self._frames:
            (comp, saved, _), rest = sigma
            if comp not in self.W.defs:
                out.append(f"call-stack frame for undefined component {comp}")
            if not isinstance(saved, int):
                out.append("call-stack frame with non-integer saved argument")
            self._frames[id(sigma)] = sigma
            sigma = rest
        return out


def classify(res: StepResult) -> str:
    """Name the partial-type-safety case a step result falls into."""
    if isinstance(res, Step):
        return "step"
    if isinstance(res, (FinalValue, FinalExit)):
        return "final"
    if isinstance(res, UBRead):
        return "ub-read"
    if isinstance(res, UBWrite):
        return "ub-write"
    raise InternalStuck(f"unclassifiable result {res!r}")


# --------------------------------------------------------------------------
# bounded full-definedness testing


@dataclass(frozen=True)
class NoCounterexampleFound:
    trials: int


@dataclass(frozen=True)
class CounterexampleFound:
    opponent: PartialProgram
    blamed: str
    trial: int


def check_fully_defined_bounded(P: PartialProgram, s, trials: int, fuel: int, seed: int = 0,
                                side: str = "program"):
    """Search for an opponent of the dual shape that makes ``P`` be blamed for UB.

    The first trials use systematic probes that call every procedure the
    opponent imports from ``P`` with small arguments; the rest are random
    opponents.  Finding nothing is evidence, not proof.
    """
    import random

    from .gen import GenConfig, gen_program_of_shape, probe_args, probe_context

    mine = P.names
    opp_side = "context" if side == "program" else "program"
    candidates = []
    for v in probe_args(P):
        candidates.append(lambda v=v: probe_context(s, v, side=opp_side))
        candidates.append(lambda v=v: probe_context(s, v, side=opp_side, then_exit=True))
    rng = random.Random(seed)
    cfg = GenConfig(seed=seed, max_expr_depth=4)
    for i in range(trials):
        if i < len(candidates):
            A = candidates[i]()
        else:
            A = gen_program_of_shape(cfg, s, opp_side, rng, rng.choice(("defined", "wild")))
        res = run(link(A, P), fuel)
        if isinstance(res, UndefinedBehavior) and res.blamed in mine:
            return CounterexampleFound(A, res.blamed, i)
    return NoCounterexampleFound(trials)
