"""The compartmentalizing distinguishability game, played constructively.

Given two programs of the same shape and a low-level context that tells
their compilations apart, build a fully defined source context that
tells the source programs apart:

1. orient the pair so that the context linked with the first program halts;
2. record that run's trace and find its longest prefix the second program
   also has; the next action is a program move only the first program makes;
3. canonicalize the fine-grained prefix and back-translate it together
   with that move;
4. check at source level that the new context terminates with one
   program and runs out of fuel with the other.
"""

from __future__ import annotations

from dataclasses import dataclass

from .backtranslate import BacktransInput, backtranslate
from .compiler import NameIndex, compile_program
from .gen import GenConfig
from .interp import (
    CounterexampleFound,
    FuelExhausted,
    Terminated,
    check_fully_defined_bounded,
    run,
)
from .lang import PartialProgram, Shape, link
from .machine import Halted, Image, link_images, mrun
from .traces import (
    PROGRAM,
    accepted_prefix,
    canonicalize_fine,
    decompose,
    decompose_fine,
    ishape,
    program_has_trace,
)


class GameFailure(Exception):
    """The constructed context does not do its job: a real counterexample."""

    def __init__(self, msg: str, **evidence):
        super().__init__(msg)
        self.evidence = evidence


@dataclass
class Distinguished:
    context: PartialProgram
    runs: tuple          # (run(A[P]), run(A[Q])) in the caller's order
    gamma1: object = None
    prefix_len: int = 0
    swapped: bool = False


@dataclass
class NotDistinguishedLowLevel:
    results: tuple


@dataclass
class UnknownFuel:
    reason: str


GameOutcome = Distinguished | NotDistinguishedLowLevel | UnknownFuel


def _fine_prefix(fine, k: int):
    out, seen = [], 0
    for ev in fine:
        if not ev.internal:
            if seen == k:
                break
            seen += 1
        out.append(ev)
    return tuple(out)


def scc_game(P: PartialProgram, Q: PartialProgram, a: Image, s: Shape, cfg: GenConfig,
             definedness_trials: int = 20, confirm: int = 4) -> GameOutcome:
    index = NameIndex.from_shape(s)
    ish = ishape(s, index)
    p, q = compile_program(P, index), compile_program(Q, index)
    ft, fs = cfg.target_fuel, cfg.fuel_source
    rp, rq = mrun(link_images(a, p), ft), mrun(link_images(a, q), ft)
    if isinstance(rp, Halted) == isinstance(rq, Halted):
        return NotDistinguishedLowLevel((rp, rq))
    swapped = isinstance(rq, Halted)
    if swapped:
        P, Q, p, q = Q, P, q, p
    # make sure the silent side is not merely slow
    if isinstance(mrun(link_images(a, q), confirm * ft), Halted):
        return NotDistinguishedLowLevel((rp, rq))

    ti, res = decompose(a, p, ish, ft)
    fine, _ = decompose_fine(a, p, ish, ft)
    k, why = accepted_prefix(q, ish, PROGRAM, ti, ft)
    if why.unknown and ti[k].direction != PROGRAM:
        return UnknownFuel(f"replaying the second program ran out of fuel at action {k}")
    # otherwise a silent second program refuses the first program's next move
    if k == len(ti):
        return UnknownFuel("the second program accepts the whole halting trace")
    gamma1 = ti[k]
    if gamma1.direction != PROGRAM:
        raise GameFailure("the first refused action is a context move", trace=ti, at=k)
    inp = BacktransInput(canonicalize_fine(_fine_prefix(fine, k)), gamma1, s)
    A = backtranslate(inp, index).context

    run_p, run_q = run(link(A, P), fs), run(link(A, Q), fs)
    if isinstance(run_p, FuelExhausted):
        run_p = run(link(A, P), confirm * fs)
        if isinstance(run_p, FuelExhausted):
            return UnknownFuel("the back-translated context did not terminate within fuel")
    if not isinstance(run_p, Terminated):
        raise GameFailure("the back-translated context is blamed or stuck", context=A, run=run_p)
    if not isinstance(run_q, FuelExhausted):
        if program_has_trace(q, ish, ti[:k + 1], confirm * ft).yes:
            return UnknownFuel("the second program makes the same move with more fuel")
        raise GameFailure("the back-translated context does not distinguish", context=A, runs=(run_p, run_q))
    verdict = check_fully_defined_bounded(A, s, definedness_trials, fs, seed=cfg.seed, side="context")
    if isinstance(verdict, CounterexampleFound):
        raise GameFailure("the back-translated context is not fully defined", context=A, witness=verdict)
    runs = (run_q, run_p) if swapped else (run_p, run_q)
    return Distinguished(A, runs, gamma1, k, swapped)
