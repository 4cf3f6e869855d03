import random

import pytest

from scclab.backtranslate import (
    BUFFER_SIZE, BacktransInput, NonCanonicalTrace, NonReplayableTrace, backtranslate, verify_definability,
)
from scclab.compiler import NameIndex, compile_program
from scclab.interp import CounterexampleFound, check_fully_defined_bounded
from scclab.lang import IntLit, Read, Write, has_shape_context, walk
from scclab.syntax import format_program, parse_program, parse_shape
from scclab.traces import (
    CONTEXT, PROGRAM, canonicalize_fine, context_has_trace, decompose_fine, erase, ishape, parse_action,
    parse_fine, tick,
)

FUEL = 20000

RESP = parse_shape("shape { Main : { import C.g ; export main } ; C : { export g } compromised ; }")
CALLER = parse_shape("shape { Main : { import P.f ; export main } compromised ; P : { export f } ; }")


def _buffer_accesses_are_constant(A):
    for d in A.defs.values():
        size = d.buffers[0]
        for body in d.procedures.values():
            for e in walk(body):
                if isinstance(e, (Read, Write)):
                    if not isinstance(e.index, IntLit) or not 0 <= e.index.value < size:
                        return False
    return True


def test_empty_trace_with_tick_gives_pure_responders():
    out = backtranslate(BacktransInput((), tick(PROGRAM), RESP))
    A = out.context
    assert has_shape_context(A, RESP) and _buffer_accesses_are_constant(A)
    idx = NameIndex.from_shape(RESP)
    a = compile_program(A, idx)
    witness = compile_program(parse_program(
        "component Main { import C.g ; export main ; buffer 1 ; proc main(x) = exit ; }"), idx)
    rep = verify_definability(out, BacktransInput((), tick(PROGRAM), RESP), witness, FUEL)
    assert rep.passed is True and rep.clause2 is None
    assert context_has_trace(a, RESP, (), FUEL).yes


def _caller_input(gamma="! RET com=5"):
    idx = NameIndex.from_shape(CALLER)
    fine = parse_fine(f"? CALL {idx.cidx('P')}.0 com=7")
    return BacktransInput(fine, parse_action(gamma), CALLER), idx


def test_context_owning_main_compares_the_result():
    inp, idx = _caller_input()
    out = backtranslate(inp)
    A = out.context
    assert A.defs["Main"].buffers[0] == BUFFER_SIZE
    assert _buffer_accesses_are_constant(A)
    witness = compile_program(parse_program("component P { export f ; buffer 1 ; proc f(x) = x - 2 ; }"), idx)
    rep = verify_definability(out, inp, witness, FUEL)
    assert rep.witness_ok.yes and rep.clause1.yes and rep.clause2.yes
    assert rep.passed is True
    # any other return value makes the context go silent
    assert all(o in ("rejected", "silent") for _, o in rep.clause3)


def test_exit_swapped_for_a_loop_fails_clause_two():
    inp, idx = _caller_input()
    out = backtranslate(inp)
    text = format_program(out.context)
    assert text.count("exit") == 1
    spin = [p for p in out.context.defs["Main"].procedures if p.startswith("spin")][0]
    out.context = parse_program(text.replace("exit", f"Main.{spin}(0)"))
    witness = compile_program(parse_program("component P { export f ; buffer 1 ; proc f(x) = x - 2 ; }"), idx)
    rep = verify_definability(out, inp, witness, FUEL)
    assert rep.clause1.yes and not rep.clause2.yes
    assert rep.passed is not True


def test_non_canonical_trace_is_rejected():
    idx = NameIndex.from_shape(CALLER)
    fine = parse_fine(f"? CALL {idx.cidx('P')}.0 com=7 t1=3")
    with pytest.raises(NonCanonicalTrace):
        backtranslate(BacktransInput(fine, parse_action("! RET com=5"), CALLER))


def test_unreplayable_trace_is_rejected():
    with pytest.raises(NonReplayableTrace):
        backtranslate(BacktransInput(parse_fine("? RET com=1"), tick(PROGRAM), CALLER))


THREE = parse_shape("""shape {
  Main : { import D.h ; export main } compromised ;
  D : { import P.f ; export h } compromised ;
  P : { export f } ;
}""")


def test_internal_call_routes_through_the_second_component():
    idx = NameIndex.from_shape(THREE)
    p = compile_program(parse_program("component P { export f ; buffer 1 ; proc f(x) = x * 2 ; }"), idx)
    a0 = compile_program(parse_program(
        "component Main { import D.h ; export main ; buffer 1 ; proc main(x) = D.h(5) ; }"
        "component D { import P.f ; export h ; buffer 1 ; proc h(x) = P.f(x) + 1 ; }"), idx)
    fine, _ = decompose_fine(a0, p, THREE, FUEL)
    k = next(i for i, ev in enumerate(fine) if ev.action.direction == PROGRAM and not ev.internal)
    inp = BacktransInput(canonicalize_fine(fine[:k]), fine[k].action, THREE)
    out = backtranslate(inp)
    assert "D" in out.report and any("P.f" in step for step in out.report["D"])
    a = compile_program(out.context, idx)
    replay, _ = decompose_fine(a, p, THREE, FUEL)
    assert canonicalize_fine(replay[:k]) == inp.fine
    assert verify_definability(out, inp, p, FUEL).passed is True


def test_generated_contexts_are_fully_defined():
    inp, idx = _caller_input()
    A = backtranslate(inp).context
    v = check_fully_defined_bounded(A, CALLER, 100, 3000, seed=1, side="context")
    assert not isinstance(v, CounterexampleFound)
