import random

import pytest

from scclab.compiler import NameIndex, compile_program
from scclab.gen import GenConfig, gen_lowlevel_attacker, gen_program_of_shape, gen_shape, split_shape
from scclab.machine import Halted, Image, MFuelExhausted
from scclab.syntax import parse_program, parse_shape
from scclab.traces import (
    CONTEXT, PROGRAM, ComposeReport, MalformedTrace, NotOwnTurn, PreconditionUnmet, ShapeMismatch, SILENT,
    call_act, canonicalize_action, canonicalize_trace, compose_check, context_has_trace, decompose,
    decompose_fine, erase, format_fine, format_trace, is_canonical, ishape, next_context_action,
    next_program_action, parse_action, parse_fine, parse_trace, program_has_trace, ret_act, tick,
)

FUEL = 20000
Z = (0,) * 5


def build(shape_text, prog_text, ctx_text):
    s = parse_shape(shape_text)
    idx = NameIndex.from_shape(s)
    return s, compile_program(parse_program(prog_text), idx), compile_program(parse_program(ctx_text), idx), idx


SOLO = "shape { Main : { export main } ; }"
SOLO_EXIT = "component Main { export main ; buffer 1 ; proc main(x) = exit ; }"

TWO = """shape {
  Main : { import C.f ; export g, main } ;
  C : { import Main.g ; export f } compromised ;
}"""
MAIN_CALLS = ("component Main { import C.f ; export g, main ; buffer 1 ;"
              " proc main(x) = C.f(7) ; proc g(x) = x + 1 ; }")
C_HALTS = "component C { import Main.g ; export f ; buffer 1 ; proc f(x) = exit ; }"


def test_exit_main_gives_program_tick():
    s, p, a, _ = build(SOLO, SOLO_EXIT, "")
    t, res = decompose(a, p, s, FUEL)
    assert t == (tick(PROGRAM),) and isinstance(res, Halted)
    assert program_has_trace(p, s, (), FUEL).yes
    assert program_has_trace(p, s, t, FUEL).yes
    assert next_program_action(p, s, (), FUEL) == tick(PROGRAM)


def test_call_then_context_halts():
    s, p, a, idx = build(TWO, MAIN_CALLS, C_HALTS)
    t, res = decompose(a, p, s, FUEL)
    assert isinstance(res, Halted)
    assert len(t) == 2 and t[1] == tick(CONTEXT)
    first = t[0]
    assert first.direction == PROGRAM and first.target == (idx.cidx("C"), idx.pidx("C", "f"))
    assert first.com == 7
    assert next_program_action(p, s, (), FUEL) == first
    assert program_has_trace(p, s, t, FUEL).yes and context_has_trace(a, s, t, FUEL).yes


def test_diverging_link():
    s, p, a, _ = build(SOLO, "component Main { export main ; buffer 1 ; proc main(x) = Main.main(x) ; }", "")
    t, res = decompose(a, p, s, 500)
    assert t == () and isinstance(res, MFuelExhausted)
    assert next_program_action(p, s, (), 500) == SILENT


def test_context_move_outside_the_interfaces_is_refused():
    s, p, a, idx = build(TWO, MAIN_CALLS, C_HALTS)
    t, _ = decompose(a, p, s, FUEL)
    bogus = call_act(CONTEXT, idx.cidx("Main"), idx.pidx("Main", "main"), (0,) * 6)
    assert program_has_trace(p, s, t[:1] + (bogus,), FUEL).no
    legal = call_act(CONTEXT, idx.cidx("Main"), idx.pidx("Main", "g"), (4,) + Z)
    assert program_has_trace(p, s, t[:1] + (legal,), FUEL).yes
    assert next_program_action(p, s, t[:1] + (legal,), FUEL) == ret_act(PROGRAM, (5,) + Z)


def test_program_move_outside_the_exports_is_refused_by_the_context():
    s, p, a, idx = build(TWO, MAIN_CALLS, C_HALTS)
    bogus = call_act(PROGRAM, idx.cidx("C"), 3, (0,) * 6)
    assert context_has_trace(a, s, (bogus,), FUEL).no
    assert context_has_trace(a, s, (), FUEL).yes


def test_turn_errors():
    s, p, a, _ = build(TWO, MAIN_CALLS, C_HALTS)
    with pytest.raises(NotOwnTurn):
        next_context_action(a, s, (), FUEL)


def test_shape_mismatch():
    s, p, a, _ = build(TWO, MAIN_CALLS, C_HALTS)
    with pytest.raises(ShapeMismatch):
        decompose(p, a, s, FUEL)


def test_canonicalization_examples():
    act = call_act(CONTEXT, 1, 0, (7, 0, 0, 9, 0, 0))
    assert canonicalize_action(act) == call_act(CONTEXT, 1, 0, (7,) + Z)
    assert canonicalize_action(tick(CONTEXT)) == tick(CONTEXT)
    mine = ret_act(PROGRAM, (1, 0, 0, 5, 0, 0))
    t = (act, mine)
    assert canonicalize_trace(t) == (canonicalize_action(act), mine)
    assert canonicalize_trace(canonicalize_trace(t)) == canonicalize_trace(t)
    assert not is_canonical(t) and is_canonical(canonicalize_trace(t))


def test_compose_examples():
    s, p, a, _ = build(SOLO, SOLO_EXIT, "")
    rep = compose_check(p, a, s, (tick(PROGRAM),), FUEL)
    assert rep.consistent and isinstance(rep.result, Halted)
    s, p, a, _ = build(SOLO, "component Main { export main ; buffer 1 ; proc main(x) = Main.main(x) ; }", "")
    rep = compose_check(p, a, s, (), 300)
    assert rep.consistent and isinstance(rep.result, MFuelExhausted)
    s, p, a, _ = build(SOLO, SOLO_EXIT, "")
    with pytest.raises(PreconditionUnmet):
        compose_check(p, a, s, (), FUEL)


THREE = """shape {
  Main : { import D.h ; export main } compromised ;
  D : { import P.f ; export h } compromised ;
  P : { export f } ;
}"""


def test_fine_trace_records_internal_hops():
    s, p, a, idx = build(THREE,
                         "component P { export f ; buffer 1 ; proc f(x) = x * 2 ; }",
                         "component Main { import D.h ; export main ; buffer 1 ; proc main(x) = D.h(5) ; }"
                         "component D { import P.f ; export h ; buffer 1 ; proc h(x) = P.f(x) + 1 ; }")
    fine, res = decompose_fine(a, p, s, FUEL)
    t, _ = decompose(a, p, s, FUEL)
    assert erase(fine) == t
    assert fine[0].internal and fine[0].action.target == (idx.cidx("D"), idx.pidx("D", "h"))
    assert not fine[1].internal and fine[1].action.com == 5
    assert parse_fine(format_fine(fine)) == fine
    # with one compartment per side there is nothing internal
    s, p, a, _ = build(TWO, MAIN_CALLS, C_HALTS)
    fine, _ = decompose_fine(a, p, s, FUEL)
    assert not any(ev.internal for ev in fine)


def test_text_format():
    act = parse_action("! CALL 1.2 com=3 ra=4 sp=5 t1=6 t2=7 t3=-8")
    assert act == call_act(PROGRAM, 1, 2, (3, 4, 5, 6, 7, -8))
    assert parse_action("? RET com=9") == ret_act(CONTEXT, (9,) + Z)
    assert parse_trace("! TICK  # done\n\n") == (tick(PROGRAM),)
    for bad in ("! CALL com=1", "? RET 1.2 com=1", "! TICK com=1", "! JUMP", "? RET bogus=1", "! RET com=x"):
        with pytest.raises(MalformedTrace):
            parse_action(bad)
    with pytest.raises(MalformedTrace):
        parse_fine("i< CALL 1.0 com=0")


def _scenarios(n, seed):
    rng = random.Random(seed)
    cfg = GenConfig()
    for _ in range(n):
        s = split_shape(rng, gen_shape(cfg, rng, min_components=2))
        idx = NameIndex.from_shape(s)
        P = gen_program_of_shape(cfg, s, "program", rng)
        _, a, _ = gen_lowlevel_attacker(cfg, s, rng)
        yield s, compile_program(P, idx), a


def test_prefix_closure_and_determinism():
    for s, p, a in _scenarios(40, 21):
        t, res = decompose(a, p, s, 4000)
        ish = ishape(s)
        for k in range(len(t) + 1):
            assert program_has_trace(p, ish, t[:k], 4000).yes
            assert context_has_trace(a, ish, t[:k], 4000).yes
        if t and t[0].direction == PROGRAM:
            assert next_program_action(p, ish, (), 4000) == next_program_action(p, ish, (), 4000) == t[0]
        assert format_trace(t) == format_trace(parse_trace(format_trace(t)))
