"""Fixed scenarios for the back-translation game, checked against golden contexts."""

import pytest

from scclab.compiler import NameIndex, compile_program
from scclab.game import Distinguished, NotDistinguishedLowLevel, scc_game
from scclab.gen import GenConfig
from scclab.interp import FuelExhausted, Terminated, UndefinedBehavior, check_fully_defined_bounded, CounterexampleFound, run
from scclab.lang import link
from scclab.syntax import format_program, parse_program, parse_shape
from scclab.traces import PROGRAM

CFG = GenConfig(fuel_source=3000)

RET_SHAPE = "shape { Main : { import U.f ; export main } compromised ; U : { export f } ; }"
RET_P = "component U { export f ; buffer 1 ; proc f(x) = 1 ; }"
RET_Q = "component U { export f ; buffer 1 ; proc f(x) = 2 ; }"
RET_A = ("component Main { import U.f ; export main ; buffer 1 ;"
         " proc main(x) = if U.f(0) == 1 then exit else Main.main(0) ; }")
RET_GOLD = """component Main {
  import U.f ;
  export main ;
  buffer 4 ;
  proc main() = b0[2] := 1; b0[3] := b0[0]; Main.step(0) ;
  proc spin() = Main.spin(0) ;
  proc step() = b0[1] := b0[1] + 1; if b0[1] <= 1 then b0[3] := U.f(0); b0[2] := 0; Main.step(0) else if (b0[2] == 0) * (b0[3] == 1) then exit else Main.spin(0) ;
}
"""

# the attacker reads outside its one-cell buffer; in the source that is
# undefined, once compiled it reads a fixed code word
OOB_SHAPE = "shape { Main : { import U.f, U.g ; export main } compromised ; U : { export f, g } ; }"
OOB_P = "component U { export f, g ; buffer 2 ; proc f(x) = b0[1] := x ; 0 ; proc g(x) = b0[1] ; }"
OOB_Q = "component U { export f, g ; buffer 2 ; proc f(x) = b0[1] := x + 1 ; 0 ; proc g(x) = b0[1] ; }"
OOB_A = ("component Main { import U.f, U.g ; export main ; buffer 1 ;"
         " proc main(x) = U.f(b0[42]) ; if U.g(0) == b0[42] + (b0[43] * 0) then exit else Main.main(0) ; }")
OOB_GOLD = """component Main {
  import U.f, U.g ;
  export main ;
  buffer 4 ;
  proc main() = b0[2] := 1; b0[3] := b0[0]; Main.step(0) ;
  proc spin() = Main.spin(0) ;
  proc step() = b0[1] := b0[1] + 1; if b0[1] <= 2 then if b0[1] <= 1 then b0[3] := U.f(564); b0[2] := 0; Main.step(0) else (b0[3] := U.g(0); b0[2] := 0; Main.step(0)) else if (b0[2] == 0) * (b0[3] == 564) then exit else Main.spin(0) ;
}
"""

CALL_SHAPE = "shape { Main : { import C.g ; export main } ; C : { export g } compromised ; }"
CALL_P = "component Main { import C.g ; export main ; buffer 1 ; proc main(x) = C.g(1) ; }"
CALL_Q = "component Main { import C.g ; export main ; buffer 1 ; proc main(x) = C.g(2) ; }"
CALL_A = "component C { export g ; buffer 1 ; proc g(x) = if x == 2 then exit else C.g(x) ; }"
CALL_GOLD = """component C {
  export g ;
  buffer 4 ;
  proc g() = b0[2] := 1; b0[3] := b0[0]; C.step(0) ;
  proc spin() = C.spin(0) ;
  proc step() = b0[1] := b0[1] + 1; if (b0[2] == 1) * (b0[3] == 2) then exit else C.spin(0) ;
}
"""

FIXED = {
    "returned-value": (RET_SHAPE, RET_P, RET_Q, RET_A, RET_GOLD, "ret", False),
    "out-of-bounds-read": (OOB_SHAPE, OOB_P, OOB_Q, OOB_A, OOB_GOLD, "ret", False),
    "program-calls-context": (CALL_SHAPE, CALL_P, CALL_Q, CALL_A, CALL_GOLD, "call", True),
}


def _game(shape, P, Q, A, cfg=CFG):
    s = parse_shape(shape)
    a = compile_program(parse_program(A), NameIndex.from_shape(s))
    return s, scc_game(parse_program(P), parse_program(Q), a, s, cfg)


@pytest.mark.parametrize("name", sorted(FIXED))
def test_fixed_scenario(name):
    shape, P, Q, A, gold, kind, swapped = FIXED[name]
    s, out = _game(shape, P, Q, A)
    assert isinstance(out, Distinguished)
    assert format_program(out.context) == gold
    assert out.gamma1.direction == PROGRAM and out.gamma1.kind == kind
    assert out.swapped == swapped
    # independent re-check at the source level
    rp = run(link(out.context, parse_program(P)), CFG.fuel_source)
    rq = run(link(out.context, parse_program(Q)), CFG.fuel_source)
    assert {type(rp), type(rq)} == {Terminated, FuelExhausted}
    v = check_fully_defined_bounded(out.context, s, 50, CFG.fuel_source, seed=0, side="context")
    assert not isinstance(v, CounterexampleFound)
    # the game is a function of its inputs
    assert format_program(_game(shape, P, Q, A)[1].context) == gold


def test_out_of_bounds_attacker_is_undefined_at_source_level():
    W = link(parse_program(OOB_A), parse_program(OOB_P))
    res = run(W, 100)
    assert isinstance(res, UndefinedBehavior) and res.blamed == "Main"


def test_equal_programs_are_not_distinguished():
    _, out = _game(RET_SHAPE, RET_P, RET_P, RET_A)
    assert isinstance(out, NotDistinguishedLowLevel)


def test_attacker_ignoring_the_program():
    A = "component Main { import U.f ; export main ; buffer 1 ; proc main(x) = exit ; }"
    _, out = _game(RET_SHAPE, RET_P, RET_Q, A)
    assert isinstance(out, NotDistinguishedLowLevel)
