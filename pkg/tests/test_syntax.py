import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scclab.gen import GenConfig, gen_complete, gen_shape
from scclab.lang import Binop, Call, IntLit, Read, Write
from scclab.syntax import (
    ParseError, format_expr, format_program, format_shape, parse_expr, parse_program, parse_shape,
)


@settings(max_examples=150)
@given(st.integers(0, 2**32), st.sampled_from(["defined", "wild"]))
def test_program_print_parse_roundtrip(seed, mode):
    W, _ = gen_complete(GenConfig(), random.Random(seed), mode=mode)
    assert parse_program(format_program(W)) == W


@settings(max_examples=150)
@given(st.integers(0, 2**32))
def test_shape_print_parse_roundtrip(seed):
    s = gen_shape(GenConfig(), random.Random(seed))
    assert parse_shape(format_shape(s)) == s


def test_parameter_is_sugar_for_first_cell():
    assert parse_expr("x + 1", param="x") == Binop("add", Read(0, IntLit(0)), IntLit(1))


def test_parameterless_procedure():
    P = parse_program("component Main { export main ; buffer 1 ; proc main() = 4 ; }")
    assert P.defs["Main"].procedures["main"] == IntLit(4)


def test_precedence_and_sequencing():
    e = parse_expr("b0[0] := 1 ; 2 + 3 * 4")
    assert e == Binop("seq", Write(0, IntLit(0), IntLit(1)),
                      Binop("add", IntLit(2), Binop("mul", IntLit(3), IntLit(4))))
    assert parse_expr(format_expr(e)) == e


def test_negative_literals_and_calls():
    e = parse_expr("C.f(-3) - -2")
    assert e == Binop("sub", Call("C", "f", IntLit(-3)), IntLit(-2))


@pytest.mark.parametrize("bad", ["component Main {", "component Main { proc main(x) = ; }",
                                 "component Main { buffer x ; }", "shape { Main : }"])
def test_parse_errors(bad):
    with pytest.raises(ParseError):
        (parse_shape if bad.startswith("shape") else parse_program)(bad)
