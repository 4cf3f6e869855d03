import pytest

from scclab import lang
from scclab.lang import (
    Call, ComponentDef, Interface, IntLit, PartialProgram, Shape, check_component_wf, check_shape_wf,
    has_shape_context, has_shape_program, link, partition,
)
from conftest import prog


def comp(name, exports=(), imports=(), buffers=(1,), **procs):
    return ComponentDef(name, Interface(frozenset(exports), frozenset(imports)), buffers, procs)


def test_missing_export():
    assert check_component_wf(comp("C", exports={"f"})) == [lang.MissingExport("f")]


def test_unimported_call():
    c = comp("C", exports={"f"}, f=Call("D", "g", IntLit(0)))
    assert check_component_wf(c) == [lang.UnimportedCall("D", "g")]


def test_well_formed_component():
    assert check_component_wf(comp("C", exports={"f"}, f=IntLit(3))) == []


def test_buffer_rules():
    assert lang.NoBuffers() in check_component_wf(comp("C", buffers=()))
    assert lang.BadBufferSize(0, 0) in check_component_wf(comp("C", buffers=(0,)))
    assert lang.UnknownBuffer("f", 2) in check_component_wf(
        comp("C", exports={"f"}, f=lang.Read(2, IntLit(0))))


def test_self_import_and_unknown_local_procedure():
    c = comp("C", exports={"f"}, imports={("C", "f")}, f=Call("C", "nope", IntLit(0)))
    v = check_component_wf(c)
    assert lang.SelfImport("C", "f") in v and lang.UnknownProcedure("nope") in v


def test_shape_import_from_unknown():
    s = Shape({"Main": Interface({"main"}, {("C1", "f")})}, frozenset())
    assert check_shape_wf(s) == [lang.ImportFromUnknown("Main", "C1", "f")]


def test_shape_import_not_exported():
    s = Shape({"Main": Interface({"main"}, {("C1", "f")}), "C1": Interface({"g"})}, frozenset())
    assert check_shape_wf(s) == [lang.ImportNotExported("Main", "C1", "f")]


def test_shape_mutual_imports_ok():
    s = Shape({"Main": Interface({"main"}, {("C1", "f")}), "C1": Interface({"f"}, {("Main", "main")})},
              frozenset({"Main"}))
    assert check_shape_wf(s) == []


def test_shape_needs_main_and_known_uncompromised():
    s = Shape({"C1": Interface({"f"})}, frozenset({"Ghost"}))
    v = check_shape_wf(s)
    assert lang.MissingMain() in v and lang.UnknownUncompromised("Ghost") in v


W = prog("""
component Main { import C1.f ; export main ; buffer 1 ; proc main(x) = C1.f(x) ; }
component C1 { export f ; buffer 2 ; proc f(x) = x + 1 ; }
component C2 { export g ; buffer 1 ; proc g(x) = 0 ; }
""")


def test_shape_judgments():
    A, P, s = partition(W, {"C2"})
    assert has_shape_program(P, s) and has_shape_context(A, s)
    assert not has_shape_program(W, s)
    assert not has_shape_context(PartialProgram(), s)
    lean = comp("C1", exports=set(), buffers=(2,))
    assert not has_shape_program(PartialProgram({**P.defs, "C1": lean}), s)


def test_whole_program_is_a_context_of_the_empty_split():
    _, _, s = partition(W, W.names)
    assert has_shape_context(W, s)


def test_link():
    a = PartialProgram({"C1": W.defs["C1"]})
    p = PartialProgram({"Main": W.defs["Main"]})
    assert link(a, p).names == {"Main", "C1"}
    assert link(PartialProgram(), p) == p
    with pytest.raises(lang.OverlapError):
        link(p, p)


def test_partition_fig1_style():
    names = [f"C{i}" for i in range(1, 6)]
    defs = [comp(n, exports={"f"}, f=IntLit(0)) for n in names] + [comp("Main", exports={"main"}, main=IntLit(0))]
    W5 = PartialProgram.of(defs)
    A, P, s = partition(W5, {"C2", "C4", "C5"})
    assert A.names == {"C2", "C4", "C5"} and P.names == {"Main", "C1", "C3"}
    assert s.compromised == A.names
    assert partition(W5, set())[1] == W5
    assert partition(W5, W5.names)[1] == PartialProgram()
    with pytest.raises(lang.UnknownComponent):
        partition(W5, {"Nope"})


def test_partition_link_roundtrip_and_shape_wf():
    from scclab.gen import GenConfig, gen_complete
    import random

    rng = random.Random(1)
    for _ in range(50):
        Wg, _ = gen_complete(GenConfig(), rng)
        sub = {n for n in Wg.names if rng.random() < 0.5}
        A, P, s = partition(Wg, sub)
        assert link(A, P) == Wg
        assert check_shape_wf(s) == []
        assert set(link(A, P).defs) == set(s.interfaces)


def test_generated_shapes_are_well_formed():
    from scclab.gen import GenConfig, gen_shape
    import random

    rng = random.Random(2)
    for _ in range(200):
        assert check_shape_wf(gen_shape(GenConfig(), rng)) == []


def test_duplicate_definition_rejected():
    with pytest.raises(lang.OverlapError):
        PartialProgram.of([comp("C"), comp("C")])
