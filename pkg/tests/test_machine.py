import os
import random
import subprocess
import sys

import pytest

from scclab import _kernel, isa, machine
from scclab.compiler import compile_whole
from scclab.gen import GenConfig, gen_complete, gen_lowlevel_attacker, gen_program_of_shape, gen_shape, split_shape
from scclab.compiler import NameIndex, compile_program
from scclab.machine import (
    Halted, Image, MachineState, MFuelExhausted, Runner, Stepped, Stuck, disassemble, format_image,
    init_state, link_images, mrun, mrun_reference, mstep, parse_image,
)


def image(code, comp=0, entry=0, psi=frozenset(), extra=None):
    img = Image({comp: frozenset(psi)}, {comp: {0: entry}},
                {comp: {a: isa.encode(i) for a, i in enumerate(code)}}, {comp: "Main"})
    for c, (code2, psi2) in (extra or {}).items():
        img.psi[c] = frozenset(psi2)
        img.entry[c] = {0: 0}
        img.mem0[c] = {a: isa.encode(i) for a, i in enumerate(code2)}
        img.names[c] = f"C{c}"
    return img


def state(img, reg=(0,) * 6, pc=0, stack=(), cur=0):
    return MachineState(cur, stack, {c: dict(m) for c, m in img.mem0.items()}, tuple(reg), pc)


def test_call_to_unimported_is_stuck():
    img = image([isa.Call(1, 0)], extra={1: ([isa.Return()], ())})
    assert mstep(img, state(img)) == Stuck("InterfaceViolation", (1, 0))


def test_call_to_imported_pushes_frame():
    img = image([isa.Call(1, 0)], psi={(1, 0)}, extra={1: ([isa.Return()], ())})
    st = mstep(img, state(img)).state
    assert (st.current, st.pc, st.stack) == (1, 0, ((0, 1),))


def test_return_pops():
    img = image([isa.Return()], extra={2: ([isa.Nop()], ())})
    st = mstep(img, state(img, stack=((2, 17),))).state
    assert (st.current, st.pc, st.stack) == (2, 17, ())


def test_bnz_on_zero_falls_through():
    img = image([isa.Bnz(isa.R_T1, 3)])
    assert mstep(img, state(img)).state.pc == 1


def test_jal():
    img = image([isa.Nop()] * 10 + [isa.Jal(isa.R_T1)])
    st = mstep(img, state(img, reg=(0, 0, 0, 40, 0, 0), pc=10)).state
    assert st.reg[isa.R_RA] == 11 and st.pc == 40


def test_unwritten_memory_reads_zero_and_decodes_to_nop():
    img = image([isa.Const(500, isa.R_T1), isa.Load(isa.R_T1, isa.R_COM)])
    r = Runner(img)
    r.run(2)
    assert r.reg[isa.R_COM] == 0
    assert isa.decode(0) == isa.Nop()


def test_negative_address():
    img = image([isa.Const(-1, isa.R_T1), isa.Store(isa.R_T1, isa.R_COM)])
    assert mrun(img, 10) == Halted(2, "NegativeAddress", -1)


def test_init_state():
    img = image([isa.Halt()] * 101, entry=100)
    st = init_state(img)
    assert (st.pc, st.current, st.reg) == (100, 0, (0,) * 6)
    with pytest.raises(machine.MissingMainEntry):
        init_state(Image())


def test_mrun_examples():
    assert mrun(image([isa.Halt()]), 10) == Halted(1)
    loop = image([isa.Const(1, isa.R_T1), isa.Bnz(isa.R_T1, 0)])
    assert mrun(loop, 100) == MFuelExhausted(100)
    from conftest import main_only
    assert isinstance(mrun(compile_whole(main_only("exit")), 100), Halted)


def test_link_errors():
    a = image([isa.Halt()])
    with pytest.raises(machine.OverlapError):
        link_images(a, a)
    b = Image({1: frozenset({(5, 0)})}, {1: {}}, {1: {}}, {1: "X"})
    with pytest.raises(machine.UnresolvedImport):
        link_images(a, b)


def test_image_text_roundtrip():
    rng = random.Random(3)
    for _ in range(30):
        W, _ = gen_complete(GenConfig(), rng)
        img = compile_whole(W)
        assert parse_image(format_image(img)) == img
    with pytest.raises(machine.ImageFormatError):
        parse_image("mem 1 2")
    assert "Halt" in disassemble(image([isa.Halt()]))


# --------------------------------------------------------------------------
# the fast loops against the reference semantics


def _images(n, seed):
    rng = random.Random(seed)
    out = []
    for _ in range(n):
        W, _ = gen_complete(GenConfig(), rng, mode=rng.choice(("defined", "wild")))
        out.append(compile_whole(W))
        s = split_shape(rng, gen_shape(GenConfig(), rng, min_components=2))
        P = gen_program_of_shape(GenConfig(), s, "program", rng)
        _, a, _ = gen_lowlevel_attacker(GenConfig(), s, rng, strategy=rng.choice(("raw", "mutated")))
        out.append(link_images(a, compile_program(P, NameIndex.from_shape(s))))
    return out


def _final(kernel, img, fuel):
    st = init_state(img)
    mem, reg, stack = st.thaw()
    res = kernel.run(mem, reg, stack, img.psi, img.entry, st.current, st.pc, fuel, False, {})
    return res, mem, reg, stack


@pytest.mark.skipif(machine.BACKEND != "cython", reason="compiled kernel not built")
def test_backends_agree():
    from scclab import _vmcore

    for img in _images(60, 11):
        assert _final(_kernel, img, 5000) == _final(_vmcore, img, 5000)


def test_fast_loop_matches_reference():
    for img in _images(40, 12):
        assert mrun(img, 3000) == mrun_reference(img, 3000)


def test_watch_mode_stops_at_transfers():
    for img in _images(20, 13):
        r = Runner(img)
        while r.steps < 2000:
            status, _, _ = r.run(2000 - r.steps, watch=True)
            if status != machine.WATCH:
                break
            assert r.current_instr()[0] in (isa.OP_CALL, isa.OP_RETURN)
            if r.transfer() is not None:
                break


def test_pure_python_fallback_selected_by_environment():
    code = "import scclab.machine as m; print(m.BACKEND)"
    env = {**os.environ, "SCCLAB_PURE_PYTHON": "1"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert out.stdout.strip() == "python"


def test_runaway_products_raise_resource_limit_in_every_loop():
    squaring = image([isa.Const(3, isa.R_T1), isa.Binop("mul", isa.R_T1, isa.R_T1, isa.R_T1),
                      isa.Const(1, isa.R_T2), isa.Bnz(isa.R_T2, -2)])
    with pytest.raises(isa.ResourceLimit):
        mrun(squaring, 10**6)
    with pytest.raises(isa.ResourceLimit):
        mrun_reference(squaring, 10**6)
    st = init_state(squaring)
    mem, reg, stack = st.thaw()
    with pytest.raises(isa.ResourceLimit):
        _kernel.run(mem, reg, stack, squaring.psi, squaring.entry, st.current, st.pc, 10**6, False, {})
