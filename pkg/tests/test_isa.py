import pytest
from hypothesis import given
from hypothesis import strategies as st

from scclab import isa
from scclab.isa import decode, decode_raw, encode

regs = st.integers(0, isa.NREGS - 1)
imms = st.integers(-10**12, 10**12)

instrs = st.one_of(
    st.just(isa.Nop()), st.just(isa.Return()), st.just(isa.Halt()),
    st.builds(isa.Const, imms, regs),
    st.builds(isa.Mov, regs, regs),
    st.builds(isa.Load, regs, regs),
    st.builds(isa.Store, regs, regs),
    st.builds(isa.Jump, regs),
    st.builds(isa.Jal, regs),
    st.builds(isa.Call, st.integers(0, 10**6), st.integers(0, 10**6)),
    st.builds(isa.Binop, st.sampled_from(isa.BOPS), regs, regs, regs),
    st.builds(isa.Bnz, regs, imms),
)


def test_halt_opcode():
    assert encode(isa.Halt()) == 11
    assert decode(11) == isa.Halt()


def test_opcode_out_of_range_is_undefined():
    assert decode(12) is None
    assert decode_raw(12) is None


@given(instrs)
def test_decode_inverts_encode(i):
    w = encode(i)
    assert w >= 0
    assert decode(w) == i


@given(instrs, instrs)
def test_encode_is_injective(i, j):
    if i != j:
        assert encode(i) != encode(j)


@given(st.integers(0, 10**9))
def test_defined_words_reencode_to_themselves(w):
    i = decode(w)
    if i is not None:
        assert encode(i) == w


def test_small_fields_exhaustively():
    seen = set()
    for r1 in range(isa.NREGS):
        for r2 in range(isa.NREGS):
            for i in (isa.Mov(r1, r2), isa.Load(r1, r2), isa.Store(r1, r2), isa.Bnz(r1, r2 - 3),
                      isa.Const(r2 - 3, r1), isa.Call(r1, r2)):
                w = encode(i)
                assert decode(w) == i and w not in seen
                seen.add(w)


@pytest.mark.parametrize("bad", [isa.Const(1, 6), isa.Mov(-1, 0), isa.Binop("div", 0, 0, 0), isa.Call(-1, 0), "Halt"])
def test_encode_rejects_malformed(bad):
    with pytest.raises(isa.EncodeError):
        encode(bad)


@given(st.integers(-10**6, 10**6))
def test_zigzag_roundtrip(n):
    assert isa.unzigzag(isa.zigzag(n)) == n


@given(st.integers(0, 5000), st.integers(0, 5000))
def test_cantor_roundtrip(a, b):
    assert isa.uncantor(isa.cantor(a, b)) == (a, b)


def test_bop_semantics():
    ap = isa.bop_apply
    assert [ap(isa.BOPS.index(o), 7, 3) for o in isa.BOPS] == [10, 4, 21, 0, 0]
    assert ap(isa.BOPS.index("leq"), 3, 3) == 1 and ap(isa.BOPS.index("eq"), 2, 2) == 1
