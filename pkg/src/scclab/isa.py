"""Instruction set of the compartmentalized machine and its word encoding.

A word is ``opcode + 16 * payload`` with a non-negative payload.  Register
fields take three bits and must name one of the six registers; signed
immediates are zigzag-coded and ``Call`` targets are Cantor-paired, so the
encoding is a bijection between instructions and defined words.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import isqrt
from typing import Union

NREGS = 6
R_COM, R_RA, R_SP, R_T1, R_T2, R_T3 = range(NREGS)
REG_NAMES = ("com", "ra", "sp", "t1", "t2", "t3")

BOPS = ("add", "sub", "mul", "eq", "leq")

(OP_NOP, OP_CONST, OP_MOV, OP_LOAD, OP_STORE, OP_JUMP, OP_JAL, OP_CALL, OP_RETURN,
 OP_BINOP, OP_BNZ, OP_HALT) = range(12)


@dataclass(frozen=True)
class Nop:
    pass


@dataclass(frozen=True)
class Const:
    imm: int
    rd: int


@dataclass(frozen=True)
class Mov:
    rs: int
    rd: int


@dataclass(frozen=True)
class Load:
    rp: int
    rd: int


@dataclass(frozen=True)
class Store:
    rp: int
    rs: int


@dataclass(frozen=True)
class Jump:
    r: int


@dataclass(frozen=True)
class Jal:
    r: int


@dataclass(frozen=True)
class Call:
    comp: int
    proc: int


@dataclass(frozen=True)
class Return:
    pass


@dataclass(frozen=True)
class Binop:
    op: str
    r1: int
    r2: int
    rd: int


@dataclass(frozen=True)
class Bnz:
    r: int
    offset: int


@dataclass(frozen=True)
class Halt:
    pass


Instr = Union[Nop, Const, Mov, Load, Store, Jump, Jal, Call, Return, Binop, Bnz, Halt]


# Words are unbounded, but a product whose size passes this many bits
# cannot be simulated in practice; such runs raise ResourceLimit.
MAX_PRODUCT_BITS = 1 << 22


class ResourceLimit(ArithmeticError):
    """A multiplication would produce a word too large to simulate."""


def checked_mul(a: int, b: int) -> int:
    if a.bit_length() + b.bit_length() > MAX_PRODUCT_BITS:
        raise ResourceLimit(f"product of a {a.bit_length()}-bit and a {b.bit_length()}-bit word")
    return a * b


class EncodeError(ValueError):
    pass


def zigzag(i: int) -> int:
    return 2 * i if i >= 0 else -2 * i - 1


def unzigzag(z: int) -> int:
    return z // 2 if z % 2 == 0 else -(z + 1) // 2


def cantor(a: int, b: int) -> int:
    return (a + b) * (a + b + 1) // 2 + b


def uncantor(z: int) -> tuple[int, int]:
    w = (isqrt(8 * z + 1) - 1) // 2
    b = z - w * (w + 1) // 2
    return w - b, b


def _reg(r: int) -> int:
    if not (isinstance(r, int) and 0 <= r < NREGS):
        raise EncodeError(f"bad register {r!r}")
    return r


def encode(ins: Instr) -> int:
    t = type(ins)
    if t is Nop:
        return OP_NOP
    if t is Const:
        return OP_CONST + 16 * (_reg(ins.rd) + 8 * zigzag(ins.imm))
    if t is Mov:
        return OP_MOV + 16 * (_reg(ins.rs) + 8 * _reg(ins.rd))
    if t is Load:
        return OP_LOAD + 16 * (_reg(ins.rp) + 8 * _reg(ins.rd))
    if t is Store:
        return OP_STORE + 16 * (_reg(ins.rp) + 8 * _reg(ins.rs))
    if t is Jump:
        return OP_JUMP + 16 * _reg(ins.r)
    if t is Jal:
        return OP_JAL + 16 * _reg(ins.r)
    if t is Call:
        if ins.comp < 0 or ins.proc < 0:
            raise EncodeError("negative call target")
        return OP_CALL + 16 * cantor(ins.comp, ins.proc)
    if t is Return:
        return OP_RETURN
    if t is Binop:
        if ins.op not in BOPS:
            raise EncodeError(f"bad operator {ins.op!r}")
        payload = BOPS.index(ins.op) + 8 * (_reg(ins.r1) + 8 * (_reg(ins.r2) + 8 * _reg(ins.rd)))
        return OP_BINOP + 16 * payload
    if t is Bnz:
        return OP_BNZ + 16 * (_reg(ins.r) + 8 * zigzag(ins.offset))
    if t is Halt:
        return OP_HALT
    raise EncodeError(f"not an instruction: {ins!r}")


def decode_raw(w: int):
    """Decode to a flat 5-tuple ``(opcode, a, b, c, d)``, or None if undefined.

    Field meanings per opcode: CONST (imm, rd), MOV (rs, rd), LOAD (rp, rd),
    STORE (rp, rs), JUMP/JAL (r,), CALL (comp, proc), BINOP (bop, r1, r2, rd),
    BNZ (r, offset).
    """
    op = w % 16
    pl = w // 16
    if pl < 0 or op >= 12:
        return None
    if op == OP_NOP or op == OP_RETURN or op == OP_HALT:
        return (op, 0, 0, 0, 0) if pl == 0 else None
    if op == OP_CONST or op == OP_BNZ:
        r = pl % 8
        if r >= NREGS:
            return None
        v = unzigzag(pl // 8)
        return (op, v, r, 0, 0) if op == OP_CONST else (op, r, v, 0, 0)
    if op == OP_MOV or op == OP_LOAD or op == OP_STORE:
        a, b = pl % 8, pl // 8
        if a >= NREGS or b >= NREGS:
            return None
        return (op, a, b, 0, 0)
    if op == OP_JUMP or op == OP_JAL:
        return (op, pl, 0, 0, 0) if pl < NREGS else None
    if op == OP_CALL:
        c, p = uncantor(pl)
        return (op, c, p, 0, 0)
    # OP_BINOP
    bop, r1, r2, rd = pl % 8, (pl // 8) % 8, (pl // 64) % 8, pl // 512
    if bop >= len(BOPS) or r1 >= NREGS or r2 >= NREGS or rd >= NREGS:
        return None
    return (op, bop, r1, r2, rd)


def _from_raw(raw) -> Instr:
    op, a, b, c, d = raw
    if op == OP_NOP:
        return Nop()
    if op == OP_CONST:
        return Const(a, b)
    if op == OP_MOV:
        return Mov(a, b)
    if op == OP_LOAD:
        return Load(a, b)
    if op == OP_STORE:
        return Store(a, b)
    if op == OP_JUMP:
        return Jump(a)
    if op == OP_JAL:
        return Jal(a)
    if op == OP_CALL:
        return Call(a, b)
    if op == OP_RETURN:
        return Return()
    if op == OP_BINOP:
        return Binop(BOPS[a], b, c, d)
    if op == OP_BNZ:
        return Bnz(a, b)
    return Halt()


def decode(w: int) -> Instr | None:
    """Decode a word; None stands for the undefined instruction."""
    raw = decode_raw(w)
    return None if raw is None else _from_raw(raw)


def bop_apply(bop: int, a: int, b: int) -> int:
    if bop == 0:
        return a + b
    if bop == 1:
        return a - b
    if bop == 2:
        return checked_mul(a, b)
    if bop == 3:
        return 1 if a == b else 0
    return 1 if a <= b else 0


def format_instr(ins: Instr | None) -> str:
    if ins is None:
        return "<undefined>"
    r = REG_NAMES
    t = type(ins)
    if t is Const:
        return f"Const {ins.imm} -> r_{r[ins.rd]}"
    if t is Mov:
        return f"Mov r_{r[ins.rs]} -> r_{r[ins.rd]}"
    if t is Load:
        return f"Load *r_{r[ins.rp]} -> r_{r[ins.rd]}"
    if t is Store:
        return f"Store *r_{r[ins.rp]} <- r_{r[ins.rs]}"
    if t in (Jump, Jal):
        return f"{t.__name__} r_{r[ins.r]}"
    if t is Call:
        return f"Call {ins.comp}.{ins.proc}"
    if t is Binop:
        return f"Binop r_{r[ins.r1]} {ins.op} r_{r[ins.r2]} -> r_{r[ins.rd]}"
    if t is Bnz:
        return f"Bnz r_{r[ins.r]} {ins.offset:+d}"
    return t.__name__
