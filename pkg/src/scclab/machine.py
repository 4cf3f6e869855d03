"""The compartmentalized abstract machine.

Each compartment owns a private memory partition; ``Load``, ``Store``,
``Jump`` and ``Jal`` only ever see the current partition.  Control moves
between compartments exclusively through ``Call`` (checked against the
caller's imports) and ``Return`` (popping the protected global stack).
Any stuck state, including a failed interface check, counts as halting.

``mstep`` is the reference single-step semantics over immutable
snapshots.  ``mrun`` and the trace machinery use a fast run loop: the
Cython ``_vmcore`` extension when it is built, ``_kernel`` otherwise.
Set ``SCCLAB_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Mapping, Union

from . import _kernel
from .isa import (
    NREGS,
    OP_BINOP,
    OP_BNZ,
    OP_CALL,
    OP_CONST,
    OP_HALT,
    OP_JAL,
    OP_JUMP,
    OP_LOAD,
    OP_MOV,
    OP_NOP,
    OP_RETURN,
    OP_STORE,
    bop_apply,
    decode,
    decode_raw,
    format_instr,
)

if os.environ.get("SCCLAB_PURE_PYTHON"):
    _run_kernel = _kernel.run
    BACKEND = "python"
else:
    try:
        from ._vmcore import run as _run_kernel

        BACKEND = "cython"
    except ImportError:  # extension not built
        _run_kernel = _kernel.run
        BACKEND = "python"

FUEL, STUCK, WATCH = _kernel.FUEL, _kernel.STUCK, _kernel.WATCH
STUCK_REASONS = ("HaltInstr", "Undecodable", "InterfaceViolation", "ReturnEmptyStack", "NegativeAddress")


class MachineError(Exception):
    pass


class MissingMainEntry(MachineError):
    pass


class OverlapError(MachineError):
    pass


class UnresolvedImport(MachineError):
    pass


class ImageFormatError(MachineError):
    pass


@dataclass
class Image:
    """A (partial) executable: interfaces, entry points and initial memory, by index."""

    psi: dict = field(default_factory=dict)    # cidx -> frozenset of (cidx, pidx)
    entry: dict = field(default_factory=dict)  # cidx -> {pidx: address}
    mem0: dict = field(default_factory=dict)   # cidx -> {address: word}
    names: dict = field(default_factory=dict)  # cidx -> component name

    @property
    def comps(self) -> frozenset:
        return frozenset(self.mem0)

    def restrict(self, cidxs) -> "Image":
        keep = set(cidxs)
        return Image(
            {c: v for c, v in self.psi.items() if c in keep},
            {c: dict(v) for c, v in self.entry.items() if c in keep},
            {c: dict(v) for c, v in self.mem0.items() if c in keep},
            {c: v for c, v in self.names.items() if c in keep},
        )

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return (self.psi == other.psi and self.entry == other.entry
                and self.mem0 == other.mem0 and self.names == other.names)


def link_images(a: Image, p: Image, check_imports: bool = True) -> Image:
    overlap = a.comps & p.comps
    if overlap:
        raise OverlapError(f"compartments on both sides: {sorted(overlap)}")
    out = Image({**a.psi, **p.psi}, {**a.entry, **p.entry}, {**a.mem0, **p.mem0}, {**a.names, **p.names})
    if check_imports:
        for c, imports in out.psi.items():
            for tc, tp in sorted(imports):
                if tp not in out.entry.get(tc, {}):
                    raise UnresolvedImport(f"compartment {c} imports {tc}.{tp}, which has no entry point")
    return out


@dataclass(frozen=True)
class MachineState:
    current: int
    stack: tuple          # of (cidx, return pc), top last
    mem: Mapping          # cidx -> {address: word}
    reg: tuple
    pc: int

    def thaw(self):
        """Mutable copies of (mem, reg, stack) for the run loop."""
        return {c: dict(m) for c, m in self.mem.items()}, list(self.reg), list(self.stack)


@dataclass(frozen=True)
class Stepped:
    state: MachineState


@dataclass(frozen=True)
class Stuck:
    reason: str
    detail: object = None


@dataclass(frozen=True)
class Halted:
    steps: int
    reason: str = "HaltInstr"
    detail: object = None


@dataclass(frozen=True)
class MFuelExhausted:
    steps: int


MRunResult = Union[Halted, MFuelExhausted]


def main_index(image: Image) -> int | None:
    from .lang import MAIN_COMPONENT

    for c, n in image.names.items():
        if n == MAIN_COMPONENT:
            return c
    return None


def init_state(image: Image, main: tuple[int, int] | None = None) -> MachineState:
    """Start at Main's ``main`` entry with all registers cleared.

    Procedure indices put ``main`` first, so the start procedure is
    ``(cidx of Main, 0)`` unless ``main`` overrides it.
    """
    if main is None:
        c = main_index(image)
        if c is None:
            raise MissingMainEntry("no compartment named Main")
        main = (c, 0)
    c, p = main
    pc = image.entry.get(c, {}).get(p)
    if pc is None:
        raise MissingMainEntry(f"no entry point for {c}.{p}")
    return MachineState(c, (), {k: dict(v) for k, v in image.mem0.items()}, (0,) * NREGS, pc)


def mstep(image: Image, st: MachineState):
    """Reference semantics for one instruction; never mutates ``st``."""
    C, pc = st.current, st.pc
    if pc < 0:
        return Stuck("NegativeAddress", pc)
    mem_c = st.mem[C]
    raw = decode_raw(mem_c.get(pc, 0))
    if raw is None:
        return Stuck("Undecodable", mem_c.get(pc, 0))
    op, a, b, c, d = raw
    reg = list(st.reg)
    mem, stack = st.mem, st.stack
    npc = pc + 1
    if op == OP_NOP:
        pass
    elif op == OP_CONST:
        reg[b] = a
    elif op == OP_MOV:
        reg[b] = reg[a]
    elif op == OP_LOAD:
        if reg[a] < 0:
            return Stuck("NegativeAddress", reg[a])
        reg[b] = mem_c.get(reg[a], 0)
    elif op == OP_STORE:
        if reg[a] < 0:
            return Stuck("NegativeAddress", reg[a])
        part = dict(mem_c)
        part[reg[a]] = reg[b]
        mem = {**st.mem, C: part}
    elif op == OP_JUMP:
        npc = reg[a]
    elif op == OP_JAL:
        npc = reg[a]
        reg[1] = pc + 1
    elif op == OP_CALL:
        if not (a == C or (a, b) in image.psi.get(C, ())):
            return Stuck("InterfaceViolation", (a, b))
        target = image.entry.get(a, {}).get(b)
        if target is None:
            return Stuck("InterfaceViolation", (a, b))
        return Stepped(MachineState(a, stack + ((C, pc + 1),), mem, st.reg, target))
    elif op == OP_RETURN:
        if not stack:
            return Stuck("ReturnEmptyStack")
        (rc, rpc) = stack[-1]
        return Stepped(MachineState(rc, stack[:-1], mem, st.reg, rpc))
    elif op == OP_BINOP:
        reg[d] = bop_apply(a, reg[b], reg[c])
    elif op == OP_BNZ:
        npc = pc + b if reg[a] != 0 else pc + 1
    elif op == OP_HALT:
        return Stuck("HaltInstr")
    return Stepped(MachineState(C, stack, mem, tuple(reg), npc))


class Runner:
    """Mutable machine state driven by the fast run loop.

    ``run`` executes up to ``fuel`` instructions; with ``watch`` set it
    stops *before* any Call or Return so the caller can observe (and then
    perform, via ``transfer``) cross-compartment control flow.
    """

    def __init__(self, image: Image, state: MachineState | None = None):
        self.image = image
        st = state if state is not None else init_state(image)
        self.mem, self.reg, self.stack = st.thaw()
        self.cur, self.pc = st.current, st.pc
        self.steps = 0
        self.cache: dict = {}

    def snapshot(self) -> MachineState:
        return MachineState(self.cur, tuple(self.stack), {c: dict(m) for c, m in self.mem.items()},
                            tuple(self.reg), self.pc)

    def run(self, fuel: int, watch: bool = False):
        """Returns (status, reason, detail); status is FUEL, STUCK or WATCH."""
        status, self.cur, self.pc, n, reason, detail = _run_kernel(
            self.mem, self.reg, self.stack, self.image.psi, self.image.entry,
            self.cur, self.pc, fuel, watch, self.cache)
        self.steps += n
        return status, reason, detail

    def current_instr(self):
        return decode_raw(self.mem[self.cur].get(self.pc, 0)) if self.pc >= 0 else None

    def transfer(self):
        """Execute the Call/Return at pc.  Returns None on success, else the stuck reason index."""
        raw = self.current_instr()
        op = raw[0]
        if op == OP_CALL:
            a, b = raw[1], raw[2]
            if a != self.cur and (a, b) not in self.image.psi.get(self.cur, ()):
                return 2
            target = self.image.entry.get(a, {}).get(b)
            if target is None:
                return 2
            self.stack.append((self.cur, self.pc + 1))
            self.cur, self.pc = a, target
        elif op == OP_RETURN:
            if not self.stack:
                return 3
            self.cur, self.pc = self.stack.pop()
        else:
            raise MachineError("transfer called on a non-transfer instruction")
        self.steps += 1
        return None


def mrun(image: Image, fuel: int, state: MachineState | None = None) -> MRunResult:
    r = Runner(image, state)
    status, reason, detail = r.run(fuel)
    if status == FUEL:
        return MFuelExhausted(r.steps)
    return Halted(r.steps + 1, STUCK_REASONS[reason], detail)


def mrun_reference(image: Image, fuel: int, state: MachineState | None = None) -> MRunResult:
    """``mrun`` by iterating ``mstep``; the oracle for the fast loops."""
    st = state if state is not None else init_state(image)
    for n in range(fuel):
        res = mstep(image, st)
        if isinstance(res, Stuck):
            return Halted(n + 1, res.reason, res.detail)
        st = res.state
    return MFuelExhausted(fuel)


# --------------------------------------------------------------------------
# text formats


def format_image(image: Image) -> str:
    lines = []
    for c in sorted(image.mem0):
        lines.append(f"compartment {c} {image.names.get(c, f'C{c}')}")
        for p, addr in sorted(image.entry.get(c, {}).items()):
            lines.append(f"export {p} {addr}")
        for tc, tp in sorted(image.psi.get(c, ())):
            lines.append(f"import {tc}.{tp}")
        for addr, w in sorted(image.mem0[c].items()):
            lines.append(f"mem {addr} {w}")
    return "\n".join(lines) + "\n"


def parse_image(text: str) -> Image:
    img = Image()
    cur = None
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split("#", 1)[0].split()
        if not parts:
            continue
        try:
            kw = parts[0]
            if kw == "compartment":
                cur = int(parts[1])
                if cur in img.mem0:
                    raise ImageFormatError(f"line {lineno}: compartment {cur} declared twice")
                img.names[cur] = parts[2] if len(parts) > 2 else f"C{cur}"
                img.mem0[cur], img.entry[cur], img.psi[cur] = {}, {}, frozenset()
            elif cur is None:
                raise ImageFormatError(f"line {lineno}: {kw!r} before any compartment")
            elif kw == "export":
                img.entry[cur][int(parts[1])] = int(parts[2])
            elif kw == "import":
                tc, tp = parts[1].split(".")
                img.psi[cur] = img.psi[cur] | {(int(tc), int(tp))}
            elif kw == "mem":
                img.mem0[cur][int(parts[1])] = int(parts[2])
            else:
                raise ImageFormatError(f"line {lineno}: unknown directive {kw!r}")
        except (IndexError, ValueError) as exc:
            raise ImageFormatError(f"line {lineno}: malformed {line.strip()!r}") from exc
    return img


def disassemble(image: Image) -> str:
    lines = []
    for c in sorted(image.mem0):
        lines.append(f"; compartment {c} ({image.names.get(c, '?')})")
        entries = {addr: p for p, addr in image.entry.get(c, {}).items()}
        for addr, w in sorted(image.mem0[c].items()):
            label = f"  <entry {entries[addr]}>" if addr in entries else ""
            lines.append(f"{addr:6d}: {w:>12d}  {format_instr(decode(w))}{label}")
    return "\n".join(lines) + "\n"
