"""Pointwise compiler from source components to machine compartments.

Compartment memory layout::

    0 .. B-1        buffers, concatenated in declaration order
    B               saved local stack pointer ("spsave")
    B+1 ..          code
    stackbase ..    local stack, growing upwards

Every exported procedure gets an external entry that trusts nothing but
``r_com``: it reloads the stack pointer from spsave, stores the argument,
runs the shared body through the internal entry, republishes the stack
pointer, clears every register except ``r_com`` and returns.  Calls inside
a component use ``Jal``/``Jump`` on the internal entry and skip all of
that.  Cross-compartment calls push the caller's argument cell, publish
the stack pointer, clear registers, ``Call``, then restore both.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import isa
from .isa import R_COM, R_RA, R_SP, R_T1, R_T2, R_T3
from .lang import (
    MAIN_PROCEDURE,
    Binop,
    Call,
    ComponentDef,
    Exit,
    Expr,
    If,
    Interface,
    IntLit,
    PartialProgram,
    Read,
    Shape,
    Write,
)
from .machine import Image, link_images

NO_CLEAN = "no-clean"
NO_SPSAVE = "no-spsave"
NO_LOCAL_OPT = "no-local-opt"
FLAGS = frozenset({NO_CLEAN, NO_SPSAVE, NO_LOCAL_OPT})

_SRC_TO_BOP = {"add": "add", "sub": "sub", "mul": "mul", "eq": "eq", "leq": "leq"}
_CLEANED = (R_RA, R_SP, R_T1, R_T2, R_T3)


class CompileError(Exception):
    pass


class UnknownBuffer(CompileError):
    pass


class UnknownCallee(CompileError):
    pass


def proc_order(exports) -> tuple[str, ...]:
    """Procedure indices: ``main`` first, then lexicographic."""
    return tuple(sorted(exports, key=lambda p: (p != MAIN_PROCEDURE, p)))


@dataclass(frozen=True)
class NameIndex:
    """Global link-time numbering of components and exported procedures."""

    comps: tuple
    procs: dict  # component name -> tuple of exported procedure names, in pidx order

    @classmethod
    def from_interfaces(cls, interfaces) -> "NameIndex":
        return cls(tuple(sorted(interfaces)), {n: proc_order(i.exports) for n, i in interfaces.items()})

    @classmethod
    def from_shape(cls, s: Shape) -> "NameIndex":
        return cls.from_interfaces(s.interfaces)

    @classmethod
    def from_program(cls, W: PartialProgram) -> "NameIndex":
        return cls.from_interfaces({n: d.interface for n, d in W.defs.items()})

    def cidx(self, name: str) -> int:
        try:
            return self.comps.index(name)
        except ValueError:
            raise UnknownCallee(f"unknown component {name!r}") from None

    def pidx(self, comp: str, proc: str) -> int:
        try:
            return self.procs[comp].index(proc)
        except (KeyError, ValueError):
            raise UnknownCallee(f"{comp}.{proc} is not exported") from None

    def name_of(self, cidx: int) -> str:
        return self.comps[cidx]

    def proc_name(self, cidx: int, pidx: int) -> str:
        return self.procs[self.comps[cidx]][pidx]

    def __hash__(self):
        return hash((self.comps, tuple(sorted(self.procs.items()))))


@dataclass(frozen=True)
class Layout:
    bufbase: tuple
    spsave: int
    codebase: int
    entries: dict  # proc -> (external entry or None, internal entry)
    stackbase: int


@dataclass
class CompiledComponent:
    cidx: int
    words: dict
    entrypoints: dict
    layout: Layout


# symbolic items resolved after layout
@dataclass(frozen=True)
class Label:
    name: tuple


@dataclass(frozen=True)
class ConstRef:
    label: tuple
    rd: int


@dataclass
class _Ctx:
    comp: ComponentDef
    index: NameIndex
    bufbase: tuple
    spsave: int
    flags: frozenset = field(default_factory=frozenset)
    stackbase: int = 0  # only read by the no-spsave entry


def _push(r: int) -> list:
    return [isa.Store(R_SP, r), isa.Const(1, R_T3), isa.Binop("add", R_SP, R_T3, R_SP)]


def _pop(r: int) -> list:
    return [isa.Const(1, R_T3), isa.Binop("sub", R_SP, R_T3, R_SP), isa.Load(R_SP, r)]


def _clean(flags) -> list:
    if NO_CLEAN in flags:
        return []
    return [isa.Const(0, r) for r in _CLEANED]


def compile_expr(e: Expr, ctx: _Ctx) -> list:
    """Code leaving the value of ``e`` in ``r_com`` with ``r_sp`` restored."""
    t = type(e)
    if t is IntLit:
        return [isa.Const(e.value, R_COM)]
    if t is Exit:
        return [isa.Halt()]
    if t is Binop:
        left, right = compile_expr(e.left, ctx), compile_expr(e.right, ctx)
        if e.op == "seq":
            return left + right
        return left + _push(R_COM) + right + _pop(R_T1) + [isa.Binop(_SRC_TO_BOP[e.op], R_T1, R_COM, R_COM)]
    if t is If:
        cond, then, orelse = (compile_expr(x, ctx) for x in (e.cond, e.then, e.orelse))
        return (cond + [isa.Bnz(R_COM, len(orelse) + 3)] + orelse
                + [isa.Const(1, R_T1), isa.Bnz(R_T1, len(then) + 1)] + then)
    if t is Read:
        base = _bufbase(e.buf, ctx)
        return compile_expr(e.index, ctx) + [
            isa.Const(base, R_T1), isa.Binop("add", R_T1, R_COM, R_T1), isa.Load(R_T1, R_COM)]
    if t is Write:
        base = _bufbase(e.buf, ctx)
        return (compile_expr(e.index, ctx) + _push(R_COM) + compile_expr(e.value, ctx) + _pop(R_T1)
                + [isa.Const(base, R_T2), isa.Binop("add", R_T2, R_T1, R_T1), isa.Store(R_T1, R_COM)])
    if t is Call:
        arg = compile_expr(e.arg, ctx)
        save_arg = [isa.Const(0, R_T1), isa.Load(R_T1, R_T2)] + _push(R_T2)
        restore_arg = _pop(R_T2) + [isa.Const(0, R_T1), isa.Store(R_T1, R_T2)]
        local = e.comp == ctx.comp.name
        if local and e.proc not in ctx.comp.procedures:
            raise UnknownCallee(f"{e.comp}.{e.proc} is not defined")
        if local and NO_LOCAL_OPT not in ctx.flags:
            return (arg + save_arg + [isa.Const(0, R_T1), isa.Store(R_T1, R_COM),
                                      ConstRef(("int", e.proc), R_T1), isa.Jal(R_T1)] + restore_arg)
        if local:
            target = isa.Call(ctx.index.cidx(e.comp), _local_pidx(ctx, e.proc))
        else:
            if (e.comp, e.proc) not in ctx.comp.interface.imports:
                raise UnknownCallee(f"{e.comp}.{e.proc} is not imported by {ctx.comp.name}")
            target = isa.Call(ctx.index.cidx(e.comp), ctx.index.pidx(e.comp, e.proc))
        return (arg + save_arg + [isa.Const(ctx.spsave, R_T1), isa.Store(R_T1, R_SP)] + _clean(ctx.flags)
                + [target, isa.Const(ctx.spsave, R_SP), isa.Load(R_SP, R_SP)] + restore_arg)
    raise CompileError(f"cannot compile {e!r}")


def _bufbase(b: int, ctx: _Ctx) -> int:
    if not 0 <= b < len(ctx.bufbase):
        raise UnknownBuffer(f"{ctx.comp.name} has no buffer {b}")
    return ctx.bufbase[b]


def _local_pidx(ctx: _Ctx, proc: str) -> int:
    return _all_proc_order(ctx.comp, ctx.index).index(proc)


def _all_proc_order(c: ComponentDef, index: NameIndex) -> tuple:
    exported = index.procs.get(c.name, proc_order(c.interface.exports))
    return exported + tuple(p for p in c.procedures if p not in exported)


def _procedure_items(c: ComponentDef, proc: str, body: Expr, ctx: _Ctx, external: bool) -> list:
    items: list = []
    if external:
        entry_sp = ([isa.Const(ctx.stackbase, R_SP)] if NO_SPSAVE in ctx.flags
                    else [isa.Const(ctx.spsave, R_SP), isa.Load(R_SP, R_SP)])
        publish_sp = [] if NO_SPSAVE in ctx.flags else [isa.Const(ctx.spsave, R_T1), isa.Store(R_T1, R_SP)]
        items += [Label(("ext", proc))] + entry_sp + [
            isa.Const(0, R_T1), isa.Store(R_T1, R_COM),
            ConstRef(("int", proc), R_T1), isa.Jal(R_T1),
        ] + publish_sp + _clean(ctx.flags) + [isa.Return()]
    items += [Label(("int", proc))] + _push(R_RA) + compile_expr(body, ctx) + _pop(R_RA) + [isa.Jump(R_RA)]
    return items


def compile_component(c: ComponentDef, index: NameIndex, flags=frozenset()) -> CompiledComponent:
    flags = frozenset(flags)
    unknown = flags - FLAGS
    if unknown:
        raise CompileError(f"unknown compiler flags {sorted(unknown)}")
    bufbase, total = [], 0
    for size in c.buffers:
        bufbase.append(total)
        total += size
    spsave = total
    ctx = _Ctx(c, index, tuple(bufbase), spsave, flags)
    
    order = _all_proc_order(c, index)
    exported = set(index.procs.get(c.name, ()))
    with_entry = set(order) if NO_LOCAL_OPT in flags else exported

    def gen():
        items = []
        for p in order:
            if p in c.procedures:
                items += _procedure_items(c, p, c.procedures[p], ctx, p in with_entry)
        return items

    items = gen()
    codebase = spsave + 1
    size = sum(1 for it in items if not isinstance(it, Label))
    stackbase = codebase + size
    if NO_SPSAVE in flags:
        ctx.stackbase = stackbase
        items = gen()

    labels, addr = {}, codebase
    for it in items:
        if isinstance(it, Label):
            labels[it.name] = addr
        else:
            addr += 1
    words = {spsave: stackbase}
    addr = codebase
    for it in items:
        if isinstance(it, Label):
            continue
        ins = isa.Const(labels[it.label], it.rd) if isinstance(it, ConstRef) else it
        words[addr] = isa.encode(ins)
        addr += 1

    cidx = index.cidx(c.name)
    entrypoints = {order.index(p): labels[("ext", p)] for p in order if p in with_entry}
    entries = {p: (labels.get(("ext", p)), labels[("int", p)]) for p in order if p in c.procedures}
    layout = Layout(tuple(bufbase), spsave, codebase, entries, stackbase)
    return CompiledComponent(cidx, words, entrypoints, layout)


def component_psi(c: ComponentDef, index: NameIndex) -> frozenset:
    return frozenset((index.cidx(tc), index.pidx(tc, tp)) for tc, tp in c.interface.imports)


def compile_program(P: PartialProgram, index: NameIndex | None = None, flags=frozenset()) -> Image:
    """Compile each component on its own and collect the compartments."""
    if index is None:
        index = NameIndex.from_program(P)
    img = Image()
    for name, d in P.defs.items():
        cc = compile_component(d, index, flags)
        img.psi[cc.cidx] = component_psi(d, index)
        img.entry[cc.cidx] = dict(cc.entrypoints)
        img.mem0[cc.cidx] = dict(cc.words)
        img.names[cc.cidx] = name
    return img


def compile_insecure(P: PartialProgram, flags, index: NameIndex | None = None) -> Image:
    """``compile_program`` with selected protections switched off."""
    return compile_program(P, index, flags)


def compile_whole(W: PartialProgram, flags=frozenset()) -> Image:
    img = compile_program(W, NameIndex.from_program(W), flags)
    return link_images(Image(), img)


def interface_of_indices(iface: Interface, name: str, index: NameIndex):
    return (frozenset((index.cidx(c), index.pidx(c, p)) for c, p in iface.imports),
            frozenset(index.pidx(name, p) for p in iface.exports))


__all__ = [
    "NameIndex", "Layout", "CompiledComponent", "compile_expr", "compile_component",
    "compile_program", "compile_insecure", "compile_whole", "link_images", "proc_order",
]
