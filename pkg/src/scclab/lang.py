"""Source-level components, interfaces, shapes and the judgments over them.

Programs and contexts share one representation, a ``PartialProgram``
mapping component names to definitions.  Whether a map plays the role of
a program or a context is decided only by the shape judgments.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Union

MAIN_COMPONENT = "Main"
MAIN_PROCEDURE = "main"

BINOPS = ("seq", "add", "sub", "mul", "eq", "leq")


# --------------------------------------------------------------------------
# expressions


@dataclass(frozen=True)
class IntLit:
    value: int


@dataclass(frozen=True)
class Binop:
    op: str
    left: "Expr"
    right: "Expr"

    def __post_init__(self):
        if self.op not in BINOPS:
            raise ValueError(f"unknown operator {self.op!r}")


@dataclass(frozen=True)
class If:
    cond: "Expr"
    then: "Expr"
    orelse: "Expr"


@dataclass(frozen=True)
class Read:
    buf: int
    index: "Expr"

    def __post_init__(self):
        if self.buf < 0:
            raise ValueError("buffer index must be non-negative")


@dataclass(frozen=True)
class Write:
    buf: int
    index: "Expr"
    value: "Expr"

    def __post_init__(self):
        if self.buf < 0:
            raise ValueError("buffer index must be non-negative")


@dataclass(frozen=True)
class Call:
    comp: str
    proc: str
    arg: "Expr"


@dataclass(frozen=True)
class Exit:
    pass


Expr = Union[IntLit, Binop, If, Read, Write, Call, Exit]


def subexprs(e: Expr) -> tuple[Expr, ...]:
    """Immediate children of ``e`` in evaluation order."""
    if isinstance(e, Binop):
        return (e.left, e.right)
    if isinstance(e, If):
        return (e.cond, e.then, e.orelse)
    if isinstance(e, Read):
        return (e.index,)
    if isinstance(e, Write):
        return (e.index, e.value)
    if isinstance(e, Call):
        return (e.arg,)
    return ()


def walk(e: Expr) -> Iterator[Expr]:
    stack = [e]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(subexprs(node)))


def expr_size(e: Expr) -> int:
    return sum(1 for _ in walk(e))


# --------------------------------------------------------------------------
# components


@dataclass(frozen=True)
class Interface:
    exports: frozenset = frozenset()
    imports: frozenset = frozenset()  # of (component, procedure)

    def __post_init__(self):
        object.__setattr__(self, "exports", frozenset(self.exports))
        object.__setattr__(self, "imports", frozenset(tuple(i) for i in self.imports))


@dataclass(frozen=True)
class ComponentDef:
    name: str
    interface: Interface
    buffers: tuple
    procedures: Mapping[str, Expr] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "buffers", tuple(self.buffers))
        object.__setattr__(self, "procedures", dict(sorted(self.procedures.items())))

    def __hash__(self):
        return hash((self.name, self.interface, self.buffers, tuple(self.procedures.items())))


@dataclass(frozen=True)
class Shape:
    interfaces: Mapping[str, Interface]
    uncompromised: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "interfaces", dict(sorted(self.interfaces.items())))
        object.__setattr__(self, "uncompromised", frozenset(self.uncompromised))

    def __hash__(self):
        return hash((tuple(self.interfaces.items()), self.uncompromised))

    @property
    def names(self) -> list[str]:
        return sorted(self.interfaces)

    @property
    def compromised(self) -> frozenset:
        return frozenset(self.interfaces) - self.uncompromised

    def is_program_side(self, name: str) -> bool:
        return name in self.uncompromised

    def program_owns_main(self) -> bool:
        return MAIN_COMPONENT in self.uncompromised


@dataclass(frozen=True)
class PartialProgram:
    defs: Mapping[str, ComponentDef] = field(default_factory=dict)

    def __post_init__(self):
        defs = dict(sorted(self.defs.items()))
        for key, cdef in defs.items():
            if cdef.name != key:
                raise ValueError(f"definition keyed {key!r} is named {cdef.name!r}")
        object.__setattr__(self, "defs", defs)

    def __hash__(self):
        return hash(tuple(self.defs.items()))

    @classmethod
    def of(cls, defs: Iterable[ComponentDef]) -> "PartialProgram":
        out = {}
        for d in defs:
            if d.name in out:
                raise OverlapError([d.name])
            out[d.name] = d
        return cls(out)

    @property
    def names(self) -> frozenset:
        return frozenset(self.defs)

    def procedures(self) -> dict[tuple[str, str], Expr]:
        """The procedure map used by the interpreter, keyed by (component, procedure)."""
        return {(c, p): body for c, d in self.defs.items() for p, body in d.procedures.items()}


# --------------------------------------------------------------------------
# errors and violations


class LangError(Exception):
    pass


class OverlapError(LangError):
    def __init__(self, names):
        self.names = sorted(names)
        super().__init__(f"components defined on both sides: {', '.join(self.names)}")


class UnknownComponent(LangError):
    def __init__(self, names):
        self.names = sorted(names)
        super().__init__(f"unknown components: {', '.join(self.names)}")


@dataclass(frozen=True)
class Violation:
    def describe(self) -> str:
        fields = ", ".join(repr(v) for v in self.__dict__.values())
        return f"{type(self).__name__}({fields})"


@dataclass(frozen=True)
class MissingExport(Violation):
    proc: str


@dataclass(frozen=True)
class UnimportedCall(Violation):
    comp: str
    proc: str


@dataclass(frozen=True)
class UnknownProcedure(Violation):
    proc: str


@dataclass(frozen=True)
class UnknownBuffer(Violation):
    proc: str
    buf: int


@dataclass(frozen=True)
class NoBuffers(Violation):
    pass


@dataclass(frozen=True)
class BadBufferSize(Violation):
    buf: int
    size: int


@dataclass(frozen=True)
class SelfImport(Violation):
    comp: str
    proc: str


@dataclass(frozen=True)
class ImportFromUnknown(Violation):
    importer: str
    comp: str
    proc: str


@dataclass(frozen=True)
class ImportNotExported(Violation):
    importer: str
    comp: str
    proc: str


@dataclass(frozen=True)
class MissingMain(Violation):
    pass


@dataclass(frozen=True)
class UnknownUncompromised(Violation):
    comp: str


# --------------------------------------------------------------------------
# judgments


def check_component_wf(c: ComponentDef) -> list[Violation]:
    out: list[Violation] = []
    for p in sorted(c.interface.exports):
        if p not in c.procedures:
            out.append(MissingExport(p))
    for comp, proc in sorted(c.interface.imports):
        if comp == c.name:
            out.append(SelfImport(comp, proc))
    if not c.buffers:
        out.append(NoBuffers())
    for i, size in enumerate(c.buffers):
        if not isinstance(size, int) or size < 1:
            out.append(BadBufferSize(i, size))
    seen = set()
    for pname, body in c.procedures.items():
        for node in walk(body):
            v: Violation | None = None
            if isinstance(node, (Read, Write)) and node.buf >= len(c.buffers):
                v = UnknownBuffer(pname, node.buf)
            elif isinstance(node, Call):
                if node.comp == c.name:
                    if node.proc not in c.procedures:
                        v = UnknownProcedure(node.proc)
                elif (node.comp, node.proc) not in c.interface.imports:
                    v = UnimportedCall(node.comp, node.proc)
            if v is not None and v not in seen:
                seen.add(v)
                out.append(v)
    return out


def check_shape_wf(s: Shape) -> list[Violation]:
    out: list[Violation] = []
    for name, iface in s.interfaces.items():
        for comp, proc in sorted(iface.imports):
            if comp == name:
                out.append(SelfImport(comp, proc))
            elif comp not in s.interfaces:
                out.append(ImportFromUnknown(name, comp, proc))
            elif proc not in s.interfaces[comp].exports:
                out.append(ImportNotExported(name, comp, proc))
    for name in sorted(s.uncompromised - set(s.interfaces)):
        out.append(UnknownUncompromised(name))
    main = s.interfaces.get(MAIN_COMPONENT)
    if main is None or MAIN_PROCEDURE not in main.exports:
        out.append(MissingMain())
    return out


def satisfies(c: ComponentDef, iface: Interface) -> bool:
    return c.interface == iface and not check_component_wf(c)


def _has_side(defs: PartialProgram, s: Shape, side: frozenset) -> bool:
    if set(defs.defs) != set(side):
        return False
    return all(satisfies(d, s.interfaces[n]) for n, d in defs.defs.items())


def has_shape_program(P: PartialProgram, s: Shape) -> bool:
    return _has_side(P, s, s.uncompromised)


def has_shape_context(A: PartialProgram, s: Shape) -> bool:
    return _has_side(A, s, s.compromised)


def link(A: PartialProgram, P: PartialProgram) -> PartialProgram:
    overlap = A.names & P.names
    if overlap:
        raise OverlapError(overlap)
    return PartialProgram({**A.defs, **P.defs})


def shape_of(W: PartialProgram, uncompromised: Iterable[str]) -> Shape:
    return Shape({n: d.interface for n, d in W.defs.items()}, frozenset(uncompromised))


def partition(W: PartialProgram, compromised: Iterable[str]):
    """Split ``W`` into (context, program, shape) for one compromise scenario."""
    compromised = frozenset(compromised)
    unknown = compromised - W.names
    if unknown:
        raise UnknownComponent(unknown)
    A = PartialProgram({n: d for n, d in W.defs.items() if n in compromised})
    P = PartialProgram({n: d for n, d in W.defs.items() if n not in compromised})
    return A, P, shape_of(W, W.names - compromised)


def check_program_wf(W: PartialProgram) -> list[Violation]:
    """Whole-program well-formedness: every component and the induced shape."""
    out: list[Violation] = []
    for d in W.defs.values():
        out.extend(check_component_wf(d))
    out.extend(check_shape_wf(shape_of(W, W.names)))
    return out
