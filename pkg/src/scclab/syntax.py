"""Concrete syntax for programs and shapes: tokenizer, parser, printer.

Program text::

    component Main {
      import Lib.f ;
      export main ;
      buffer 2, 1 ;
      proc main(x) = b1[0] := Lib.f(x + 1); b1[0] ;
    }

Inside a procedure body the parameter name is sugar for ``b0[0]``.
Shape text::

    shape {
      Main : { import Lib.f ; export main } ;
      Lib  : { export f } compromised ;
    }
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .lang import (
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


class ParseError(Exception):
    def __init__(self, msg: str, line: int = 0, col: int = 0):
        self.line, self.col = line, col
        super().__init__(f"{line}:{col}: {msg}" if line else msg)


@dataclass
class Token:
    kind: str  # 'int', 'id', 'buf', 'op', 'eof'
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+|//[^\n]*|\#[^\n]*)
  | (?P<int>\d+)
  | (?P<id>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>:=|==|<=|[=]|[{}()\[\];,.:+\-*])
    """,
    re.VERBOSE,
)

KEYWORDS = {"component", "import", "export", "buffer", "proc", "if", "then", "else", "exit",
            "shape", "compromised"}
_BUF_RE = re.compile(r"b(\d+)$")
# a ';' followed by one of these closes a procedure body rather than sequencing
_CLAUSE_END = {"proc", "}", "import", "export", "buffer"}


def tokenize(text: str) -> list[Token]:
    out = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        tok_text = m.group()
        if kind != "ws":
            out.append(Token(kind, tok_text, line, pos - line_start + 1))
        nl = tok_text.count("\n")
        if nl:
            line += nl
            line_start = pos + tok_text.rindex("\n") + 1
        pos = m.end()
    out.append(Token("eof", "", line, pos - line_start + 1))
    return out


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0
        self.param: str | None = None

    # -- token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, text: str) -> bool:
        return self.tok.text == text and self.tok.kind in ("op", "id")

    def fail(self, msg: str):
        raise ParseError(f"{msg} (found {self.tok.text or 'end of input'!r})", self.tok.line, self.tok.col)

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.fail(f"expected {text!r}")
        t = self.tok
        self.i += 1
        return t

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def ident(self) -> str:
        t = self.tok
        if t.kind != "id" or t.text in KEYWORDS:
            self.fail("expected identifier")
        self.i += 1
        return t.text

    def integer(self) -> int:
        neg = self.accept("-")
        t = self.tok
        if t.kind != "int":
            self.fail("expected integer")
        self.i += 1
        return -int(t.text) if neg else int(t.text)

    # -- expressions
    def seq(self) -> Expr:
        left = self.ifexpr()
        if self.at(";") and not (self.peek().text in _CLAUSE_END or self.peek().kind == "eof"):
            self.i += 1
            return Binop("seq", left, self.seq())
        return left

    def ifexpr(self) -> Expr:
        if self.accept("if"):
            cond = self.seq()
            self.expect("then")
            then = self.seq()
            self.expect("else")
            return If(cond, then, self.ifexpr())
        return self.cmp()

    def cmp(self) -> Expr:
        left = self.add()
        for sym, op in (("==", "eq"), ("<=", "leq")):
            if self.accept(sym):
                return Binop(op, left, self.add())
        return left

    def add(self) -> Expr:
        left = self.mul()
        while self.at("+") or self.at("-"):
            op = "add" if self.tok.text == "+" else "sub"
            self.i += 1
            left = Binop(op, left, self.mul())
        return left

    def mul(self) -> Expr:
        left = self.atom()
        while self.accept("*"):
            left = Binop("mul", left, self.atom())
        return left

    def atom(self) -> Expr:
        t = self.tok
        if t.kind == "int" or (self.at("-") and self.peek().kind == "int"):
            return IntLit(self.integer())
        if self.accept("("):
            e = self.seq()
            self.expect(")")
            return e
        if self.accept("exit"):
            return Exit()
        if t.kind == "id" and t.text not in KEYWORDS:
            m = _BUF_RE.match(t.text)
            if m and self.peek().text == "[":
                self.i += 2
                index = self.seq()
                self.expect("]")
                if self.accept(":="):
                    return Write(int(m.group(1)), index, self.ifexpr())
                return Read(int(m.group(1)), index)
            if self.peek().text == ".":
                comp = self.ident()
                self.expect(".")
                proc = self.ident()
                self.expect("(")
                arg = self.seq()
                self.expect(")")
                return Call(comp, proc, arg)
            if t.text == self.param:
                self.i += 1
                return Read(0, IntLit(0))
        self.fail("expected expression")

    # -- declarations
    def name_list(self, item):
        out = []
        if self.at(";") or self.at("}"):
            return out
        out.append(item())
        while self.accept(","):
            out.append(item())
        return out

    def qualified(self) -> tuple[str, str]:
        c = self.ident()
        self.expect(".")
        return (c, self.ident())

    def interface_clauses(self, allow_body: bool):
        imports, exports, buffers, procs = [], [], [], {}
        while not self.at("}"):
            if self.accept("import"):
                imports += self.name_list(self.qualified)
            elif self.accept("export"):
                exports += self.name_list(self.ident)
            elif allow_body and self.accept("buffer"):
                buffers += self.name_list(self.integer)
            elif allow_body and self.accept("proc"):
                name = self.ident()
                self.expect("(")
                self.param = None if self.at(")") else self.ident()
                self.expect(")")
                self.expect("=")
                if name in procs:
                    self.fail(f"duplicate procedure {name!r}")
                procs[name] = self.seq()
                self.param = None
            else:
                self.fail("expected a clause")
            if not self.at("}"):
                self.expect(";")
        return Interface(frozenset(exports), frozenset(imports)), buffers, procs

    def component(self) -> ComponentDef:
        self.expect("component")
        name = self.ident()
        self.expect("{")
        iface, buffers, procs = self.interface_clauses(allow_body=True)
        self.expect("}")
        return ComponentDef(name, iface, tuple(buffers), procs)

    def program(self) -> PartialProgram:
        defs = []
        while self.tok.kind != "eof":
            defs.append(self.component())
        return PartialProgram.of(defs)

    def shape(self) -> Shape:
        self.expect("shape")
        self.expect("{")
        ifaces, unc = {}, set()
        while not self.at("}"):
            name = self.ident()
            self.expect(":")
            self.expect("{")
            iface, _, _ = self.interface_clauses(allow_body=False)
            self.expect("}")
            if name in ifaces:
                self.fail(f"duplicate component {name!r}")
            ifaces[name] = iface
            if not self.accept("compromised"):
                unc.add(name)
            if not self.at("}"):
                self.expect(";")
        self.expect("}")
        if self.tok.kind != "eof":
            self.fail("trailing input")
        return Shape(ifaces, frozenset(unc))


def parse_expr(text: str, param: str | None = None) -> Expr:
    p = _Parser(text)
    p.param = param
    e = p.seq()
    if p.tok.kind != "eof":
        p.fail("trailing input")
    return e


def parse_program(text: str) -> PartialProgram:
    return _Parser(text).program()


def parse_shape(text: str) -> Shape:
    return _Parser(text).shape()


# --------------------------------------------------------------------------
# printing

_SYM = {"add": "+", "sub": "-", "mul": "*", "eq": "==", "leq": "<="}
_PREC = {"seq": 0, "eq": 2, "leq": 2, "add": 3, "sub": 3, "mul": 4}


def format_expr(e: Expr, prec: int = 0) -> str:
    if isinstance(e, IntLit):
        return str(e.value)
    if isinstance(e, Exit):
        return "exit"
    if isinstance(e, Read):
        return f"b{e.buf}[{format_expr(e.index)}]"
    if isinstance(e, Call):
        return f"{e.comp}.{e.proc}({format_expr(e.arg)})"
    if isinstance(e, Write):
        s, mine = f"b{e.buf}[{format_expr(e.index)}] := {format_expr(e.value, 1)}", 1
    elif isinstance(e, If):
        s = f"if {format_expr(e.cond)} then {format_expr(e.then)} else {format_expr(e.orelse, 1)}"
        mine = 1
    else:
        mine = _PREC[e.op]
        if e.op == "seq":
            s = f"{format_expr(e.left, 1)}; {format_expr(e.right, 0)}"
        elif mine == 2:
            s = f"{format_expr(e.left, 3)} {_SYM[e.op]} {format_expr(e.right, 3)}"
        else:
            s = f"{format_expr(e.left, mine)} {_SYM[e.op]} {format_expr(e.right, mine + 1)}"
    return f"({s})" if mine < prec else s


def _format_interface(iface: Interface) -> list[str]:
    out = []
    if iface.imports:
        out.append("import " + ", ".join(f"{c}.{p}" for c, p in sorted(iface.imports)))
    if iface.exports:
        out.append("export " + ", ".join(sorted(iface.exports)))
    return out


def format_component(c: ComponentDef) -> str:
    lines = [f"component {c.name} {{"]
    clauses = _format_interface(c.interface)
    clauses.append("buffer " + ", ".join(str(b) for b in c.buffers))
    clauses += [f"proc {p}() = {format_expr(body)}" for p, body in c.procedures.items()]
    lines += [f"  {cl} ;" for cl in clauses]
    lines.append("}")
    return "\n".join(lines)


def format_program(P: PartialProgram) -> str:
    return "\n\n".join(format_component(d) for d in P.defs.values()) + "\n"


def format_shape(s: Shape) -> str:
    lines = ["shape {"]
    for name, iface in s.interfaces.items():
        body = " ; ".join(_format_interface(iface))
        tag = "" if name in s.uncompromised else " compromised"
        lines.append(f"  {name} : {{ {body} }}{tag} ;")
    lines.append("}")
    return "\n".join(lines) + "\n"
