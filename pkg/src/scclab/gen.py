"""Random generators for shapes, programs, contexts and low-level attackers.

All randomness comes from an explicit ``random.Random``.  Programs come in
two flavours: ``defined`` ones only index buffers with in-bounds constants,
``wild`` ones index with arbitrary expressions and so can go out of bounds.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace

from . import isa
from .compiler import NameIndex, compile_program
from .lang import (
    MAIN_COMPONENT,
    MAIN_PROCEDURE,
    Binop,
    Call,
    ComponentDef,
    Exit,
    If,
    Interface,
    IntLit,
    PartialProgram,
    Read,
    Shape,
    Write,
)
from .machine import Image
from .traces import CONTEXT, PROGRAM, ishape

EXPORT_POOL = ("f", "g", "h", "k")
PRIVATE_POOL = ("p", "q")
ARITH = ("add", "sub", "mul", "eq", "leq")


@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
    max_components: int = 4
    max_procs: int = 3
    max_buffer_size: int = 4
    max_expr_depth: int = 5
    literal_range: tuple = (-3, 9)
    fuel_source: int = 10000
    fuel_target: int | None = None   # None: calibrated from fuel_source
    trials: int = 200

    def __post_init__(self):
        for name in ("max_components", "max_procs", "max_buffer_size", "max_expr_depth", "fuel_source"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.trials < 0:
            raise ValueError("trials must be non-negative")
        lo, hi = self.literal_range
        if lo > hi:
            raise ValueError("empty literal range")
        if self.fuel_target is not None and self.fuel_target <= 0:
            raise ValueError("fuel_target must be positive")

    @property
    def target_fuel(self) -> int:
        from .calibration import target_fuel

        return self.fuel_target if self.fuel_target is not None else target_fuel(self.fuel_source)

    def with_(self, **kw) -> "GenConfig":
        return replace(self, **kw)


# --------------------------------------------------------------------------
# shapes


def gen_shape(cfg: GenConfig, rng: random.Random, complete: bool = False,
              min_components: int = 1) -> Shape:
    n = rng.randint(min(min_components, cfg.max_components), cfg.max_components)
    names = [MAIN_COMPONENT] + [f"C{i}" for i in range(1, n)]
    exports = {}
    for name in names:
        k = rng.randint(1, min(cfg.max_procs, len(EXPORT_POOL)))
        procs = set(rng.sample(EXPORT_POOL, k))
        if name == MAIN_COMPONENT:
            procs = {MAIN_PROCEDURE} | set(rng.sample(sorted(procs), rng.randint(0, len(procs))))
        exports[name] = frozenset(procs)
    interfaces = {}
    for name in names:
        imports = {(o, p) for o in names if o != name for p in sorted(exports[o]) if rng.random() < 0.45}
        interfaces[name] = Interface(exports[name], frozenset(imports))
    if complete:
        unc = set(names)
    else:
        unc = {x for x in names if rng.random() < 0.5}
    return Shape(interfaces, frozenset(unc))


def split_shape(rng: random.Random, s: Shape, nonempty: bool = True) -> Shape:
    """The same interfaces with a fresh random uncompromised set."""
    names = sorted(s.interfaces)
    while True:
        unc = frozenset(x for x in names if rng.random() < 0.5)
        if not nonempty or len(names) < 2 or (unc and unc != frozenset(names)):
            return Shape(s.interfaces, unc)


# --------------------------------------------------------------------------
# expressions and programs


@dataclass
class _ExprGen:
    rng: random.Random
    cfg: GenConfig
    comp: str
    buffers: tuple
    callees: list            # (component, procedure)
    wild: bool
    call_weight: float = 1.0
    exit_weight: float = 0.15

    def lit(self) -> IntLit:
        lo, hi = self.cfg.literal_range
        return IntLit(self.rng.randint(lo, hi))

    def index(self, b: int, depth: int):
        if self.wild and self.rng.random() < 0.6:
            return self.expr(depth)
        return IntLit(self.rng.randrange(self.buffers[b]))

    def leaf(self):
        r = self.rng.random()
        if r < 0.45:
            return self.lit()
        if r < 0.7:
            return Read(0, IntLit(0))  # the argument
        if r < 0.95 or self.exit_weight <= 0:
            b = self.rng.randrange(len(self.buffers))
            return Read(b, self.index(b, 0))
        return Exit()

    def expr(self, depth: int):
        if depth <= 0 or self.rng.random() < 0.2:
            return self.leaf()
        choices = ["binop", "if", "read", "write", "seq"]
        weights = [3, 2, 1.5, 1.5, 1]
        if self.callees:
            choices.append("call")
            weights.append(1.5 * self.call_weight)
        choices.append("exit")
        weights.append(self.exit_weight)
        kind = self.rng.choices(choices, weights)[0]
        d = depth - 1
        if kind == "binop":
            return Binop(self.rng.choice(ARITH), self.expr(d), self.expr(d))
        if kind == "seq":
            return Binop("seq", self.expr(d), self.expr(d))
        if kind == "if":
            return If(self.expr(d), self.expr(d), self.expr(d))
        if kind == "read":
            b = self.rng.randrange(len(self.buffers))
            return Read(b, self.index(b, d))
        if kind == "write":
            b = self.rng.randrange(len(self.buffers))
            return Write(b, self.index(b, d), self.expr(d))
        if kind == "call":
            c, p = self.rng.choice(self.callees)
            return Call(c, p, self.expr(d))
        return Exit()


def gen_component(cfg: GenConfig, rng: random.Random, name: str, iface: Interface,
                  wild: bool = False, private: int | None = None) -> ComponentDef:
    nbuf = rng.randint(1, 2)
    buffers = tuple(rng.randint(1, cfg.max_buffer_size) for _ in range(nbuf))
    if private is None:
        private = rng.randint(0, 1)
    procs = sorted(iface.exports) + [p for p in PRIVATE_POOL[:private] if p not in iface.exports]
    callees = sorted(iface.imports) + [(name, p) for p in procs]
    g = _ExprGen(rng, cfg, name, buffers, callees, wild)
    bodies = {}
    for p in procs:
        g.call_weight = rng.choice((0.3, 1.0, 1.5))
        bodies[p] = g.expr(rng.randint(1, cfg.max_expr_depth))
    return ComponentDef(name, iface, buffers, bodies)


def gen_program_of_shape(cfg: GenConfig, s: Shape, side: str, rng: random.Random,
                         mode: str = "defined") -> PartialProgram:
    """Components for one side of ``s`` (``"program"`` or ``"context"``)."""
    if mode not in ("defined", "wild"):
        raise ValueError(f"unknown generation mode {mode!r}")
    names = sorted(s.uncompromised if side in ("program", PROGRAM) else s.compromised)
    return PartialProgram.of(gen_component(cfg, rng, n, s.interfaces[n], mode == "wild") for n in names)


def gen_complete(cfg: GenConfig, rng: random.Random, mode: str = "defined"):
    s = gen_shape(cfg, rng, complete=True)
    return gen_program_of_shape(cfg, s, "program", rng, mode), s


def mutate_program(rng: random.Random, P: PartialProgram, cfg: GenConfig) -> PartialProgram:
    """Replace one random subtree of one procedure, keeping buffer indices defined."""
    from .lang import walk

    defs = dict(P.defs)
    name = rng.choice(sorted(defs))
    d = defs[name]
    proc = rng.choice(sorted(d.procedures))
    body = d.procedures[proc]
    protected = {id(n.index) for n in walk(body) if isinstance(n, (Read, Write))}
    nodes = [n for n in walk(body) if id(n) not in protected]
    victim = rng.choice(nodes)
    callees = sorted(d.interface.imports) + [(name, p) for p in d.procedures]
    g = _ExprGen(rng, cfg, name, d.buffers, callees, wild=False)
    repl = g.expr(rng.randint(0, 2)) if rng.random() < 0.5 else g.lit()
    new_body = replace_subtree(body, victim, repl)
    procs = dict(d.procedures)
    procs[proc] = new_body
    defs[name] = ComponentDef(name, d.interface, d.buffers, procs)
    return PartialProgram(defs)


def replace_subtree(e, victim, repl):
    """Replace the first occurrence (by identity) of ``victim`` in ``e``."""
    done = [False]

    def go(x):
        if not done[0] and x is victim:
            done[0] = True
            return repl
        if isinstance(x, Binop):
            return Binop(x.op, go(x.left), go(x.right))
        if isinstance(x, If):
            return If(go(x.cond), go(x.then), go(x.orelse))
        if isinstance(x, Read):
            return Read(x.buf, go(x.index))
        if isinstance(x, Write):
            return Write(x.buf, go(x.index), go(x.value))
        if isinstance(x, Call):
            return Call(x.comp, x.proc, go(x.arg))
        return x

    return go(e)


# --------------------------------------------------------------------------
# probing contexts


def probe_context(s: Shape, arg: int, side: str = "context", then_exit: bool = False) -> PartialProgram:
    """Each component calls every procedure it imports from the other side with ``arg``."""
    mine = s.compromised if side in ("context", CONTEXT) else s.uncompromised
    defs = []
    for name in sorted(mine):
        iface = s.interfaces[name]
        calls = [Call(c, p, IntLit(arg)) for c, p in sorted(iface.imports) if c not in mine]
        body = IntLit(0)
        for c in reversed(calls):
            body = Binop("seq", c, body)
        if then_exit:
            body = Binop("seq", body, Exit())
        defs.append(ComponentDef(name, iface, (1,), {p: body for p in iface.exports}))
    return PartialProgram.of(defs)


def probe_args(P: PartialProgram) -> list[int]:
    big = max((sum(d.buffers) for d in P.defs.values()), default=1)
    return sorted({-2, -1, 0, 1, 2, 3} | set(range(big + 2)))


def distinguishing_context(cfg: GenConfig, rng: random.Random, s: Shape) -> PartialProgram:
    """A context whose procedures call the program and branch on the results."""
    defs = []
    for name in sorted(s.compromised):
        iface = s.interfaces[name]
        targets = [(c, p) for c, p in sorted(iface.imports) if c in s.uncompromised]
        spin = "spin"
        procs = {spin: Call(name, spin, IntLit(0))}
        for q in sorted(iface.exports):
            body = IntLit(rng.randint(0, 3))
            if targets:
                c, p = rng.choice(targets)
                lo, hi = cfg.literal_range
                probe = Call(c, p, IntLit(rng.randint(lo, hi)))
                k = IntLit(rng.randint(lo, hi))
                test = Binop(rng.choice(("eq", "leq")), probe, k)
                arms = [Exit(), Call(name, spin, IntLit(0)), IntLit(rng.randint(0, 3))]
                rng.shuffle(arms)
                body = If(test, arms[0], arms[1])
            procs[q] = body
        defs.append(ComponentDef(name, iface, (1,), procs))
    return PartialProgram.of(defs)


# --------------------------------------------------------------------------
# low-level attackers

STRATEGIES = ("compiled", "mutated", "raw")


def random_instr(rng: random.Random, imports, ncomps: int):
    R = isa.NREGS
    k = rng.choices(
        ["const", "mov", "binop", "load", "store", "bnz", "jump", "jal", "call", "return", "halt", "nop"],
        [4, 1, 3, 1, 1, 1, 0.3, 0.3, 2, 2, 0.5, 0.3])[0]
    if k == "const":
        return isa.Const(rng.randint(-4, 12), rng.randrange(R))
    if k == "mov":
        return isa.Mov(rng.randrange(R), rng.randrange(R))
    if k == "binop":
        return isa.Binop(rng.choice(isa.BOPS), rng.randrange(R), rng.randrange(R), rng.randrange(R))
    if k == "load":
        return isa.Load(rng.randrange(R), rng.randrange(R))
    if k == "store":
        return isa.Store(rng.randrange(R), rng.randrange(R))
    if k == "bnz":
        return isa.Bnz(rng.randrange(R), rng.randint(-3, 4))
    if k == "jump":
        return isa.Jump(rng.randrange(R))
    if k == "jal":
        return isa.Jal(rng.randrange(R))
    if k == "call":
        if imports and rng.random() < 0.9:
            c, p = rng.choice(sorted(imports))
            return isa.Call(c, p)
        return isa.Call(rng.randrange(ncomps), rng.randrange(3))
    if k == "return":
        return isa.Return()
    if k == "halt":
        return isa.Halt()
    return isa.Nop()


def raw_attacker(rng: random.Random, s: Shape, length: int = 24) -> Image:
    index = NameIndex.from_shape(s)
    ish = ishape(s, index)
    img = Image()
    for c in sorted(ish.context):
        code = {a: isa.encode(random_instr(rng, ish.imports[c], len(index.comps))) for a in range(length)}
        img.psi[c] = ish.imports[c]
        img.entry[c] = {p: rng.randrange(length) for p in sorted(ish.exports[c])}
        img.mem0[c] = code
        img.names[c] = index.name_of(c)
    return img


def mutate_image(rng: random.Random, img: Image, n: int, s: Shape | None = None) -> Image:
    """Rewrite ``n`` random words in the code regions of ``img``."""
    out = Image(dict(img.psi), {c: dict(e) for c, e in img.entry.items()},
                {c: dict(m) for c, m in img.mem0.items()}, dict(img.names))
    comps = sorted(out.mem0)
    if not comps:
        return out
    for _ in range(n):
        c = rng.choice(comps)
        addrs = sorted(a for a in out.mem0[c] if a > min(out.mem0[c]))  # skip the spsave cell
        if not addrs:
            continue
        a = rng.choice(addrs)
        if rng.random() < 0.8:
            out.mem0[c][a] = isa.encode(random_instr(rng, out.psi.get(c, ()), max(comps) + 1))
        else:
            out.mem0[c][a] = rng.randint(0, 5000)
    return out


def gen_lowlevel_attacker(cfg: GenConfig, s: Shape, rng: random.Random, strategy: str | None = None,
                          mutations: int | None = None) -> tuple[str, Image, PartialProgram | None]:
    """``(strategy, image, source or None)`` for a context of shape ``s``."""
    strategy = strategy or rng.choice(STRATEGIES)
    index = NameIndex.from_shape(s)
    if strategy == "raw":
        return strategy, raw_attacker(rng, s), None
    if rng.random() < 0.5:
        A = distinguishing_context(cfg, rng, s)
    else:
        A = gen_program_of_shape(cfg, s, "context", rng, rng.choice(("defined", "wild")))
    img = compile_program(A, index)
    if strategy == "mutated":
        img = mutate_image(rng, img, rng.randint(1, 3) if mutations is None else mutations)
    elif strategy != "compiled":
        raise ValueError(f"unknown attacker strategy {strategy!r}")
    return strategy, img, A


# --------------------------------------------------------------------------
# scenarios for the distinguishability game


def gen_game_shape(cfg: GenConfig, rng: random.Random) -> Shape:
    """A split shape in which some context component imports a program procedure."""
    base = gen_shape(cfg, rng, min_components=2)
    names = sorted(base.interfaces)
    while True:
        unc = frozenset(x for x in names if rng.random() < 0.5)
        if rng.random() < 0.7:
            unc -= {MAIN_COMPONENT}
        if unc and unc != frozenset(names):
            break
    interfaces = dict(base.interfaces)
    ctx = sorted(set(names) - unc)
    if not any(c in unc for x in ctx for c, _ in interfaces[x].imports):
        x, y = rng.choice(ctx), rng.choice(sorted(unc))
        p = rng.choice(sorted(interfaces[y].exports))
        iface = interfaces[x]
        interfaces[x] = Interface(iface.exports, iface.imports | {(y, p)})
    return Shape(interfaces, unc)


def mutate_exposed(rng: random.Random, P: PartialProgram, s: Shape, cfg: GenConfig) -> PartialProgram:
    """Mutate a procedure that the context can call directly, when there is one."""
    exposed = sorted({(c, p) for x in s.compromised for c, p in s.interfaces[x].imports if c in P.defs})
    if not exposed or rng.random() < 0.2:
        return mutate_program(rng, P, cfg)
    c, p = rng.choice(exposed)
    sub = PartialProgram({c: ComponentDef(c, P.defs[c].interface, P.defs[c].buffers,
                                          {p: P.defs[c].procedures[p]})})
    changed = mutate_program(rng, sub, cfg).defs[c].procedures[p]
    d = P.defs[c]
    procs = dict(d.procedures)
    procs[p] = changed
    return PartialProgram({**P.defs, c: ComponentDef(c, d.interface, d.buffers, procs)})
