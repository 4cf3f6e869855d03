"""Fixed attack scenarios showing what the protections do and do not stop.

``rop``
    A component with an out-of-bounds write overwrites a return address on
    its own stack and diverts control to a private procedure nobody calls.
    The hijack stays inside the compartment: a forged call to a procedure
    it does not import halts with an interface violation, and the other
    compartment's memory is untouched.

``covert``
    With register cleaning switched off, the argument a compromised ``Main``
    passes to an honest component leaks through ``r_t2`` into another
    compromised component that is not allowed to talk to ``Main``.  A
    hand-written machine context uses the leak to tell apart two programs
    no fully defined source context can distinguish.  Cleaning closes it.

``spsave``
    Without the saved stack pointer, a reentrant call restarts the
    component's stack from the bottom and clobbers the suspended outer
    activation, so the compiled program computes the wrong answer.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from . import isa
from .compiler import NO_CLEAN, NO_SPSAVE, NameIndex, compile_component, compile_program, compile_whole
from .gen import GenConfig, gen_program_of_shape, probe_context
from .interp import CounterexampleFound, Terminated, UndefinedBehavior, check_fully_defined_bounded, run
from .isa import R_COM, R_T1, R_T2, R_T3
from .lang import PartialProgram, link
from .machine import STUCK, STUCK_REASONS, Halted, Image, Runner, link_images, mrun
from .properties import isolation_violations
from .syntax import parse_program, parse_shape

FUEL = 20000


@dataclass
class DemoReport:
    name: str
    passed: bool
    lines: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def format(self) -> str:
        head = f"[{'PASS' if self.passed else 'FAIL'}] {self.name}"
        return "\n".join([head] + [f"    {x}" for x in self.lines])


def _run_traced(image: Image, fuel: int = FUEL):
    """Run one instruction at a time; return the runner, the status and the visited (cidx, pc) set."""
    r = Runner(image)
    seen = set()
    status = None
    for _ in range(fuel):
        seen.add((r.cur, r.pc))
        status, reason, detail = r.run(1)
        if status == STUCK:
            return r, Halted(r.steps + 1, STUCK_REASONS[reason], detail), seen
    return r, None, seen


def _jal_targets(words: dict) -> set:
    """Addresses a compiled component jumps to via ``Const x -> r; Jal r``."""
    out = set()
    for addr, w in words.items():
        ins = isa.decode(w)
        nxt = isa.decode(words.get(addr + 1, 0))
        if isinstance(ins, isa.Const) and isinstance(nxt, isa.Jal) and nxt.r == ins.rd:
            out.add(ins.imm)
    return out


# --------------------------------------------------------------------------
# return-oriented programming inside one compartment

_ROP_SRC = """
component Main {{
  import Vault.peek ;
  export main ;
  buffer 2 ;
  proc main(x) = Main.g(0) ;
  proc g(x) = b0[1] := {word} ; b0[{slot}] := {target} ; 0 ;
  proc secret(x) = exit ;
}}
component Vault {{
  export drain, peek ;
  buffer 3 ;
  proc drain(x) = b0[2] := x ; 1 ;
  proc peek(x) = x + 1 ;
}}
"""

# the saved return address of g: main's own ra, then main's saved
# argument, then g's ra
_RA_SLOT = 2


def _rop_program(word: int, slot: int, target: int) -> PartialProgram:
    return parse_program(_ROP_SRC.format(word=word, slot=slot, target=target))


def rop_demo() -> DemoReport:
    rep = DemoReport("in-compartment ROP", True)
    # first pass: learn the layout (literals are one word each, so it does not move)
    draft = _rop_program(0, 0, 0)
    index = NameIndex.from_program(draft)
    lay = compile_component(draft.defs["Main"], index).layout
    slot = lay.stackbase + _RA_SLOT - lay.bufbase[0]
    secret = lay.entries["secret"][1]
    forged = isa.encode(isa.Call(index.cidx("Vault"), index.pidx("Vault", "drain")))

    hijack = _rop_program(0, slot, secret)
    escape = _rop_program(forged, slot, lay.bufbase[0] + 1)
    main_c, vault_c = index.cidx("Main"), index.cidx("Vault")

    src = run(hijack, FUEL)
    rep.lines.append(f"source semantics: {src}")
    if not (isinstance(src, UndefinedBehavior) and src.blamed == "Main"):
        rep.passed = False
        rep.lines.append("expected the out-of-bounds write to be undefined behavior of Main")

    img = compile_whole(hijack)
    if compile_component(hijack.defs["Main"], index).layout != lay:
        rep.passed = False
        rep.lines.append("layout moved between passes")
    legit = _jal_targets(img.mem0[main_c]) | set(img.entry[main_c].values())
    r, res, seen = _run_traced(img)
    reached = (main_c, secret) in seen
    rep.lines.append(f"private procedure at address {secret}: reached={reached}, "
                     f"legitimate jump target={secret in legit}, run={res}")
    if not reached or secret in legit or res is None:
        rep.passed = False
    vault_same = r.mem[vault_c] == img.mem0[vault_c]
    rep.lines.append(f"Vault memory unchanged: {vault_same}")
    rep.passed &= vault_same

    img2 = compile_whole(escape)
    r2, res2, _ = _run_traced(img2)
    blocked = res2 is not None and res2.reason == "InterfaceViolation"
    rep.lines.append(f"forged call to the unimported Vault.drain: {res2}")
    vault_same2 = r2.mem[vault_c] == img2.mem0[vault_c]
    rep.lines.append(f"Vault memory unchanged: {vault_same2}")
    rep.passed &= blocked and vault_same2

    escapes = isolation_violations(img, FUEL) + isolation_violations(img2, FUEL)
    rep.lines.append(f"cross-interface escapes: {len(escapes)}")
    rep.passed &= not escapes
    rep.details.update(slot=slot, secret=secret, hijack_run=res, escape_run=res2, escapes=escapes)
    return rep


# --------------------------------------------------------------------------
# covert channel through uncleared registers

COVERT_SHAPE = """
shape {
  Main : { import U.f ; export main } compromised ;
  U : { import Y.g ; export f } ;
  Y : { export g } compromised ;
}
"""

_MAIN = "component Main { import U.f ; export main ; buffer 1 ; proc main(x) = U.f(42) ; }"
_U_P = "component U { import Y.g ; export f ; buffer 1 ; proc f(x) = Y.g(0) ; }"
_U_Q = "component U { import Y.g ; export f ; buffer 1 ; proc f(x) = b0[0] := 0 ; Y.g(0) ; }"

SECRET = 42


def covert_context(index: NameIndex) -> Image:
    """Compiled Main plus a hand-written Y that halts iff r_t2 holds the secret."""
    main = compile_program(parse_program(_MAIN), index)
    y = index.cidx("Y")
    code = [
        isa.Const(SECRET, R_T3),
        isa.Binop("eq", R_T2, R_T3, R_T1),
        isa.Bnz(R_T1, 3),
        isa.Const(1, R_T1),
        isa.Bnz(R_T1, 0),      # spin
        isa.Halt(),
    ]
    img = Image({y: frozenset()}, {y: {index.pidx("Y", "g"): 0}},
                {y: {a: isa.encode(i) for a, i in enumerate(code)}}, {y: "Y"})
    return link_images(main, img, check_imports=False)


def source_search(P, Q, s, trials: int, fuel: int, seed: int = 0):
    """Look for a fully defined source context that tells ``P`` and ``Q`` apart.

    Returns the first one found, or None.  Systematic probes come first,
    then random contexts that pass a bounded definedness check.
    """
    rng = random.Random(seed)
    cfg = GenConfig(seed=seed, max_expr_depth=4)
    cands = [probe_context(s, v, then_exit=e) for v in (-1, 0, 1, SECRET) for e in (False, True)]
    for i in range(trials):
        A = cands[i] if i < len(cands) else gen_program_of_shape(cfg, s, "context", rng)
        rp, rq = run(link(A, P), fuel), run(link(A, Q), fuel)
        if isinstance(rp, UndefinedBehavior) or isinstance(rq, UndefinedBehavior):
            continue
        if isinstance(rp, Terminated) != isinstance(rq, Terminated):
            v = check_fully_defined_bounded(A, s, 20, fuel, seed=i, side="context")
            if not isinstance(v, CounterexampleFound):
                return A
    return None


def covert_demo(search_trials: int = 300) -> DemoReport:
    rep = DemoReport("register covert channel", True)
    s = parse_shape(COVERT_SHAPE)
    index = NameIndex.from_shape(s)
    P, Q = parse_program(_U_P), parse_program(_U_Q)
    a = covert_context(index)
    outcome = {}
    for label, flags in (("no-clean", {NO_CLEAN}), ("secure", set())):
        rp = mrun(link_images(a, compile_program(P, index, flags)), FUEL)
        rq = mrun(link_images(a, compile_program(Q, index, flags)), FUEL)
        differs = isinstance(rp, Halted) != isinstance(rq, Halted)
        outcome[label] = differs
        rep.lines.append(f"{label}: P -> {rp}, Q -> {rq}, distinguished={differs}")
    rep.passed = outcome["no-clean"] and not outcome["secure"]
    found = source_search(P, Q, s, search_trials, 2000)
    rep.lines.append(f"fully defined source distinguisher among {search_trials} candidates: "
                     f"{'found' if found else 'none'}")
    rep.passed &= found is None
    rep.details.update(outcome=outcome, source_distinguisher=found)
    return rep


# --------------------------------------------------------------------------
# reentrancy without the saved stack pointer

_REENTRANT = """
component Main {
  import U.f ;
  export g, main ;
  buffer 1 ;
  proc main(x) = U.f(3) ;
  proc g(y) = U.f(y) ;
}
component U {
  import Main.g ;
  export f ;
  buffer 1 ;
  proc f(x) = if x then x + Main.g(x - 1) else 0 ;
}
"""


def _machine_value(img: Image):
    r = Runner(img)
    status, reason, _ = r.run(FUEL)
    if status != STUCK:
        return None, "fuel"
    return r.reg[R_COM], STUCK_REASONS[reason]


def spsave_demo() -> DemoReport:
    rep = DemoReport("reentrancy without the saved stack pointer", True)
    W = parse_program(_REENTRANT)
    src = run(W, FUEL)
    good = _machine_value(compile_whole(W))
    bad = _machine_value(compile_whole(W, {NO_SPSAVE}))
    rep.lines.append(f"source: {src}")
    rep.lines.append(f"secure build: r_com={good[0]} ({good[1]})")
    rep.lines.append(f"no-spsave build: r_com={bad[0]} ({bad[1]})")
    rep.passed = (isinstance(src, Terminated) and good == (src.value, "ReturnEmptyStack")
                  and bad != good)
    rep.details.update(source=src, secure=good, no_spsave=bad)
    return rep


def attack_demos() -> list[DemoReport]:
    return [rop_demo(), covert_demo(), spsave_demo()]


__all__ = ["DemoReport", "attack_demos", "rop_demo", "covert_demo", "spsave_demo", "covert_context",
           "source_search", "COVERT_SHAPE"]
