"""Pure-Python machine run loop.

Mirrors ``_vmcore.pyx`` exactly; ``scclab.machine`` picks whichever is
available at import.  Memory, registers and the call stack are mutated in
place.  Returns ``(status, cur, pc, steps, reason, detail)`` where
``steps`` counts successfully executed instructions.
"""

from .isa import checked_mul, decode_raw

FUEL, STUCK, WATCH = 0, 1, 2
HALT, UNDECODABLE, INTERFACE, RETURN_EMPTY, NEGATIVE = range(5)

_UNDEF = ()


def run(mem, reg, stack, psi, entry, cur, pc, fuel, watch, cache):
    steps = 0
    m = mem[cur]
    while steps < fuel:
        if pc < 0:
            return STUCK, cur, pc, steps, NEGATIVE, pc
        w = m.get(pc, 0)
        raw = cache.get(w)
        if raw is None:
            raw = decode_raw(w)
            if raw is None:
                raw = _UNDEF
            cache[w] = raw
        if raw is _UNDEF:
            return STUCK, cur, pc, steps, UNDECODABLE, w
        op, a, b, c, d = raw
        if op == 1:  # Const
            reg[b] = a
            pc += 1
        elif op == 9:  # Binop
            x, y = reg[b], reg[c]
            if a == 0:
                reg[d] = x + y
            elif a == 1:
                reg[d] = x - y
            elif a == 2:
                reg[d] = checked_mul(x, y)
            elif a == 3:
                reg[d] = 1 if x == y else 0
            else:
                reg[d] = 1 if x <= y else 0
            pc += 1
        elif op == 3:  # Load
            addr = reg[a]
            if addr < 0:
                return STUCK, cur, pc, steps, NEGATIVE, addr
            reg[b] = m.get(addr, 0)
            pc += 1
        elif op == 4:  # Store
            addr = reg[a]
            if addr < 0:
                return STUCK, cur, pc, steps, NEGATIVE, addr
            m[addr] = reg[b]
            pc += 1
        elif op == 10:  # Bnz
            pc = pc + b if reg[a] != 0 else pc + 1
        elif op == 2:  # Mov
            reg[b] = reg[a]
            pc += 1
        elif op == 5:  # Jump
            pc = reg[a]
        elif op == 6:  # Jal
            target = reg[a]
            reg[1] = pc + 1
            pc = target
        elif op == 0:  # Nop
            pc += 1
        elif op == 7:  # Call
            if watch:
                return WATCH, cur, pc, steps, 0, None
            if a != cur and (a, b) not in psi.get(cur, ()):
                return STUCK, cur, pc, steps, INTERFACE, (a, b)
            target = entry.get(a, {}).get(b)
            if target is None:
                return STUCK, cur, pc, steps, INTERFACE, (a, b)
            stack.append((cur, pc + 1))
            cur = a
            m = mem[cur]
            pc = target
        elif op == 8:  # Return
            if watch:
                return WATCH, cur, pc, steps, 0, None
            if not stack:
                return STUCK, cur, pc, steps, RETURN_EMPTY, None
            cur, pc = stack.pop()
            m = mem[cur]
        else:  # Halt
            return STUCK, cur, pc, steps, HALT, None
        steps += 1
    return FUEL, cur, pc, steps, 0, None
