# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled machine run loop; same contract as ``scclab._kernel.run``."""

from .isa import checked_mul, decode_raw

cdef int FUEL = 0, STUCK = 1, WATCH = 2
cdef int HALT = 0, UNDECODABLE = 1, INTERFACE = 2, RETURN_EMPTY = 3, NEGATIVE = 4

cdef tuple _UNDEF = ()


cpdef tuple run(dict mem, list reg, list stack, dict psi, dict entry, object cur, object pc,
                long long fuel, bint watch, dict cache):
    cdef long long steps = 0
    cdef dict m = mem[cur]
    cdef object w, raw, a, b, x, y, addr, target, e
    cdef tuple t
    cdef int op, ia, ib, ic, id_
    while steps < fuel:
        if pc < 0:
            return (STUCK, cur, pc, steps, NEGATIVE, pc)
        w = m.get(pc, 0)
        raw = cache.get(w)
        if raw is None:
            raw = decode_raw(w)
            if raw is None:
                raw = _UNDEF
            cache[w] = raw
        t = <tuple>raw
        if len(t) == 0:
            return (STUCK, cur, pc, steps, UNDECODABLE, w)
        op = t[0]
        if op == 1:  # Const
            reg[<int>t[2]] = t[1]
            pc = pc + 1
        elif op == 9:  # Binop
            ia = t[1]
            x = reg[<int>t[2]]
            y = reg[<int>t[3]]
            id_ = t[4]
            if ia == 0:
                reg[id_] = x + y
            elif ia == 1:
                reg[id_] = x - y
            elif ia == 2:
                reg[id_] = checked_mul(x, y)
            elif ia == 3:
                reg[id_] = 1 if x == y else 0
            else:
                reg[id_] = 1 if x <= y else 0
            pc = pc + 1
        elif op == 3:  # Load
            addr = reg[<int>t[1]]
            if addr < 0:
                return (STUCK, cur, pc, steps, NEGATIVE, addr)
            reg[<int>t[2]] = m.get(addr, 0)
            pc = pc + 1
        elif op == 4:  # Store
            addr = reg[<int>t[1]]
            if addr < 0:
                return (STUCK, cur, pc, steps, NEGATIVE, addr)
            m[addr] = reg[<int>t[2]]
            pc = pc + 1
        elif op == 10:  # Bnz
            if reg[<int>t[1]] != 0:
                pc = pc + t[2]
            else:
                pc = pc + 1
        elif op == 2:  # Mov
            reg[<int>t[2]] = reg[<int>t[1]]
            pc = pc + 1
        elif op == 5:  # Jump
            pc = reg[<int>t[1]]
        elif op == 6:  # Jal
            target = reg[<int>t[1]]
            reg[1] = pc + 1
            pc = target
        elif op == 0:  # Nop
            pc = pc + 1
        elif op == 7:  # Call
            if watch:
                return (WATCH, cur, pc, steps, 0, None)
            a = t[1]
            b = t[2]
            if a != cur and (a, b) not in psi.get(cur, ()):
                return (STUCK, cur, pc, steps, INTERFACE, (a, b))
            e = entry.get(a)
            target = None if e is None else e.get(b)
            if target is None:
                return (STUCK, cur, pc, steps, INTERFACE, (a, b))
            stack.append((cur, pc + 1))
            cur = a
            m = mem[cur]
            pc = target
        elif op == 8:  # Return
            if watch:
                return (WATCH, cur, pc, steps, 0, None)
            if not stack:
                return (STUCK, cur, pc, steps, RETURN_EMPTY, None)
            cur, pc = stack.pop()
            m = mem[cur]
        else:  # Halt
            return (STUCK, cur, pc, steps, HALT, None)
        steps += 1
    return (FUEL, cur, pc, steps, 0, None)
