"""Compare the compiled (Cython) machine run loop with the pure-Python one.

    python3 benchmarks/bench_vm.py [--programs 200] [--fuel 200000] [--repeat 3]

Both loops run the same images from the same initial states; the script
checks that they end in identical states before reporting timings.
"""

from __future__ import annotations

import argparse
import random
import statistics
import sys
import time

from scclab import _kernel
from scclab.compiler import compile_whole
from scclab.gen import GenConfig, gen_complete
from scclab.machine import init_state
from scclab.syntax import parse_program

try:
    from scclab import _vmcore
except ImportError:
    _vmcore = None

# a tight counting loop: main(x) counts b0[1] down from x
LOOP = """
component Main {
  export main ;
  buffer 2 ;
  proc main(x) = b0[1] := 100000 ; Main.down(0) ;
  proc down(x) = if b0[1] then b0[1] := b0[1] - 1 ; Main.down(0) else 7 ;
}
"""


def workloads(n: int, seed: int):
    rng = random.Random(seed)
    cfg = GenConfig(seed=seed)
    out = [("counting loop", compile_whole(parse_program(LOOP)))]
    for i in range(n):
        W, _ = gen_complete(cfg, rng)
        out.append((f"generated #{i}", compile_whole(W)))
    return out


def run_once(kernel, image, fuel):
    st = init_state(image)
    mem, reg, stack = st.thaw()
    t0 = time.perf_counter()
    res = kernel.run(mem, reg, stack, image.psi, image.entry, st.current, st.pc, fuel, False, {})
    dt = time.perf_counter() - t0
    return dt, res, mem, reg, stack


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--programs", type=int, default=200)
    ap.add_argument("--fuel", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if _vmcore is None:
        print("the compiled kernel is not built; run `pip install -e . --no-build-isolation`")
        return 1

    loads = workloads(args.programs, args.seed)
    totals = {"python": [], "cython": []}
    steps = 0
    for name, img in loads:
        best = {}
        for label, kernel in (("python", _kernel), ("cython", _vmcore)):
            times = []
            for _ in range(args.repeat):
                dt, res, mem, reg, stack = run_once(kernel, img, args.fuel)
                times.append(dt)
            best[label] = (min(times), res, mem, reg, stack)
        py, cy = best["python"], best["cython"]
        if py[1:] != cy[1:]:
            print(f"MISMATCH on {name}: {py[1]} vs {cy[1]}")
            return 1
        steps += py[1][3]
        totals["python"].append(py[0])
        totals["cython"].append(cy[0])
        if name == "counting loop":
            print(f"{name:>16}: {py[1][3]} instructions  python {py[0] * 1e3:8.1f} ms"
                  f"  cython {cy[0] * 1e3:8.1f} ms  speedup {py[0] / cy[0]:5.1f}x")

    tp, tc = sum(totals["python"]), sum(totals["cython"])
    ratios = [p / c for p, c in zip(totals["python"], totals["cython"]) if c > 0]
    print(f"{'all workloads':>16}: {steps} instructions  python {tp * 1e3:8.1f} ms  cython {tc * 1e3:8.1f} ms"
          f"  speedup {tp / tc:5.1f}x (median per program {statistics.median(ratios):.1f}x)")
    print(f"{'throughput':>16}: python {steps / tp / 1e6:.2f} M instr/s, cython {steps / tc / 1e6:.2f} M instr/s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
