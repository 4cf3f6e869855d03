"""Fuel calibration between source steps and machine steps.

Each source step compiles to a bounded number of instructions, so a
single expansion constant maps a source budget to a machine budget.  The
constant lives in ``calibration.json`` and can be re-measured with
``measure``.
"""

from __future__ import annotations

import json
import math
import random
from functools import lru_cache
from importlib import resources


@lru_cache(maxsize=1)
def expansion() -> int:
    data = json.loads(resources.files("scclab").joinpath("calibration.json").read_text())
    return int(data["expansion"])


def target_fuel(source_fuel: int) -> int:
    return expansion() * source_fuel


def measure(samples: int = 3000, fuel: int = 5000, seed: int = 0) -> tuple[int, int]:
    """``(ceil of the worst ratio, number of terminating samples)``."""
    from .compiler import compile_whole
    from .gen import GenConfig, gen_complete
    from .interp import Terminated, run
    from .machine import Halted, mrun

    cfg = GenConfig(seed=seed)
    worst, n = 0.0, 0
    for i in range(samples):
        W, _ = gen_complete(cfg, random.Random(seed * 1_000_003 + i))
        r = run(W, fuel)
        if not isinstance(r, Terminated):
            continue
        m = mrun(compile_whole(W), fuel * 100)
        if isinstance(m, Halted):
            worst = max(worst, m.steps / r.steps)
            n += 1
    return math.ceil(worst), n


if __name__ == "__main__":
    ratio, n = measure()
    print(f"expansion {ratio} over {n} terminating samples (stored: {expansion()})")
