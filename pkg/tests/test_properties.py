import functools

import pytest

from scclab import properties as props
from scclab.compiler import NO_CLEAN
from scclab.gen import GenConfig
from scclab.lang import Write, walk
from scclab.properties import (
    DISCARD, FAIL, PASS, PROPERTY_NAMES, Options, UnknownProperty, case_seed, get_property, register,
    run_case, run_property,
)

CFG = GenConfig(seed=7, trials=8, fuel_source=2000)
OPTS = Options(definedness_trials=5)

EXPECTED = {
    "type-safety", "correctness", "separate-compilation", "separate-correctness", "extensibility",
    "decomposition", "composition", "canonicalization", "register-hygiene", "definability",
    "scc-end-to-end", "isolation", "local-opt",
}


def test_registry():
    assert set(PROPERTY_NAMES) == EXPECTED
    with pytest.raises(UnknownProperty):
        get_property("no-such-property")
    for n in PROPERTY_NAMES:
        assert get_property(n).doc


@pytest.mark.parametrize("name", sorted(EXPECTED))
def test_each_property_passes_a_small_run(name):
    rep = run_property(name, CFG, OPTS)
    assert rep.ok, rep.failures[:1]
    assert rep.cases_run == CFG.trials
    assert rep.passes + rep.unknown == rep.cases_run


def test_runs_are_deterministic():
    a = run_property("decomposition", CFG, OPTS)
    b = run_property("decomposition", CFG, OPTS)
    assert a.lines == b.lines


def test_replay_reproduces_the_logged_case():
    rep = run_property("correctness", CFG, OPTS)
    first = rep.lines[0]
    seed = int(first.split("seed=")[1].split()[0])
    case, v = run_case("correctness", seed, CFG, OPTS)
    assert v.status in first


def test_case_seeds_separate_properties_and_attempts():
    seeds = {case_seed(1, n, i, k) for n in EXPECTED for i in range(5) for k in range(3)}
    assert len(seeds) == len(EXPECTED) * 15


def _has_write(case):
    return any(isinstance(e, Write) for P in case.programs.values()
               for d in P.defs.values() for body in d.procedures.values() for e in walk(body))


@pytest.fixture
def temp_property():
    added = []

    def make(name, gen, check, shrinkers):
        register(name, shrinkers, "temporary")((gen, check))
        added.append(name)
        return name

    yield make
    for n in added:
        props.REGISTRY.pop(n, None)


def test_shrunk_counterexamples_still_fail(temp_property):
    def check(case, cfg, opts):
        return props.fail("writes to a buffer") if _has_write(case) else props.ok()

    base = get_property("correctness")
    name = temp_property("no-writes", base.generate, check, ("components", "procedures", "expressions"))
    rep = run_property(name, GenConfig(seed=3, trials=6), OPTS)
    assert rep.failures
    for seed, small, note in rep.failures:
        assert check(small, CFG, OPTS).status == FAIL
        original, _ = run_case(name, seed, GenConfig(seed=3), OPTS)
        size = lambda c: sum(1 for P in c.programs.values() for d in P.defs.values()
                             for b in d.procedures.values() for _ in walk(b))
        assert size(small) <= size(original)


@pytest.mark.parametrize("name", ["canonicalization", "register-hygiene"])
def test_checks_catch_uncleaned_registers(name, temp_property):
    base = get_property(name)
    check = functools.partial(base.check, flags=frozenset({NO_CLEAN}))
    weak = temp_property(name + "-no-clean", base.generate, check, ())
    rep = run_property(weak, GenConfig(seed=1, trials=60, fuel_source=2000), OPTS, shrink=False)
    assert rep.failures


def test_isolation_check_catches_a_leaky_machine(monkeypatch):
    real_run = props.Runner.run

    def leaky(self, fuel, watch=False):
        out = real_run(self, fuel, watch)
        for c, m in self.mem.items():
            if c != self.cur:
                m[10**6] = 1
        return out

    monkeypatch.setattr(props.Runner, "run", leaky)
    rep = run_property("isolation", GenConfig(seed=2, trials=10), OPTS, shrink=False)
    assert rep.failures


def test_results_do_not_depend_on_string_hashing():
    import os
    import subprocess
    import sys

    code = ("from scclab.gen import GenConfig\n"
            "from scclab.properties import run_property, Options\n"
            "for n in ('composition', 'scc-end-to-end'):\n"
            "    r = run_property(n, GenConfig(seed=11, trials=6, fuel_source=2000), Options(definedness_trials=3))\n"
            "    print('\\n'.join(r.lines))\n")
    outs = set()
    for h in ("1", "2"):
        env = {**os.environ, "PYTHONHASHSEED": h}
        outs.add(subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                                check=True).stdout)
    assert len(outs) == 1
