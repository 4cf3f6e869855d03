import pytest

from scclab.cli import EXIT_COUNTEREXAMPLE, EXIT_OK, EXIT_USAGE, main
from scclab.compiler import NameIndex, compile_program
from scclab.machine import format_image
from scclab.syntax import parse_program, parse_shape

SHAPE = "shape { Main : { import U.f ; export main } compromised ; U : { export f } ; }\n"
P = "component U { export f ; buffer 1 ; proc f(x) = 1 ; }\n"
Q = "component U { export f ; buffer 1 ; proc f(x) = 2 ; }\n"
A = "component Main { import U.f ; export main ; buffer 1 ; proc main(x) = if U.f(0) == 1 then exit else Main.main(0) ; }\n"
WHOLE = "component Main { export main ; buffer 1 ; proc main(x) = 2 + 3 ; }\n"


@pytest.fixture
def files(tmp_path):
    paths = {}
    for name, text in {"shape": SHAPE, "p": P, "q": Q, "a": A, "w": WHOLE}.items():
        paths[name] = tmp_path / f"{name}.txt"
        paths[name].write_text(text)
    idx = NameIndex.from_shape(parse_shape(SHAPE))
    paths["aimg"] = tmp_path / "a.img"
    paths["aimg"].write_text(format_image(compile_program(parse_program(A), idx)))
    paths["pimg"] = tmp_path / "p.img"
    paths["pimg"].write_text(format_image(compile_program(parse_program(P), idx)))
    paths["dir"] = tmp_path
    return {k: str(v) for k, v in paths.items()}


def test_parse_and_run(files, capsys):
    assert main(["parse", files["w"], "--check"]) == EXIT_OK
    assert "proc main() = 2 + 3" in capsys.readouterr().out
    assert main(["run-source", files["w"]]) == EXIT_OK
    assert capsys.readouterr().out.startswith("TERMINATED 5")


def test_compile_run_disasm(files, capsys):
    out = files["dir"] + "/w.img"
    assert main(["compile", files["w"], "-o", out]) == EXIT_OK
    assert main(["run-machine", out]) == EXIT_OK
    line = capsys.readouterr().out
    assert line.startswith("HALTED") and "com=5" in line
    assert main(["disasm", out]) == EXIT_OK
    assert "<entry 0>" in capsys.readouterr().out


def test_trace(files, capsys):
    assert main(["trace", files["aimg"], files["pimg"], "--shape", files["shape"]]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.splitlines()[:3] == ["? CALL 1.0 com=0 ra=0 sp=0 t1=0 t2=0 t3=0",
                                    "! RET com=1 ra=0 sp=0 t1=0 t2=0 t3=0", "? TICK"]


def test_scc_game(files, capsys):
    args = ["scc-game", files["p"], files["q"], files["aimg"], "--shape", files["shape"], "--fuel-source", "2000"]
    assert main(args + ["-o", files["dir"] + "/ctx.txt"]) == EXIT_OK
    assert capsys.readouterr().out.startswith("DISTINGUISHED")
    assert main(["scc-game", files["p"], files["p"], files["aimg"], "--shape", files["shape"]]) == EXIT_OK
    assert capsys.readouterr().out.startswith("NOT-DISTINGUISHED")


def test_check(capsys):
    assert main(["check", "separate-compilation", "--trials", "5", "--seed", "1"]) == EXIT_OK
    assert "fail=0" in capsys.readouterr().out


def test_usage_errors(files, capsys):
    assert main(["run-source", files["dir"] + "/missing.txt"]) == EXIT_USAGE
    assert main(["check", "nonsense"]) == EXIT_USAGE
    assert main(["compile", files["w"], "--insecure", "bogus"]) == EXIT_USAGE
    assert main(["run-source", files["p"]]) == EXIT_USAGE  # no Main
    bad = files["dir"] + "/bad.txt"
    open(bad, "w").write("component {")
    assert main(["parse", bad]) == EXIT_USAGE
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == EXIT_USAGE


def test_check_reports_counterexamples(monkeypatch, capsys):
    from scclab import properties as props

    real = props.REGISTRY["separate-compilation"]
    monkeypatch.setitem(props.REGISTRY, "separate-compilation",
                        props.Property(real.name, real.generate, lambda c, cfg, o: props.fail("forced"), ()))
    assert main(["check", "separate-compilation", "--trials", "2"]) == EXIT_COUNTEREXAMPLE
    assert "counterexample seed=" in capsys.readouterr().out
