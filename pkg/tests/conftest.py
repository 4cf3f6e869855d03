import pytest

from scclab.gen import GenConfig
from scclab.syntax import parse_program, parse_shape


@pytest.fixture
def small_cfg():
    return GenConfig(fuel_source=2000, trials=25)


def prog(text: str):
    return parse_program(text)


def shape(text: str):
    return parse_shape(text)


def main_only(body: str, buffers: str = "1", extra: str = ""):
    """A one-component program whose main procedure is ``body``."""
    return parse_program(
        f"component Main {{ export main ; buffer {buffers} ; proc main(x) = {body} ; {extra} }}")


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
