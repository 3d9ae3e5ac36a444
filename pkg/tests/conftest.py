import numpy as np
import pytest

from msreinflect.datamodel import Instance, MorphTag

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (ok, detail)
    print(f"ACCEPTANCE {criterion:>2} {'PASS' if ok else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


def make_instance(sources, target_tag, target_form=None):
    """``sources`` as ``[(tag, form), ...]`` with ``;``-separated tags."""
    tag = lambda t: MorphTag(tuple(t.split(";")))
    return Instance(tuple((f, tag(t)) for t, f in sources), tag(target_tag), target_form)


@pytest.fixture
def toy_instances():
    return [
        make_instance([("V;PRS", "abc"), ("V;PST", "abd")], "V;SBJ", "abe"),
        make_instance([("V;1", "ca"), ("V;2", "cb")], "V;3", "cab"),
        make_instance([("N;SG", "dd")], "N;PL", "dde"),
    ]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
