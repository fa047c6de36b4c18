import numpy as np
import pytest

from etchvm.nn import mlp_specs


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def default_specs():
    return mlp_specs(3, 32, 0.2)


@pytest.fixture
def write_text(tmp_path):
    def _write(name, text):
        p = tmp_path / name
        p.write_text(text, encoding="utf-8")
        return p

    return _write


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def gate():
    """Record one PASS/FAIL line per acceptance criterion."""

    def record(number, title, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {title} :: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance gate")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
