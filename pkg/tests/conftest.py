import numpy as np
import pytest

from autofocus.data.corpus import build_corpus
from autofocus.data.episodes import GeneratorConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_gen():
    return GeneratorConfig(n_frames=24, d_appearance=6, d_motion=6, idle_gap=(1, 3))


@pytest.fixture(scope="session")
def small_corpus(small_gen):
    return build_corpus(small_gen, 120, seed=3, per_template=1, min_count=3)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one pass/fail line per acceptance criterion; printed in the terminal summary."""

    def emit(criterion: int, ok: bool, detail: str) -> bool:
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} | {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
