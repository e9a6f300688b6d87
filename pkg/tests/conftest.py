import numpy as np
import pytest

from mova.corpus import generate_synthetic_corpus

# one line per acceptance criterion, echoed after the run (outside capture)
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record a one-line PASS/FAIL verdict for an acceptance criterion."""

    def record(label: str, ok: bool, detail: str) -> None:
        status = "PASS" if ok else "FAIL"
        line = f"[{status}] {label}: {detail}"
        ACCEPTANCE_LINES.append(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    return generate_synthetic_corpus(root, num_speakers=4, utts_per_speaker=2,
                                     duration=6.0, fs=16000, seed=1)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
