import pytest

from fisherda.config import ExperimentConfig

ACCEPTANCE_LINES = []


@pytest.fixture
def small_cfg():
    return ExperimentConfig(transfer="adversarial", n_per_domain=120, max_batches=60, eval_every=20,
                            seed=3)


@pytest.fixture
def verdict():
    """Record one pass/fail line for an acceptance criterion."""
    def record(number, title, ok, detail=""):
        line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}"
        ACCEPTANCE_LINES.append(line + (f": {detail}" if detail else ""))
        print(ACCEPTANCE_LINES[-1])
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
