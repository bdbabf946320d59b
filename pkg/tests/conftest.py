import time
from contextlib import contextmanager

import pytest

_ACCEPTANCE: list[str] = []


@contextmanager
def _criterion(label: str, limit: float):
    start = time.perf_counter()
    try:
        yield
    except BaseException as e:
        _ACCEPTANCE.append(f"FAIL  {label}  ({time.perf_counter() - start:.2f}s): {type(e).__name__}")
        raise
    elapsed = time.perf_counter() - start
    if elapsed >= limit:
        _ACCEPTANCE.append(f"FAIL  {label}  ({elapsed:.2f}s, limit {limit:g}s)")
        pytest.fail(f"{label} took {elapsed:.2f}s, limit {limit:g}s")
    _ACCEPTANCE.append(f"PASS  {label}  ({elapsed:.2f}s)")


@pytest.fixture
def criterion():
    return _criterion


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
