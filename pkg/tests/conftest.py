import os

import numpy as np
import pytest


@pytest.fixture(autouse=True, scope="session")
def _isolated_cache(tmp_path_factory):
    # keep window and code caches out of the user's home during tests
    old = os.environ.get("BSTR_CACHE_DIR")
    os.environ["BSTR_CACHE_DIR"] = str(tmp_path_factory.mktemp("bstr-cache"))
    yield
    if old is None:
        os.environ.pop("BSTR_CACHE_DIR", None)
    else:
        os.environ["BSTR_CACHE_DIR"] = old


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


_ACCEPTANCE = []


@pytest.fixture
def accept():
    """Record one pass/fail line for an acceptance criterion and assert it."""

    def record(name, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
