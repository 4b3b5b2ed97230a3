import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

import importlib

from lagsearch import _dtw_py
from lagsearch._backend import BACKEND

settings.register_profile(
    "default", max_examples=60, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

dtw_mod = importlib.import_module("lagsearch.dtw")

ACCEPTANCE_LINES: list[str] = []

_BACKENDS = ["python"]
if BACKEND == "compiled":
    _BACKENDS.insert(0, "compiled")


@pytest.fixture(params=_BACKENDS)
def backend(request, monkeypatch):
    """Run a test once per available DTW kernel."""
    if request.param == "python":
        monkeypatch.setattr(dtw_mod, "kernels", _dtw_py)
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
