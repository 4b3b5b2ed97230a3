import os
import subprocess
import sys

import numpy as np
import pytest

from lagsearch import _dtw_py
from lagsearch._backend import BACKEND

core = pytest.importorskip("lagsearch._dtw_core") if BACKEND == "compiled" else None
needs_ext = pytest.mark.skipif(core is None, reason="compiled extension not built")


@needs_ext
@pytest.mark.parametrize("kind", [0, 1])
@pytest.mark.parametrize("band", [-1, 0, 2, 5])
def test_kernels_bit_identical(kind, band):
    rng = np.random.default_rng(kind * 10 + band + 1)
    for _ in range(150):
        n, m = rng.integers(1, 30, 2)
        if band >= 0 and band < abs(n - m):
            m = n
        a, b = rng.standard_normal(n) * 5, rng.standard_normal(m) * 5
        assert core.distance(a, b, kind, band) == _dtw_py.distance(a, b, kind, band)
        assert np.array_equal(core.last_row(a, b, kind, band), _dtw_py.last_row(a, b, kind, band))
        assert np.array_equal(core.cost_matrix(a, b, kind, band), _dtw_py.cost_matrix(a, b, kind, band))


@needs_ext
def test_distance_is_last_cell_of_matrix():
    rng = np.random.default_rng(3)
    a, b = rng.standard_normal(17), rng.standard_normal(9)
    assert core.distance(a, b, 0, -1) == core.cost_matrix(a, b, 0, -1)[-1, -1]


def test_env_var_forces_fallback():
    env = dict(os.environ, LAGSEARCH_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "from lagsearch._backend import BACKEND; print(BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"


def test_fallback_distance_simple():
    a = np.array([1.0, 2.0, 3.0])
    b = np.array([2.0, 3.0, 4.0])
    assert _dtw_py.distance(a, b, 0, -1) == 2.0
