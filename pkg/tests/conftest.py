import sys
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from svfortin.fortin import FortinOperator  # noqa: E402
from svfortin.mesh import Triangulation, generate_mesh  # noqa: E402

# A mesh with the combinatorics of the five-region example: three plain
# triangles, one interior singular patch (vertex K) and one boundary chain.
A, B, C, D, G, H, F, E, I, J, K = range(11)
FIG1_VERTICES = [(0, 2), (1, 2), (2, 2), (2, 1), (2, -1), (0, -1), (0, 1), (1, 1),
                 (2 / 3, 1 / 3), (1 / 3, -1 / 3), (1.5, 1.5)]
FIG1_TRIANGLES = [(E, A, F), (A, E, B), (G, D, E), (B, C, K), (C, D, K), (D, E, K), (E, B, K),
                  (G, J, H), (G, I, J), (G, E, I), (E, F, I)]


@pytest.fixture
def fig1_mesh():
    return Triangulation(FIG1_VERTICES, FIG1_TRIANGLES)


@lru_cache(maxsize=None)
def mesh_of(kind: str, n: int, eps: float = 0.0):
    return generate_mesh(kind, n, eps)


@lru_cache(maxsize=None)
def fortin_of(kind: str, n: int, k: int = 4, variant: str = "dirichlet", eps: float = 0.0):
    return FortinOperator(mesh_of(kind, n, eps), k, variant)


@pytest.fixture
def rng():
    return np.random.default_rng(20240617)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
