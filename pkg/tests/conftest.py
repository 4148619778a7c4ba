import numpy as np
import pytest

from viscous_midpoint.operator_core import SystemModel

_ACCEPTANCE = []


def random_model(rng, n, m=1, skew=True):
    """Random G-skew triple: A = G^{-1} S with S skew and G SPD."""
    X = rng.standard_normal((n, n))
    G = X @ X.T + n * np.eye(n)
    S = rng.standard_normal((n, n))
    S = S - S.T
    A = np.linalg.solve(G, S) if skew else rng.standard_normal((n, n))
    B = rng.standard_normal((n, m))
    return SystemModel(A, B, G, label=f"random{n}x{m}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240531)


@pytest.fixture
def acceptance():
    """Record one criterion outcome for the terminal summary."""

    def record(number, title, passed, detail=""):
        line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}"
        if detail:
            line += f"  [{detail}]"
        _ACCEPTANCE.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)
