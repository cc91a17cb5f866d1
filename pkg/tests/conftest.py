import numpy as np
import pytest

from qcsp_exclusion.model import QuadraticCsp


def line_csp(F_lo, F_hi):
    """1-D instance F(x) = x^2/2 + x on [-1, 2]."""
    return QuadraticCsp(np.array([[1.0]]), np.array([[[0.5]]]), np.array([F_lo]),
                        np.array([F_hi]), np.array([-1.0]), np.array([2.0]))


@pytest.fixture
def infeasible_1d():
    return line_csp(-2.0, -1.0)


@pytest.fixture
def feasible_1d():
    return line_csp(-2.0, 1.0)


@pytest.fixture
def plane_csp():
    c = np.array([[1.0, -3.0], [4.0, 2.0]])
    C = np.array([[[2.0, 0.0], [3.0, 4.0]], [[-1.0, 0.0], [-2.0, 7.0]]])
    return QuadraticCsp(c, C, np.array([-1.0, -2.0]), np.array([7.0, 0.0]),
                        np.array([-3.0, -4.0]), np.array([3.0, 4.0]))


def pytest_terminal_summary(terminalreporter):
    lines = []
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion_" not in nodeid or rep.when not in ("call", "setup"):
                continue
            if rep.when == "setup" and rep.passed:
                continue
            name = nodeid.split("::")[-1][len("test_criterion_"):]
            lines.append((name, "PASS" if rep.passed else "FAIL"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for name, verdict in sorted(lines, key=lambda t: int(t[0].split("_")[0])):
            terminalreporter.write_line(f"criterion {name}: {verdict}")
