import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qcsp_exclusion.interval import BoxVec
from qcsp_exclusion.model import (
    ProblemFormatError, QuadraticCsp, eval_F, eval_F_interval, is_feasible,
    parse_problem, random_csp, serialize_problem, slope_row,
)


def _doc(**over):
    d = {"n": 1, "m": 1, "c": [[1.0]], "C": [[[0.5]]], "F": [[-2, -1]], "x": [[-1, 2]]}
    d.update(over)
    return json.dumps(d)


def test_eval_matches_formula(infeasible_1d):
    for x in (-1.0, 0.0, 0.5, 2.0):
        assert eval_F(infeasible_1d, [x])[0] == pytest.approx(0.5 * x * x + x)


def test_feasibility(infeasible_1d, feasible_1d, plane_csp):
    assert not is_feasible(infeasible_1d, [0.5])
    assert is_feasible(feasible_1d, [0.5])
    assert is_feasible(plane_csp, [0.0, 0.0])
    assert not is_feasible(feasible_1d, [3.0])


def test_parse_roundtrip(plane_csp):
    again = parse_problem(serialize_problem(plane_csp))
    assert again == plane_csp


def test_parse_infinite_ranges():
    csp = parse_problem(_doc(F=[["-inf", 1.0]]))
    assert csp.F_lo[0] == -np.inf
    assert "inf" in serialize_problem(csp)


def test_parse_errors():
    with pytest.raises(ProblemFormatError, match="above the diagonal"):
        parse_problem(_doc(n=2, c=[[1, 1]], C=[[[1, 2], [0, 1]]], x=[[0, 1], [0, 1]]))
    with pytest.raises(ProblemFormatError):
        parse_problem(_doc(F=[[1, -1]]))
    with pytest.raises(ProblemFormatError):
        parse_problem(_doc(x=[[-1, "inf"]]))
    with pytest.raises(ProblemFormatError):
        parse_problem("{")
    with pytest.raises(ProblemFormatError):
        parse_problem(json.dumps({"n": 1}))


def test_symmetric_matrix_folded():
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        csp = parse_problem(_doc(n=2, c=[[0, 0]], C=[[[1, 2], [2, 3]]], x=[[0, 1], [0, 1]]))
    assert w
    x = np.array([0.3, 0.7])
    assert eval_F(csp, x)[0] == pytest.approx(x @ np.array([[1, 2], [2, 3]]) @ x)


def test_interval_extension_encloses():
    rng = np.random.default_rng(3)
    for _ in range(50):
        csp = random_csp(rng, 3, 2)
        lo = rng.uniform(csp.x_lo, csp.x_hi)
        hi = rng.uniform(lo, csp.x_hi)
        enc = eval_F_interval(csp, BoxVec.from_bounds(lo, hi), rigorous=True)
        for x in rng.uniform(lo, hi, size=(20, 3)):
            Fx = eval_F(csp, x)
            assert all(e.lo <= f <= e.hi for e, f in zip(enc, Fx))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_slope_identity(seed):
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(1, 5)), int(rng.integers(1, 4))
    csp = random_csp(rng, n, m)
    z, x = rng.uniform(csp.x_lo, csp.x_hi, size=(2, n))
    diff = eval_F(csp, x) - eval_F(csp, z)
    for k in range(m):
        assert slope_row(csp, k, z, x) @ (x - z) == pytest.approx(diff[k], rel=1e-10, abs=1e-10)


def test_model_validation():
    with pytest.raises(ValueError):
        QuadraticCsp(np.zeros((1, 1)), np.zeros((1, 1, 1)), [0.0], [0.0], [1.0], [0.0])
