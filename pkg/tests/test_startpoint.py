import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qcsp_exclusion.certificate import A_of, C_of_y, TChoice
from qcsp_exclusion.model import random_csp
from qcsp_exclusion.startpoint import (
    Feasible, Start, StartOptions, build_S, initial_box, initial_y, modified_cholesky,
    starting_point,
)


def test_initial_box_plain_and_strict():
    lo, hi = np.array([-1.0]), np.array([2.0])
    u, v = initial_box(lo, hi)
    assert u[0] == -1.0 and v[0] == 2.0
    u, v = initial_box(lo, hi, StartOptions(strict_interior=True))
    assert u[0] == pytest.approx(-0.7) and v[0] == pytest.approx(1.7)
    u, v = initial_box(lo, hi, StartOptions(strict_interior=True, r=np.array([1.0])))
    # u0 = 0.9*lo + 0.1*(hi - r), v0 = 0.1*(lo + r) + 0.9*hi
    assert u[0] == pytest.approx(-0.8) and v[0] == pytest.approx(1.8)
    with pytest.raises(ValueError):
        initial_box(lo, hi, StartOptions(strict_interior=True, r=np.array([3.0])))
    with pytest.raises(ValueError):
        StartOptions(t0=0.6, t1=0.5)


def test_sign_rule():
    y = initial_y([0.0, 5.0, 2.0, -3.0, 0.0],
                  [1.0, -np.inf, -1.0, -1.0, -np.inf], [2.0, 4.0, np.inf, 1.0, 1.0])
    np.testing.assert_array_equal(y, [1.0, -1.0, 0.0, 1.0, 0.0])


def test_start_examples(infeasible_1d, feasible_1d, plane_csp):
    s = starting_point(feasible_1d)
    assert isinstance(s, Feasible) and s.point[0] == 0.5
    s = starting_point(plane_csp)
    assert isinstance(s, Feasible) and np.all(s.point == 0)
    s = starting_point(infeasible_1d)
    assert isinstance(s, Start)
    # F(1/2) = 5/8 lies above [-2, -1]
    assert s.point.y[0] == -1.0 and s.point.z[0] == 0.5


def test_S_symmetrizes():
    rng = np.random.default_rng(0)
    Cy = np.tril(rng.normal(size=(4, 4)))
    S = build_S(Cy)
    M = Cy + S.T - S
    np.testing.assert_allclose(M, M.T)
    np.testing.assert_allclose(M, 0.5 * (Cy + Cy.T))


def _reconstruction_ok(Ahat):
    R, D = modified_cholesky(Ahat)
    err = np.abs(R.T @ R - D - Ahat).max()
    return err <= 1e-10 * max(1.0, np.abs(Ahat).sum(axis=1).max()), R, D


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_modified_cholesky_properties(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 7))
    B = rng.normal(size=(n, n))
    Ahat = 0.5 * (B + B.T) * rng.uniform(0.1, 10)
    ok, R, D = _reconstruction_ok(Ahat)
    assert ok
    assert np.all(np.diag(D) >= 0) and np.allclose(D, np.diag(np.diag(D)))
    assert np.allclose(np.tril(R, -1), 0)


def test_modified_cholesky_positive_definite_untouched():
    rng = np.random.default_rng(1)
    for _ in range(100):
        n = int(rng.integers(1, 7))
        B = rng.normal(size=(n, n))
        Ahat = B @ B.T + 1e-3 * np.eye(n)
        R, D = modified_cholesky(Ahat)
        assert np.all(D == 0)
        np.testing.assert_allclose(R, np.linalg.cholesky(Ahat).T, rtol=1e-8, atol=1e-10)


def test_start_makes_A_psd():
    rng = np.random.default_rng(2)
    hits = 0
    for _ in range(200):
        csp = random_csp(rng, int(rng.integers(1, 5)), int(rng.integers(1, 4)))
        s = starting_point(csp, StartOptions(), TChoice())
        if isinstance(s, Feasible):
            continue
        hits += 1
        p = s.point
        A = A_of(csp, p.y, p.R, p.S)
        sym = 0.5 * (A + A.T)
        scale = max(1.0, np.abs(C_of_y(csp, p.y)).max())
        assert np.linalg.eigvalsh(sym).min() >= -1e-9 * scale
    assert hits > 50
