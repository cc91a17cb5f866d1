import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qcsp_exclusion.certificate import (
    A_of, CertificateError, CertPoint, OptMask, TChoice, TVariant, Y_value, Z_value,
    evaluate, f_subgradient, f_value, verify,
)
from qcsp_exclusion.interval import BoxVec
from qcsp_exclusion.model import eval_F, random_csp

ALL = OptMask(True, True, True, True, True)


def line_f(y, z, T_norm=True):
    """Certificate of the 1-D instance with R = S = 0, by hand."""
    # c = y (1 + z), A = y/2, d in [-1 - z, 2 - z]
    d = (-1 - z, 2 - z)
    c, A = y * (1 + z), 0.5 * y
    g = [c + A * d[0], c + A * d[1]]
    Z = max(gi * di for gi in g for di in d)
    Fz = 0.5 * z * z + z
    Y = y * (-2 - Fz) if y >= 0 else y * (-1 - Fz)
    return (Z - max(0.0, Y)) / (abs(y) if T_norm else 1.0)


def test_line_example_values(infeasible_1d):
    p = CertPoint.zeros_w([-1.0], [-1.0], [-1.0], [2.0])
    v = f_value(infeasible_1d, p, TChoice())
    assert v.Z == pytest.approx(0.0)
    assert v.Y == pytest.approx(0.5)
    assert v.f == pytest.approx(-0.5)
    assert verify(infeasible_1d, p, TChoice())


def test_line_matches_hand_formula(infeasible_1d):
    rng = np.random.default_rng(0)
    for y, z in zip(rng.uniform(-3, 3, 200), rng.uniform(-1, 2, 200)):
        p = CertPoint.zeros_w([y], [z], [-1.0], [2.0])
        for norm in (True, False):
            ch = TChoice(TVariant.NORM_Y if norm else TVariant.ONE)
            assert f_value(infeasible_1d, p, ch).f == pytest.approx(line_f(y, z, norm), abs=1e-12)


def test_line_grid_minimum_is_minus_half():
    # oracle: brute-force grid; the minimum over (y, z) for T = |y| is -1/2
    ys = [-1.0, 1.0]  # f is invariant to |y| for T = |y| with R = S = 0
    zs = np.linspace(-1, 2, 3001)
    best = min(line_f(y, z) for y in ys for z in zs)
    assert best == pytest.approx(-0.5, abs=1e-9)


def test_Y_matches_corner_enumeration():
    rng = np.random.default_rng(1)
    for _ in range(100):
        csp = random_csp(rng, 2, 3, infinite_prob=0.0)
        y, z = rng.normal(size=3), rng.uniform(csp.x_lo, csp.x_hi)
        Fz = eval_F(csp, z)
        corners = itertools.product(*zip(csp.F_lo, csp.F_hi))
        oracle = min(y @ (np.array(c) - Fz) for c in corners)
        assert Y_value(csp, y, z) == pytest.approx(oracle, rel=1e-12, abs=1e-12)
        assert Y_value(csp, y, z, rigorous=True) <= Y_value(csp, y, z)


def test_Y_infinite_when_sign_meets_infinite_bound(infeasible_1d):
    csp = infeasible_1d.with_ranges(np.array([-np.inf]), np.array([1.0]))
    assert Y_value(csp, [1.0], [0.0]) == -math.inf
    assert math.isfinite(Y_value(csp, [-1.0], [0.0]))
    assert f_value(csp, CertPoint.zeros_w([1.0], [0.0], [-1.0], [2.0])).f == math.inf


def test_zero_set_raises(infeasible_1d):
    p = CertPoint.zeros_w([0.0], [0.0], [-1.0], [2.0])
    with pytest.raises(CertificateError):
        f_value(infeasible_1d, p, TChoice())
    assert f_value(infeasible_1d, p, TChoice.parse("one")).f == 0.0


def test_pack_unpack_roundtrip():
    rng = np.random.default_rng(2)
    p = CertPoint(rng.normal(size=2), rng.normal(size=3), rng.normal(size=(3, 3)),
                  rng.normal(size=(3, 3)), np.zeros(3), np.ones(3), ALL)
    assert np.allclose(np.tril(p.R, -1), 0) and np.allclose(np.tril(p.S), 0)
    x = p.pack()
    assert x.size == 2 + 3 + 6 + 3 + 3 + 3
    q = p.unpack(x)
    for name in "yzRSuv":
        np.testing.assert_array_equal(getattr(p, name), getattr(q, name))
    small = p.with_mask(OptMask())
    assert small.pack().size == 5
    with pytest.raises(ValueError):
        small.unpack(np.zeros(4))


def test_A_structure():
    rng = np.random.default_rng(4)
    csp = random_csp(rng, 3, 2)
    y = rng.normal(size=2)
    R, S = np.triu(rng.normal(size=(3, 3))), np.triu(rng.normal(size=(3, 3)), 1)
    A = A_of(csp, y, R, S)
    Cy = np.einsum("k,kij->ij", y, csp.C)
    np.testing.assert_allclose(A, Cy + R.T @ R + S.T - S)


def _random_point(rng, csp, mask=ALL, z_inside=True):
    n, m = csp.n, csp.m
    u = rng.uniform(csp.x_lo, csp.x_hi)
    v = rng.uniform(u, csp.x_hi)
    z = rng.uniform(u, v) if z_inside else rng.uniform(csp.x_lo, csp.x_hi)
    return CertPoint(rng.normal(size=m), z, np.triu(rng.normal(size=(n, n))),
                     np.triu(rng.normal(size=(n, n)), 1), u, v, mask)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_Z_bounds_sampled_values(seed):
    rng = np.random.default_rng(seed)
    csp = random_csp(rng, int(rng.integers(1, 4)), int(rng.integers(1, 4)))
    p = _random_point(rng, csp, z_inside=bool(rng.integers(2)))
    Z = Z_value(csp, p)
    Fz = eval_F(csp, p.z)
    for x in rng.uniform(p.u, p.v, size=(30, csp.n)):
        val = p.y @ (eval_F(csp, x) - Fz)
        assert Z >= val - 1e-9 * (1 + abs(val) + abs(Z))
    assert Z_value(csp, p, rigorous=True) >= Z


def test_evaluate_matches_f_value():
    rng = np.random.default_rng(5)
    for _ in range(100):
        csp = random_csp(rng, 2, 2)
        p = _random_point(rng, csp)
        for ch in (TChoice(), TChoice.parse("one")):
            fast = f_value(csp, p, ch).f
            val, _ = evaluate(csp, p, ch)
            if math.isfinite(fast):
                assert val.f == pytest.approx(fast, rel=1e-12, abs=1e-12)
            else:
                assert val.f == fast


def test_subgradient_matches_central_differences():
    rng = np.random.default_rng(6)
    checked = 0
    while checked < 40:
        csp = random_csp(rng, int(rng.integers(1, 4)), int(rng.integers(1, 4)), infinite_prob=0.0)
        p = _random_point(rng, csp)
        x = p.pack()
        g = f_subgradient(csp, p, TChoice())
        h = 1e-6
        fd = np.array([(f_value(csp, p.unpack(x + h * e)).f - f_value(csp, p.unpack(x - h * e)).f) / (2 * h)
                       for e in np.eye(x.size)])
        assert np.abs(g - fd).max() <= 1e-5 * max(1.0, np.abs(g).max())
        checked += 1


def test_verify_rejects_bad_ordering(infeasible_1d):
    p = CertPoint.zeros_w([-1.0], [-1.0], [-0.5], [2.0])  # z below u
    assert not verify(infeasible_1d, p)
    p = CertPoint.zeros_w([-1.0], [0.0], [-1.0], [3.0])  # box leaves domain
    assert not verify(infeasible_1d, p)
    p = CertPoint.zeros_w([1.0], [0.0], [-1.0], [2.0])  # f >= 0
    assert not verify(infeasible_1d, p)


def test_rigorous_box_argument(infeasible_1d):
    p = CertPoint.zeros_w([-1.0], [-1.0], [-1.0], [2.0])
    whole = Z_value(infeasible_1d, p, BoxVec.from_bounds([-1.0], [2.0]))
    part = Z_value(infeasible_1d, p, BoxVec.from_bounds([-1.0], [1.0]))
    assert part <= whole
