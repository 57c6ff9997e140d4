import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hypopath.free_lie import LieElement, build_basis
from hypopath.signature_paths import (
    GridPath,
    SmoothBump,
    ball_box_report,
    cc_len,
    layout_smooth,
    lift_increments,
    log_signature,
    log_signature_of_increments,
    path_from_group_element,
    random_lie_elements,
    signature,
    signature_of_increments,
)
from hypopath.tensor_algebra import group_inverse


def test_parabola_iterated_integrals():
    # x(t) = (t, t^2) sampled finely; iterated integrals in closed form
    t = np.linspace(0, 1, 4001)
    p = GridPath(t, np.stack([t, t**2], axis=1))
    S = signature(p, 3)
    assert S.coeff((1, 2)) == pytest.approx(2 / 3, abs=1e-6)
    assert S.coeff((2, 1)) == pytest.approx(1 / 3, abs=1e-6)
    # S^112 = int (s^2 / 2) 2s ds = 1/4 and S^122 = int (2 s^3 / 3) 2s ds = 4/15
    assert S.coeff((1, 1, 2)) == pytest.approx(1 / 4, abs=1e-6)
    assert S.coeff((1, 2, 2)) == pytest.approx(4 / 15, abs=1e-6)


def test_unit_square_area():
    incs = np.array([[1.0, 0], [0, 1], [-1, 0], [0, -1]])
    u = log_signature_of_increments(incs, 2)
    assert np.allclose(u.coords, [0.0, 0.0, 1.0], atol=1e-15)


def test_signature_is_parametrization_invariant():
    rng = np.random.default_rng(0)
    p = GridPath.from_increments(rng.normal(size=(5, 3)))
    q = GridPath(p.times**2, p.values, ("smooth",) * 5)
    assert np.allclose(signature(p, 4).flat(), signature(q, 4).flat(), atol=1e-14)
    assert np.allclose(signature(p.retimed(7.0, 2.0), 4).flat(), signature(p, 4).flat(), atol=1e-14)


def test_reversal_gives_inverse():
    rng = np.random.default_rng(1)
    p = GridPath.from_increments(rng.normal(size=(6, 2)))
    assert np.allclose(signature(p.reversed(), 4).flat(), group_inverse(signature(p, 4)).flat(), atol=1e-12)


def test_batched_signatures_match_loop():
    rng = np.random.default_rng(2)
    incs = rng.normal(size=(3, 4, 7, 2))
    S = signature_of_increments(incs, 3)
    for i in range(3):
        for j in range(4):
            assert np.allclose(S[i, j].flat(), signature_of_increments(incs[i, j], 3).flat(), atol=1e-14)
    assert signature_of_increments(np.zeros((0, 2)), 3).flat()[0] == 1.0


def test_smooth_bump_profile():
    b = SmoothBump((0.2, 0.6))
    assert b(0.2) == 0 and b(0.6) == 1 and b(0.0) == 0 and b(1.0) == 1
    assert b.derivative(0.2) == 0 and b.derivative(0.6) == 0
    assert b.second_derivative(0.2) == 0 and b.second_derivative(0.6) == 0
    s = np.linspace(0.2, 0.6, 200001)
    assert np.max(np.abs(b.second_derivative(s))) == pytest.approx(b.max_second_derivative, rel=1e-8)
    h = 1e-6
    assert (b(0.4 + h) - b(0.4 - h)) / (2 * h) == pytest.approx(b.derivative(0.4), rel=1e-8)


def test_path_evaluation_and_derivative():
    p = GridPath(np.array([0.0, 0.5, 1.0]), np.array([[0.0, 0.0], [1.0, 2.0], [1.0, 3.0]]), ("linear", "smooth"))
    assert np.allclose(p(0.25), [0.5, 1.0])
    assert np.allclose(p(0.75), [1.0, 2.5])
    assert np.allclose(p.derivative(0.25), [2.0, 4.0])
    h = 1e-7
    assert np.allclose((p(0.7 + h) - p(0.7 - h)) / (2 * h), p.derivative(0.7), rtol=1e-6)
    assert p.one_variation() == pytest.approx(np.sqrt(5.0) + 1.0)
    with pytest.raises(ValueError):
        GridPath(np.array([0.0, 0.0]), np.zeros((2, 1)))


def test_csv_round_trip(tmp_path):
    p = layout_smooth(np.array([[1.0, 0.5], [-0.2, 0.3]]))
    f = tmp_path / "p.csv"
    p.to_csv(f, {"note": "x"})
    q = GridPath.from_csv(f)
    assert np.array_equal(q.times, p.times) and np.array_equal(q.values, p.values)
    assert q.kinds == p.kinds


def test_reconstruction_battery():
    # 50 random elements with |u|_HS <= 1 in g^(4) over two letters
    b = build_basis(2, 4)
    rng = np.random.default_rng(3)
    us = random_lie_elements(b, 50, rng, max_norm=1.0)
    for i in range(50):
        u = us[i]
        p = path_from_group_element(u)
        assert float((log_signature(p, 4, b) - u).norm()) <= 1e-8
        lo, hi = p.derivative_support()
        assert lo >= 1 / 3 - 1e-15 and hi <= 2 / 3 + 1e-15
        assert np.allclose(p.derivative(np.array([0.0, 1 / 3, 2 / 3, 1.0])), 0.0)


def test_lift_of_pure_commutator_is_a_square():
    b = build_basis(2, 2)
    u = LieElement(b, [0.0, 0.0, 0.25])
    incs = lift_increments(u)
    assert len(incs) == 4 and np.allclose(np.linalg.norm(incs, axis=1), 0.5)
    assert cc_len(u) == pytest.approx(2.0)
    assert len(lift_increments(LieElement.zero(b))) == 0
    assert path_from_group_element(LieElement.zero(b)).one_variation() == 0.0


def test_ball_box_ratio_is_bounded():
    rep = ball_box_report(300, seed=4)
    assert rep["finite"] and rep["max_ratio"] < 10.0


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 3), st.integers(2, 4), st.integers(0, 2**31), st.floats(0.05, 5.0))
def test_cc_len_is_homogeneous(d, l, seed, lam):
    b = build_basis(d, l)
    u = LieElement(b, np.random.default_rng(seed).normal(size=b.dim) * 0.5)
    assert cc_len(u.dilate(lam)) == pytest.approx(lam * cc_len(u), rel=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 3), st.integers(1, 4), st.integers(0, 2**31))
def test_reconstruction_hits_target(d, l, seed):
    b = build_basis(d, l)
    u = random_lie_elements(b, 1, np.random.default_rng(seed))[0]
    p = path_from_group_element(u)
    assert float((log_signature(p, l, b) - u).norm()) <= 1e-8
