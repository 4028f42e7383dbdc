import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_orthonormal
from fmou import metrics
from fmou.errors import ContractError


def test_rmse_identical_is_zero():
    X = np.arange(6.0).reshape(2, 3)
    assert metrics.rmse_mean(X, X) == 0.0


def test_rmse_unit_offset():
    X = np.random.default_rng(0).standard_normal((4, 5))
    assert metrics.rmse_mean(X + 1.0, X) == pytest.approx(1.0, abs=1e-15)


def test_rmse_hand_instance():
    est = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    truth = np.ones((2, 3))
    # residuals 0..5, squares sum to 55 over 6 entries
    assert metrics.rmse_mean(est, truth) == pytest.approx(math.sqrt(55 / 6), rel=1e-15)
    assert metrics.rmse_slip(est, truth) == pytest.approx(math.sqrt(55 / 6), rel=1e-15)


def test_rmse_slip_examples():
    X = np.random.default_rng(1).standard_normal((7, 3))
    assert metrics.rmse_slip(X, X) == 0.0
    assert metrics.rmse_slip(X - 1.0, X) == pytest.approx(1.0, abs=1e-15)


def test_rmse_shape_mismatch():
    with pytest.raises(ContractError):
        metrics.rmse_mean(np.zeros((2, 3)), np.zeros((3, 2)))


@settings(max_examples=50, deadline=None)
@given(
    a=st.floats(-5, 5, allow_nan=False).filter(lambda v: abs(v) > 1e-3),
    b=st.floats(-10, 10, allow_nan=False),
    seed=st.integers(0, 2**31),
)
def test_rmse_affine_equivariance(a, b, seed):
    rng = np.random.default_rng(seed)
    X, Y = rng.standard_normal((2, 3, 4))
    lhs = metrics.rmse_mean(a * X + b, a * Y + b)
    assert lhs == pytest.approx(abs(a) * metrics.rmse_mean(X, Y), rel=1e-9, abs=1e-12)


def test_angles_identical(rng):
    U = random_orthonormal(rng, 8, 3)
    assert np.allclose(metrics.principal_angles(U, U), 0.0, atol=1e-7)


def test_angles_orthogonal_complement(rng):
    Q = random_orthonormal(rng, 8, 8)
    ang = metrics.principal_angles(Q[:, :3], Q[:, 3:6])
    assert np.allclose(ang, np.pi / 2, atol=1e-12)


def test_angles_rotation_within_span(rng):
    U = random_orthonormal(rng, 10, 4)
    R = random_orthonormal(rng, 4, 4)
    assert np.allclose(metrics.principal_angles(U, U @ R), 0.0, atol=1e-7)


def test_angles_known_plane_rotation():
    theta = 0.3
    A = np.array([[1.0], [0.0]])
    B = np.array([[math.cos(theta)], [math.sin(theta)]])
    assert metrics.principal_angles(A, B)[0] == pytest.approx(theta, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), d=st.integers(1, 4))
def test_angles_symmetric_and_rotation_invariant(seed, d):
    rng = np.random.default_rng(seed)
    A = np.linalg.qr(rng.standard_normal((9, d)))[0]
    B = np.linalg.qr(rng.standard_normal((9, d)))[0]
    Q = np.linalg.qr(rng.standard_normal((d, d)))[0]
    ab = metrics.principal_angles(A, B)
    assert np.all(np.diff(ab) >= 0)
    assert np.all((ab >= 0) & (ab <= np.pi / 2))
    assert np.allclose(ab, metrics.principal_angles(B, A), atol=1e-7)
    assert np.allclose(ab, metrics.principal_angles(A @ Q, B), atol=1e-7)
    assert np.allclose(ab, metrics.principal_angles(A, B @ Q), atol=1e-7)


def test_angles_reject_non_orthonormal():
    with pytest.raises(ContractError):
        metrics.principal_angles(np.ones((4, 2)), np.eye(4)[:, :2])


def test_coverage_wide_intervals():
    truth = np.random.default_rng(2).standard_normal((3, 5))
    cov, _ = metrics.interval_coverage(np.full_like(truth, -1e9), np.full_like(truth, 1e9), truth)
    assert cov == 1.0


def test_coverage_zero_width_at_truth():
    truth = np.random.default_rng(3).standard_normal((3, 5))
    assert metrics.interval_coverage(truth, truth, truth) == (1.0, 0.0)


def test_coverage_hand_count():
    truth = np.array([[0.0, 1.0, 2.0, 3.0]])
    lo = np.array([[-1.0, 1.5, 1.0, 3.5]])
    hi = np.array([[1.0, 2.0, 3.0, 4.0]])
    cov, length = metrics.interval_coverage(lo, hi, truth)
    assert cov == 0.5
    assert length == pytest.approx((2.0 + 0.5 + 2.0 + 0.5) / 4)


def test_coverage_inverted_bounds():
    with pytest.raises(ContractError):
        metrics.interval_coverage(np.ones((1, 2)), np.zeros((1, 2)), np.zeros((1, 2)))


def test_eval_report_row():
    rep = metrics.EvalReport(0.5, np.array([0.1, 0.2]), 0.9, 1.2)
    row = rep.as_row()
    assert row["largest_angle"] == 0.2
    assert "principal_angles" not in row
    with pytest.raises(ContractError):
        metrics.EvalReport(0.5, np.array([0.2, 0.1]))
    with pytest.raises(ContractError):
        metrics.EvalReport(0.5, coverage_95=1.5)
