from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fmou import greens
from fmou.em import FitOptions, fit
from fmou.errors import ContractError, RankError


def low_rank_G(rng, k=6, kp=8, rank=3):
    return rng.standard_normal((k, rank)) @ rng.standard_normal((rank, kp))


def slip_problem(seed, k=6, kp=8, d=3, n=30, noise=0.05, G=None):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((k, kp)) if G is None else G
    op = greens.svd_truncate(G, d)
    Zs = np.cumsum(rng.standard_normal((kp, n)), axis=1) * 0.3
    Y = G @ Zs + np.sqrt(noise) * rng.standard_normal((k, n))
    f = fit(Y, FitOptions(d=d, fix_U0=op.U0, max_iter=50))
    return op, f


def test_svd_truncate_diagonal_example():
    G = np.diag([3.0, 2.0, 1.0])
    op = greens.svd_truncate(G, 2)
    assert np.allclose(op.D0, [3.0, 2.0])
    assert np.allclose(op.U0, np.eye(3)[:, :2])
    assert np.allclose(op.V0, np.eye(3)[:, :2])
    assert np.allclose(op.D0_matrix, np.diag([3.0, 2.0]))


def test_svd_truncate_error_equals_tail_energy(rng):
    G = rng.standard_normal((6, 10))
    op = greens.svd_truncate(G, 4)
    sv = np.linalg.svd(G, compute_uv=False)
    err = np.linalg.norm(G - (op.U0 * op.D0) @ op.V0.T)
    assert err == pytest.approx(np.sqrt(np.sum(sv[4:] ** 2)), rel=1e-10)
    assert np.allclose(op.U0.T @ op.U0, np.eye(4), atol=1e-10)
    assert np.allclose(op.V0.T @ op.V0, np.eye(4), atol=1e-10)
    assert np.all(np.diff(op.D0) <= 0) and np.all(op.D0 > 0)


def test_svd_truncate_full_rank_exact(rng):
    G = rng.standard_normal((5, 7))
    op = greens.svd_truncate(G, 5)
    assert np.abs(G - (op.U0 * op.D0) @ op.V0.T).max() < 1e-10


def test_svd_truncate_rank_error(rng):
    with pytest.raises(RankError) as err:
        greens.svd_truncate(low_rank_G(rng), 4)
    assert err.value.rank == 3
    with pytest.raises(ContractError):
        greens.svd_truncate(np.eye(3), 4)


def test_operator_truncate(rng):
    op = greens.svd_truncate(rng.standard_normal((6, 9)), 5)
    small = op.truncate(2)
    assert small.d == 2 and np.array_equal(small.U0, op.U0[:, :2])
    with pytest.raises(ContractError):
        op.truncate(6)


def test_augment_k4_columns(rng):
    G = rng.standard_normal((4, 3))
    Ga = greens.augment_frame_motion(G)
    assert Ga.shape == (4, 5)
    assert np.array_equal(Ga[:, 3], [1.0, 0.0, 1.0, 0.0])
    assert np.array_equal(Ga[:, 4], [0.0, 1.0, 0.0, 1.0])
    assert np.array_equal(Ga[:, :3], G)


def test_augment_twice_is_an_error(rng):
    op = greens.augment_frame_motion(greens.svd_truncate(rng.standard_normal((6, 8)), 3))
    assert op.augmented and op.k_prime == 10 and op.n_frame == 2
    with pytest.raises(ContractError):
        greens.augment_frame_motion(op)


def test_augment_odd_k_is_an_error(rng):
    with pytest.raises(ContractError):
        greens.augment_frame_motion(rng.standard_normal((5, 3)))


@pytest.mark.parametrize("k", [2, 6, 40])
def test_frame_block_singular_values(k):
    sv = np.linalg.svd(greens.frame_motion_block(k), compute_uv=False)
    assert np.allclose(sv, np.sqrt(k / 2))


def test_reconstruct_matches_dense_posterior():
    op, f = slip_problem(0)
    field = greens.reconstruct_slip(f, op)
    G, U0, D0 = op.G, op.U0, op.D0
    Dm2 = np.diag(D0**-2.0)
    for t in range(f.z_post.shape[1]):
        mean_t = G.T @ U0 @ Dm2 @ f.z_post[:, t]
        cov_t = G.T @ U0 @ Dm2 @ np.diag(f.S_post[:, t]) @ Dm2 @ U0.T @ G
        assert np.allclose(field.mean[:, t], mean_t, atol=1e-10)
        assert np.allclose(field.var_diag[:, t], np.diag(cov_t), atol=1e-10)
        assert np.allclose(greens.slip_covariance(f, op, t, allow_dense=True), cov_t, atol=1e-10)
        v = np.arange(op.k_prime, dtype=float)
        assert np.allclose(greens.slip_cov_matvec(f, op, t, v), cov_t @ v, atol=1e-9)


def test_reconstruct_zero_posterior_mean():
    op, f = slip_problem(1)
    field = greens.reconstruct_slip(replace(f, z_post=np.zeros_like(f.z_post)), op)
    assert np.all(field.mean == 0.0)


def test_reconstruct_zero_posterior_variance():
    op, f = slip_problem(2)
    field = greens.reconstruct_slip(replace(f, S_post=np.zeros_like(f.S_post)), op)
    assert np.all(field.var_diag == 0.0)


def test_forward_round_trip_at_full_rank(rng):
    G = low_rank_G(rng, rank=3)
    op, f = slip_problem(3, G=G)
    field = greens.reconstruct_slip(f, op)
    assert np.abs(G @ field.mean - op.U0 @ f.z_post).max() < 1e-8


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_slip_variance_non_negative(seed):
    op, f = slip_problem(seed, n=15)
    assert np.all(greens.reconstruct_slip(f, op).var_diag >= 0.0)


def test_reconstruct_rejects_foreign_fit():
    op, f = slip_problem(4)
    other = greens.svd_truncate(np.random.default_rng(9).standard_normal((6, 8)), 3)
    with pytest.raises(ContractError):
        greens.reconstruct_slip(f, other)
    with pytest.raises(ContractError):
        greens.reconstruct_slip(f, op.truncate(2))


def test_dense_covariance_gated():
    op, f = slip_problem(5)
    with pytest.raises(ContractError):
        greens.slip_covariance(f, op, 0)
    big = greens.GreensOperator(np.zeros((6, greens.DENSE_COV_LIMIT + 1)), op.U0, op.D0, np.zeros((greens.DENSE_COV_LIMIT + 1, 3)))
    with pytest.raises(ContractError):
        greens.slip_covariance(f, big, 0, allow_dense=True)


def test_slip_only_drops_frame_rows(rng):
    G = greens.augment_frame_motion(rng.standard_normal((6, 8)))
    op = greens.svd_truncate(G, 3, augmented=True)
    Y = G @ rng.standard_normal((10, 20))
    f = fit(Y, FitOptions(d=3, fix_U0=op.U0, max_iter=5))
    field = greens.reconstruct_slip(f, op)
    sub = field.slip_only()
    assert field.n_frame == 2 and sub.patches == 8
    assert np.array_equal(sub.mean, field.mean[:8])


def test_rates_constant_is_zero():
    assert np.all(greens.slip_rates(np.ones((3, 5))) == 0.0)


def test_rates_linear_growth():
    c = np.array([0.0, 0.5, 2.0])
    X = c[:, None] * np.arange(6)[None, :]
    assert np.allclose(greens.slip_rates(X), np.repeat(c[:, None], 5, axis=1))


def test_rates_decreasing_truncated():
    X = -np.arange(6.0)[None, :] * np.ones((2, 1))
    R = greens.slip_rates(X)
    assert R.shape == (2, 5) and np.all(R == 0.0)


def test_rates_need_two_times():
    with pytest.raises(ContractError):
        greens.slip_rates(np.ones((2, 1)))


def test_average_constant_field():
    X = np.full((3, 10), 2.5)
    out = greens.seven_day_average(X)
    assert out.shape == (3, 4) and np.allclose(out, 2.5)


def test_average_window_one_is_identity(rng):
    X = rng.standard_normal((3, 8))
    assert np.allclose(greens.seven_day_average(X, 1), X)


def test_average_linear_field_is_midpoint():
    t = np.arange(12.0)
    X = np.vstack([2.0 * t + 1.0, -t])
    out = greens.seven_day_average(X, 7)
    mid = t[: out.shape[1]] + 3.0
    assert np.allclose(out, np.vstack([2.0 * mid + 1.0, -mid]))


def test_average_window_too_long():
    with pytest.raises(ContractError):
        greens.seven_day_average(np.ones((2, 5)), 7)
