import math

import mpmath
import numpy as np
import pytest
from scipy.special import erfc

from fmou import simgen
from fmou.errors import ContractError
from fmou.kalman import FactorParams


def test_stiefel_orthonormal_and_deterministic():
    O = simgen.sample_stiefel(12, 5, 3)
    assert np.abs(O.T @ O - np.eye(5)).max() < 1e-12
    assert np.array_equal(O, simgen.sample_stiefel(12, 5, 3))
    with pytest.raises(ContractError):
        simgen.sample_stiefel(3, 4, 0)


def test_stiefel_haar_first_entry_centred():
    rng = np.random.default_rng(0)
    first = [simgen.sample_stiefel(6, 2, rng)[0, 0] for _ in range(10_000)]
    assert abs(np.mean(first)) < 0.05


def test_ou_no_innovation_is_geometric_decay():
    Z = simgen.gen_ou_factors([FactorParams(0.8, 0.0, tau2=1.0)], 10, 4)
    assert np.allclose(Z[0], Z[0, 0] * 0.8 ** np.arange(10))


def test_ou_long_run_moments():
    rho, s2 = 0.5, 0.7
    z = simgen.gen_ou_factors([FactorParams(rho, s2)], 100_000, 5)[0]
    assert abs(np.corrcoef(z[1:], z[:-1])[0, 1] - rho) < 0.01
    assert abs(np.var(z) / (s2 / (1 - rho**2)) - 1) < 0.02


def test_fmou_data_examples():
    U = simgen.sample_stiefel(50, 3, 1)
    Z = np.random.default_rng(2).standard_normal((3, 2000))
    assert np.array_equal(simgen.gen_fmou_data(U, Z, 0.0, 7), U @ Z)
    Y = simgen.gen_fmou_data(U, Z, 0.3, 7)
    assert abs(np.var(Y - U @ Z) / 0.3 - 1) < 0.02
    assert np.array_equal(Y, simgen.gen_fmou_data(U, Z, 0.3, 7))


def test_factor_draws_in_experiment_ranges():
    fs = simgen.sample_factor_params(200, (0.95, 1.0), (0.5, 1.0), 11)
    assert all(0.95 <= f.rho < 1.0 and 0.5 <= f.sigma2 < 1.0 for f in fs)


def test_diffusion_initial_state():
    U = simgen.gen_diffusion()
    assert U.shape == (300, 300)
    assert np.all(U[1:, 0] == 0.0)
    assert np.all(U[0] == 1.0)


def test_diffusion_steady_state():
    U = simgen.gen_diffusion(t_end=5.0)
    assert np.abs(U[:, -1] - 1.0).max() < 1e-3


def test_diffusion_early_time_matches_erfc():
    nx, nt, t_end = 300, 300, 0.2
    U = simgen.gen_diffusion(nx, nt, 1.0, t_end)
    x = np.linspace(0, 1, nx)
    t = np.linspace(0, t_end, nt)
    xm = x <= 0.5
    for j in np.nonzero((t > 0) & (t <= 0.01))[0]:
        ref = erfc(x[xm] / (2 * np.sqrt(t[j])))
        assert np.abs(U[xm, j] - ref).max() < 1e-3


def test_diffusion_second_order_convergence():
    # compare every level on the coarsest space-time grid so the times are fixed
    levels = 4
    sols = []
    for i in range(levels):
        m = 20 * 2**i + 1
        sols.append(simgen.gen_diffusion(m, m)[:: 2**i, :: 2**i])
    diffs = [np.abs(f - c).max() for c, f in zip(sols[:-1], sols[1:])]
    ratios = [a / b for a, b in zip(diffs[:-1], diffs[1:])]
    assert all(3 <= r <= 5 for r in ratios), ratios


def test_branin_known_minimum():
    assert simgen.branin(math.pi, 2.275) == pytest.approx(0.3978873, abs=1e-7)


def test_branin_arbitrary_precision():
    mpmath.mp.dps = 40
    pi = mpmath.pi
    x1, x2 = mpmath.mpf(-5), mpmath.mpf(0)
    b, c, t = mpmath.mpf("5.1") / (4 * pi**2), 5 / pi, 1 / (8 * pi)
    ref = (x2 - b * x1**2 + c * x1 - 6) ** 2 + 10 * (1 - t) * mpmath.cos(x1) + 10
    assert simgen.branin(-5.0, 0.0) == pytest.approx(float(ref), rel=1e-14)


def test_branin_grid():
    F = simgen.gen_branin()
    assert F.shape == (300, 300)
    assert F[0, 0] == pytest.approx(simgen.branin(-5.0, 0.0))
    assert F[-1, -1] == pytest.approx(simgen.branin(10.0, 15.0))
    x1 = np.linspace(-5, 10, 300)
    assert np.allclose(np.diff(x1), 15 / 299)
    assert F[10, 20] == pytest.approx(simgen.branin(x1[10], np.linspace(0, 15, 300)[20]))


def test_synthetic_greens():
    op = simgen.gen_synthetic_greens(25, 150, 3)
    assert op.G.shape == (25, 150)
    assert np.allclose(np.linalg.svd(op.G, compute_uv=False), op.D0, atol=1e-10)
    assert np.all(np.diff(op.D0) <= 0) and np.all((op.D0 > 0) & (op.D0 < 1))
    again = simgen.gen_synthetic_greens(25, 150, 3)
    assert np.array_equal(op.G, again.G)
    with pytest.raises(ContractError):
        simgen.gen_synthetic_greens(10, 5, 0)


def test_mesh_grid_unit_square():
    mesh = simgen.gen_mesh_grid((0, 1, 0, 1), 4)
    assert np.allclose(mesh.centers, [[0.25, 0.25], [0.75, 0.25], [0.25, 0.75], [0.75, 0.75]])
    assert mesh.patch_area == pytest.approx(0.25)


def test_mesh_grid_inside_and_uniform():
    b = simgen.CASCADIA_BOUNDS
    mesh = simgen.gen_mesh_grid(b, 1978)
    c = mesh.centers
    assert mesh.k_prime == 1978
    assert np.all((c[:, 0] > b[0]) & (c[:, 0] < b[1]) & (c[:, 1] > b[2]) & (c[:, 1] < b[3]))
    xs, ys = np.unique(c[:, 0]), np.unique(c[:, 1])
    assert xs.size * ys.size == 1978
    assert np.allclose(np.diff(xs), np.diff(xs)[0]) and np.allclose(np.diff(ys), np.diff(ys)[0])


def test_mesh_grid_rejects_prime():
    with pytest.raises(ContractError):
        simgen.gen_mesh_grid((0, 1, 0, 1), 7)


def test_ellipse_slip():
    lon0, lat0 = simgen.ELLIPSE_CENTER
    grid = simgen.gen_mesh_grid(simgen.CASCADIA_BOUNDS, 1978)
    mesh = simgen.FaultMesh(np.vstack([[lon0, lat0], grid.centers]), grid.patch_area)
    Zs = simgen.gen_ellipse_slip(mesh, 88)
    assert Zs.shape == (1979, 88)
    assert np.all(Zs[0] == 3.0)
    east, north = simgen.to_local_km(mesh.centers[:, 0], mesh.centers[:, 1], simgen.ELLIPSE_CENTER)
    r = 108 / 3 + 8 * np.arange(1, 89)
    E = (east**2 / 108**2)[:, None] + (north**2)[:, None] / r**2
    assert np.all(Zs[E > 1] == 0)
    assert np.all(np.diff((Zs > 0).sum(axis=0)) >= 0)
    assert np.array_equal(Zs, simgen.gen_ellipse_slip(mesh, 88))


def test_substreams_independent_and_reproducible():
    a = simgen.substream(5, "noise", 0).standard_normal(4)
    assert np.array_equal(a, simgen.substream(5, "noise", 0).standard_normal(4))
    assert not np.array_equal(a, simgen.substream(5, "noise", 1).standard_normal(4))
    assert not np.array_equal(a, simgen.substream(6, "noise", 0).standard_normal(4))


def test_experiment_spec_validation():
    with pytest.raises(ContractError):
        simgen.ExperimentSpec("NOPE")
    with pytest.raises(ContractError):
        simgen.ExperimentSpec("FMOU_SYNTH", noise_var=-1)
    with pytest.raises(ContractError):
        simgen.ExperimentSpec("FMOU_SYNTH", n=0)


def test_kernel_greens_shape_and_determinism():
    mesh = simgen.gen_mesh_grid(simgen.CASCADIA_BOUNDS, 20)
    st = simgen.station_grid(simgen.CASCADIA_BOUNDS, 6, 1)
    G = simgen.gen_kernel_greens(mesh, st)
    assert G.shape == (12, 20) and np.all(np.isfinite(G))
    assert np.array_equal(st, simgen.station_grid(simgen.CASCADIA_BOUNDS, 6, 1))
