"""Seeded data generators for the simulation experiments.

Every generator takes ``seed`` as an int, a :class:`numpy.random.SeedSequence`
or a :class:`numpy.random.Generator`; :func:`substream` derives independent
named streams from one master seed.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ContractError
from .greens import GreensOperator
from .kalman import FactorParams

KINDS = ("FMOU_SYNTH", "DIFFUSION", "BRANIN", "GREENS_SYNTH", "ELLIPSE_SLIP")

EARTH_RADIUS_KM = 6371.0
KM_PER_DEG = EARTH_RADIUS_KM * math.pi / 180.0

# ellipse-slip experiment constants (lon, lat in degrees; west is negative)
ELLIPSE_CENTER = (-123.2, 46.0)
ELLIPSE_R0_KM = 108.0
ELLIPSE_V_KM_PER_DAY = 8.0
ELLIPSE_ZMAX_CM = 3.0
CASCADIA_BOUNDS = (-126.5, -121.0, 40.5, 49.5)


def _stream_key(name):
    return name if isinstance(name, int) else zlib.crc32(str(name).encode())


def substream(seed, *names) -> np.random.Generator:
    """Generator for the named sub-stream of a master ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *map(_stream_key, names)]))


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    k: int = 20
    k_prime: int = 0
    d: int = 5
    n: int = 100
    noise_var: float = 1.0
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if min(self.k, self.d, self.n) < 1 or self.k_prime < 0:
            raise ContractError("experiment dimensions must be positive")
        if not self.noise_var >= 0:
            raise ContractError("noise_var must be non-negative")


@dataclass(frozen=True)
class FaultMesh:
    centers: np.ndarray  # (k', 2) longitude, latitude in degrees
    patch_area: float

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=float)
        if c.ndim != 2 or c.shape[1] != 2 or c.shape[0] < 1 or not np.all(np.isfinite(c)):
            raise ContractError("mesh centers must be a finite (k', 2) array")
        object.__setattr__(self, "centers", c)

    @property
    def k_prime(self):
        return self.centers.shape[0]


def sample_stiefel(k, d, seed):
    """Haar-distributed k x d matrix with orthonormal columns."""
    if d > k:
        raise ContractError(f"d={d} exceeds k={k}")
    rng = np.random.default_rng(seed)
    Q, R = np.linalg.qr(rng.standard_normal((k, d)))
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs


def gen_ou_factors(factors, n, seed):
    """Exact AR(1) paths, one row per factor, started from N(0, tau2)."""
    rng = np.random.default_rng(seed)
    d = len(factors)
    rho = np.array([f.rho for f in factors])
    sd = np.sqrt([f.sigma2 for f in factors])
    Z = np.empty((d, n))
    Z[:, 0] = rng.standard_normal(d) * np.sqrt([f.tau2 for f in factors])
    w = rng.standard_normal((d, n - 1)) * sd[:, None] if n > 1 else np.empty((d, 0))
    for t in range(1, n):
        Z[:, t] = rho * Z[:, t - 1] + w[:, t - 1]
    return Z


def gen_fmou_data(U0, Z, sigma0_2, seed):
    U0 = np.asarray(U0, dtype=float)
    Z = np.asarray(Z, dtype=float)
    if U0.shape[1] != Z.shape[0]:
        raise ContractError(f"U0 {U0.shape} and Z {Z.shape} do not conform")
    rng = np.random.default_rng(seed)
    signal = U0 @ Z
    return signal + math.sqrt(sigma0_2) * rng.standard_normal(signal.shape)


def sample_factor_params(d, rho_range, sigma2_range, seed):
    rng = np.random.default_rng(seed)
    rho = rng.uniform(*rho_range, size=d)
    sigma2 = rng.uniform(*sigma2_range, size=d)
    return [FactorParams(r, s) for r, s in zip(rho, sigma2)]


def _diffusion_operator(nx, r):
    lower = np.full(nx, -r)
    upper = np.full(nx, -r)
    diag = np.full(nx, 1.0 + 2.0 * r)
    lower[0] = 0.0
    diag[0] = 1.0
    upper[0] = 0.0
    lower[-1] = -2.0 * r  # ghost node mirrors u[nx-2]
    upper[-1] = 0.0
    return lower, diag, upper


# substeps are STARTUP_REFINE times finer while D t / x_end^2 <= STARTUP_TIME,
# damping the O(dt / t) start-up error from the discontinuous boundary data
STARTUP_REFINE = 10
STARTUP_TIME = 0.01


def gen_diffusion(nx=300, nt=300, D=1.0, t_end=0.2, x_end=1.0):
    """Linear diffusion on [0, x_end] from a zero initial state.

    u(0, t) = 1 (Dirichlet), du/dx(x_end, t) = 0 (reflecting). Second-order
    central differences in x; backward-Euler substeps between output times,
    with the substep no larger than dx^2 so the time error stays O(dx^2).
    Substeps are a further ``STARTUP_REFINE`` times finer up to the
    dimensionless time ``STARTUP_TIME``.
    Returns an (nx, nt) array, rows are grid points and columns output times
    ``linspace(0, t_end, nt)``.
    """
    if nx < 2 or nt < 2:
        raise ContractError("diffusion grid needs nx, nt >= 2")
    dx = x_end / (nx - 1)
    dt_out = t_end / (nt - 1)
    m = max(1, math.ceil(dt_out / dx**2 - 1e-9))
    operators = {}
    u = np.zeros(nx)
    u[0] = 1.0
    out = np.empty((nx, nt))
    out[:, 0] = u
    for j in range(1, nt):
        early = D * (j - 1) * dt_out / x_end**2 < STARTUP_TIME
        steps = m * STARTUP_REFINE if early else m
        if steps not in operators:
            operators[steps] = _diffusion_operator(nx, D * (dt_out / steps) / dx**2)
        u = _kernels.implicit_steps(*operators[steps], u, 1.0, steps)
        out[:, j] = u
    return out


def branin(x1, x2, a=1.0, b=5.1 / (4 * math.pi**2), c=5 / math.pi, r=6.0, s=10.0, t=1 / (8 * math.pi)):
    return a * (x2 - b * x1**2 + c * x1 - r) ** 2 + s * (1 - t) * np.cos(x1) + s


def gen_branin(n1=300, n2=300, x1_range=(-5.0, 10.0), x2_range=(0.0, 15.0)):
    """Branin surface on a uniform grid; rows follow x1, columns follow x2."""
    x1 = np.linspace(*x1_range, n1)
    x2 = np.linspace(*x2_range, n2)
    return branin(x1[:, None], x2[None, :])


def gen_synthetic_greens(k, k_prime, seed) -> GreensOperator:
    """Random full-width operator ``G = U0 diag(D0) V0^T``.

    U0 (k x k) and V0 (k' x k) are Haar; D0 ~ Unif(0, 1) sorted decreasingly.
    """
    if k > k_prime:
        raise ContractError(f"k={k} must not exceed k'={k_prime}")
    rng = np.random.default_rng(seed)
    U0 = sample_stiefel(k, k, rng)
    V0 = sample_stiefel(k_prime, k, rng)
    D0 = np.sort(rng.uniform(0.0, 1.0, size=k))[::-1]
    return GreensOperator((U0 * D0) @ V0.T, U0, D0, V0)


def gen_mesh_grid(bounds, k_prime) -> FaultMesh:
    """Cell-centred regular lattice of ``k_prime`` patches over ``(x0, x1, y0, y1)``.

    The factorisation ``k_prime = nx * ny`` (both at least 2) whose cells are
    closest to square is used; x varies fastest.
    """
    x0, x1, y0, y1 = map(float, bounds)
    if not (x1 > x0 and y1 > y0):
        raise ContractError("bounds must be (xmin, xmax, ymin, ymax) with positive extent")
    pairs = [(a, k_prime // a) for a in range(2, k_prime // 2 + 1) if k_prime % a == 0]
    if not pairs:
        raise ContractError(f"k'={k_prime} has no factorisation into two grid dimensions >= 2")
    aspect = (x1 - x0) / (y1 - y0)
    nx, ny = min(pairs, key=lambda p: abs(math.log(p[0] / p[1] / aspect)))
    hx, hy = (x1 - x0) / nx, (y1 - y0) / ny
    xs = x0 + hx * (np.arange(nx) + 0.5)
    ys = y0 + hy * (np.arange(ny) + 0.5)
    X, Yg = np.meshgrid(xs, ys)
    return FaultMesh(np.column_stack([X.ravel(), Yg.ravel()]), hx * hy)


def to_local_km(lon, lat, origin):
    """Equirectangular offsets (east, north) in km from ``origin``."""
    lon0, lat0 = origin
    east = (np.asarray(lon) - lon0) * KM_PER_DEG * math.cos(math.radians(lat0))
    north = (np.asarray(lat) - lat0) * KM_PER_DEG
    return east, north


def gen_ellipse_slip(
    mesh: FaultMesh,
    n=88,
    center=ELLIPSE_CENTER,
    r0=ELLIPSE_R0_KM,
    v=ELLIPSE_V_KM_PER_DAY,
    z_max=ELLIPSE_ZMAX_CM,
):
    """Growing elliptical slip patch, shape (k', n), in cm.

    Fixed semi-axis ``r0`` along longitude, the other ``r0/3 + v t`` along
    latitude for day t = 1..n; slip is ``z_max (1 - E^2)`` inside E <= 1 with
    E the sum of squared normalised offsets.
    """
    east, north = to_local_km(mesh.centers[:, 0], mesh.centers[:, 1], center)
    t = np.arange(1, n + 1)
    r_t = r0 / 3.0 + v * t
    E = (east**2 / r0**2)[:, None] + (north**2)[:, None] / (r_t**2)[None, :]
    return np.where(E <= 1.0, z_max * (1.0 - E**2), 0.0)


def station_grid(bounds, n_stations, seed, jitter=0.25):
    """Jittered lattice of station coordinates covering ``bounds``."""
    x0, x1, y0, y1 = bounds
    rng = np.random.default_rng(seed)
    ny = max(1, round(math.sqrt(n_stations * (y1 - y0) / (x1 - x0))))
    nx = math.ceil(n_stations / ny)
    hx, hy = (x1 - x0) / nx, (y1 - y0) / ny
    cells = [(i, j) for j in range(ny) for i in range(nx)][:n_stations]
    pts = np.array([[x0 + hx * (i + 0.5), y0 + hy * (j + 0.5)] for i, j in cells])
    pts += rng.uniform(-jitter, jitter, size=pts.shape) * [hx, hy]
    return pts


def gen_kernel_greens(mesh: FaultMesh, stations, depth_km=30.0, strike_deg=52.0, radial=0.5, origin=ELLIPSE_CENTER):
    """Smooth synthetic Green's matrix with two rows (east, north) per station.

    Each patch displaces a station by ``K(rho) (e + radial * r_hat)`` where
    ``K = H^3 / (rho^2 + H^2)^{3/2}``, ``e`` is the unit slip direction at
    ``strike_deg`` clockwise from north and ``r_hat`` the outward horizontal
    direction scaled by ``rho / sqrt(rho^2 + H^2)``. Columns are scaled by
    the patch area in km^2.
    """
    se, sn = to_local_km(stations[:, 0], stations[:, 1], origin)
    pe, pn = to_local_km(mesh.centers[:, 0], mesh.centers[:, 1], origin)
    de = se[:, None] - pe[None, :]
    dn = sn[:, None] - pn[None, :]
    rho2 = de**2 + dn**2
    H = depth_km
    K = H**3 / (rho2 + H**2) ** 1.5
    denom = np.sqrt(rho2 + H**2)
    th = math.radians(strike_deg)
    ge = K * (math.sin(th) + radial * de / denom)
    gn = K * (math.cos(th) + radial * dn / denom)
    lat0 = origin[1]
    area_km2 = mesh.patch_area * KM_PER_DEG**2 * math.cos(math.radians(lat0))
    G = np.empty((2 * stations.shape[0], mesh.k_prime))
    G[0::2] = ge
    G[1::2] = gn
    return G * area_km2
