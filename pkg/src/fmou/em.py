"""Closed-form EM for the orthogonal-loading OU factor model.

Observation model (columns of ``Y`` are time points)::

    y(t) = U0 z(t) + eps(t),        eps ~ N(0, sigma0_2 I_k)
    z_l(t) = rho_l z_l(t-1) + w_l,  w_l ~ N(0, sigma2_l), stationary start

Because ``U0`` has orthonormal columns, the E-step decouples into ``d``
scalar smoothing problems on the projected rows of ``U0^T Y``; every M-step
update is closed form (an SVD for the loading, a cubic for each rho).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import AmbiguityError, ConsistencyError, ContractError, DataError, UniquenessError
from .kalman import FactorParams, SmoothTrack, smooth_batch

log = logging.getLogger(__name__)

ORTHO_TOL = 1e-10
SIGMA0_FLOOR = 1e-12
_ROOT_MARGIN = 1e-12


@dataclass
class FmouParams:
    U0: np.ndarray
    sigma0_2: float
    rho: np.ndarray
    sigma2: np.ndarray

    def __post_init__(self):
        self.U0 = np.asarray(self.U0, dtype=float)
        if self.U0.ndim != 2:
            raise ContractError("U0 must be a k x d matrix")
        k, d = self.U0.shape
        if d > k:
            raise ContractError(f"d={d} exceeds k={k}")
        check_orthonormal(self.U0)
        self.rho = np.asarray(self.rho, dtype=float).reshape(-1)
        self.sigma2 = np.asarray(self.sigma2, dtype=float).reshape(-1)
        if self.rho.shape != (d,) or self.sigma2.shape != (d,):
            raise ContractError("rho and sigma2 must have one entry per column of U0")
        if np.any(np.abs(self.rho) >= 1.0):
            raise ContractError("every rho must lie in (-1, 1)")
        if np.any(~(self.sigma2 >= 0.0)):
            raise ContractError("every sigma2 must be non-negative")
        self.sigma0_2 = float(self.sigma0_2)
        if not self.sigma0_2 >= 0.0:
            raise ContractError("sigma0_2 must be non-negative")

    @property
    def k(self):
        return self.U0.shape[0]

    @property
    def d(self):
        return self.U0.shape[1]

    @property
    def tau2(self):
        return self.sigma2 / (1.0 - self.rho**2)

    @property
    def factors(self):
        return [FactorParams(r, s) for r, s in zip(self.rho, self.sigma2)]


@dataclass
class FitOptions:
    d: int
    fix_U0: np.ndarray | None = None
    fix_sigma0_2: float | None = None
    max_iter: int = 100
    rel_tol: float = 1e-6
    seed: int = 0
    # warm start: leading entries override the random/default initial values
    init_rho: np.ndarray | None = None
    init_sigma2: np.ndarray | None = None

    def __post_init__(self):
        if self.d < 1:
            raise ContractError("d must be at least 1")
        if self.max_iter < 1:
            raise ContractError("max_iter must be at least 1")
        if not self.rel_tol > 0:
            raise ContractError("rel_tol must be positive")


@dataclass
class FmouFit:
    params: FmouParams
    z_post: np.ndarray
    tracks: list
    loglik_trace: np.ndarray
    converged: bool
    iterations: int
    S_post: np.ndarray = field(repr=False, default=None)

    @property
    def mean(self):
        """Posterior mean of the signal, ``U0 z_post`` (k x n)."""
        return self.params.U0 @ self.z_post


def check_orthonormal(U, tol=ORTHO_TOL):
    d = U.shape[1]
    err = np.abs(U.T @ U - np.eye(d)).max() if d else 0.0
    if not err <= tol:
        raise ContractError(f"loading matrix columns are not orthonormal (max deviation {err:.3g})")


def _check_Y(Y):
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2:
        raise DataError("observation matrix must be two-dimensional (k x n)")
    if not np.all(np.isfinite(Y)):
        raise DataError("observation matrix contains non-finite values")
    return Y


def sign_fix(U):
    """Flip columns so each column's largest-magnitude entry is positive."""
    U = np.array(U, dtype=float, copy=True)
    if U.size == 0:
        return U
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs


def project(Y, U0):
    """Projected observations ``U0^T Y`` (d x n)."""
    Y = np.asarray(Y, dtype=float)
    U0 = np.asarray(U0, dtype=float)
    if Y.ndim != 2 or U0.ndim != 2 or U0.shape[0] != Y.shape[0]:
        raise ContractError(f"cannot project Y{Y.shape} with U0{U0.shape}")
    check_orthonormal(U0)
    return U0.T @ Y


def _e_step_arrays(Ytilde, params):
    return smooth_batch(Ytilde, params.rho, params.sigma2, params.tau2, params.sigma0_2)


def e_step(Ytilde, params: FmouParams):
    """Smooth every projected row with its own factor parameters."""
    s, S, Sc, ll = _e_step_arrays(Ytilde, params)
    return [SmoothTrack(s[l], S[l], Sc[l], float(ll[l])) for l in range(s.shape[0])]


def procrustes_loading(z_post, Y):
    """Unnormalised maximiser of ``tr(Y^T U0 Z)`` over orthonormal k x d matrices."""
    z_post = np.asarray(z_post, dtype=float)
    Y = np.asarray(Y, dtype=float)
    d, k = z_post.shape[0], Y.shape[0]
    if d > k:
        raise ContractError(f"d={d} exceeds k={k}")
    M = z_post @ Y.T
    A, lam, Bt = np.linalg.svd(M, full_matrices=False)
    tol = max(M.shape) * np.finfo(float).eps * (lam[0] if lam.size else 0.0)
    rank = int(np.sum(lam > tol))
    if rank < d:
        raise AmbiguityError(f"Z Y^T has numerical rank {rank} < d={d}; Procrustes optimum is not unique", rank)
    return Bt.T @ A.T


def update_loading(z_post, Y):
    """Orthogonal Procrustes maximiser of ``tr(Y^T U0 Z)`` over orthonormal U0.

    With ``Z Y^T = A diag(lam) B^T`` (thin SVD), the maximiser is ``B A^T``;
    columns are then sign-normalised (see :func:`sign_fix`), which maximises
    the same objective for correspondingly sign-flipped rows of ``z_post``.
    """
    return sign_fix(procrustes_loading(z_post, Y))


def _aligned_loading(z_post, Y):
    """Sign-normalised Procrustes loading and the per-column flips applied."""
    raw = procrustes_loading(z_post, Y)
    fixed = sign_fix(raw)
    return fixed, np.sign(np.sum(fixed * raw, axis=0))


def update_noise_variance(Y, U0_new, z_post, S_sums):
    """Closed-form noise-variance update.

    Evaluated as ``(||Y - U0 Z||_F^2 + sum S) / (n k)``, which equals the
    three-trace form when U0 has orthonormal columns and avoids cancellation.
    """
    Y = np.asarray(Y, dtype=float)
    k, n = Y.shape
    if S_sums < 0:
        raise ContractError("sum of posterior variances must be non-negative")
    resid = Y - U0_new @ z_post
    val = (float(np.sum(resid * resid)) + float(S_sums)) / (n * k)
    if val < -1e-12:
        raise ConsistencyError(f"noise variance update is negative ({val:.3g})")
    return max(val, 0.0)


def _moment_stats(s, S, Sc):
    """Per-factor sums (a, b, c) defining the expected AR(1) quadratic form.

    The form expands to ``c - 2 rho a + rho^2 b``.
    """
    a = np.sum(s[:, 1:] * s[:, :-1], axis=1) + np.sum(Sc, axis=1)
    m2 = s * s + S
    b = np.sum(m2[:, 1:-1], axis=1)
    c = np.sum(m2, axis=1)
    return a, b, c


def cubic_coefficients(track: SmoothTrack):
    """Coefficients (beta0, beta1, beta2, beta3) of the rho stationarity cubic."""
    a, b, c = (float(v[0]) for v in _moment_stats(track.s[None], track.S[None], track.S_cross[None]))
    return _betas(a, b, c, track.n)


def _betas(a, b, c, n):
    return n * a, -c - n * b, (2 - n) * a, (n - 1) * b


def _poly(coef, x):
    b0, b1, b2, b3 = coef
    return ((b3 * x + b2) * x + b1) * x + b0


def _dpoly(coef, x):
    _, b1, b2, b3 = coef
    return (3.0 * b3 * x + 2.0 * b2) * x + b1


def _real_roots(b0, b1, b2, b3):
    eps = 1e-14
    if abs(b3) > eps:
        A, B, C = b2 / b3, b1 / b3, b0 / b3
        p = B - A * A / 3.0
        q = 2.0 * A**3 / 27.0 - A * B / 3.0 + C
        shift = -A / 3.0
        disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
        if disc > 0:
            sq = math.sqrt(disc)
            y = np.cbrt(-q / 2.0 + sq) + np.cbrt(-q / 2.0 - sq)
            return [y + shift]
        if p == 0.0:
            return [shift]
        r = 2.0 * math.sqrt(-p / 3.0)
        arg = max(-1.0, min(1.0, 3.0 * q / (2.0 * p) * math.sqrt(-3.0 / p)))
        phi = math.acos(arg) / 3.0
        return [r * math.cos(phi - 2.0 * math.pi * j / 3.0) + shift for j in range(3)]
    if abs(b2) > eps:
        disc = b1 * b1 - 4.0 * b2 * b0
        if disc < 0:
            return []
        sq = math.sqrt(disc)
        # numerically stable pair
        qq = -0.5 * (b1 + math.copysign(sq, b1)) if (b1 != 0 or sq != 0) else 0.0
        roots = [qq / b2]
        if qq != 0.0:
            roots.append(b0 / qq)
        return roots
    if abs(b1) > eps:
        return [-b0 / b1]
    return []


def solve_rho_cubic(beta0, beta1, beta2, beta3):
    """Unique root in (-1, 1) of ``beta0 + beta1 r + beta2 r^2 + beta3 r^3``.

    Real roots come from the closed-form depressed cubic (trigonometric or
    Cardano branch), each polished by three Newton steps on the original
    polynomial. Raises :class:`UniquenessError` unless exactly one root lies
    strictly inside the interval.
    """
    coefs = np.array([beta0, beta1, beta2, beta3], dtype=float)
    if not np.all(np.isfinite(coefs)):
        raise UniquenessError("non-finite cubic coefficients", [])
    scale = float(np.abs(coefs).max())
    if scale == 0.0:
        raise UniquenessError("all cubic coefficients vanish; every rho is a root", [])
    c = coefs / scale
    roots = []
    for x in _real_roots(*c):
        for _ in range(3):
            dp = _dpoly(c, x)
            if dp == 0.0:
                break
            x = x - _poly(c, x) / dp
        roots.append(float(x))
    inside = sorted(r for r in roots if -1.0 + _ROOT_MARGIN < r < 1.0 - _ROOT_MARGIN)
    uniq = []
    for r in inside:
        if not uniq or abs(r - uniq[-1]) > 1e-9:
            uniq.append(r)
    if len(uniq) != 1:
        raise UniquenessError(f"expected one root of the rho cubic in (-1, 1), found {len(uniq)}: {uniq}", uniq)
    return uniq[0]


def update_sigma_l(track: SmoothTrack, rho_new):
    """Innovation-variance update for one factor at the new rho."""
    from .kalman import factor_moment_sums

    quad, trace = factor_moment_sums(track, rho_new)
    val = (quad + trace) / track.n
    if val < -1e-12:
        raise ConsistencyError(f"sigma_l^2 update is negative ({val:.3g})")
    return max(val, 0.0)


def _m_step_factors(s, S, Sc):
    d, n = s.shape
    a, b, c = _moment_stats(s, S, Sc)
    rho = np.empty(d)
    sig = np.empty(d)
    for l in range(d):
        r = solve_rho_cubic(*_betas(a[l], b[l], c[l], n))
        v = (c[l] - 2.0 * r * a[l] + r * r * b[l]) / n
        if v < -1e-12 * max(1.0, c[l] / n):
            raise ConsistencyError(f"sigma_l^2 update for factor {l} is negative ({v:.3g})")
        rho[l] = r
        sig[l] = max(v, 0.0)
    return rho, sig


def _marginal_from_parts(ll_factors, resid_energy, k, n, d, sigma0_2):
    total = float(np.sum(ll_factors))
    if d < k:
        if sigma0_2 == 0.0:
            if resid_energy > 0.0:
                return -math.inf
            return total
        total -= 0.5 * n * (k - d) * math.log(2.0 * math.pi * sigma0_2)
        total -= 0.5 * resid_energy / sigma0_2
    return total


def marginal_loglik(Y, params: FmouParams):
    """Log-likelihood of Y with the latent factors integrated out.

    The projected rows contribute their scalar-DLM likelihoods; the
    orthogonal complement of ``U0`` is pure noise.
    """
    Y = _check_Y(Y)
    k, n = Y.shape
    Yt = project(Y, params.U0)
    _, _, _, ll = _e_step_arrays(Yt, params)
    resid = Y - params.U0 @ Yt
    return _marginal_from_parts(ll, float(np.sum(resid * resid)), k, n, params.d, params.sigma0_2)


def initial_loading(Y, d):
    """Leading left singular vectors of Y, completed with identity columns if rank-deficient."""
    k = Y.shape[0]
    U, sv, _ = np.linalg.svd(Y, full_matrices=False)
    tol = max(Y.shape) * np.finfo(float).eps * (sv[0] if sv.size and sv[0] > 0 else 1.0)
    r = min(d, int(np.sum(sv > tol)))
    if r < d:
        Q, _ = np.linalg.qr(np.hstack([U[:, :r], np.eye(k)]))
        return sign_fix(Q[:, :d])
    return sign_fix(U[:, :d])


def _initial_params(Y, opts: FitOptions, rng):
    k, n = Y.shape
    d = opts.d
    if opts.fix_U0 is not None:
        U0 = np.asarray(opts.fix_U0, dtype=float)
        if U0.shape != (k, d):
            raise ContractError(f"fix_U0 has shape {U0.shape}, expected {(k, d)}")
    else:
        U0 = initial_loading(Y, d)
    if opts.fix_sigma0_2 is not None:
        sigma0_2 = float(opts.fix_sigma0_2)
    else:
        sigma0_2 = 0.5 * float(np.var(Y))
        if sigma0_2 <= 0.0:
            sigma0_2 = 1.0
    rho = rng.uniform(0.8, 0.99, size=d)
    sigma2 = np.ones(d)
    if opts.init_rho is not None:
        w = np.asarray(opts.init_rho, dtype=float)[:d]
        rho[: w.size] = w
    if opts.init_sigma2 is not None:
        w = np.asarray(opts.init_sigma2, dtype=float)[:d]
        sigma2[: w.size] = np.maximum(w, 1e-12)
    return FmouParams(U0, sigma0_2, rho, sigma2)


def fit(Y, options: FitOptions) -> FmouFit:
    """Run the EM iterations until the relative log-likelihood change is below tolerance.

    ``loglik_trace[0]`` is the marginal log-likelihood at the initial
    parameters and ``loglik_trace[i]`` the value after the i-th EM update.
    Non-convergence within ``max_iter`` is reported via ``converged=False``.
    """
    Y = _check_Y(Y)
    k, n = Y.shape
    d = options.d
    if d > k:
        raise ContractError(f"d={d} exceeds k={k}")
    if n < 2:
        raise ContractError("need at least two time points")
    rng = np.random.default_rng(options.seed)
    params = _initial_params(Y, options, rng)
    fix_U = options.fix_U0 is not None
    fix_s0 = options.fix_sigma0_2 is not None

    def evaluate(p):
        Yt = p.U0.T @ Y
        s, S, Sc, ll = _e_step_arrays(Yt, p)
        resid = Y - p.U0 @ Yt
        return (s, S, Sc, ll), _marginal_from_parts(ll, float(np.sum(resid * resid)), k, n, d, p.sigma0_2)

    moments, ll = evaluate(params)
    trace = [ll]
    converged = False
    it = 0
    for it in range(1, options.max_iter + 1):
        s, S, Sc, _ = moments
        if fix_U:
            U0, s_aligned = params.U0, s
        else:
            U0, flips = _aligned_loading(s, Y)
            s_aligned = s * flips[:, None]
        if fix_s0:
            sigma0_2 = params.sigma0_2
        else:
            sigma0_2 = update_noise_variance(Y, U0, s_aligned, float(S.sum()))
            if d < k:
                sigma0_2 = max(sigma0_2, SIGMA0_FLOOR)
        rho, sigma2 = _m_step_factors(s, S, Sc)
        params = FmouParams(U0, sigma0_2, rho, sigma2)
        moments, ll_new = evaluate(params)
        trace.append(ll_new)
        change = abs(ll_new - ll) / (1.0 + abs(ll_new))
        ll = ll_new
        if change < options.rel_tol:
            converged = True
            break
    s, S, Sc, llf = moments
    if not fix_U:
        order = np.argsort(-np.var(s, axis=1), kind="stable")
        params = FmouParams(params.U0[:, order], params.sigma0_2, params.rho[order], params.sigma2[order])
        s, S, Sc, llf = s[order], S[order], Sc[order], llf[order]
    tracks = [SmoothTrack(s[l], S[l], Sc[l], float(llf[l])) for l in range(d)]
    log.debug("fit d=%d converged=%s iterations=%d loglik=%.6g", d, converged, it, ll)
    return FmouFit(params, s, tracks, np.asarray(trace), converged, it, S_post=S)


def posterior_signal(fit: FmouFit, t, dense=False):
    """Posterior of the signal m(t) = U0 z(t).

    Returns ``(mean, (U0, S_t))`` where the covariance is ``U0 diag(S_t) U0^T``;
    with ``dense=True`` the k x k covariance is materialised instead.
    """
    n = fit.z_post.shape[1]
    if not 0 <= t < n:
        raise ContractError(f"time index {t} out of range [0, {n})")
    U0 = fit.params.U0
    S_t = fit.S_post[:, t].copy()
    mean = U0 @ fit.z_post[:, t]
    if dense:
        return mean, (U0 * S_t) @ U0.T
    return mean, (U0, S_t)


def normal_quantile(level):
    if level == 0.95:
        return 1.96
    from scipy.stats import norm

    return float(norm.ppf(0.5 + level / 2.0))


def signal_intervals(fit: FmouFit, level=0.95):
    """Pointwise credible bands for the signal, from the diagonal of ``U0 D_S(t) U0^T``."""
    U0 = fit.params.U0
    var = (U0 * U0) @ fit.S_post
    half = normal_quantile(level) * np.sqrt(np.maximum(var, 0.0))
    mean = fit.mean
    return mean - half, mean + half


def refit_options(options: FitOptions, **changes) -> FitOptions:
    return replace(options, **changes)
