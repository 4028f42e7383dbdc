"""Scalar Kalman filter and RTS smoother for one AR(1) factor in noise.

The model for a single projected series is

    z(1) ~ N(0, tau2),  z(t) = rho z(t-1) + w(t),  w(t) ~ N(0, sigma2)
    y(t) = z(t) + e(t), e(t) ~ N(0, sigma0_2)

:func:`kalman_forward` and :func:`rts_smooth` give the full-data posterior
moments needed by the EM updates: means ``s``, variances ``S`` and lag-one
covariances ``S_cross``. :func:`smooth_batch` runs many factors at once and
is what the EM loop uses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ContractError, DataError, DegenerateFilterError


@dataclass(frozen=True)
class FactorParams:
    """Parameters of one latent AR(1) / Ornstein-Uhlenbeck factor.

    ``tau2`` defaults to the stationary variance ``sigma2 / (1 - rho**2)``.
    """

    rho: float
    sigma2: float
    tau2: float | None = None

    def __post_init__(self):
        rho, sigma2 = float(self.rho), float(self.sigma2)
        if not (-1.0 < rho < 1.0):
            raise ContractError(f"rho must lie in (-1, 1), got {rho}")
        if not (sigma2 >= 0.0 and np.isfinite(sigma2)):
            raise ContractError(f"sigma2 must be finite and non-negative, got {sigma2}")
        tau2 = sigma2 / (1.0 - rho * rho) if self.tau2 is None else float(self.tau2)
        if not (tau2 >= 0.0 and np.isfinite(tau2)):
            raise ContractError(f"tau2 must be finite and non-negative, got {tau2}")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "sigma2", sigma2)
        object.__setattr__(self, "tau2", tau2)

    @property
    def stationary(self) -> bool:
        return bool(np.isclose(self.tau2, self.sigma2 / (1.0 - self.rho**2), rtol=1e-12, atol=0.0))


@dataclass(frozen=True)
class FilterState:
    """Forward-pass output for one series.

    ``mean``/``var`` are the filtered moments of z(t) given y(1..t);
    ``pred_mean``/``pred_var`` the one-step predictive moments of z(t)
    given y(1..t-1). ``logdet`` accumulates log of the innovation variances,
    which equals ``log|Sigma + sigma0_2 I|``.
    """

    mean: np.ndarray
    var: np.ndarray
    pred_mean: np.ndarray
    pred_var: np.ndarray
    loglik: float
    logdet: float
    sigma0_2: float
    rho: float

    @property
    def n(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class SmoothTrack:
    """Full-data posterior moments of one factor."""

    s: np.ndarray
    S: np.ndarray
    S_cross: np.ndarray
    loglik: float

    def __post_init__(self):
        n = self.s.shape[0]
        if self.S.shape != (n,) or self.S_cross.shape != (max(n - 1, 0),):
            raise ContractError(
                f"track lengths must be (n, n, n-1); got {self.s.shape}, {self.S.shape}, {self.S_cross.shape}"
            )

    @property
    def n(self) -> int:
        return self.s.shape[0]


def _check_series(y, name="y_proj"):
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise DataError(f"{name} contains non-finite values")
    return y


def _raise_degenerate(code, n, stage):
    idx = code - 1
    factor, t = divmod(idx, n)
    raise DegenerateFilterError(
        f"{stage}: predictive variance below {_kernels.VAR_FLOOR:g} at factor {factor}, time {t}",
        factor=factor,
        time=t,
    )


def _filter_arrays(Y, rho, sigma2, tau2, sigma0_2, filt):
    d, n = Y.shape
    m = np.empty((d, n))
    C = np.empty((d, n))
    a = np.empty((d, n))
    R = np.empty((d, n))
    loglik = np.empty(d)
    logdet = np.empty(d)
    code = filt(Y, rho, sigma2, tau2, float(sigma0_2), m, C, a, R, loglik, logdet)
    if code:
        _raise_degenerate(code, n, "filter")
    return m, C, a, R, loglik, logdet


def smooth_batch(Y, rho, sigma2, tau2, sigma0_2, backend=None):
    """Filter and smooth every row of ``Y`` independently.

    Parameters
    ----------
    Y : (d, n) array
        One series per row.
    rho, sigma2, tau2 : (d,) arrays
        Per-row factor parameters.
    sigma0_2 : float
        Common observation-noise variance.
    backend : {"numba", "numpy"}, optional
        Force a kernel implementation; defaults to the import-time choice.

    Returns
    -------
    s, S : (d, n) arrays
    S_cross : (d, n-1) array
    loglik : (d,) array
        Per-row marginal log-likelihood.
    """
    Y = np.ascontiguousarray(Y, dtype=float)
    if Y.ndim != 2:
        raise ContractError("Y must be two-dimensional (d, n)")
    if not np.all(np.isfinite(Y)):
        raise DataError("projected series contain non-finite values")
    if sigma0_2 < 0:
        raise ContractError("sigma0_2 must be non-negative")
    d, n = Y.shape
    if n < 1:
        raise ContractError("series must have at least one time point")
    rho = np.ascontiguousarray(rho, dtype=float).reshape(d)
    sigma2 = np.ascontiguousarray(sigma2, dtype=float).reshape(d)
    tau2 = np.ascontiguousarray(tau2, dtype=float).reshape(d)
    if backend is None:
        filt, smooth = _kernels.filter_batch_kernel, _kernels.smooth_batch_kernel
    else:
        filt, smooth = _kernels.KERNELS[backend]
    m, C, a, R, loglik, _ = _filter_arrays(Y, rho, sigma2, tau2, sigma0_2, filt)
    s = np.empty((d, n))
    S = np.empty((d, n))
    Sc = np.empty((d, max(n - 1, 0)))
    code = smooth(m, C, a, R, rho, s, S, Sc)
    if code:
        _raise_degenerate(code, n, "smoother")
    return s, S, Sc, loglik


def kalman_forward(y_proj, params: FactorParams, sigma0_2: float) -> FilterState:
    """Forward Kalman pass with prediction-error log-likelihood."""
    y = _check_series(y_proj)
    if y.ndim != 1 or y.shape[0] < 1:
        raise ContractError("y_proj must be a non-empty 1-d series")
    if not sigma0_2 >= 0:
        raise ContractError(f"sigma0_2 must be non-negative, got {sigma0_2}")
    m, C, a, R, loglik, logdet = _filter_arrays(
        y[None, :],
        np.array([params.rho]),
        np.array([params.sigma2]),
        np.array([params.tau2]),
        sigma0_2,
        _kernels.filter_batch_kernel,
    )
    return FilterState(m[0], C[0], a[0], R[0], float(loglik[0]), float(logdet[0]), float(sigma0_2), params.rho)


def rts_smooth(filter: FilterState, params: FactorParams) -> SmoothTrack:
    """Backward pass producing posterior means, variances and lag-one covariances."""
    n = filter.mean.shape[0]
    for arr in (filter.var, filter.pred_mean, filter.pred_var):
        if arr.shape != (n,):
            raise ContractError("filter arrays have mismatched lengths")
    if filter.rho != params.rho:
        raise ContractError("filter was produced with a different rho")
    s = np.empty((1, n))
    S = np.empty((1, n))
    Sc = np.empty((1, max(n - 1, 0)))
    code = _kernels.smooth_batch_kernel(
        filter.mean[None, :].copy(),
        filter.var[None, :].copy(),
        filter.pred_mean[None, :].copy(),
        filter.pred_var[None, :].copy(),
        np.array([params.rho]),
        s,
        S,
        Sc,
    )
    if code:
        _raise_degenerate(code, n, "smoother")
    return SmoothTrack(s[0], S[0], Sc[0], filter.loglik)


def factor_moment_sums(track: SmoothTrack, rho: float) -> tuple[float, float]:
    """Numerators of the expected AR(1) quadratic form, without the 1/sigma2.

    Returns ``(quad_form, trace_term)`` with

        quad_form  = (1 - rho^2) s(1)^2 + sum_{t>=2} (s(t) - rho s(t-1))^2
        trace_term = sum_t S(t) + rho^2 sum_{t=2}^{n-1} S(t) - 2 rho sum_t S_cross(t)
    """
    if not -1.0 < rho < 1.0:
        raise ContractError(f"rho must lie in (-1, 1), got {rho}")
    s, S, Sc = track.s, track.S, track.S_cross
    quad = (1.0 - rho * rho) * s[0] ** 2 + float(np.sum((s[1:] - rho * s[:-1]) ** 2))
    trace = float(S.sum() + rho * rho * S[1:-1].sum() - 2.0 * rho * Sc.sum())
    return float(quad), trace
