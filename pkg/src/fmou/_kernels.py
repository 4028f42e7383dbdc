"""Hot loops: batched scalar Kalman filter / RTS smoother and a Thomas solver.

Each kernel has a numba version (``*_nb``) and a pure-numpy version
(``*_np``). The public names at the bottom of the module are bound to one
of them according to :data:`fmou._accel.USE_NUMBA`. Both variants are always
importable so tests and the benchmark can compare them.

All factor kernels operate on ``d`` independent AR(1) state sequences

    z(t) = rho * z(t-1) + w(t),  w ~ N(0, sigma2),  z(1) ~ N(0, tau2)
    y(t) = z(t) + e(t),          e ~ N(0, sigma0_2)

laid out as rows of ``(d, n)`` arrays.
"""

import math

import numpy as np

from ._accel import USE_NUMBA, njit

VAR_FLOOR = 1e-300
_LOG_2PI = math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# forward filter
# ---------------------------------------------------------------------------


@njit
def _filter_nb(y, rho, sigma2, tau2, sigma0_2, m, C, a, R, loglik, logdet):
    d, n = y.shape
    for l in range(d):
        r = rho[l]
        q = sigma2[l]
        a_t = 0.0
        R_t = tau2[l]
        ll = 0.0
        ld = 0.0
        for t in range(n):
            a[l, t] = a_t
            R[l, t] = R_t
            F = R_t + sigma0_2
            if not F >= VAR_FLOOR:
                return l * n + t + 1
            e = y[l, t] - a_t
            K = R_t / F
            m_t = a_t + K * e
            C_t = R_t * sigma0_2 / F
            m[l, t] = m_t
            C[l, t] = C_t
            ll -= 0.5 * (_LOG_2PI + math.log(F) + e * e / F)
            ld += math.log(F)
            a_t = r * m_t
            R_t = r * r * C_t + q
        loglik[l] = ll
        logdet[l] = ld
    return 0


def _filter_np(y, rho, sigma2, tau2, sigma0_2, m, C, a, R, loglik, logdet):
    d, n = y.shape
    a_t = np.zeros(d)
    R_t = np.array(tau2, dtype=float)
    ll = np.zeros(d)
    ld = np.zeros(d)
    r2 = rho * rho
    for t in range(n):
        a[:, t] = a_t
        R[:, t] = R_t
        F = R_t + sigma0_2
        bad = ~(F >= VAR_FLOOR)
        if bad.any():
            return int(np.flatnonzero(bad)[0]) * n + t + 1
        e = y[:, t] - a_t
        K = R_t / F
        m_t = a_t + K * e
        C_t = R_t * sigma0_2 / F
        m[:, t] = m_t
        C[:, t] = C_t
        logF = np.log(F)
        ll -= 0.5 * (_LOG_2PI + logF + e * e / F)
        ld += logF
        a_t = rho * m_t
        R_t = r2 * C_t + sigma2
    loglik[:] = ll
    logdet[:] = ld
    return 0


# ---------------------------------------------------------------------------
# RTS smoother with lag-one covariances
#
#   J(t)  = C(t) rho / R(t+1)
#   s(t)  = m(t) + J(t) (s(t+1) - a(t+1))
#   S(t)  = C(t) + J(t)^2 (S(t+1) - R(t+1))
#   Sc(t) = Cov[z(t), z(t+1) | y] = J(t) S(t+1)
# ---------------------------------------------------------------------------


@njit
def _smooth_nb(m, C, a, R, rho, s, S, Sc):
    d, n = m.shape
    for l in range(d):
        r = rho[l]
        s[l, n - 1] = m[l, n - 1]
        S[l, n - 1] = C[l, n - 1]
        for t in range(n - 2, -1, -1):
            R_next = R[l, t + 1]
            if not R_next >= VAR_FLOOR:
                return l * n + t + 2
            J = C[l, t] * r / R_next
            s[l, t] = m[l, t] + J * (s[l, t + 1] - a[l, t + 1])
            v = C[l, t] + J * J * (S[l, t + 1] - R_next)
            S[l, t] = v if v > 0.0 else 0.0
            Sc[l, t] = J * S[l, t + 1]
    return 0


def _smooth_np(m, C, a, R, rho, s, S, Sc):
    d, n = m.shape
    s[:, n - 1] = m[:, n - 1]
    S[:, n - 1] = C[:, n - 1]
    for t in range(n - 2, -1, -1):
        R_next = R[:, t + 1]
        bad = ~(R_next >= VAR_FLOOR)
        if bad.any():
            return int(np.flatnonzero(bad)[0]) * n + t + 2
        J = C[:, t] * rho / R_next
        s[:, t] = m[:, t] + J * (s[:, t + 1] - a[:, t + 1])
        S[:, t] = np.maximum(C[:, t] + J * J * (S[:, t + 1] - R_next), 0.0)
        Sc[:, t] = J * S[:, t + 1]
    return 0


# ---------------------------------------------------------------------------
# tridiagonal solve (Thomas algorithm), used by the diffusion generator
# ---------------------------------------------------------------------------


@njit
def _thomas_nb(lower, diag, upper, rhs):
    n = diag.shape[0]
    cp = np.empty(n)
    x = np.empty(n)
    cp[0] = upper[0] / diag[0]
    x[0] = rhs[0] / diag[0]
    for i in range(1, n):
        den = diag[i] - lower[i] * cp[i - 1]
        cp[i] = upper[i] / den if i < n - 1 else 0.0
        x[i] = (rhs[i] - lower[i] * x[i - 1]) / den
    for i in range(n - 2, -1, -1):
        x[i] -= cp[i] * x[i + 1]
    return x


def _thomas_np(lower, diag, upper, rhs):
    from scipy.linalg import solve_banded

    n = diag.shape[0]
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    return solve_banded((1, 1), ab, rhs)


@njit
def _implicit_steps_nb(lower, diag, upper, u, bc_left, n_steps):
    # backward-Euler substeps; u[0] is pinned to the Dirichlet value
    for _ in range(n_steps):
        rhs = u.copy()
        rhs[0] = bc_left
        u = _thomas_nb(lower, diag, upper, rhs)
    return u


def _implicit_steps_np(lower, diag, upper, u, bc_left, n_steps):
    from scipy.linalg import solve_banded

    n = diag.shape[0]
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    for _ in range(n_steps):
        rhs = u.copy()
        rhs[0] = bc_left
        u = solve_banded((1, 1), ab, rhs)
    return u


if USE_NUMBA:
    filter_batch_kernel = _filter_nb
    smooth_batch_kernel = _smooth_nb
    thomas = _thomas_nb
    implicit_steps = _implicit_steps_nb
else:
    filter_batch_kernel = _filter_np
    smooth_batch_kernel = _smooth_np
    thomas = _thomas_np
    implicit_steps = _implicit_steps_np

KERNELS = {
    "numba": (_filter_nb, _smooth_nb),
    "numpy": (_filter_np, _smooth_np),
}

IMPLICIT_STEPS = {
    "numba": _implicit_steps_nb,
    "numpy": _implicit_steps_np,
}

# paths that are actually compiled/vectorised in this process; with numba
# disabled the "*_nb" functions still run, as plain Python loops
AVAILABLE = ("numba", "numpy") if USE_NUMBA else ("numpy",)
