"""Green's-operator handling and slip reconstruction.

A Green's matrix ``G`` (k x k') maps fault slip to surface displacement.
Its rank-d SVD ``G ~ U0 diag(D0) V0^T`` supplies a fixed loading matrix for
the factor model, and the posterior of the factors maps back to slip via
``G^T U0 D0^{-2}``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .em import FmouFit, sign_fix
from .errors import ContractError, DataError, RankError

DENSE_COV_LIMIT = 2000


@dataclass(frozen=True)
class GreensOperator:
    G: np.ndarray
    U0: np.ndarray
    D0: np.ndarray
    V0: np.ndarray
    augmented: bool = False

    @property
    def k(self):
        return self.G.shape[0]

    @property
    def k_prime(self):
        return self.G.shape[1]

    @property
    def d(self):
        return self.U0.shape[1]

    @property
    def n_frame(self):
        return 2 if self.augmented else 0

    @property
    def D0_matrix(self):
        return np.diag(self.D0)

    def truncate(self, d):
        """Operator with the leading ``d`` singular triplets of this one."""
        if not 1 <= d <= self.d:
            raise ContractError(f"cannot truncate rank-{self.d} operator to d={d}")
        return GreensOperator(self.G, self.U0[:, :d], self.D0[:d], self.V0[:, :d], self.augmented)

    def slip_map(self):
        """The k' x d matrix ``G^T U0 D0^{-2}``."""
        return self.G.T @ (self.U0 / self.D0**2)


def svd_truncate(G, d, augmented=False) -> GreensOperator:
    """Rank-d truncated SVD of a Green's matrix.

    Columns of ``U0`` are sign-normalised (largest entry positive) with the
    matching flip applied to ``V0``.
    """
    G = np.asarray(G, dtype=float)
    if G.ndim != 2:
        raise DataError("Green's matrix must be two-dimensional")
    if not np.all(np.isfinite(G)):
        raise DataError("Green's matrix contains non-finite values")
    k, kp = G.shape
    if not 1 <= d <= min(k, kp):
        raise ContractError(f"d={d} must lie in [1, {min(k, kp)}]")
    U, sv, Vt = np.linalg.svd(G, full_matrices=False)
    tol = max(k, kp) * np.finfo(float).eps * (sv[0] if sv.size else 0.0)
    rank = int(np.sum(sv > tol))
    if d > rank:
        raise RankError(f"d={d} exceeds numerical rank {rank} of the Green's matrix", rank)
    U0 = U[:, :d]
    fixed = sign_fix(U0)
    flips = np.sign(np.sum(fixed * U0, axis=0))
    return GreensOperator(G, fixed, sv[:d].copy(), Vt[:d].T * flips, augmented)


def frame_motion_block(k):
    if k % 2:
        raise ContractError(f"frame-motion augmentation needs an even number of rows (two per station), got k={k}")
    return np.tile(np.eye(2), (k // 2, 1))


def augment_frame_motion(G):
    """Append two frame-motion columns (stacked 2x2 identities) to G.

    Accepts a raw matrix (returns the k x (k'+2) matrix) or a
    :class:`GreensOperator` (returns a re-truncated augmented operator with
    the same d; augmenting an already augmented operator is an error).
    """
    if isinstance(G, GreensOperator):
        if G.augmented:
            raise ContractError("operator is already augmented with frame motion")
        return svd_truncate(augment_frame_motion(G.G), G.d, augmented=True)
    G = np.asarray(G, dtype=float)
    return np.hstack([G, frame_motion_block(G.shape[0])])


@dataclass
class SlipField:
    mean: np.ndarray
    var_diag: np.ndarray
    rates: np.ndarray | None = None
    n_frame: int = 0

    @property
    def patches(self):
        return self.mean.shape[0] - self.n_frame

    @property
    def n(self):
        return self.mean.shape[1]

    def slip_only(self):
        """Drop frame-motion coordinates (the trailing ``n_frame`` rows)."""
        p = self.patches
        rates = None if self.rates is None else self.rates[:p]
        return SlipField(self.mean[:p], self.var_diag[:p], rates, 0)


def _check_pair(fit: FmouFit, op: GreensOperator):
    if fit.params.k != op.k or fit.params.d != op.d:
        raise ContractError(
            f"fit has (k={fit.params.k}, d={fit.params.d}) but operator has (k={op.k}, d={op.d})"
        )
    if not np.allclose(fit.params.U0, op.U0, atol=1e-10):
        raise ContractError("fit was not produced with the operator's loading matrix")


def reconstruct_slip(fit: FmouFit, op: GreensOperator) -> SlipField:
    """Posterior slip mean and marginal variances at every time point."""
    _check_pair(fit, op)
    W = op.slip_map()
    mean = W @ fit.z_post
    var = (W * W) @ fit.S_post
    return SlipField(mean, var, None, op.n_frame)


def slip_covariance(fit: FmouFit, op: GreensOperator, t, allow_dense=False):
    """Full k' x k' slip posterior covariance at time t (small problems only)."""
    _check_pair(fit, op)
    if not allow_dense or op.k_prime > DENSE_COV_LIMIT:
        raise ContractError("materialising the slip covariance requires allow_dense=True and a small k'")
    W = op.slip_map()
    return (W * fit.S_post[:, t]) @ W.T


def slip_cov_matvec(fit: FmouFit, op: GreensOperator, t, v):
    """Product of the slip posterior covariance at time t with a vector."""
    _check_pair(fit, op)
    W = op.slip_map()
    return W @ (fit.S_post[:, t] * (W.T @ v))


def slip_rates(field):
    """Forward differences of the slip mean along time, negatives set to zero."""
    mean = field.mean if isinstance(field, SlipField) else np.asarray(field, dtype=float)
    if mean.shape[1] < 2:
        raise ContractError("slip rates need at least two time points")
    return np.maximum(np.diff(mean, axis=1), 0.0)


def seven_day_average(X, window=7):
    """Forward-window mean ``sum_{j<window} X[:, t + j] / window`` for t = 0..n-window."""
    X = X.mean if isinstance(X, SlipField) else np.asarray(X, dtype=float)
    n = X.shape[1]
    if not 1 <= window <= n:
        raise ContractError(f"window={window} must lie in [1, n={n}]")
    return np.lib.stride_tricks.sliding_window_view(X, window, axis=1).mean(axis=2)
