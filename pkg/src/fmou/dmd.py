"""Exact dynamic mode decomposition, used as a baseline.

The best-fit one-step operator ``A = Y2 pinv(Y1)`` is never formed; its
rank-r eigenpairs come from the r x r projection ``U^T Y2 V Sigma^{-1}``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DataError, RankError


@dataclass
class DmdModel:
    eigenvalues: np.ndarray  # (r,) complex
    modes: np.ndarray  # (k, r) complex, unit-norm columns
    amplitudes: np.ndarray  # (r,) complex
    basis: np.ndarray | None = None  # (k, r) left singular vectors of Y1
    lift: np.ndarray | None = None  # (k, r) Y2 V Sigma^{-1}

    def __post_init__(self):
        self.eigenvalues = np.asarray(self.eigenvalues, dtype=complex).reshape(-1)
        self.modes = np.asarray(self.modes, dtype=complex)
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        r = self.eigenvalues.size
        if self.modes.ndim != 2 or self.modes.shape[1] != r or self.amplitudes.size != r:
            raise ContractError("eigenvalues, modes and amplitudes must share the rank dimension")

    @property
    def rank(self):
        return self.eigenvalues.size

    @property
    def k(self):
        return self.modes.shape[0]

    def apply(self, v):
        """Rank-r transition operator applied to ``v`` (k or k x m)."""
        if self.basis is None or self.lift is None:
            raise ContractError("model was built without its projection basis")
        return self.lift @ (self.basis.T @ v)

    def reorder(self, perm):
        perm = np.asarray(perm)
        return DmdModel(self.eigenvalues[perm], self.modes[:, perm], self.amplitudes[perm], self.basis, self.lift)


def _normalize_modes(Phi):
    Phi = Phi / np.linalg.norm(Phi, axis=0)
    idx = np.argmax(np.abs(Phi), axis=0)
    lead = Phi[idx, np.arange(Phi.shape[1])]
    return Phi * (np.abs(lead) / lead)


def exact_dmd(Y, r) -> DmdModel:
    """Rank-r exact DMD of the snapshot matrix ``Y`` (k x n)."""
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2:
        raise DataError("snapshot matrix must be two-dimensional")
    if not np.all(np.isfinite(Y)):
        raise DataError("snapshot matrix contains non-finite values")
    k, n = Y.shape
    if n < 2:
        raise ContractError("exact DMD needs at least two snapshots")
    if r < 1:
        raise ContractError("rank must be at least 1")
    Y1, Y2 = Y[:, :-1], Y[:, 1:]
    U, sv, Vt = np.linalg.svd(Y1, full_matrices=False)
    tol = max(Y1.shape) * np.finfo(float).eps * (sv[0] if sv.size else 0.0)
    rank = int(np.sum(sv > tol))
    if r > rank:
        raise RankError(f"rank {r} exceeds numerical rank {rank} of the lagged snapshots", rank)
    U, sv, V = U[:, :r], sv[:r], Vt[:r].T
    lift = (Y2 @ V) / sv
    Atilde = U.T @ lift
    lam, W = np.linalg.eig(Atilde)
    order = np.argsort(-np.abs(lam), kind="stable")
    lam, W = lam[order], W[:, order]
    Phi = lift @ W
    zero = np.linalg.norm(Phi, axis=0) <= tol
    if np.any(zero):
        # eigenvalue 0: exact mode undefined, fall back to the projected one
        Phi[:, zero] = U @ W[:, zero]
    Phi = _normalize_modes(Phi)
    amps = np.linalg.lstsq(Phi, Y[:, 0].astype(complex), rcond=None)[0]
    return DmdModel(lam, Phi, amps, U, lift)


def dmd_reconstruct(model: DmdModel, n, return_imag=False):
    """Real part of ``sum_j mode_j lam_j^(t-1) amp_j`` for t = 1..n.

    With ``return_imag=True`` also returns the largest discarded imaginary magnitude.
    """
    if n < 1:
        raise ContractError("horizon must be at least 1")
    powers = model.eigenvalues[:, None] ** np.arange(n)[None, :]
    Yhat = model.modes @ (model.amplitudes[:, None] * powers)
    if return_imag:
        return Yhat.real.copy(), float(np.abs(Yhat.imag).max(initial=0.0))
    return Yhat.real.copy()


def mode_subspace(model: DmdModel, d=None):
    """Leading ``d`` left singular vectors of the real span of all modes (k x d)."""
    d = model.rank if d is None else d
    M = np.hstack([model.modes.real, model.modes.imag])
    U, sv, _ = np.linalg.svd(M, full_matrices=False)
    return U[:, :d]


def one_step_residual(Y, model: DmdModel):
    """Frobenius norm of ``Y2 - A_r Y1``."""
    Y = np.asarray(Y, dtype=float)
    return float(np.linalg.norm(Y[:, 1:] - model.apply(Y[:, :-1])))
