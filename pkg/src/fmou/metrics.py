"""Evaluation metrics for mean, slip, loading-subspace and interval quality."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ContractError

ORTHO_TOL = 1e-8


@dataclass
class EvalReport:
    rmse_m: float
    principal_angles: np.ndarray | None = None
    coverage_95: float | None = None
    avg_interval_length: float | None = None
    rmse_s: float | None = None

    def __post_init__(self):
        if self.principal_angles is not None:
            ang = np.asarray(self.principal_angles, dtype=float)
            if np.any(np.diff(ang) < 0):
                raise ContractError("principal angles must be sorted ascending")
            self.principal_angles = ang
        if self.coverage_95 is not None and not 0.0 <= self.coverage_95 <= 1.0:
            raise ContractError("coverage must lie in [0, 1]")

    @property
    def largest_angle(self):
        return None if self.principal_angles is None else float(self.principal_angles[-1])

    def as_row(self):
        row = asdict(self)
        row.pop("principal_angles")
        row["largest_angle"] = self.largest_angle
        return row


def _conform(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ContractError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def rmse_mean(estimate, truth):
    """Root mean squared error over every entry of a k x n matrix."""
    est, tru = _conform(estimate, truth)
    return float(np.sqrt(np.mean((est - tru) ** 2)))


def rmse_slip(estimate, truth):
    """Same as :func:`rmse_mean`, over k' x n slip matrices."""
    return rmse_mean(estimate, truth)


def _check_ortho(U, name):
    d = U.shape[1]
    err = np.abs(U.T @ U - np.eye(d)).max()
    if err > ORTHO_TOL:
        raise ContractError(f"{name} columns are not orthonormal (max deviation {err:.3g})")


def principal_angles(U_true, U_est):
    """Principal angles between two column spans, ascending in [0, pi/2].

    Computed as arccos of the singular values of ``U_true^T U_est``.
    """
    A, B = _conform(U_true, U_est)
    if A.ndim != 2:
        raise ContractError("loading matrices must be two-dimensional")
    _check_ortho(A, "U_true")
    _check_ortho(B, "U_est")
    sv = np.linalg.svd(A.T @ B, compute_uv=False)
    return np.sort(np.arccos(np.clip(sv, -1.0, 1.0)))


def interval_coverage(lower, upper, truth):
    """Fraction of ``truth`` inside ``[lower, upper]`` and the mean interval length."""
    lo, hi = _conform(lower, upper)
    lo, tru = _conform(lo, truth)
    if np.any(lo > hi):
        raise ContractError("interval lower bounds exceed upper bounds")
    inside = (tru >= lo) & (tru <= hi)
    return float(np.mean(inside)), float(np.mean(hi - lo))
