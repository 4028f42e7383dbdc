"""Choosing the number of latent factors.

``select_d_ic`` scores each candidate d with the log of the rank-d SVD
residual norm plus a penalty; ``select_d_vm`` fits the model at each d and
picks the one whose estimated noise variance is closest to a measured value.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .em import FitOptions, _check_Y, fit, refit_options
from .errors import ContractError, FmouError, SelectionError

log = logging.getLogger(__name__)


@dataclass
class SelectionReport:
    d_hat: int
    scores: np.ndarray  # indexed by d - 1; untried or failed candidates are nan
    method: str
    sigma0_2_known: float | None = None
    candidates: list = field(default_factory=list)
    failures: dict = field(default_factory=dict)
    estimates: dict = field(default_factory=dict)

    @property
    def d_max(self):
        return self.scores.size

    def to_dict(self):
        return {
            "method": self.method,
            "d_hat": int(self.d_hat),
            "scores": [_score_json(s) for s in self.scores],
            "sigma0_2_known": self.sigma0_2_known,
            "candidates": [int(c) for c in self.candidates],
            "failures": {str(k): v for k, v in self.failures.items()},
        }


def _score_json(s):
    if np.isnan(s):
        return None
    return "-inf" if np.isneginf(s) else float(s)


def ic_penalty(d, k, n):
    """``d (k + n) / (k n) * log(k n / (k + n))``."""
    return d * (k + n) / (k * n) * math.log(k * n / (k + n))


def svd_residual_norms(Y, d_max):
    """Frobenius norms of ``Y - U_d U_d^T Y`` for d = 1..d_max from one SVD."""
    sv = np.linalg.svd(Y, compute_uv=False)
    energy = sv**2
    tail = np.concatenate([np.cumsum(energy[::-1])[::-1], [0.0]])
    norms = np.sqrt(np.maximum(tail[1 : d_max + 1], 0.0))
    # exact zeros when the discarded singular values vanish numerically
    tol = max(Y.shape) * np.finfo(float).eps * (sv[0] if sv.size else 0.0)
    for i in range(d_max):
        if np.all(sv[i + 1 :] <= tol):
            norms[i] = 0.0
    return norms


def select_d_ic(Y, d_max) -> SelectionReport:
    Y = _check_Y(Y)
    k, n = Y.shape
    if not 1 <= d_max <= min(k, n):
        raise ContractError(f"d_max={d_max} must lie in [1, {min(k, n)}]")
    norms = svd_residual_norms(Y, d_max)
    with np.errstate(divide="ignore"):
        first = np.log(norms)
    scores = first + np.array([ic_penalty(d, k, n) for d in range(1, d_max + 1)])
    d_hat = int(np.argmin(scores)) + 1
    return SelectionReport(d_hat, scores, "IC", candidates=list(range(1, d_max + 1)))


def _vm_candidate(Y, d, base: FitOptions, warm):
    opts = refit_options(base, d=d, fix_sigma0_2=None)
    if warm is not None:
        opts = refit_options(opts, init_rho=warm[0], init_sigma2=warm[1])
    return fit(Y, opts)


def select_d_vm(
    Y,
    sigma0_2_measured,
    d_grid=None,
    fit_options: FitOptions | None = None,
    refine=False,
    stride=8,
    warm_start=True,
) -> SelectionReport:
    """Variance matching: ``argmin_d |sigma0_2_hat(d) - sigma0_2_measured|``.

    Parameters
    ----------
    d_grid : iterable of int, optional
        Candidate values; defaults to ``1..k``.
    fit_options : FitOptions, optional
        Template options (``d`` and ``fix_sigma0_2`` are overridden). Passing
        ``fix_U0`` as a callable ``d -> k x d`` supplies a loading per
        candidate, e.g. truncated Green's singular vectors.
    refine : bool
        Coarse pass over every ``stride``-th grid value, then a full pass over
        the grid values within ``stride - 1`` of the coarse winner.
    warm_start : bool
        Seed each fit's leading factors with the previous candidate's estimates.
    """
    Y = _check_Y(Y)
    k, n = Y.shape
    if not sigma0_2_measured > 0:
        raise ContractError("measured noise variance must be positive")
    grid = sorted(set(int(d) for d in (range(1, k + 1) if d_grid is None else d_grid)))
    if not grid or grid[0] < 1 or grid[-1] > k:
        raise ContractError(f"d_grid must be a non-empty subset of 1..{k}")
    base = fit_options if fit_options is not None else FitOptions(d=1)
    loading_for = base.fix_U0 if callable(base.fix_U0) else None
    scores = np.full(grid[-1], np.nan)
    failures = {}
    estimates = {}
    tried = []

    def run(ds):
        warm = None
        for d in ds:
            if d in estimates or d in failures:
                continue
            tried.append(d)
            opts = base if loading_for is None else refit_options(base, fix_U0=loading_for(d))
            try:
                f = _vm_candidate(Y, d, opts, warm if warm_start else None)
            except FmouError as exc:
                failures[d] = f"{type(exc).__name__}: {exc}"
                log.info("VM candidate d=%d skipped: %s", d, exc)
                continue
            estimates[d] = f.params.sigma0_2
            scores[d - 1] = abs(f.params.sigma0_2 - sigma0_2_measured)
            warm = (f.params.rho, f.params.sigma2)

    if refine:
        run(grid[::stride])
        best = _argmin(scores)
        if best is not None:
            run([d for d in grid if abs(d - best) < stride])
    else:
        run(grid)
    best = _argmin(scores)
    if best is None:
        raise SelectionError(f"every candidate d failed: {failures}")
    return SelectionReport(best, scores, "VM", float(sigma0_2_measured), sorted(tried), failures, estimates)


def _argmin(scores):
    if np.all(np.isnan(scores)):
        return None
    # nanargmin returns the first (smallest d) among ties
    return int(np.nanargmin(scores)) + 1
