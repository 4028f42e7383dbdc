"""Simulation harness: generate a replicate, fit each method, score it.

All randomness for replicate ``r`` of an experiment comes from named sub-streams of
``(spec.seed, spec.kind, r)``, so replicates can run in any order or in
parallel without changing results.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dmd as dmd_mod
from . import greens, metrics, selection, simgen
from .em import FitOptions, fit, signal_intervals
from .errors import ContractError, FmouError

METHODS = ("FMOU", "DMD")
RESULT_COLUMNS = (
    "experiment",
    "method",
    "replicate",
    "rmse_m",
    "rmse_s",
    "largest_angle",
    "d_hat",
    "coverage",
    "avg_interval_length",
    "wall_time_s",
    "error",
)

# kind-specific defaults, overridable through ``spec.params``
DEFAULTS = {
    "FMOU_SYNTH": {"rho_range": (0.95, 1.0), "sigma2_range": (0.5, 1.0)},
    "DIFFUSION": {"nx": 300, "nt": 300, "D": 1.0, "t_end": 0.2, "select": "VM", "d_max": 30},
    "BRANIN": {"n1": 300, "n2": 300, "select": "VM", "d_max": 30},
    "GREENS_SYNTH": {"rho_range": (0.95, 1.0), "sigma2_range": (1.0, 2.0)},
    "ELLIPSE_SLIP": {
        "bounds": simgen.CASCADIA_BOUNDS,
        "signal_sd": 0.19,
        "select": "VM",
        "refine": True,
        "d_max": None,
    },
}


def spec_params(spec: simgen.ExperimentSpec):
    out = dict(DEFAULTS[spec.kind])
    out.update(spec.params)
    return out


def load_spec(path_or_dict, seed=None) -> tuple[simgen.ExperimentSpec, int]:
    """ExperimentSpec and replicate count from a JSON file or mapping."""
    doc = path_or_dict
    if not isinstance(doc, dict):
        doc = json.loads(Path(doc).read_text())
    doc = dict(doc)
    replicates = int(doc.pop("replicates", 1))
    if replicates < 1:
        raise ContractError("replicates must be at least 1")
    if seed is not None:
        doc["seed"] = int(seed)
    known = {"kind", "k", "k_prime", "d", "n", "noise_var", "seed", "params"}
    unknown = set(doc) - known
    if unknown:
        raise ContractError(f"unknown experiment fields: {sorted(unknown)}")
    if "kind" not in doc:
        raise ContractError("experiment config needs a 'kind'")
    return simgen.ExperimentSpec(**doc), replicates


@dataclass
class Dataset:
    Y: np.ndarray
    signal: np.ndarray
    slips: np.ndarray | None = None
    G: np.ndarray | None = None
    U0: np.ndarray | None = None
    info: dict = field(default_factory=dict)


def _noise(shape, var, rng):
    return math.sqrt(var) * rng.standard_normal(shape)


def generate(spec: simgen.ExperimentSpec, rep: int) -> Dataset:
    p = spec_params(spec)
    sub = lambda name: simgen.substream(spec.seed, spec.kind, rep, name)  # noqa: E731
    kind = spec.kind
    if kind == "FMOU_SYNTH":
        U0 = simgen.sample_stiefel(spec.k, spec.d, sub("U0"))
        factors = simgen.sample_factor_params(spec.d, p["rho_range"], p["sigma2_range"], sub("factors"))
        Z = simgen.gen_ou_factors(factors, spec.n, sub("Z"))
        signal = U0 @ Z
        Y = signal + _noise(signal.shape, spec.noise_var, sub("noise"))
        info = {"rho": [f.rho for f in factors], "sigma2": [f.sigma2 for f in factors]}
        return Dataset(Y, signal, U0=U0, info=info)
    if kind == "DIFFUSION":
        signal = simgen.gen_diffusion(p["nx"], p["nt"], p["D"], p["t_end"])
        return Dataset(signal + _noise(signal.shape, spec.noise_var, sub("noise")), signal)
    if kind == "BRANIN":
        signal = simgen.gen_branin(p["n1"], p["n2"])
        return Dataset(signal + _noise(signal.shape, spec.noise_var, sub("noise")), signal)
    if kind == "GREENS_SYNTH":
        op = simgen.gen_synthetic_greens(spec.k, spec.k_prime, sub("greens"))
        factors = simgen.sample_factor_params(spec.d, p["rho_range"], p["sigma2_range"], sub("factors"))
        Z = simgen.gen_ou_factors(factors, spec.n, sub("Z"))
        U0 = op.U0[:, : spec.d]
        signal = U0 @ Z
        slips = op.truncate(spec.d).slip_map() @ Z
        Y = signal + _noise(signal.shape, spec.noise_var, sub("noise"))
        info = {"rho": [f.rho for f in factors], "sigma2": [f.sigma2 for f in factors]}
        return Dataset(Y, signal, slips, op.G, U0, info)
    if kind == "ELLIPSE_SLIP":
        G, slips = ellipse_setup(spec)
        signal = G @ slips
        Y = signal + _noise(signal.shape, spec.noise_var, sub("noise"))
        return Dataset(Y, signal, slips, G)
    raise ContractError(f"unknown kind {kind}")  # pragma: no cover


def ellipse_setup(spec: simgen.ExperimentSpec):
    """Synthetic Green's matrix and true slips for the elliptical-slip analogue.

    The mesh and stations are fixed across replicates (drawn from the
    ``(seed, "mesh")`` stream); the operator is rescaled so the noise-free
    displacements have standard deviation ``signal_sd``.
    """
    p = spec_params(spec)
    if spec.k % 2:
        raise ContractError("ELLIPSE_SLIP needs an even k (east and north per station)")
    mesh = simgen.gen_mesh_grid(p["bounds"], spec.k_prime)
    stations = simgen.station_grid(p["bounds"], spec.k // 2, simgen.substream(spec.seed, spec.kind, "stations"))
    G = simgen.gen_kernel_greens(mesh, stations)
    slips = simgen.gen_ellipse_slip(mesh, spec.n)
    scale = p["signal_sd"] / float(np.std(G @ slips))
    return G * scale, slips


def choose_d(Y, spec, p, sigma0_2_known=None, loading_for=None):
    """Selected d and its report, per the experiment's ``select`` setting."""
    rule = p.get("select", "fixed")
    k, n = Y.shape
    if rule == "fixed" or isinstance(rule, int):
        return (spec.d if rule == "fixed" else int(rule)), None
    # a fixed loading is not limited by the rank of Y, only by k
    cap = k - 1 if loading_for is not None else min(k, n) - 1
    d_max = min(p.get("d_max") or cap, cap)
    if rule == "IC":
        rep = selection.select_d_ic(Y, d_max)
    elif rule == "VM":
        opts = FitOptions(d=1, fix_U0=loading_for)
        rep = selection.select_d_vm(Y, sigma0_2_known, range(1, d_max + 1), opts, refine=bool(p.get("refine", False)))
    else:
        raise ContractError(f"unknown selection rule {rule!r}")
    return rep.d_hat, rep


def _row(spec, method, rep, **vals):
    row = {c: None for c in RESULT_COLUMNS}
    row.update(experiment=spec.kind, method=method, replicate=rep)
    row.update(vals)
    return row


def run_replicate(spec: simgen.ExperimentSpec, rep: int, methods=METHODS):
    """Generate replicate ``rep`` and return one result row per method."""
    data = generate(spec, rep)
    p = spec_params(spec)
    rows = []
    slip_kind = spec.kind in ("GREENS_SYNTH", "ELLIPSE_SLIP")
    op_full = None
    t0 = time.perf_counter()
    try:
        known = spec.noise_var if spec.noise_var > 0 else None
        if spec.kind == "GREENS_SYNTH":
            op_full = greens.svd_truncate(data.G, spec.d)
            d = spec.d
        elif spec.kind == "ELLIPSE_SLIP":
            # keep one direction of the complement so sigma0_2 stays estimable
            op_full = greens.svd_truncate(data.G, min(data.G.shape) - 1)
            d, _ = choose_d(data.Y, spec, p, known, lambda m: op_full.U0[:, :m])
        else:
            d, _ = choose_d(data.Y, spec, p, known)
        select_time = time.perf_counter() - t0
    except FmouError as exc:
        return [_row(spec, m, rep, error=f"{type(exc).__name__}: {exc}") for m in methods]

    for method in methods:
        if method == "DMD" and slip_kind:
            continue
        t1 = time.perf_counter()
        try:
            if method == "FMOU":
                row = _score_fmou(spec, data, d, op_full, p)
                row["wall_time_s"] = time.perf_counter() - t1 + select_time
            elif method == "DMD":
                model = dmd_mod.exact_dmd(data.Y, d)
                est = dmd_mod.dmd_reconstruct(model, data.Y.shape[1])
                elapsed = time.perf_counter() - t1
                row = {"rmse_m": metrics.rmse_mean(est, data.signal), "wall_time_s": elapsed}
                if data.U0 is not None:
                    row["largest_angle"] = float(metrics.principal_angles(data.U0, dmd_mod.mode_subspace(model, d))[-1])
            else:
                raise ContractError(f"unknown method {method!r}")
            row["d_hat"] = d
            rows.append(_row(spec, method, rep, **row))
        except FmouError as exc:
            rows.append(_row(spec, method, rep, d_hat=d, error=f"{type(exc).__name__}: {exc}"))
    return rows


def _score_fmou(spec, data, d, op_full, p):
    if op_full is not None:
        op = op_full.truncate(d)
        fixed_s0 = spec.noise_var if spec.kind == "ELLIPSE_SLIP" else None
        f = fit(data.Y, FitOptions(d=d, fix_U0=op.U0, fix_sigma0_2=fixed_s0, seed=0))
    else:
        f = fit(data.Y, FitOptions(d=d, seed=0))
    lo, hi = signal_intervals(f)
    cov, length = metrics.interval_coverage(lo, hi, data.signal)
    row = {"rmse_m": metrics.rmse_mean(f.mean, data.signal), "coverage": cov, "avg_interval_length": length}
    if data.U0 is not None and op_full is None:
        row["largest_angle"] = float(metrics.principal_angles(data.U0, f.params.U0)[-1])
    if op_full is not None:
        field_ = greens.reconstruct_slip(f, op)
        row["rmse_s"] = metrics.rmse_slip(field_.mean, data.slips)
    return row


def summarize(rows):
    """Per (experiment, method) means of every numeric column, as in the tables."""
    groups = {}
    for r in rows:
        groups.setdefault((r["experiment"], r["method"]), []).append(r)
    out = []
    for (exp, method), rs in sorted(groups.items()):
        s = {"experiment": exp, "method": method, "replicates": len(rs), "failures": sum(r["error"] is not None for r in rs)}
        for col in ("rmse_m", "rmse_s", "largest_angle", "d_hat", "coverage", "avg_interval_length", "wall_time_s"):
            vals = [r[col] for r in rs if r[col] is not None]
            s[col] = float(np.mean(vals)) if vals else None
        out.append(s)
    return out
