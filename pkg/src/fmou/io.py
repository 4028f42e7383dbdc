"""File formats: CSV matrices, FMGR binary Green's matrices, JSON documents."""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .dmd import DmdModel
from .em import FmouFit, FmouParams
from .errors import DataError

FMGR_MAGIC = b"FMGR"
FIT_VERSION = 1


def _fmt(x):
    return repr(float(x))  # shortest round-trip decimal


def write_csv(path, M, header=None):
    """Comma-separated matrix, one row per line, round-trip precision.

    ``header`` may be a list of column names; ``True`` writes ``c0, c1, ...``.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    path = Path(path)
    with path.open("w", newline="") as fh:
        if header is True:
            header = [f"c{j}" for j in range(M.shape[1])]
        if header:
            fh.write(",".join(header) + "\n")
        for row in M:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def read_csv(path, header=False):
    """Parse a dense numeric CSV matrix, reporting the first bad cell by row and column."""
    path = Path(path)
    rows = []
    width = None
    with path.open(newline="") as fh:
        for i, rec in enumerate(csv.reader(fh)):
            if header and i == 0:
                continue
            if not rec or all(not c.strip() for c in rec):
                continue
            if width is None:
                width = len(rec)
            elif len(rec) != width:
                raise DataError(f"{path}: row {i + 1} has {len(rec)} columns, expected {width}")
            try:
                rows.append([float(c) for c in rec])
            except ValueError:
                j = next(j for j, c in enumerate(rec) if not _is_float(c))
                raise DataError(f"{path}: row {i + 1}, column {j + 1}: cannot parse {rec[j]!r} as a number") from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    M = np.array(rows)
    if not np.all(np.isfinite(M)):
        r, c = np.argwhere(~np.isfinite(M))[0]
        raise DataError(f"{path}: row {r + 1 + int(header)}, column {c + 1}: non-finite value")
    return M


def _is_float(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def write_fmgr(path, M):
    M = np.ascontiguousarray(M, dtype="<f8")
    if M.ndim != 2:
        raise DataError("FMGR files hold two-dimensional matrices")
    with Path(path).open("wb") as fh:
        fh.write(FMGR_MAGIC + struct.pack("<II", *M.shape))
        fh.write(M.tobytes(order="C"))


def read_fmgr(path):
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 12 or raw[:4] != FMGR_MAGIC:
        raise DataError(f"{path}: not an FMGR file (bad magic)")
    rows, cols = struct.unpack("<II", raw[4:12])
    expected = 12 + 8 * rows * cols
    if len(raw) != expected:
        raise DataError(f"{path}: payload holds {len(raw) - 12} bytes, expected {expected - 12} for {rows}x{cols}")
    return np.frombuffer(raw, dtype="<f8", offset=12).reshape(rows, cols).astype(float)


def read_matrix(path, header=False):
    """CSV or FMGR, chosen by the file's leading bytes."""
    path = Path(path)
    with path.open("rb") as fh:
        magic = fh.read(4)
    return read_fmgr(path) if magic == FMGR_MAGIC else read_csv(path, header=header)


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, allow_nan=False) + "\n")


def fit_to_dict(fit: FmouFit, selection=None):
    p = fit.params
    doc = {
        "version": FIT_VERSION,
        "k": p.k,
        "n": int(fit.z_post.shape[1]),
        "d": p.d,
        "U0": p.U0.reshape(-1).tolist(),
        "sigma0_2": p.sigma0_2,
        "rho": p.rho.tolist(),
        "sigma2": p.sigma2.tolist(),
        "loglik_trace": [float(x) if np.isfinite(x) else None for x in fit.loglik_trace],
        "converged": bool(fit.converged),
        "iterations": int(fit.iterations),
    }
    if selection is not None:
        doc["selection"] = selection.to_dict()
    return doc


def params_from_dict(doc) -> FmouParams:
    try:
        k, d = int(doc["k"]), int(doc["d"])
        U0 = np.asarray(doc["U0"], dtype=float).reshape(k, d)
        return FmouParams(U0, doc["sigma0_2"], doc["rho"], doc["sigma2"])
    except (KeyError, ValueError, TypeError) as exc:
        raise DataError(f"malformed fit document: {exc}") from None


def save_fit(path, fit: FmouFit, selection=None):
    write_json(path, fit_to_dict(fit, selection))


def load_params(path) -> FmouParams:
    return params_from_dict(json.loads(Path(path).read_text()))


def _cx(z):
    return [[float(v.real), float(v.imag)] for v in np.ravel(z)]


def _uncx(pairs, shape):
    a = np.asarray(pairs, dtype=float).reshape(-1, 2)
    return (a[:, 0] + 1j * a[:, 1]).reshape(shape)


def dmd_to_dict(model: DmdModel):
    return {
        "rank": model.rank,
        "k": model.k,
        "eigenvalues": _cx(model.eigenvalues),
        "modes": _cx(model.modes),  # row-major k x r
        "amplitudes": _cx(model.amplitudes),
    }


def dmd_from_dict(doc) -> DmdModel:
    r, k = int(doc["rank"]), int(doc["k"])
    return DmdModel(_uncx(doc["eigenvalues"], (r,)), _uncx(doc["modes"], (k, r)), _uncx(doc["amplitudes"], (r,)))


def write_slip_slices(outdir, matrices: dict, units: dict, extra=None):
    """One CSV per time column for each named k' x m matrix, plus a manifest."""
    outdir = Path(outdir)
    manifest = {"fields": {}}
    for name, M in matrices.items():
        sub = outdir / name
        sub.mkdir(parents=True, exist_ok=True)
        files = []
        for t in range(M.shape[1]):
            fn = sub / f"t{t:04d}.csv"
            write_csv(fn, M[:, t : t + 1])
            files.append(str(fn.relative_to(outdir)))
        manifest["fields"][name] = {"patches": int(M.shape[0]), "times": int(M.shape[1]), "units": units.get(name), "files": files}
    manifest.update(extra or {})
    write_json(outdir / "manifest.json", manifest)
    return manifest
