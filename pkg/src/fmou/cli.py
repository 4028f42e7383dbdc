"""Command-line entry point: ``fmou <command> [options]``.

Exit codes: 0 success, 1 runtime or data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import experiments, greens, io, selection
from .dmd import dmd_reconstruct, exact_dmd
from .em import FitOptions, fit, signal_intervals
from .errors import ContractError, FmouError

log = logging.getLogger("fmou")


class UsageError(Exception):
    pass


def _load_config(path):
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None


def _outdir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _read(path, header):
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"input file not found: {p}")
    return io.read_matrix(p, header=header)


def cmd_simulate(args):
    cfg = _load_config(args.config)
    if not cfg:
        raise UsageError("simulate needs --config with an experiment config")
    try:
        spec, reps = experiments.load_spec(cfg, seed=args.seed)
    except (ContractError, TypeError) as exc:
        raise UsageError(str(exc)) from None
    reps = args.replicates or reps
    out = _outdir(args)
    for r in range(reps):
        data = experiments.generate(spec, r)
        d = out / f"rep{r:03d}"
        d.mkdir(exist_ok=True)
        io.write_csv(d / "Y.csv", data.Y, header=args.header)
        io.write_csv(d / "signal.csv", data.signal, header=args.header)
        files = ["Y.csv", "signal.csv"]
        if data.slips is not None:
            io.write_csv(d / "slips.csv", data.slips, header=args.header)
            files.append("slips.csv")
        if data.G is not None:
            io.write_fmgr(d / "G.fmgr", data.G)
            files.append("G.fmgr")
        if data.U0 is not None:
            io.write_csv(d / "U0.csv", data.U0, header=args.header)
            files.append("U0.csv")
        manifest = {
            "kind": spec.kind,
            "replicate": r,
            "seed": spec.seed,
            "k": int(data.Y.shape[0]),
            "n": int(data.Y.shape[1]),
            "d": spec.d,
            "k_prime": spec.k_prime,
            "noise_var": spec.noise_var,
            "params": {k: list(v) if isinstance(v, tuple) else v for k, v in experiments.spec_params(spec).items()},
            "draws": data.info,
            "files": files,
        }
        io.write_json(d / "manifest.json", manifest)
    print(f"wrote {reps} replicate(s) of {spec.kind} to {out}")


def _fit_options(args, cfg, d, **extra):
    return FitOptions(
        d=d,
        max_iter=args.max_iter or cfg.get("max_iter", 100),
        rel_tol=args.rel_tol or cfg.get("rel_tol", 1e-6),
        seed=args.seed if args.seed is not None else cfg.get("seed", 0),
        **extra,
    )


def _select(args, Y, cfg, loading_for=None):
    method = (args.select or cfg.get("select") or "IC").upper()
    k, n = Y.shape
    cap = k - 1 if loading_for is not None else min(k, n) - 1
    d_max = min(args.d_max or cfg.get("d_max") or cap, cap)
    if d_max < 1:
        raise UsageError("observation matrix too small for selection")
    if method == "IC":
        if loading_for is not None:
            raise UsageError("IC selection does not apply to a fixed loading; use --select vm")
        return selection.select_d_ic(Y, d_max)
    if method == "VM":
        s0 = args.sigma0_2 if args.sigma0_2 is not None else cfg.get("sigma0_2")
        if s0 is None:
            raise UsageError("VM selection needs --sigma0-2")
        opts = _fit_options(args, cfg, 1, fix_U0=loading_for)
        return selection.select_d_vm(Y, s0, range(1, d_max + 1), opts, refine=args.refine)
    raise UsageError(f"unknown selection method {method!r}")


def cmd_fit(args):
    cfg = _load_config(args.config)
    Y = _read(args.input, args.header)
    out = _outdir(args)
    sel = None
    d = args.d or cfg.get("d")
    if d is None:
        sel = _select(args, Y, cfg)
        d = sel.d_hat
    fix_s0 = args.fix_sigma0_2 if args.fix_sigma0_2 is not None else cfg.get("fix_sigma0_2")
    t0 = time.perf_counter()
    f = fit(Y, _fit_options(args, cfg, int(d), fix_sigma0_2=fix_s0))
    elapsed = time.perf_counter() - t0
    lo, hi = signal_intervals(f)
    io.save_fit(out / "fit.json", f, sel)
    io.write_csv(out / "mean.csv", f.mean, header=args.header)
    io.write_csv(out / "lower95.csv", lo, header=args.header)
    io.write_csv(out / "upper95.csv", hi, header=args.header)
    print(
        f"d={f.params.d} sigma0_2={f.params.sigma0_2:.6g} iterations={f.iterations} "
        f"converged={f.converged} loglik={f.loglik_trace[-1]:.6g} time={elapsed:.3f}s"
    )


def cmd_select(args):
    cfg = _load_config(args.config)
    Y = _read(args.input, args.header)
    out = _outdir(args)
    rep = _select(args, Y, cfg)
    io.write_json(out / "selection.json", rep.to_dict())
    print(f"method={rep.method} d_hat={rep.d_hat}")


def cmd_dmd(args):
    cfg = _load_config(args.config)
    Y = _read(args.input, args.header)
    out = _outdir(args)
    r = args.rank or cfg.get("rank")
    if r is None:
        raise UsageError("dmd needs --rank")
    model = exact_dmd(Y, int(r))
    recon, imag = dmd_reconstruct(model, Y.shape[1], return_imag=True)
    io.write_json(out / "dmd.json", io.dmd_to_dict(model))
    io.write_csv(out / "reconstruction.csv", recon, header=args.header)
    print(f"rank={model.rank} max|lambda|={np.abs(model.eigenvalues).max():.6g} max_imag_residual={imag:.3g}")


def cmd_slip(args):
    cfg = _load_config(args.config)
    G = _read(args.greens, args.header)
    Y = _read(args.input, args.header)
    if G.shape[0] != Y.shape[0]:
        raise ContractError(f"Green's matrix has {G.shape[0]} rows but observations have {Y.shape[0]}")
    s0 = args.sigma0_2 if args.sigma0_2 is not None else cfg.get("sigma0_2")
    if s0 is None:
        raise UsageError("slip needs the measured noise variance --sigma0-2")
    out = _outdir(args)
    if args.augment_frame:
        G = greens.augment_frame_motion(G)
    full = greens.svd_truncate(G, min(G.shape) - 1, augmented=args.augment_frame)
    d = args.d or cfg.get("d")
    sel = None
    if d is None:
        args.select = "VM"
        sel = _select(args, Y, cfg, loading_for=lambda m: full.U0[:, :m])
        d = sel.d_hat
    op = full.truncate(int(d))
    f = fit(Y, _fit_options(args, cfg, op.d, fix_U0=op.U0, fix_sigma0_2=s0))
    field = greens.reconstruct_slip(f, op).slip_only()
    rates = greens.slip_rates(field)
    window = min(args.window, rates.shape[1])
    avg = greens.seven_day_average(rates, window)
    io.save_fit(out / "fit.json", f, sel)
    io.write_slip_slices(
        out,
        {"slip_mean": field.mean, "slip_var": field.var_diag, "rate_window_mean": avg},
        {"slip_mean": "data length units", "slip_var": "squared length units", "rate_window_mean": "length per time step"},
        {"d": op.d, "window": window, "frame_motion": bool(args.augment_frame)},
    )
    print(f"d={op.d} patches={field.patches} times={field.n} windows={avg.shape[1]}")


def _bench_job(payload):
    spec_doc, rep = payload
    spec, _ = experiments.load_spec(spec_doc)
    return experiments.run_replicate(spec, rep)


def cmd_benchmark(args):
    cfg = _load_config(args.config)
    if not cfg:
        raise UsageError("benchmark needs --config with an experiment config")
    try:
        spec, reps = experiments.load_spec(cfg, seed=args.seed)
    except (ContractError, TypeError) as exc:
        raise UsageError(str(exc)) from None
    reps = args.replicates or reps
    doc = dict(cfg, seed=spec.seed)
    doc.pop("replicates", None)
    payloads = [(doc, r) for r in range(reps)]
    out = _outdir(args)
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            results = list(ex.map(_bench_job, payloads))
    else:
        results = [_bench_job(p) for p in payloads]
    rows = [row for rs in results for row in rs]
    with (out / "results.csv").open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=experiments.RESULT_COLUMNS)
        w.writeheader()
        w.writerows(rows)
    summary = experiments.summarize(rows)
    io.write_json(out / "summary.json", {"spec": doc, "replicates": reps, "methods": summary})
    for s in summary:
        print(
            f"{s['experiment']} {s['method']}: rmse_m={_f(s['rmse_m'])} rmse_s={_f(s['rmse_s'])} "
            f"angle={_f(s['largest_angle'])} d_hat={_f(s['d_hat'])} time={_f(s['wall_time_s'])}s failures={s['failures']}"
        )


def _f(x):
    return "-" if x is None else f"{x:.4g}"


def build_parser():
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="JSON configuration file")
    shared.add_argument("--seed", type=int, help="64-bit master seed")
    shared.add_argument("--out", default=".", help="output directory")
    shared.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    shared.add_argument("--header", action="store_true", help="CSV files carry a header row")
    shared.add_argument("-v", "--verbose", action="store_true")

    fitting = argparse.ArgumentParser(add_help=False)
    fitting.add_argument("--d", type=int, help="number of latent factors (skips selection)")
    fitting.add_argument("--select", choices=["ic", "vm", "IC", "VM"], help="selection rule when --d is absent")
    fitting.add_argument("--d-max", type=int, help="largest candidate d")
    fitting.add_argument("--sigma0-2", type=float, help="measured noise variance (VM selection)")
    fitting.add_argument("--refine", action="store_true", help="coarse-to-fine VM search")
    fitting.add_argument("--max-iter", type=int)
    fitting.add_argument("--rel-tol", type=float)

    p = argparse.ArgumentParser(prog="fmou", description="Latent OU factor models, DMD baseline and slip reconstruction.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[shared], help="generate synthetic datasets")
    s.add_argument("--replicates", type=int, help="override the config's replicate count")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("fit", parents=[shared, fitting], help="fit the factor model to a k x n matrix")
    s.add_argument("--input", required=True, help="observation matrix (CSV or FMGR)")
    s.add_argument("--fix-sigma0-2", type=float, help="hold the noise variance fixed")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("select-d", parents=[shared, fitting], help="choose the number of factors")
    s.add_argument("--input", required=True)
    s.set_defaults(func=cmd_select)

    s = sub.add_parser("dmd", parents=[shared], help="exact DMD baseline")
    s.add_argument("--input", required=True)
    s.add_argument("--rank", type=int)
    s.set_defaults(func=cmd_dmd)

    s = sub.add_parser("slip", parents=[shared, fitting], help="slip estimation with a Green's operator")
    s.add_argument("--greens", required=True, help="Green's matrix (CSV or FMGR), k rows")
    s.add_argument("--input", required=True, help="displacement matrix, k rows")
    s.add_argument("--augment-frame", action="store_true", help="append frame-motion columns")
    s.add_argument("--window", type=int, default=7, help="averaging window for slip rates")
    s.set_defaults(func=cmd_slip)

    s = sub.add_parser("benchmark", parents=[shared], help="replicated method comparison")
    s.add_argument("--replicates", type=int)
    s.set_defaults(func=cmd_benchmark)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on usage errors
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        parser.error("--jobs must be at least 1")
    try:
        args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (FmouError, OSError, ValueError) as exc:
        print(f"fmou {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
