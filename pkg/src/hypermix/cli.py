"""Command-line entry point: ``hypermix {fit,select,sample,simulate,convert}``.

Exit codes: 0 success, 1 input or usage error, 2 fit finished without meeting
the convergence tolerance (results are still written). Every error prints a
single line starting with ``error:`` on standard error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from . import geometry as geo
from . import io as hio
from .errors import HypermixError
from .gaussian import DEFAULT_BOX, GaussianParams, sample
from .mixture import FitConfig, fit, information_criteria, select_k
from .normalizer import RadialModel, grid_for_box, load_grid, save_grid
from .simulation import (
    max_trace_drop,
    sample_mixture,
    sim_em_vs_gem,
    sim_mixture,
    sim_model_selection,
    sim_weighted_single,
)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NOT_CONVERGED = 2

SELECT_COLUMNS = ["K", "loglik", "AIC", "BIC", "HQIC", "aic_best", "bic_best", "hqic_best"]
STUDIES = ("weighted-single", "mixture-recovery", "model-selection", "em-vs-gem")
#: Number of random point pairs checked by ``convert``.
CONVERT_CHECK_PAIRS = 200


class InputError(Exception):
    """Bad command-line input detected by the CLI itself."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, which is our non-convergence code
    def error(self, message: str):
        raise InputError(message)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("input", help="CSV of points")
    p.add_argument("--format", choices=("hyperboloid", "poincare"), default="hyperboloid")
    p.add_argument("--label-column", type=int, default=None,
                   help="index of an integer label column to drop (negative counts from the end)")


def _add_fit_args(p: argparse.ArgumentParser) -> None:
    _add_data_args(p)
    p.add_argument("--mode", choices=("em", "gem"), default="em")
    p.add_argument("--inner-l", type=int, default=1, help="MM steps per location block in gem mode")
    p.add_argument("--beta-lo", type=float, default=DEFAULT_BOX[0])
    p.add_argument("--beta-hi", type=float, default=DEFAULT_BOX[1])
    p.add_argument("--restarts", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-8, help="relative log-likelihood change for stopping")
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--grid-cache", default=None, help="normalizer grid file (read if present, else written)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hypermix", description="Riemannian Gaussian mixtures on the hyperboloid.")
    parser.add_argument("--version", action="version", version=f"hypermix {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit a K-component mixture")
    _add_fit_args(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", required=True, help="model JSON")
    p.add_argument("--resp-out", default=None, help="responsibilities CSV")

    p = sub.add_parser("select", help="fit a range of K and tabulate AIC/BIC/HQIC")
    _add_fit_args(p)
    p.add_argument("--k-min", type=int, required=True)
    p.add_argument("--k-max", type=int, required=True)
    p.add_argument("--out", default=None, help="CSV table (standard output if omitted)")

    p = sub.add_parser("sample", help="draw points from a Gaussian or a mixture")
    what = p.add_mutually_exclusive_group(required=True)
    what.add_argument("--single", action="store_true")
    what.add_argument("--mixture-spec", help="JSON file or inline JSON with mus, betas, weights")
    p.add_argument("--mu", type=_floats, default=None, help="ambient coordinates of the location")
    p.add_argument("--dim", type=int, default=2, help="dimension when --mu is omitted (location = origin)")
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("simulate", help="run a Monte Carlo study")
    p.add_argument("--study", required=True, help="|".join(STUDIES))
    p.add_argument("--replicates", type=int, default=None, help="default: 100, 10, 5, 10 by study")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n", type=_ints, default=None, help="comma-separated sample sizes")
    p.add_argument("--restarts", type=int, default=None)

    p = sub.add_parser("convert", help="convert between hyperboloid and Poincare coordinates")
    p.add_argument("input")
    p.add_argument("--to", choices=("poincare", "hyperboloid"), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--label-column", type=int, default=None)
    p.add_argument("--seed", type=int, default=0, help="seed for the pairs used in the distance check")
    return parser


# ---------------------------------------------------------------------------


def _box(args) -> tuple[float, float]:
    if not 0.0 < args.beta_lo < args.beta_hi:
        raise InputError(f"need 0 < --beta-lo < --beta-hi, got {args.beta_lo}, {args.beta_hi}")
    return (args.beta_lo, args.beta_hi)


def _model(d: int, box: tuple[float, float], cache: str | None) -> RadialModel:
    if cache is not None and Path(cache).exists():
        model = load_grid(cache)
        lo, hi = model.beta_range
        if model.dim != d:
            raise InputError(f"grid cache {cache} is for d={model.dim}, data has d={d}")
        if lo > box[0] or hi < box[1]:
            raise InputError(f"grid cache {cache} covers [{lo}, {hi}], narrower than the box {box}")
        return model
    model = grid_for_box(d, box)
    if cache is not None:
        save_grid(model, cache)
    return model


def _config(args, K: int, box: tuple[float, float]) -> FitConfig:
    if args.inner_l < 1 or args.restarts < 1 or args.max_iter < 1 or args.threads < 1:
        raise InputError("--inner-l, --restarts, --max-iter and --threads must be >= 1")
    if not args.tol > 0:
        raise InputError("--tol must be positive")
    return FitConfig(
        K=K,
        mode="exact_em" if args.mode == "em" else "gem",
        inner_budget=args.inner_l,
        outer_tol=args.tol,
        max_outer=args.max_iter,
        restarts=args.restarts,
        seed=args.seed,
        box=box,
        threads=args.threads,
    )


def cmd_fit(args) -> int:
    box = _box(args)
    data = hio.load_dataset(args.input, args.format, args.label_column)
    if args.k < 1 or args.k > len(data):
        raise InputError(f"--k must be in [1, n={len(data)}], got {args.k}")
    cfg = _config(args, args.k, box)
    model = _model(data.dim, box, args.grid_cache)
    t0 = time.perf_counter()
    report = fit(data.points, model, cfg)
    elapsed = time.perf_counter() - t0
    n = len(data)
    crit = information_criteria(report.loglik, n, data.dim, args.k) if n > 2 else {}
    mf = hio.ModelFile.from_params(
        report.final, report.loglik, crit,
        mode=cfg.mode, L=cfg.inner_budget if cfg.mode == "gem" else None, seed=cfg.seed,
        restarts=cfg.restarts, best_restart=report.restart, iterations=report.outer_iterations,
        inner_mm_steps=report.inner_mm_steps_total, converged=report.converged, n=n,
        tol=cfg.outer_tol, max_iter=cfg.max_outer,
    )
    hio.save_model(args.out, mf)
    hio.save_meta(args.out, {"wall_time_seconds": elapsed})
    if args.resp_out:
        hio.write_responsibilities(args.resp_out, report.responsibilities)
    print(f"loglik {report.loglik:.10g}")
    for name, value in crit.items():
        print(f"{name} {value:.10g}")
    print(f"iterations {report.outer_iterations} converged {str(report.converged).lower()}")
    if not report.converged:
        print(f"error: no convergence within {cfg.max_outer} iterations; result written", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_select(args) -> int:
    if args.k_min < 1 or args.k_min > args.k_max:
        raise InputError(f"need 1 <= --k-min <= --k-max, got {args.k_min}, {args.k_max}")
    box = _box(args)
    data = hio.load_dataset(args.input, args.format, args.label_column)
    if args.k_max > len(data):
        raise InputError(f"--k-max {args.k_max} exceeds the number of observations {len(data)}")
    if len(data) <= 2:
        raise InputError("model selection needs at least 3 observations")
    cfg = _config(args, args.k_min, box)
    model = _model(data.dim, box, args.grid_cache)
    rows = select_k(data.points, model, range(args.k_min, args.k_max + 1), cfg)
    text = hio.table_csv([vars(r) for r in rows], SELECT_COLUMNS)
    if args.out:
        hio.atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    if not all(r.report.converged for r in rows):
        print("error: at least one K did not converge; table written", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _mixture_spec(text: str) -> tuple[np.ndarray, list[float], list[float]]:
    inline = text.lstrip().startswith("{")
    try:
        raw = json.loads(text if inline else Path(text).read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"mixture spec is neither a JSON file nor inline JSON: {exc}") from None
    if not isinstance(raw, dict) or not {"mus", "betas", "weights"} <= raw.keys():
        raise InputError("mixture spec needs keys mus, betas, weights")
    mus = np.asarray(raw["mus"], dtype=np.float64)
    if mus.ndim != 2:
        raise InputError("mixture spec mus must be a list of coordinate lists")
    try:
        geo.check_points(mus, hio.LOAD_MEMBERSHIP_TOL)
    except HypermixError as exc:
        raise InputError(f"mixture spec location: {exc}") from None
    return geo.normalize(mus), [float(b) for b in raw["betas"]], [float(w) for w in raw["weights"]]


def cmd_sample(args) -> int:
    if args.n < 1:
        raise InputError(f"--n must be >= 1, got {args.n}")
    rng = np.random.default_rng(args.seed)
    if args.single:
        if args.beta is None or not args.beta > 0:
            raise InputError("--single needs a positive --beta")
        if args.mu is None:
            mu = geo.origin(args.dim)
        else:
            mu = np.asarray(args.mu)
            try:
                geo.check_points(mu, hio.LOAD_MEMBERSHIP_TOL)
            except HypermixError as exc:
                raise InputError(f"--mu: {exc}") from None
            mu = geo.normalize(mu)
        X = sample(GaussianParams(mu, args.beta), None, args.n, rng)
        hio.write_points(args.out, X)
    else:
        mus, betas, weights = _mixture_spec(args.mixture_spec)
        X, labels = sample_mixture(args.n, mus, betas, weights, rng)
        hio.write_points(args.out, X, labels)
    return EXIT_OK


_DEFAULT_REPLICATES = {"weighted-single": 100, "mixture-recovery": 10, "model-selection": 5, "em-vs-gem": 10}


def cmd_simulate(args) -> int:
    if args.study not in STUDIES:
        raise InputError(f"unknown study {args.study!r}; choose from {', '.join(STUDIES)}")
    reps = args.replicates if args.replicates is not None else _DEFAULT_REPLICATES[args.study]
    if reps < 1:
        raise InputError("--replicates must be >= 1")
    kw = {"replicates": reps, "seed": args.seed}
    if args.restarts is not None and args.study in ("mixture-recovery", "model-selection"):
        kw["restarts"] = args.restarts
    if args.n is not None:
        if any(n < 1 for n in args.n):
            raise InputError("--n values must be >= 1")
        if args.study == "em-vs-gem":
            if len(args.n) != 1:
                raise InputError("em-vs-gem takes a single --n")
            kw["n"] = args.n[0]
        else:
            kw["n_list"] = args.n
    runner = {
        "weighted-single": sim_weighted_single,
        "mixture-recovery": sim_mixture,
        "model-selection": sim_model_selection,
        "em-vs-gem": sim_em_vs_gem,
    }[args.study]
    summary = runner(**kw)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    hio.write_table(out / "summary.csv", summary.rows)
    hio.write_table(out / "records.csv", summary.records)
    hio.write_table(out / "timing.csv", summary.timings)
    if summary.traces:
        trace_dir = out / "traces"
        trace_dir.mkdir(exist_ok=True)
        groups: dict[tuple[str, int], list[dict]] = {}
        for t in summary.traces:
            groups.setdefault((t["method"], t["replicate"]), []).append(t)
        for (method, rep), rows in groups.items():
            hio.write_table(trace_dir / f"{method}_rep{rep:03d}.csv", rows,
                            ["iteration", "elapsed", "loglik"])
    print(f"{summary.study}: {len(summary.rows)} summary rows, {reps} replicates -> {out}")
    if summary.loglik_traces:
        print(f"largest log-likelihood decrease across fits: {max_trace_drop(summary.loglik_traces):.3g}")
    return EXIT_OK


def cmd_convert(args) -> int:
    source = "hyperboloid" if args.to == "poincare" else "poincare"
    data = hio.load_dataset(args.input, source, args.label_column)
    hio.write_points(args.out, data.points, data.labels, args.to)
    # distance drift between the two charts on a sample of pairs
    n = len(data)
    rng = np.random.default_rng(args.seed)
    m = min(CONVERT_CHECK_PAIRS, n * (n - 1) // 2) if n > 1 else 0
    drift = 0.0
    if m:
        i = rng.integers(n, size=m)
        j = rng.integers(n, size=m)
        ball = geo.to_poincare(data.points)
        dh = np.asarray(geo.distance(data.points[i], data.points[j]))
        dp = np.asarray(geo.poincare_distance(ball[i], ball[j]))
        drift = float(np.max(np.abs(dh - dp) / np.maximum(1.0, dh)))
    print(f"converted {n} points to {args.to}; distance drift over {m} pairs: {drift:.3g}", file=sys.stderr)
    return EXIT_OK


COMMANDS = {
    "fit": cmd_fit,
    "select": cmd_select,
    "sample": cmd_sample,
    "simulate": cmd_simulate,
    "convert": cmd_convert,
}


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except (InputError, HypermixError, ValueError, OSError) as exc:
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
