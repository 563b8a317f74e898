"""Monte Carlo harnesses for weighted single-component and mixture studies.

Every harness is deterministic given ``seed``: the stream for a replicate is
``SeedSequence([seed, cell, replicate])``, where ``cell`` indexes the design
point (sample size, regime, ...). Wall-clock times are kept apart from the
deterministic outputs in :attr:`SimSummary.timings`.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from . import geometry as geo
from .errors import ContractError
from .gaussian import DEFAULT_BOX, GaussianParams, sample, weighted_mle
from .geometry import WeightedSample
from .metrics import adjusted_rand, hard_assign, misclassification, summarize
from .mixture import FitConfig, align_components, fit, initialize, run_em, select_k
from .normalizer import RadialModel, grid_for_box

#: Gamma shapes of the two weight-heterogeneity regimes (rate 1).
WEIGHT_REGIMES = {"mild": 5.0, "strong": 0.5}
#: Methods of the EM/GEM comparison: label, mode, inner budget.
COMPARISON_METHODS = (("EM", "exact_em", 1), ("GEM-1", "gem", 1), ("GEM-3", "gem", 3), ("GEM-5", "gem", 5))
#: Single-component truth: location at distance 1.5 from the origin along (1, 1).
SINGLE_RADIUS = 1.5
SINGLE_BETA = 2.0


@dataclass
class SimSummary:
    """Per-cell medians and IQRs plus the long-format replicate records behind them.

    ``rows`` holds one dict per design cell with ``<metric>_median`` and
    ``<metric>_iqr`` keys. ``records`` is long format (cell keys, ``replicate``,
    ``metric``, ``value``). ``timings`` and ``traces`` carry run times and are
    the only non-deterministic parts.
    """

    study: str
    seed: int
    replicates: int
    rows: list[dict] = field(default_factory=list)
    records: list[dict] = field(default_factory=list)
    timings: list[dict] = field(default_factory=list)
    traces: list[dict] = field(default_factory=list)
    loglik_traces: list[list[float]] = field(default_factory=list, repr=False)

    def values(self, metric: str, **cell) -> list[float]:
        """Replicate values of ``metric`` in the cell matching every keyword."""
        return [
            r["value"]
            for r in self.records
            if r["metric"] == metric and all(r.get(k) == v for k, v in cell.items())
        ]

    def median(self, metric: str, **cell) -> float:
        return summarize(self.values(metric, **cell))[0]

    def run_times(self, **cell) -> list[float]:
        return [t["seconds"] for t in self.timings if all(t.get(k) == v for k, v in cell.items())]


def _stream(seed: int, cell: int, rep: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, cell, rep])


def _add(summary: SimSummary, cell: dict, rep: int, metrics: dict[str, float]) -> None:
    for name, value in metrics.items():
        summary.records.append({**cell, "replicate": rep, "metric": name, "value": float(value)})


def _reduce(summary: SimSummary, cells: list[dict], metrics: Sequence[str]) -> None:
    for cell in cells:
        row = dict(cell)
        for m in metrics:
            # sort first so the reduction does not depend on completion order
            med, iqr = summarize(sorted(summary.values(m, **cell)))
            row[f"{m}_median"] = med
            row[f"{m}_iqr"] = iqr
        summary.rows.append(row)


def _check_replicates(replicates: int) -> None:
    if replicates < 1:
        raise ContractError(f"replicates must be >= 1, got {replicates}")


# ---------------------------------------------------------------------------
# data generators


def single_truth(d: int = 2) -> GaussianParams:
    """Location ``(sinh 1.5/sqrt2, sinh 1.5/sqrt2, 0, ..., cosh 1.5)`` with ``beta = 2``."""
    mu = np.zeros(d + 1)
    if d == 1:
        mu[0] = math.sinh(SINGLE_RADIUS)
    else:
        mu[:2] = math.sinh(SINGLE_RADIUS) / math.sqrt(2.0)
    mu[-1] = math.cosh(SINGLE_RADIUS)
    return GaussianParams(mu, SINGLE_BETA)


def quadrant_centers(rho: float = 2.0, d: int = 2) -> NDArray[np.float64]:
    """Four centers at distance ``rho`` from the origin, one per quadrant of the first two axes.

    With ``a = sinh(rho)/sqrt2`` and ``c = cosh(rho)`` these are ``(a,a,c)``,
    ``(-a,a,c)``, ``(-a,-a,c)``, ``(a,-a,c)``; extra dimensions are zero-padded.
    """
    if d < 2:
        raise ContractError("the quadrant configuration needs d >= 2")
    a = math.sinh(rho) / math.sqrt(2.0)
    centers = np.zeros((4, d + 1))
    centers[:, :2] = a * np.array([[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]])
    centers[:, -1] = math.cosh(rho)
    return centers


def sample_mixture(
    n: int,
    mus: NDArray,
    betas: Sequence[float],
    weights: Sequence[float],
    rng: np.random.Generator,
) -> tuple[NDArray[np.float64], NDArray[np.int64]]:
    """Draw labels from ``weights`` and points from the labelled components."""
    if n < 1:
        raise ContractError(f"n must be >= 1, got {n}")
    mus = np.asarray(mus, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape[0] != mus.shape[0] or len(betas) != mus.shape[0]:
        raise ContractError("mixture spec has inconsistent component counts")
    if np.any(w < 0) or not math.isclose(w.sum(), 1.0, rel_tol=1e-9):
        raise ContractError("mixing weights must be nonnegative and sum to 1")
    labels = rng.choice(mus.shape[0], size=n, p=w / w.sum())
    X = np.empty((n, mus.shape[1]))
    for k in range(mus.shape[0]):
        members = labels == k
        if members.any():
            X[members] = sample(GaussianParams(mus[k], float(betas[k])), None, int(members.sum()), rng)
    return X, labels


def quadrant_mixture(
    n: int, rng: np.random.Generator, rho: float = 2.0, beta: float = 1.5, d: int = 2
) -> tuple[NDArray[np.float64], NDArray[np.int64], NDArray[np.float64]]:
    """Equal-weight four-component mixture on the quadrant centers; returns ``(X, labels, centers)``."""
    centers = quadrant_centers(rho, d)
    X, labels = sample_mixture(n, centers, [beta] * 4, [0.25] * 4, rng)
    return X, labels, centers


# ---------------------------------------------------------------------------
# studies


def sim_weighted_single(
    n_list: Sequence[int] = tuple(range(100, 1001, 100)),
    replicates: int = 100,
    seed: int = 0,
    regimes: dict[str, float] | None = None,
    d: int = 2,
    model: RadialModel | None = None,
    box: tuple[float, float] = DEFAULT_BOX,
) -> SimSummary:
    """Weighted MLE accuracy under Gamma-distributed observation weights.

    Weights are drawn from Gamma(shape, rate 1) and rescaled to sum to ``n``.
    Metrics: ``location_error``, ``scale_error`` (relative), ``score_residual``.
    """
    _check_replicates(replicates)
    regimes = dict(WEIGHT_REGIMES if regimes is None else regimes)
    model = model or grid_for_box(d, box)
    truth = single_truth(d)
    out = SimSummary("weighted-single", seed, replicates)
    cells = []
    for cell_idx, (regime, n) in enumerate((r, n) for r in regimes for n in n_list):
        cell = {"regime": regime, "n": int(n)}
        cells.append(cell)
        for rep in range(replicates):
            rng = np.random.default_rng(_stream(seed, cell_idx, rep))
            X = sample(truth, None, int(n), rng)
            w = rng.gamma(regimes[regime], 1.0, int(n))
            w *= n / w.sum()
            t0 = time.perf_counter()
            est, diag = weighted_mle(WeightedSample(X, w), model, box)
            out.timings.append({**cell, "replicate": rep, "seconds": time.perf_counter() - t0})
            _add(out, cell, rep, {
                "location_error": geo.distance(est.mu, truth.mu),
                "scale_error": abs(est.beta - truth.beta) / truth.beta,
                "score_residual": diag.score_residual,
            })
    _reduce(out, cells, ("location_error", "scale_error", "score_residual"))
    return out


def _recovery_metrics(report, labels: NDArray, centers: NDArray, beta: float) -> dict[str, float]:
    params = report.final
    order, center_err = align_components(params.mus, centers)
    pred = hard_assign(report.responsibilities)
    K = centers.shape[0]
    return {
        "center_error": center_err,
        "scale_error": float(np.mean(np.abs(params.betas[order] - beta) / beta)),
        "weight_error": float(np.sum(np.abs(params.weights[order] - 1.0 / K))),
        "ari": adjusted_rand(labels, pred),
        "misclassification": misclassification(labels, pred),
        "loglik": report.loglik,
        "outer_iterations": report.outer_iterations,
        "inner_steps": report.inner_mm_steps_total,
        "converged": float(report.converged),
    }


def sim_mixture(
    n_list: Sequence[int] = (100, 250, 500),
    replicates: int = 10,
    seed: int = 0,
    rho: float = 2.0,
    beta: float = 1.5,
    mode: str = "exact_em",
    L: int = 1,
    restarts: int = 3,
    d: int = 2,
    model: RadialModel | None = None,
    box: tuple[float, float] = DEFAULT_BOX,
) -> SimSummary:
    """Recovery of the four-component quadrant mixture with ``K = 4`` known."""
    _check_replicates(replicates)
    model = model or grid_for_box(d, box)
    out = SimSummary("mixture-recovery", seed, replicates)
    cells = []
    for cell_idx, n in enumerate(n_list):
        cell = {"n": int(n)}
        cells.append(cell)
        for rep in range(replicates):
            data_ss, fit_ss = _stream(seed, cell_idx, rep).spawn(2)
            X, labels, centers = quadrant_mixture(int(n), np.random.default_rng(data_ss), rho, beta, d)
            cfg = FitConfig(4, mode=mode, inner_budget=L, restarts=restarts, box=box,
                            seed=int(fit_ss.generate_state(1)[0]))
            t0 = time.perf_counter()
            report = fit(X, model, cfg)
            out.timings.append({**cell, "replicate": rep, "seconds": time.perf_counter() - t0})
            out.loglik_traces.append(list(report.loglik_trace))
            _add(out, cell, rep, _recovery_metrics(report, labels, centers, beta))
    _reduce(out, cells, ("center_error", "scale_error", "weight_error", "ari", "misclassification"))
    return out


def sim_model_selection(
    n_list: Sequence[int] = (100, 250, 500),
    k_range: Sequence[int] = (2, 3, 4, 5, 6),
    replicates: int = 5,
    seed: int = 0,
    rho: float = 2.0,
    beta: float = 1.5,
    restarts: int = 3,
    d: int = 2,
    model: RadialModel | None = None,
    box: tuple[float, float] = DEFAULT_BOX,
) -> SimSummary:
    """Which ``K`` AIC, BIC and HQIC pick on data from the four-component mixture.

    ``rows`` holds selection frequencies per ``(n, criterion, K)``; records
    carry the chosen ``K`` per replicate (``AIC_choice`` etc.) and the full
    criterion paths (``BIC@K=3`` etc.).
    """
    _check_replicates(replicates)
    model = model or grid_for_box(d, box)
    out = SimSummary("model-selection", seed, replicates)
    for cell_idx, n in enumerate(n_list):
        cell = {"n": int(n)}
        for rep in range(replicates):
            data_ss, fit_ss = _stream(seed, cell_idx, rep).spawn(2)
            X, _, _ = quadrant_mixture(int(n), np.random.default_rng(data_ss), rho, beta, d)
            cfg = FitConfig(k_range[0], restarts=restarts, box=box, seed=int(fit_ss.generate_state(1)[0]))
            t0 = time.perf_counter()
            rows = select_k(X, model, k_range, cfg)
            out.timings.append({**cell, "replicate": rep, "seconds": time.perf_counter() - t0})
            metrics = {}
            for r in rows:
                out.loglik_traces.append(list(r.report.loglik_trace))
                for crit in ("loglik", "AIC", "BIC", "HQIC"):
                    metrics[f"{crit}@K={r.K}"] = getattr(r, crit)
            for crit, flag in (("AIC", "aic_best"), ("BIC", "bic_best"), ("HQIC", "hqic_best")):
                metrics[f"{crit}_choice"] = next(r.K for r in rows if getattr(r, flag))
            _add(out, cell, rep, metrics)
        for crit in ("AIC", "BIC", "HQIC"):
            choices = out.values(f"{crit}_choice", **cell)
            for K in k_range:
                out.rows.append({**cell, "criterion": crit, "K": int(K),
                                 "frequency": sum(c == K for c in choices) / len(choices)})
    return out


def sim_em_vs_gem(
    n: int = 1000,
    replicates: int = 10,
    seed: int = 0,
    rho: float = 2.0,
    beta: float = 1.5,
    methods: Sequence[tuple[str, str, int]] = COMPARISON_METHODS,
    d: int = 2,
    model: RadialModel | None = None,
    box: tuple[float, float] = DEFAULT_BOX,
) -> SimSummary:
    """Exact EM against truncated-MM GEM variants from identical initializations.

    ``traces`` holds ``(method, replicate, iteration, elapsed, loglik)`` rows,
    i.e. the log-likelihood-versus-time trajectory of every fit.
    """
    _check_replicates(replicates)
    model = model or grid_for_box(d, box)
    out = SimSummary("em-vs-gem", seed, replicates)
    cells = [{"n": int(n), "method": label} for label, _, _ in methods]
    for rep in range(replicates):
        data_ss, init_ss = _stream(seed, 0, rep).spawn(2)
        X, labels, centers = quadrant_mixture(int(n), np.random.default_rng(data_ss), rho, beta, d)
        init = initialize(X, model, 4, box, np.random.default_rng(init_ss))
        for label, mode, L in methods:
            cell = {"n": int(n), "method": label}
            report = run_em(X, model, init, FitConfig(4, mode=mode, inner_budget=L, box=box))
            out.timings.append({**cell, "replicate": rep, "seconds": report.wall_time})
            out.loglik_traces.append(list(report.loglik_trace))
            for it, (t, ll) in enumerate(zip(report.time_trace, report.loglik_trace)):
                out.traces.append({**cell, "replicate": rep, "iteration": it, "elapsed": t, "loglik": ll})
            _add(out, cell, rep, _recovery_metrics(report, labels, centers, beta))
    _reduce(out, cells, ("center_error", "scale_error", "ari", "loglik", "outer_iterations", "inner_steps"))
    return out


def max_trace_drop(traces: Sequence[Sequence[float]]) -> float:
    """Largest single-step decrease over a collection of log-likelihood traces (0 if none)."""
    worst = 0.0
    for tr in traces:
        if len(tr) > 1:
            worst = max(worst, float(np.max(-np.diff(np.asarray(tr)))))
    return worst
