"""Constrained finite mixtures of Riemannian Gaussians on ``H^d``.

Parameters live in a compact set: mixing weights on the simplex, inverse scales
in a box ``[beta_lo, beta_hi]`` and locations inside the geodesic convex hull of
the data. The box is what keeps the likelihood bounded; see
:func:`demonstrate_singularity` for what happens without it.

Two fitting modes share the E-step, the mixing-weight update and the scale
update:

``exact_em``
    every location block is solved to convergence by the MM barycenter routine,
    warm-started at the previous location;
``gem``
    every location block gets exactly ``L`` MM steps from the previous
    location. Each MM step decreases the block objective, so the observed
    log-likelihood still never decreases.
"""

from __future__ import annotations

import itertools
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Literal, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import logsumexp

from . import geometry as geo
from .errors import ContractError, DomainError
from .gaussian import (
    DEFAULT_BOX,
    MM_MAX_STEPS,
    MM_TOL,
    GaussianParams,
    mm_steps,
    solve_scale,
    weighted_barycenter,
)
from .geometry import WeightedSample
from .normalizer import RadialModel

Mode = Literal["exact_em", "gem"]

#: Components whose effective weight drops below this fraction of ``n`` are reseeded.
EMPTY_COMPONENT_FRACTION = 1e-8
HULL_SLACK = 1e-8


@dataclass(frozen=True, eq=False)
class MixtureParams:
    """Mixing weights ``(K,)``, locations ``(K, d+1)`` and inverse scales ``(K,)``."""

    weights: NDArray[np.float64]
    mus: NDArray[np.float64]
    betas: NDArray[np.float64]
    box: tuple[float, float] = DEFAULT_BOX
    hull_radius_bound: float = math.inf

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        mus = np.atleast_2d(np.asarray(self.mus, dtype=np.float64))
        betas = np.asarray(self.betas, dtype=np.float64).reshape(-1)
        if not (w.shape[0] == mus.shape[0] == betas.shape[0]):
            raise ContractError("weights, mus and betas disagree on K")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "mus", mus)
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "box", (float(self.box[0]), float(self.box[1])))

    @property
    def K(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.mus.shape[1] - 1

    @property
    def components(self) -> list[GaussianParams]:
        return [GaussianParams(m, b) for m, b in zip(self.mus, self.betas)]

    def constraint_violations(self) -> list[str]:
        """Names of violated constraints of the compact parameter set (empty when feasible)."""
        out = []
        if abs(self.weights.sum() - 1.0) > 1e-12 or np.any(self.weights < 0.0):
            out.append("weights not on the simplex")
        lo, hi = self.box
        if np.any(self.betas < lo) or np.any(self.betas > hi):
            out.append("beta outside the scale box")
        if math.isfinite(self.hull_radius_bound):
            radii = geo.distance(self.mus, geo.origin(self.dim))
            if np.any(np.asarray(radii) > self.hull_radius_bound + HULL_SLACK):
                out.append("location outside the data hull ball")
        return out

    def permuted(self, order: Sequence[int]) -> "MixtureParams":
        order = np.asarray(order)
        return replace(self, weights=self.weights[order], mus=self.mus[order], betas=self.betas[order])


# ---------------------------------------------------------------------------
# E-step


def _sq_distances(data: NDArray, mus: NDArray) -> NDArray:
    """``(n, K)`` squared geodesic distances."""
    inner = data[:, :-1] @ mus[:, :-1].T - np.outer(data[:, -1], mus[:, -1])
    return np.square(np.arccosh(np.maximum(1.0, -inner)))


def _log_terms(params: MixtureParams, model: RadialModel, data: NDArray) -> NDArray:
    with np.errstate(divide="ignore"):
        log_pi = np.log(params.weights)
    a = model.log_normalizers(params.betas)
    return log_pi - a - params.betas * _sq_distances(data, params.mus)


def responsibilities(
    params: MixtureParams, model: RadialModel, data: ArrayLike
) -> tuple[NDArray[np.float64], float]:
    """Posterior membership probabilities ``(n, K)`` and the observed log-likelihood.

    Computed in log space with log-sum-exp. Components with zero mixing weight
    receive zero responsibility.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.shape[1] != params.dim + 1 or model.dim != params.dim:
        raise ContractError("data, model and parameters disagree on the dimension")
    eta = _log_terms(params, model, data)
    if np.any(np.isnan(eta)) or np.any(eta == np.inf):
        raise ContractError("non-finite log-density terms in the E-step")
    lse = logsumexp(eta, axis=1)
    if not np.all(np.isfinite(lse)):
        raise ContractError("an observation has zero density under every component")
    resp = np.exp(eta - lse[:, None])
    return resp, float(lse.sum())


def log_likelihood(params: MixtureParams, model: RadialModel, data: ArrayLike) -> float:
    return responsibilities(params, model, data)[1]


def q_surrogate(params: MixtureParams, resp: NDArray, model: RadialModel, data: ArrayLike) -> float:
    """Block-separable surrogate ``sum_k W_k log pi_k - W_k A_d(beta_k) - beta_k S_k(mu_k)``.

    Returns ``-inf`` when a component with positive responsibility mass has zero
    mixing weight.
    """
    data = np.asarray(data, dtype=np.float64)
    resp = np.asarray(resp, dtype=np.float64)
    if resp.shape != (data.shape[0], params.K):
        raise ContractError(f"responsibilities have shape {resp.shape}, expected {(data.shape[0], params.K)}")
    Wk = resp.sum(axis=0)
    Sk = np.sum(resp * _sq_distances(data, params.mus), axis=0)
    total = 0.0
    for k in range(params.K):
        if Wk[k] == 0.0:
            total -= params.betas[k] * Sk[k]
            continue
        if params.weights[k] <= 0.0:
            return -math.inf
        total += Wk[k] * (math.log(params.weights[k]) - model.log_normalizer(params.betas[k])) - params.betas[k] * Sk[k]
    return float(total)


# ---------------------------------------------------------------------------
# M-step


def _m_step(
    resp: NDArray,
    model: RadialModel,
    data: NDArray,
    box: tuple[float, float],
    prev: MixtureParams,
    inner: int | None,
    mm_tol: float,
    mm_max_steps: int,
) -> tuple[MixtureParams, int]:
    n = data.shape[0]
    Wk = resp.sum(axis=0)
    weights = Wk / n
    mus = prev.mus.copy()
    betas = prev.betas.copy()
    steps = 0
    empty = Wk < EMPTY_COMPONENT_FRACTION * n
    for k in range(prev.K):
        if empty[k]:
            continue
        w = resp[:, k]
        if inner is None:
            state = weighted_barycenter(WeightedSample(data, w), prev.mus[k], mm_tol, mm_max_steps)
            mus[k] = state.iterate
            steps += state.step_count
        else:
            mus[k] = mm_steps(data, w, prev.mus[k], inner)
            steps += inner
        S = float(np.dot(w, _sq_distances(data, mus[k : k + 1])[:, 0]))
        betas[k] = solve_scale(S, Wk[k], model, box, init=prev.betas[k]).beta
    new = MixtureParams(weights, mus, betas, box, prev.hull_radius_bound)
    if np.any(empty):
        new = _reseed_empty(new, empty, model, data)
    return new, steps


def _reseed_empty(params: MixtureParams, empty: NDArray, model: RadialModel, data: NDArray) -> MixtureParams:
    """Move near-empty components to the worst-explained observation with weight ``1/(10K)``."""
    K = params.K
    live = MixtureParams(
        np.where(empty, 0.0, params.weights) / np.where(empty, 0.0, params.weights).sum(),
        params.mus,
        params.betas,
        params.box,
        params.hull_radius_bound,
    )
    log_dens = logsumexp(_log_terms(live, model, data), axis=1)
    order = np.argsort(log_dens, kind="stable")
    weights = params.weights.copy()
    mus = params.mus.copy()
    for j, k in enumerate(np.flatnonzero(empty)):
        mus[k] = data[order[j]]
        weights[k] = 1.0 / (10 * K)
    weights /= weights.sum()
    return replace(params, weights=weights, mus=mus)


def m_step_exact(
    resp: NDArray,
    model: RadialModel,
    data: ArrayLike,
    box: tuple[float, float],
    prev: MixtureParams,
    mm_tol: float = MM_TOL,
    mm_max_steps: int = MM_MAX_STEPS,
) -> tuple[MixtureParams, int]:
    """Exact M-step. Returns the new parameters and the number of MM steps used.

    ``pi_k = W_k / n``; ``mu_k`` is the ``r_{.k}``-weighted barycenter solved to
    ``mm_tol``; ``beta_k`` minimizes ``beta S_k(mu_k) + W_k A_d(beta)`` on the box.
    """
    return _m_step(np.asarray(resp), model, np.asarray(data, dtype=np.float64), box, prev, None, mm_tol, mm_max_steps)


def m_step_gem(
    resp: NDArray,
    model: RadialModel,
    data: ArrayLike,
    box: tuple[float, float],
    prev: MixtureParams,
    L: int,
) -> tuple[MixtureParams, int]:
    """Generalized M-step: as :func:`m_step_exact` but each location gets exactly ``L`` MM steps."""
    if L < 1:
        raise ContractError(f"inner budget L must be >= 1, got {L}")
    return _m_step(np.asarray(resp), model, np.asarray(data, dtype=np.float64), box, prev, int(L), MM_TOL, MM_MAX_STEPS)


# ---------------------------------------------------------------------------
# fitting


@dataclass(frozen=True)
class FitConfig:
    K: int
    mode: Mode = "exact_em"
    inner_budget: int = 1
    outer_tol: float = 1e-8
    max_outer: int = 500
    restarts: int = 1
    seed: int = 0
    box: tuple[float, float] = DEFAULT_BOX
    mm_tol: float = MM_TOL
    mm_max_steps: int = MM_MAX_STEPS
    threads: int = 1

    def __post_init__(self) -> None:
        if self.K < 1:
            raise ContractError("K must be >= 1")
        if self.mode not in ("exact_em", "gem"):
            raise ContractError(f"unknown mode {self.mode!r}")
        if self.inner_budget < 1:
            raise ContractError("inner budget must be >= 1")
        if not self.outer_tol > 0:
            raise ContractError("outer_tol must be positive")
        if self.restarts < 1 or self.max_outer < 1:
            raise ContractError("restarts and max_outer must be >= 1")
        if not 0 < self.box[0] < self.box[1]:
            raise DomainError(f"invalid scale box {self.box}")


@dataclass
class FitReport:
    loglik_trace: list[float]
    outer_iterations: int
    inner_mm_steps_total: int
    converged: bool
    wall_time: float
    final: MixtureParams
    responsibilities: NDArray[np.float64]
    time_trace: list[float] = field(default_factory=list)
    restart: int = 0
    reseeded: int = 0

    @property
    def loglik(self) -> float:
        return self.loglik_trace[-1]

    @property
    def at_boundary(self) -> bool:
        lo, hi = self.final.box
        return bool(np.any((self.final.betas <= lo) | (self.final.betas >= hi)))


def initialize(
    data: ArrayLike,
    model: RadialModel,
    K: int,
    box: tuple[float, float] = DEFAULT_BOX,
    rng: np.random.Generator | int | None = None,
) -> MixtureParams:
    """k-means++ style seeding with geodesic distances.

    Seeds are drawn with probability proportional to the squared distance to the
    nearest seed so far; every point is then assigned to its nearest seed,
    ``beta_k`` is moment-matched on the within-cluster spread about the seed, and
    ``pi_k`` is the cluster fraction floored at ``1/(10K)``.
    """
    data = np.asarray(data, dtype=np.float64)
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    n = data.shape[0]
    if n < K:
        raise DomainError(f"need at least K={K} observations, got {n}")
    idx = [int(rng.integers(n))]
    nearest = _sq_distances(data, data[idx])[:, 0]
    for _ in range(1, K):
        total = nearest.sum()
        if total > 0.0:
            j = int(rng.choice(n, p=nearest / total))
        else:
            j = int(rng.integers(n))
        idx.append(j)
        nearest = np.minimum(nearest, _sq_distances(data, data[j : j + 1])[:, 0])
    mus = data[idx].copy()
    d2 = _sq_distances(data, mus)
    labels = np.argmin(d2, axis=1)
    weights = np.empty(K)
    betas = np.empty(K)
    for k in range(K):
        members = labels == k
        Wk = float(members.sum())
        Sk = float(d2[members, k].sum())
        weights[k] = max(Wk / n, 1.0 / (10 * K))
        betas[k] = solve_scale(Sk, max(Wk, 1.0), model, box).beta
    weights /= weights.sum()
    radius = geo.hull_radius(WeightedSample.uniform(data))
    return MixtureParams(weights, mus, betas, box, radius)


def run_em(
    data: NDArray,
    model: RadialModel,
    init: MixtureParams,
    config: FitConfig,
) -> FitReport:
    """Run the outer loop from a given starting point (no restarts)."""
    inner = None if config.mode == "exact_em" else config.inner_budget
    start = time.perf_counter()
    params = init
    resp, ll = responsibilities(params, model, data)
    trace = [ll]
    times = [0.0]
    total_steps = 0
    reseeded = 0
    converged = False
    iterations = 0
    for iterations in range(1, config.max_outer + 1):
        params_new, steps = _m_step(
            resp, model, data, config.box, params, inner, config.mm_tol, config.mm_max_steps
        )
        reseeded += int(np.sum(resp.sum(axis=0) < EMPTY_COMPONENT_FRACTION * data.shape[0]))
        total_steps += steps
        resp_new, ll_new = responsibilities(params_new, model, data)
        trace.append(ll_new)
        times.append(time.perf_counter() - start)
        change = abs(ll_new - ll) / (1.0 + abs(ll))
        params, resp, ll = params_new, resp_new, ll_new
        if change < config.outer_tol:
            converged = True
            break
    violations = params.constraint_violations()
    if violations:
        raise AssertionError(f"fitted parameters left the constraint set: {violations}")
    return FitReport(
        loglik_trace=trace,
        outer_iterations=iterations,
        inner_mm_steps_total=total_steps,
        converged=converged,
        wall_time=time.perf_counter() - start,
        final=params,
        responsibilities=resp,
        time_trace=times,
        reseeded=reseeded,
    )


def _parallel_map(fn, items, threads: int):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def fit(data: ArrayLike, model: RadialModel, config: FitConfig) -> FitReport:
    """Fit a ``K``-component mixture; the best of ``config.restarts`` seeded runs is returned."""
    data = geo.check_points(np.atleast_2d(np.asarray(data, dtype=np.float64)))
    n = data.shape[0]
    if n < config.K:
        raise DomainError(f"need at least K={config.K} observations, got {n}")
    if data.shape[1] - 1 != model.dim:
        raise ContractError(f"data dimension {data.shape[1] - 1} != model dimension {model.dim}")
    streams = np.random.SeedSequence(config.seed).spawn(config.restarts)

    def one(i: int) -> FitReport:
        rng = np.random.default_rng(streams[i])
        init = initialize(data, model, config.K, config.box, rng)
        report = run_em(data, model, init, config)
        report.restart = i
        return report

    reports = _parallel_map(one, range(config.restarts), config.threads)
    best = reports[0]
    for r in reports[1:]:
        if r.loglik > best.loglik:
            best = r
    return best


# ---------------------------------------------------------------------------
# diagnostics and model selection


def demonstrate_singularity(
    data: ArrayLike,
    model: RadialModel,
    box_unbounded_hi: float = math.inf,
    betas: Sequence[float] = (10.0, 1e2, 1e3, 1e4),
    eps: float = 0.1,
) -> list[tuple[float, float]]:
    """Log-likelihood of a two-component mixture as one component collapses onto ``x_1``.

    Component 1 sits at the first observation with weight ``eps`` and inverse
    scale ``min(beta, box_unbounded_hi)``; component 2 is a fixed broad
    background fitted to all data. Without a finite upper bound the returned
    log-likelihoods grow without limit.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.shape[0] < 2:
        raise DomainError("need at least two observations")
    sample = WeightedSample.uniform(data)
    bg = weighted_barycenter(sample)
    bg_beta = solve_scale(bg.objective, sample.total_weight, model, (1e-3, 1.0)).beta
    out = []
    for b in betas:
        b1 = min(float(b), box_unbounded_hi)
        params = MixtureParams(
            np.array([eps, 1.0 - eps]),
            np.stack([data[0], bg.iterate]),
            np.array([b1, bg_beta]),
            (min(b1, bg_beta), max(b1, bg_beta) + 1.0),
        )
        out.append((float(b), log_likelihood(params, model, data)))
    return out


def n_free_parameters(K: int, d: int) -> int:
    """``(K - 1)`` weights, ``K d`` location coordinates and ``K`` scales."""
    return (K - 1) + K * d + K


def information_criteria(loglik: float, n: int, d: int, K: int) -> dict[str, float]:
    """AIC, BIC and HQIC (smaller is better)."""
    if n <= 2:
        raise DomainError("HQIC needs n > 2")
    p = n_free_parameters(K, d)
    return {
        "AIC": -2.0 * loglik + 2.0 * p,
        "BIC": -2.0 * loglik + p * math.log(n),
        "HQIC": -2.0 * loglik + 2.0 * p * math.log(math.log(n)),
    }


@dataclass
class SelectionRow:
    K: int
    loglik: float
    AIC: float
    BIC: float
    HQIC: float
    aic_best: bool = False
    bic_best: bool = False
    hqic_best: bool = False
    report: FitReport | None = field(default=None, repr=False)


def select_k(
    data: ArrayLike,
    model: RadialModel,
    k_range: Sequence[int],
    config: FitConfig,
) -> list[SelectionRow]:
    """Fit every ``K`` in ``k_range`` (same seed for each) and flag the argmin of each criterion."""
    data = np.asarray(data, dtype=np.float64)
    ks = list(k_range)
    if not ks:
        raise DomainError("k_range is empty")
    if max(ks) > data.shape[0]:
        raise DomainError("largest K exceeds the number of observations")
    n, d = data.shape[0], data.shape[1] - 1
    inner_cfg = replace(config, threads=1)

    def one(K: int) -> SelectionRow:
        report = fit(data, model, replace(inner_cfg, K=K))
        ic = information_criteria(report.loglik, n, d, K)
        return SelectionRow(K, report.loglik, ic["AIC"], ic["BIC"], ic["HQIC"], report=report)

    rows = _parallel_map(one, ks, config.threads)
    for crit, flag in (("AIC", "aic_best"), ("BIC", "bic_best"), ("HQIC", "hqic_best")):
        best = min(range(len(rows)), key=lambda i: getattr(rows[i], crit))
        setattr(rows[best], flag, True)
    return rows


def align_components(est_mus: NDArray, true_mus: NDArray) -> tuple[NDArray, float]:
    """Permutation of estimated components minimizing the summed geodesic center error.

    Returns ``(order, mean_error)`` where ``est_mus[order[k]]`` is matched to
    ``true_mus[k]``. Exhaustive over all ``K!`` permutations (``K <= 8``).
    """
    K = true_mus.shape[0]
    if est_mus.shape[0] != K or K > 8:
        raise ContractError("alignment needs equal K <= 8")
    cost = np.sqrt(_sq_distances(true_mus, est_mus))
    best, best_cost = None, math.inf
    for perm in itertools.permutations(range(K)):
        c = cost[np.arange(K), perm].sum()
        if c < best_cost:
            best, best_cost = perm, c
    return np.array(best), best_cost / K
