"""Single-component isotropic Riemannian Gaussian on ``H^d``.

Density ``p(x | mu, beta) = exp(-beta d^2(x, mu)) / Z_d(beta)`` with respect to
hyperbolic volume. Location and scale estimation decouple: the weighted MLE of
``mu`` is the weighted Frechet mean (computed by a majorize-minimize fixed
point), and ``beta`` then solves the convex scalar problem
``min beta S + W A_d(beta)`` over a box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import geometry as geo
from .errors import ContractError, DomainError, SamplingError
from .geometry import WeightedSample
from .normalizer import RadialModel

DEFAULT_BOX = (1e-3, 50.0)
MM_TOL = 1e-10
MM_MAX_STEPS = 200
#: Tighter tolerance for stand-alone weighted MLE fits, which are cheap enough to run near roundoff.
MLE_MM_TOL = 1e-13
#: Stop early once the residual has not improved for this many consecutive steps (roundoff floor).
_STAGNATION_STEPS = 5
NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 100
_PHI_SERIES_EPS = 1e-8


@dataclass(frozen=True)
class GaussianParams:
    """Location ``mu`` on the hyperboloid and inverse scale ``beta`` (``sigma^2 = 1/(2 beta)``)."""

    mu: NDArray[np.float64]
    beta: float

    def __post_init__(self) -> None:
        mu = geo.check_points(np.asarray(self.mu, dtype=np.float64).reshape(-1))
        if not (self.beta > 0.0 and math.isfinite(self.beta)):
            raise DomainError(f"beta must be positive and finite, got {self.beta}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def dim(self) -> int:
        return self.mu.shape[0] - 1

    @property
    def sigma(self) -> float:
        return math.sqrt(0.5 / self.beta)


def _rng(seed: int | np.random.Generator | None) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def log_density(params: GaussianParams, model: RadialModel, x: ArrayLike) -> NDArray[np.float64] | float:
    """``-A_d(beta) - beta d^2(x, mu)`` for one point or a stack of points."""
    if model.dim != params.dim:
        raise ContractError(f"model dimension {model.dim} != parameter dimension {params.dim}")
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.dim + 1:
        raise ContractError(f"points have {x.shape[-1]} coordinates, expected {params.dim + 1}")
    r = geo.distance(x, params.mu)
    return -model.log_normalizer(params.beta) - params.beta * np.square(r)


# ---------------------------------------------------------------------------
# sampling


def sample_radii(d: int, beta: float, n: int, rng: np.random.Generator, max_rounds: int = 10_000) -> NDArray:
    """Exact draws from the radial law ``exp(-beta r^2) sinh^{d-1}(r)`` on ``[0, inf)``.

    Two rejection envelopes, both exact:

    * ``sinh r <= e^r / 2`` gives the proposal ``N((d-1)/(2 beta), 1/(2 beta))``
      truncated to ``r >= 0``, accepted with probability ``(1 - e^{-2r})^{d-1}``;
    * ``sinh r / r <= exp(r^2/6)`` gives a chi-type proposal
      ``R^2 ~ Gamma(d/2, 1/(beta - (d-1)/6))``, accepted with probability
      ``(sinh(r)/r)^{d-1} exp(-(d-1) r^2/6)``.

    The second envelope is used when ``beta`` is large relative to ``d``, where
    the first one rejects almost everything.
    """
    if n < 0:
        raise ContractError("n must be nonnegative")
    out = np.empty(n)
    filled = 0
    use_chi = d > 1 and beta >= (d - 1) / 2.0
    sd = math.sqrt(0.5 / beta)
    centre = (d - 1) / (2.0 * beta)
    rate = beta - (d - 1) / 6.0
    for _ in range(max_rounds):
        if filled == n:
            return out
        m = max(64, 2 * (n - filled))
        if use_chi:
            r = np.sqrt(rng.gamma(d / 2.0, 1.0 / rate, size=m))
            with np.errstate(invalid="ignore", divide="ignore"):
                ratio = np.where(r > 0, np.sinh(r) / np.where(r > 0, r, 1.0), 1.0)
            log_acc = (d - 1) * (np.log(ratio) - r * r / 6.0)
        else:
            r = centre + sd * rng.standard_normal(m)
            r = r[r >= 0.0]
            log_acc = (d - 1) * np.log1p(-np.exp(-2.0 * r)) if d > 1 else np.zeros_like(r)
        u = rng.random(r.shape[0])
        keep = r[np.log(u) < log_acc]
        take = min(keep.shape[0], n - filled)
        out[filled : filled + take] = keep[:take]
        filled += take
    raise SamplingError(f"radial rejection sampler exhausted {max_rounds} rounds (d={d}, beta={beta})")


def transport_from_origin(mu: NDArray, u: NDArray) -> NDArray:
    """Parallel transport of tangent vectors at ``o`` to ``mu`` along the joining geodesic."""
    alpha = mu[-1]
    coef = np.asarray(geo.lorentz_inner(mu, u)) / (1.0 + alpha)
    o = np.zeros_like(mu)
    o[-1] = 1.0
    return u + coef[..., None] * (o + mu)


def sample(
    params: GaussianParams,
    model: RadialModel | None,
    n: int,
    rng_seed: int | np.random.Generator | None = None,
) -> NDArray[np.float64]:
    """Draw ``n`` i.i.d. points as rows of an ``(n, d+1)`` array.

    The radius comes from :func:`sample_radii`, the direction is uniform on
    ``S^{d-1}``, and the resulting tangent vector at ``o`` is transported to
    ``mu`` before applying the exponential map. ``model`` is accepted for
    interface symmetry; sampling does not need the normalizer.
    """
    if n < 1:
        raise ContractError(f"n must be >= 1, got {n}")
    if model is not None and model.dim != params.dim:
        raise ContractError(f"model dimension {model.dim} != parameter dimension {params.dim}")
    rng = _rng(rng_seed)
    d = params.dim
    radii = sample_radii(d, params.beta, n, rng)
    dirs = rng.standard_normal((n, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    v0 = np.concatenate([radii[:, None] * dirs, np.zeros((n, 1))], axis=1)
    v = transport_from_origin(params.mu, v0)
    return geo.exp_map(params.mu, v)


# ---------------------------------------------------------------------------
# location: MM barycenter


@dataclass
class MMState:
    """Outcome of :func:`weighted_barycenter`."""

    iterate: NDArray[np.float64]
    objective: float
    step_count: int
    converged: bool
    residual: float
    trace: list[float] = field(default_factory=list)


def _phi(alpha: NDArray) -> NDArray:
    """``2 arcosh(a) / sqrt(a^2 - 1)`` with the continuous value 2 at ``a = 1``."""
    near = alpha < 1.0 + _PHI_SERIES_EPS
    safe = np.where(near, 2.0, alpha)
    exact = 2.0 * np.arccosh(safe) / np.sqrt(safe * safe - 1.0)
    return np.where(near, 2.0 - 2.0 * (alpha - 1.0) / 3.0, exact)


def _alphas(points: NDArray, mu: NDArray) -> NDArray:
    return np.maximum(1.0, points[:, -1] * mu[-1] - points[:, :-1] @ mu[:-1])


def _score(points: NDArray, weights: NDArray, mu: NDArray, alpha: NDArray, phi: NDArray) -> NDArray:
    """``sum_i w_i Log_mu(x_i)`` reusing precomputed ``alpha`` and ``phi``."""
    c = 0.5 * weights * phi
    vec = c @ points - np.dot(c, alpha) * mu
    return geo.project_tangent(mu, vec)


def score_residual(sample: WeightedSample, mu: ArrayLike) -> float:
    """Lorentz norm of ``sum_i w_i Log_mu(x_i)`` (not normalized by the total weight)."""
    mu = np.asarray(mu, dtype=np.float64)
    alpha = _alphas(sample.points, mu)
    return float(geo.lorentz_norm(_score(sample.points, sample.weights, mu, alpha, _phi(alpha))))


def _mm_update(points: NDArray, weights: NDArray, phi: NDArray) -> NDArray:
    nu = (weights * phi) @ points
    return nu / math.sqrt(-geo.lorentz_inner(nu, nu))


def mm_step(sample: WeightedSample, mu: ArrayLike) -> NDArray[np.float64]:
    """One majorize-minimize update for the weighted Frechet mean.

    The tangent-line bound on the concave ``arcosh^2`` makes the majorizer
    linear in ``mu``; its minimizer on the sheet is ``nu / sqrt(-<nu,nu>_L)`` with
    ``nu = sum_i w_i phi(alpha_i) x_i``, a future time-like vector.
    """
    mu = np.asarray(mu, dtype=np.float64)
    alpha = _alphas(sample.points, mu)
    return _mm_update(sample.points, sample.weights, _phi(alpha))


def initial_location(sample: WeightedSample) -> NDArray[np.float64]:
    """Weighted ambient average of the points, normalized onto the sheet."""
    return geo.normalize(sample.weights @ sample.points)


def weighted_barycenter(
    sample: WeightedSample,
    init: ArrayLike | None = None,
    tol: float = MM_TOL,
    max_steps: int = MM_MAX_STEPS,
    record: bool = False,
) -> MMState:
    """Iterate :func:`mm_step` until ``|sum_i w_i Log_mu(x_i)|_L <= tol * W``.

    Hitting ``max_steps`` first, or stalling at the roundoff floor for several
    steps, returns a state with ``converged=False``. With ``record=True`` the
    Frechet objective after every step is kept in ``trace``.
    """
    if tol <= 0:
        raise ContractError("tol must be positive")
    pts, w = sample.points, sample.weights
    total = sample.total_weight
    mu = initial_location(sample) if init is None else np.asarray(init, dtype=np.float64)
    trace = [geo.frechet_value(sample, mu)] if record else []
    steps = 0
    best, stalled = math.inf, 0
    while True:
        alpha = _alphas(pts, mu)
        phi = _phi(alpha)
        residual = float(geo.lorentz_norm(_score(pts, w, mu, alpha, phi)))
        if residual < best:
            best, stalled = residual, 0
        else:
            stalled += 1
        if residual <= tol * total or steps >= max_steps or stalled >= _STAGNATION_STEPS:
            break
        mu = _mm_update(pts, w, phi)
        steps += 1
        if record:
            trace.append(geo.frechet_value(sample, mu))
    return MMState(
        iterate=mu,
        objective=geo.frechet_value(sample, mu),
        step_count=steps,
        converged=residual <= tol * total,
        residual=residual,
        trace=trace,
    )


def mm_steps(points: NDArray, weights: NDArray, mu: NDArray, steps: int) -> NDArray:
    """Apply exactly ``steps`` MM updates (used by truncated inner loops)."""
    for _ in range(steps):
        mu = _mm_update(points, weights, _phi(_alphas(points, mu)))
    return mu


# ---------------------------------------------------------------------------
# scale: projected Newton on the convex profile


@dataclass(frozen=True)
class ScaleSolveResult:
    beta: float
    iterations: int
    at_boundary: bool


def scale_objective(beta: float, S: float, W: float, model: RadialModel) -> float:
    """Profile objective ``beta S + W A_d(beta)``; smaller is better."""
    return beta * S + W * model.log_normalizer(beta)


def solve_scale(
    S: float,
    W: float,
    model: RadialModel,
    box: tuple[float, float] = DEFAULT_BOX,
    init: float | None = None,
) -> ScaleSolveResult:
    """Minimize ``beta S + W A_d(beta)`` over ``[beta_lo, beta_hi]``.

    Interior minimizers satisfy ``E_beta[R^2] = S / W``. Projected Newton steps
    ``beta - (A' + S/W) / A''`` are used; two consecutive steps that leave the box
    switch the solver to bisection on ``E_beta[R^2] - S/W``.
    """
    lo, hi = float(box[0]), float(box[1])
    if not (0.0 < lo < hi):
        raise DomainError(f"invalid scale box [{lo}, {hi}]")
    if S < 0.0 or not math.isfinite(S):
        raise DomainError(f"S must be finite and nonnegative, got {S}")
    if not (W > 0.0 and math.isfinite(W)):
        raise DomainError(f"W must be positive, got {W}")
    target = S / W
    # Monotone first-order condition decides boundary solutions directly.
    if model.moment2(hi) >= target:
        return ScaleSolveResult(hi, 0, True)
    if model.moment2(lo) <= target:
        return ScaleSolveResult(lo, 0, True)

    beta = init if init is not None else model.dim / (2.0 * target)
    beta = min(max(beta, lo), hi)
    outside = 0
    for it in range(1, NEWTON_MAX_ITER + 1):
        da, dda = model.derivatives(beta)
        raw = beta - (da + target) / dda
        outside = outside + 1 if (raw < lo or raw > hi) else 0
        if outside >= 2:
            break
        new = min(max(raw, lo), hi)
        step = abs(new - beta)
        beta = new
        if step <= NEWTON_TOL * max(1.0, beta):
            return ScaleSolveResult(beta, it, False)
    return _bisect_scale(target, model, lo, hi)


def _bisect_scale(target: float, model: RadialModel, lo: float, hi: float) -> ScaleSolveResult:
    # E[R^2] is strictly decreasing: the root is bracketed by the box here.
    it = 0
    while hi - lo > NEWTON_TOL * max(1.0, hi) and it < 200:
        mid = 0.5 * (lo + hi)
        if model.moment2(mid) > target:
            lo = mid
        else:
            hi = mid
        it += 1
    return ScaleSolveResult(0.5 * (lo + hi), it, False)


# ---------------------------------------------------------------------------
# combined weighted MLE


@dataclass(frozen=True)
class MLEDiagnostics:
    score_residual: float
    frechet_value: float
    mm_steps: int
    mm_converged: bool
    newton_iterations: int
    at_boundary: bool


def weighted_mle(
    sample: WeightedSample,
    model: RadialModel,
    box: tuple[float, float] = DEFAULT_BOX,
    tol: float = MLE_MM_TOL,
    max_steps: int = MM_MAX_STEPS,
) -> tuple[GaussianParams, MLEDiagnostics]:
    """Weighted maximum-likelihood ``(mu, beta)``: barycenter first, then the scale profile."""
    if model.dim != sample.dim:
        raise ContractError(f"model dimension {model.dim} != sample dimension {sample.dim}")
    state = weighted_barycenter(sample, None, tol, max_steps)
    S = state.objective
    scale = solve_scale(S, sample.total_weight, model, box)
    diag = MLEDiagnostics(
        score_residual=state.residual,
        frechet_value=S,
        mm_steps=state.step_count,
        mm_converged=state.converged,
        newton_iterations=scale.iterations,
        at_boundary=scale.at_boundary,
    )
    return GaussianParams(state.iterate, scale.beta), diag
