"""Lorentz (hyperboloid) model primitives for hyperbolic space of curvature -1.

Points are stored as ambient coordinates ``(x_1, ..., x_d, x_{d+1})`` with the
time-like coordinate *last*, so that the origin is ``o = (0, ..., 0, 1)``.
Every function accepts a single point of shape ``(d+1,)`` or a stack of points
of shape ``(..., d+1)`` and broadcasts over the leading axes.

Tangent vectors are plain arrays in the same ambient space; the base point is
always passed explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import ContractError, DomainError

#: Tolerance on ``|<x,x>_L + 1|`` for hyperboloid membership, relative to ``max(1, x_{d+1}^2)``.
MEMBERSHIP_TOL = 1e-10
#: Below this Lorentz norm a tangent vector is treated as zero by :func:`exp_map`.
EXP_ZERO_NORM = 1e-14
#: Below ``1 + LOG_SERIES_EPS`` the logarithm map uses its first-order series.
LOG_SERIES_EPS = 1e-8
#: Poincare points must satisfy ``|y| < 1 - BALL_MARGIN``.
BALL_MARGIN = 1e-12
MAX_DIM = 64
#: Below this value of ``-<x,y>_L`` :func:`distance` switches to the chordal form.
NEAR_ALPHA = 2.0


def _as_array(x: ArrayLike, name: str = "x") -> NDArray[np.float64]:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0 or arr.shape[-1] < 2:
        raise ContractError(f"{name} must have a trailing axis of length >= 2, got shape {arr.shape}")
    return arr


def _check_pair(x: NDArray, y: NDArray) -> None:
    if x.shape[-1] != y.shape[-1]:
        raise ContractError(f"dimension mismatch: {x.shape[-1]} vs {y.shape[-1]} ambient coordinates")


def lorentz_inner(x: ArrayLike, y: ArrayLike) -> NDArray[np.float64] | float:
    """Lorentzian bilinear form ``sum_j x_j y_j - x_{d+1} y_{d+1}``.

    Broadcasts over leading axes; returns a Python float for 1-D inputs.
    """
    x = _as_array(x, "x")
    y = _as_array(y, "y")
    _check_pair(x, y)
    out = np.sum(x[..., :-1] * y[..., :-1], axis=-1) - x[..., -1] * y[..., -1]
    return float(out) if out.ndim == 0 else out


def lorentz_norm(v: ArrayLike) -> NDArray[np.float64] | float:
    """Norm of a space-like (tangent) vector, with tiny negative squares clamped to 0."""
    sq = lorentz_inner(v, v)
    return np.sqrt(np.maximum(sq, 0.0))


def origin(d: int) -> NDArray[np.float64]:
    """The distinguished point ``o = (0, ..., 0, 1)`` of ``H^d``."""
    if not 1 <= d <= MAX_DIM:
        raise ContractError(f"dimension must be in [1, {MAX_DIM}], got {d}")
    o = np.zeros(d + 1)
    o[-1] = 1.0
    return o


def membership_error(x: ArrayLike) -> NDArray[np.float64] | float:
    """Scaled violation ``|<x,x>_L + 1| / max(1, x_{d+1}^2)`` of the hyperboloid equation."""
    x = _as_array(x)
    err = np.abs(np.asarray(lorentz_inner(x, x)) + 1.0) / np.maximum(1.0, x[..., -1] ** 2)
    return float(err) if err.ndim == 0 else err


def normalize(x: ArrayLike) -> NDArray[np.float64]:
    """Rescale future time-like vectors onto the upper sheet, ``x / sqrt(-<x,x>_L)``."""
    x = _as_array(x)
    sq = -np.asarray(lorentz_inner(x, x))
    if np.any(sq <= 0.0) or np.any(x[..., -1] <= 0.0):
        raise DomainError("cannot normalize a vector that is not future time-like")
    return x / np.sqrt(sq)[..., None]


def lift(u: ArrayLike) -> NDArray[np.float64]:
    """Point of the upper sheet with spatial part ``u``: ``(u, sqrt(1 + |u|^2))``.

    Recomputing the time coordinate is how outputs are pinned to the sheet:
    unlike rescaling by ``1/sqrt(-<x,x>_L)``, whose inner product carries an
    absolute error of order ``eps x_{d+1}^2``, it keeps every coordinate
    accurate to a few ulps.
    """
    u = np.asarray(u, dtype=np.float64)
    sq = np.sum(u * u, axis=-1, keepdims=True)
    return np.concatenate([u, np.sqrt(1.0 + sq)], axis=-1)


def check_points(x: ArrayLike, tol: float = MEMBERSHIP_TOL) -> NDArray[np.float64]:
    """Validate that ``x`` holds finite points of the upper sheet and return it as an array."""
    x = _as_array(x)
    if x.shape[-1] - 1 > MAX_DIM:
        raise ContractError(f"dimension {x.shape[-1] - 1} exceeds the supported maximum {MAX_DIM}")
    if not np.all(np.isfinite(x)):
        raise ContractError("points must be finite")
    if np.any(x[..., -1] <= 0.0):
        raise DomainError("points must lie on the upper sheet (last coordinate > 0)")
    if np.any(np.asarray(membership_error(x)) > tol):
        raise DomainError("points violate <x,x>_L = -1")
    return x


def distance(x: ArrayLike, y: ArrayLike) -> NDArray[np.float64] | float:
    """Geodesic distance ``arcosh(max(1, -<x,y>_L))``.

    For nearby points (``-<x,y>_L < 2``) the equivalent form
    ``2 asinh(|x - y|_L / 2)`` is used instead; arcosh near 1 would amplify a
    rounding error of ``eps`` in the inner product to ``sqrt(eps)``.
    """
    x = _as_array(x, "x")
    y = _as_array(y, "y")
    alpha = np.maximum(1.0, -np.asarray(lorentz_inner(x, y)))
    chord = np.asarray(lorentz_norm(x - y))
    out = np.where(alpha < NEAR_ALPHA, 2.0 * np.arcsinh(0.5 * chord), np.arccosh(alpha))
    return float(out) if out.ndim == 0 else out


def project_tangent(mu: ArrayLike, u: ArrayLike) -> NDArray[np.float64]:
    """Lorentz-orthogonal projection ``u + <mu,u>_L mu`` onto the tangent space at ``mu``."""
    mu = _as_array(mu, "mu")
    u = _as_array(u, "u")
    _check_pair(mu, u)
    return u + np.asarray(lorentz_inner(mu, u))[..., None] * mu


def exp_map(mu: ArrayLike, v: ArrayLike) -> NDArray[np.float64]:
    """Exponential map ``cosh(|v|) mu + sinh(|v|) v/|v|``, pinned to the sheet by :func:`lift`."""
    mu = _as_array(mu, "mu")
    v = _as_array(v, "v")
    _check_pair(mu, v)
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(v))):
        raise ContractError("exp_map requires finite inputs")
    norm = np.asarray(lorentz_norm(v))
    small = norm <= EXP_ZERO_NORM
    safe = np.where(small, 1.0, norm)
    coef = np.where(small, 0.0, np.sinh(norm) / safe)
    out = np.cosh(norm)[..., None] * mu + coef[..., None] * v
    out = np.where(small[..., None], np.broadcast_to(mu, out.shape), out)
    return lift(out[..., :-1])


def log_map(mu: ArrayLike, x: ArrayLike) -> NDArray[np.float64]:
    """Logarithm map at ``mu``: the tangent vector pointing to ``x`` with length ``d(mu, x)``.

    For ``alpha = -<mu,x>_L`` within ``1e-8`` of 1 the coefficient
    ``arcosh(alpha)/sqrt(alpha^2 - 1)`` is replaced by its limit 1.
    """
    mu = _as_array(mu, "mu")
    x = _as_array(x, "x")
    _check_pair(mu, x)
    alpha = np.maximum(1.0, -np.asarray(lorentz_inner(mu, x)))
    near = alpha < 1.0 + LOG_SERIES_EPS
    v = project_tangent(mu, x - alpha[..., None] * mu)
    # Rescaling by the computed norm of v rather than sqrt(alpha^2 - 1) keeps
    # |Log|_L = d(mu, x) to roundoff even when x - alpha mu cancels heavily.
    vnorm = np.asarray(lorentz_norm(v))
    safe = np.where(near | (vnorm == 0.0), 1.0, vnorm)
    coef = np.where(near, 1.0, np.arccosh(np.where(near, 2.0, alpha)) / safe)
    return coef[..., None] * v


def geodesic(x: ArrayLike, y: ArrayLike, t: ArrayLike) -> NDArray[np.float64]:
    """Point(s) ``exp_x(t log_x(y))`` on the unique geodesic from ``x`` (t=0) to ``y`` (t=1)."""
    v = log_map(x, y)
    t = np.asarray(t, dtype=np.float64)
    return exp_map(x, t[..., None] * v)


def to_poincare(x: ArrayLike) -> NDArray[np.float64]:
    """Stereographic projection from the south pole: ``(u, t) -> u / (1 + t)``."""
    x = _as_array(x)
    return x[..., :-1] / (1.0 + x[..., -1:])


def from_poincare(y: ArrayLike) -> NDArray[np.float64]:
    """Inverse projection ``y -> (2y, 1 + |y|^2) / (1 - |y|^2)``.

    Raises
    ------
    DomainError
        If any point has ``|y| >= 1 - 1e-12`` (too close to the ideal boundary).
    """
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 0 or y.shape[-1] < 1:
        raise ContractError("Poincare coordinates need a trailing axis of length >= 1")
    if not np.all(np.isfinite(y)):
        raise ContractError("Poincare coordinates must be finite")
    sq = np.sum(y * y, axis=-1)
    if np.any(np.sqrt(sq) >= 1.0 - BALL_MARGIN):
        raise DomainError("Poincare point lies on or outside the unit ball (|y| >= 1 - 1e-12)")
    return lift(2.0 * y / (1.0 - sq)[..., None])


def poincare_distance(a: ArrayLike, b: ArrayLike) -> NDArray[np.float64] | float:
    """Ball-model distance ``2 artanh |(-a) (+) b|`` using Mobius addition."""
    a = -np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    ab = np.sum(a * b, axis=-1)
    aa = np.sum(a * a, axis=-1)
    bb = np.sum(b * b, axis=-1)
    num = (1.0 + 2.0 * ab + bb)[..., None] * a + (1.0 - aa)[..., None] * b
    den = 1.0 + 2.0 * ab + aa * bb
    out = 2.0 * np.arctanh(np.linalg.norm(num, axis=-1) / den)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class WeightedSample:
    """Points on ``H^d`` (rows of ``points``) with nonnegative weights."""

    points: NDArray[np.float64]
    weights: NDArray[np.float64]

    def __post_init__(self) -> None:
        pts = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if pts.ndim != 2:
            raise ContractError("points must be a 2-D array of shape (n, d+1)")
        if w.shape[0] != pts.shape[0]:
            raise ContractError(f"{pts.shape[0]} points but {w.shape[0]} weights")
        if not np.all(np.isfinite(w)) or np.any(w < 0.0):
            raise ContractError("weights must be finite and nonnegative")
        if not w.sum() > 0.0:
            raise DomainError("total weight must be positive")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, points: ArrayLike) -> "WeightedSample":
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return cls(pts, np.ones(pts.shape[0]))

    @property
    def dim(self) -> int:
        return self.points.shape[1] - 1

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    def __len__(self) -> int:
        return self.points.shape[0]


def frechet_value(sample: WeightedSample, mu: ArrayLike) -> float:
    """Weighted Frechet functional ``sum_i w_i d^2(x_i, mu)``."""
    d = distance(sample.points, mu)
    return float(np.dot(sample.weights, d * d))


def frechet_gradient(sample: WeightedSample, mu: ArrayLike) -> NDArray[np.float64]:
    """Riemannian gradient ``-2 sum_i w_i Log_mu(x_i)`` of :func:`frechet_value`."""
    logs = log_map(mu, sample.points)
    return -2.0 * (sample.weights @ logs)


def hull_radius(sample: WeightedSample) -> float:
    """Radius of the smallest origin-centred ball containing every sample point.

    Closed balls are geodesically convex, so this ball also contains the
    geodesic convex hull of the sample and hence every weighted barycenter.
    """
    return float(np.max(distance(sample.points, origin(sample.dim))))
