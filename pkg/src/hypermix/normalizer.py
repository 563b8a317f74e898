"""Normalizing constant of the isotropic Riemannian Gaussian on ``H^d``.

``Z_d(beta) = omega_{d-1} * int_0^inf exp(-beta r^2) sinh^{d-1}(r) dr`` is evaluated
two independent ways:

* composite Gauss-Legendre quadrature of the radial integral, carried out in
  log space so that neither ``exp(-beta r^2)`` nor ``sinh^{d-1}(r)`` over- or
  underflows on its own;
* the alternating finite sum of scaled complementary error functions.

The log-normalizer ``A_d = log Z_d`` has ``A_d' = -E[R^2]`` and
``A_d'' = Var(R^2)`` for the radial law ``R ~ exp(-beta r^2) sinh^{d-1}(r)``;
both derivatives always come from quadrature ratios.

:class:`RadialModel` bundles a dimension with an evaluation method. The
``grid`` method tabulates ``(A, A', A'')`` on log-spaced knots and interpolates
with cubic Hermite splines in ``log beta`` that use the exact knot derivatives.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Literal

import numpy as np
from numpy.typing import NDArray
from scipy.interpolate import PchipInterpolator
from scipy.special import comb, erfcx, gammaln

from .errors import ContractError, DomainError, PrecisionLossError

Method = Literal["quadrature", "closed_form", "grid"]

GRID_FORMAT = "hypermix-radial-grid"
GRID_VERSION = 1
#: Largest tolerated ratio of ``sum |terms|`` to ``|sum terms|`` in the closed form.
CANCELLATION_LIMIT = 1e12


@dataclass(frozen=True)
class QuadratureConfig:
    """Panel layout for the radial integral.

    The integral is truncated at ``R = max(12, (d-1)/(2 beta) + tail / sqrt(beta))``.
    Panels of width ``panel_width / sqrt(beta)`` cover ``[0, (d-1)/(2 beta) + tail/sqrt(beta)]``
    where the mass lives; a few coarse panels cover the remainder up to ``R``.
    """

    nodes_per_panel: int = 16
    panel_width: float = 0.5
    tail: float = 12.0
    coarse_panels: int = 8


DEFAULT_QUADRATURE = QuadratureConfig()


def sphere_area(d: int) -> float:
    """Surface area ``2 pi^{d/2} / Gamma(d/2)`` of the unit sphere ``S^{d-1}``."""
    _check_dim(d)
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def _log_sphere_area(d: int) -> float:
    return math.log(2.0) + 0.5 * d * math.log(math.pi) - float(gammaln(d / 2.0))


def _check_dim(d: int) -> None:
    if not isinstance(d, (int, np.integer)) or d < 1:
        raise ContractError(f"dimension must be a positive integer, got {d!r}")


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if not (beta > 0.0 and math.isfinite(beta)):
        raise DomainError(f"beta must be positive and finite, got {beta}")
    return beta


def truncation_radius(d: int, beta: float, tail: float = 12.0) -> float:
    return max(12.0, (d - 1) / (2.0 * beta) + tail / math.sqrt(beta))


@lru_cache(maxsize=None)
def _legendre(n: int) -> tuple[NDArray, NDArray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return (x + 1.0) / 2.0, w / 2.0


def _nodes(d: int, beta: float, cfg: QuadratureConfig) -> tuple[NDArray, NDArray]:
    """Quadrature nodes and weights on ``[0, R]``."""
    r_mass = (d - 1) / (2.0 * beta) + cfg.tail / math.sqrt(beta)
    r_max = truncation_radius(d, beta, cfg.tail)
    h = cfg.panel_width / math.sqrt(beta)
    n_fine = max(1, math.ceil(r_mass / h))
    edges = np.linspace(0.0, r_mass, n_fine + 1)
    if r_max > r_mass:
        edges = np.concatenate([edges, np.linspace(r_mass, r_max, cfg.coarse_panels + 1)[1:]])
    t, w = _legendre(cfg.nodes_per_panel)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = (a + (b - a) * t).ravel()
    weights = ((b - a) * w).ravel()
    return nodes, weights


def _log_sinh(r: NDArray) -> NDArray:
    # log sinh r = r - log 2 + log1p(-exp(-2r)), with log sinh 0 = -inf
    with np.errstate(divide="ignore"):
        return r - math.log(2.0) + np.log1p(-np.exp(-2.0 * r))


def _radial_log_integrals(
    d: int, beta: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE
) -> tuple[float, float, float]:
    """Return ``(log I0, E[R^2], Var[R^2])`` with ``I0 = int exp(-beta r^2) sinh^{d-1} r dr``."""
    r, w = _nodes(d, beta, cfg)
    logf = -beta * r * r
    if d > 1:
        logf = logf + (d - 1) * _log_sinh(r)
    peak = np.max(logf)
    f = w * np.exp(logf - peak)
    r2 = r * r
    i0 = f.sum()
    m2 = float(np.dot(f, r2) / i0)
    # central form keeps the variance free of E[R^4] - E[R^2]^2 cancellation
    var = float(np.dot(f, (r2 - m2) ** 2) / i0)
    return float(peak + math.log(i0)), m2, var


def log_z_quadrature(d: int, beta: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """``A_d(beta) = log Z_d(beta)`` by composite Gauss-Legendre quadrature."""
    _check_dim(d)
    beta = _check_beta(beta)
    log_i0, _, _ = _radial_log_integrals(d, beta, cfg)
    return _log_sphere_area(d) + log_i0


def z_quadrature(d: int, beta: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """Normalizing constant ``Z_d(beta)`` from the radial integral.

    Examples
    --------
    >>> round(z_quadrature(1, math.pi), 12)
    1.0
    """
    return math.exp(log_z_quadrature(d, beta, cfg))


def z_closed_form(d: int, beta: float) -> float:
    """Normalizing constant from the finite erfc sum.

    Each ``exp(c_j^2 / 4 beta) erfc(-c_j / 2 sqrt(beta))`` is evaluated as a single
    ``erfcx`` call, with ``c_j = 2j - d + 1``.

    Raises
    ------
    PrecisionLossError
        When the alternating sum cancels so heavily (small beta, large d) that
        the result would be unreliable; use :func:`z_quadrature` instead.
    """
    _check_dim(d)
    beta = _check_beta(beta)
    j = np.arange(d)
    c = 2.0 * j - d + 1.0
    signs = np.where((d - 1 - j) % 2 == 0, 1.0, -1.0)
    with np.errstate(over="ignore"):
        terms = signs * comb(d - 1, j) * erfcx(-c / (2.0 * math.sqrt(beta)))
    total = float(terms.sum())
    magnitude = float(np.abs(terms).sum())
    if not math.isfinite(magnitude) or total <= 0.0 or magnitude > CANCELLATION_LIMIT * total:
        raise PrecisionLossError(
            f"finite-sum normalizer loses precision at d={d}, beta={beta:g}; use quadrature"
        )
    return sphere_area(d) * math.sqrt(math.pi) / (2.0**d * math.sqrt(beta)) * total


def radial_moments(d: int, beta: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> tuple[float, float, float]:
    """``(A_d, A_d', A_d'')`` at ``beta`` from one quadrature pass."""
    _check_dim(d)
    beta = _check_beta(beta)
    log_i0, m2, var = _radial_log_integrals(d, beta, cfg)
    return _log_sphere_area(d) + log_i0, -m2, var


class _Hermite:
    """Scalar cubic Hermite interpolant with given knot slopes (cheap per-call evaluation)."""

    def __init__(self, x: NDArray, y: NDArray, dy: NDArray) -> None:
        self.x = [float(v) for v in x]
        self.y = [float(v) for v in y]
        self.dy = [float(v) for v in dy]

    def __call__(self, t: float) -> float:
        x = self.x
        i = min(max(bisect.bisect_right(x, t) - 1, 0), len(x) - 2)
        h = x[i + 1] - x[i]
        u = (t - x[i]) / h
        if u == 0.0:
            return self.y[i]
        if u == 1.0:
            return self.y[i + 1]
        u2 = u * u
        u3 = u2 * u
        return (
            (2 * u3 - 3 * u2 + 1) * self.y[i]
            + (u3 - 2 * u2 + u) * h * self.dy[i]
            + (-2 * u3 + 3 * u2) * self.y[i + 1]
            + (u3 - u2) * h * self.dy[i + 1]
        )


@dataclass(frozen=True, eq=False)
class RadialModel:
    """Log-normalizer ``A_d`` and its first two derivatives for a fixed dimension.

    Build grid models with :func:`build_grid`; the other methods need only
    ``RadialModel(dim, method)``.
    """

    dim: int
    method: Method = "quadrature"
    knots: NDArray[np.float64] | None = field(default=None, repr=False)
    values: NDArray[np.float64] | None = field(default=None, repr=False)
    quadrature: QuadratureConfig = field(default=DEFAULT_QUADRATURE, repr=False)

    def __post_init__(self) -> None:
        _check_dim(self.dim)
        if self.method not in ("quadrature", "closed_form", "grid"):
            raise ContractError(f"unknown normalizer method {self.method!r}")
        if self.method == "grid":
            if self.knots is None or self.values is None:
                raise ContractError("grid method requires knots and values; use build_grid")
            knots = np.asarray(self.knots, dtype=np.float64)
            values = np.asarray(self.values, dtype=np.float64)
            if values.shape != (knots.size, 3) or knots.size < 2 or np.any(np.diff(knots) <= 0):
                raise ContractError("grid knots must be strictly increasing with one (A, A', A'') row each")
            if np.any(values[:, 2] <= 0.0):
                raise ContractError("grid violates A'' > 0")
            if np.any(np.diff(-values[:, 1]) >= 0.0):
                raise ContractError("grid violates strict decrease of E[R^2]")
            s = np.log(knots)
            object.__setattr__(self, "knots", knots)
            object.__setattr__(self, "values", values)
            log_dda = np.log(values[:, 2])
            pchip_slopes = PchipInterpolator(s, log_dda).derivative()(s)
            object.__setattr__(self, "_a", _Hermite(s, values[:, 0], knots * values[:, 1]))
            object.__setattr__(self, "_da", _Hermite(s, values[:, 1], knots * values[:, 2]))
            object.__setattr__(self, "_dda", _Hermite(s, log_dda, pchip_slopes))

    @property
    def beta_range(self) -> tuple[float, float] | None:
        if self.method != "grid":
            return None
        return float(self.knots[0]), float(self.knots[-1])

    def _on_grid(self, beta: float) -> bool:
        return self.method == "grid" and self.knots[0] <= beta <= self.knots[-1]

    def _knot_row(self, beta: float) -> NDArray | None:
        # stored values are returned verbatim at knots
        i = bisect.bisect_left(self.knots, beta)
        if i < len(self.knots) and self.knots[i] == beta:
            return self.values[i]
        return None

    def log_normalizer(self, beta: float) -> float:
        beta = _check_beta(beta)
        if self._on_grid(beta):
            row = self._knot_row(beta)
            if row is not None:
                return float(row[0])
            return float(self._a(math.log(beta)))
        if self.method == "closed_form":
            return math.log(z_closed_form(self.dim, beta))
        return log_z_quadrature(self.dim, beta, self.quadrature)

    def derivatives(self, beta: float) -> tuple[float, float]:
        """``(A_d'(beta), A_d''(beta))``."""
        beta = _check_beta(beta)
        if self._on_grid(beta):
            row = self._knot_row(beta)
            if row is not None:
                return float(row[1]), float(row[2])
            s = math.log(beta)
            return float(self._da(s)), float(math.exp(self._dda(s)))
        _, da, dda = radial_moments(self.dim, beta, self.quadrature)
        return da, dda

    def moment2(self, beta: float) -> float:
        """Radial second moment ``E_beta[R^2] = -A_d'(beta)``."""
        beta = _check_beta(beta)
        if self._on_grid(beta):
            row = self._knot_row(beta)
            return -float(row[1]) if row is not None else -self._da(math.log(beta))
        return -self.derivatives(beta)[0]

    def variance_r2(self, beta: float) -> float:
        """``Var_beta(R^2) = A_d''(beta)``."""
        return self.derivatives(beta)[1]

    def evaluate(self, beta: float) -> tuple[float, float, float]:
        """``(A, A', A'')`` at ``beta``."""
        beta = _check_beta(beta)
        if self._on_grid(beta):
            return (self.log_normalizer(beta), *self.derivatives(beta))
        a, da, dda = radial_moments(self.dim, beta, self.quadrature)
        if self.method == "closed_form":
            a = math.log(z_closed_form(self.dim, beta))
        return a, da, dda

    def log_normalizers(self, betas: NDArray) -> NDArray[np.float64]:
        """Vector of ``A_d`` values, one per entry of ``betas``."""
        betas = np.asarray(betas, dtype=np.float64)
        return np.array([self.log_normalizer(b) for b in betas.ravel()]).reshape(betas.shape)


def log_normalizer(model: RadialModel, beta: float) -> float:
    """``A_d(beta) = log Z_d(beta)`` using the model's evaluation method."""
    return model.log_normalizer(beta)


def radial_moment2(model: RadialModel, beta: float) -> float:
    """``m_2(beta) = -A_d'(beta) = E_beta[R^2]``."""
    return model.moment2(beta)


def radial_variance_r2(model: RadialModel, beta: float) -> float:
    """``A_d''(beta) = Var_beta(R^2)``, strictly positive."""
    return model.variance_r2(beta)


def build_grid(
    d: int,
    beta_lo: float,
    beta_hi: float,
    knots: int = 256,
    cfg: QuadratureConfig = DEFAULT_QUADRATURE,
) -> RadialModel:
    """Tabulate ``(A, A', A'')`` at ``knots`` log-spaced values of beta.

    Queries outside ``[beta_lo, beta_hi]`` fall back to direct quadrature.
    """
    _check_dim(d)
    if not (0.0 < beta_lo < beta_hi and math.isfinite(beta_hi)):
        raise DomainError(f"invalid grid range [{beta_lo}, {beta_hi}]")
    if knots < 8:
        raise DomainError(f"a grid needs at least 8 knots, got {knots}")
    betas = np.geomspace(beta_lo, beta_hi, knots)
    betas[0], betas[-1] = beta_lo, beta_hi
    values = np.array([radial_moments(d, b, cfg) for b in betas])
    return RadialModel(d, "grid", betas, values, cfg)


#: Knot density used by :func:`grid_for_box`.
KNOTS_PER_DECADE = 150


def grid_for_box(d: int, box: tuple[float, float], cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> RadialModel:
    """Grid model covering a scale box, with ``KNOTS_PER_DECADE`` knots per decade (at least 64)."""
    lo, hi = float(box[0]), float(box[1])
    if not 0.0 < lo < hi:
        raise DomainError(f"invalid scale box {box}")
    knots = max(64, int(math.ceil(KNOTS_PER_DECADE * math.log10(hi / lo))) + 1)
    return build_grid(d, lo, hi, knots, cfg)


def save_grid(model: RadialModel, path: str | Path) -> None:
    """Write a grid model as text: a header, then ``beta A A' A''`` per line."""
    if model.method != "grid":
        raise ContractError("only grid models can be saved")
    lines = [f"# {GRID_FORMAT} v{GRID_VERSION}", f"# dim={model.dim}", "# beta A dA ddA"]
    for b, row in zip(model.knots, model.values):
        lines.append(" ".join(repr(float(v)) for v in (b, *row)))
    from .io import atomic_write_text

    atomic_write_text(path, "\n".join(lines) + "\n")


def load_grid(path: str | Path) -> RadialModel:
    """Read a grid written by :func:`save_grid`."""
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != f"# {GRID_FORMAT} v{GRID_VERSION}":
        raise ContractError(f"{path}: not a {GRID_FORMAT} v{GRID_VERSION} file")
    dim = None
    rows = []
    for lineno, line in enumerate(text[1:], start=2):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            if line[1:].strip().startswith("dim="):
                dim = int(line.split("=", 1)[1])
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ContractError(f"{path}:{lineno}: expected 4 columns, got {len(parts)}")
        rows.append([float(p) for p in parts])
    if dim is None:
        raise ContractError(f"{path}: missing dim header")
    arr = np.array(rows)
    return RadialModel(dim, "grid", arr[:, 0], arr[:, 1:])
