"""Triangular components and polygonal mixtures on the unit interval.

A polygonal density is a finite mixture

    f(x) = sum_i pi_i * f(x; theta_i),

of triangular densities that peak with height 2 at their mode ``theta_i``.
Every such density is continuous, concave and piecewise linear with knots at
the modes, so most quantities here are computed exactly from that
representation.

Random draws use numpy's ``PCG64`` bit generator seeded through a
``SeedSequence``; streams for sub-tasks are derived from the master seed and
integer keys (see :func:`derive_seed`), so results only depend on the seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .validation import (
    DomainError,
    as_output,
    check_count,
    check_sample_array,
    check_unit_interval,
)

#: Observations equal to 0 or 1 are moved this far inside the interval.
BOUNDARY_EPS = 1e-12

_NORMALIZATION_TOL = 1e-12


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TriangularMode:
    """A single triangular density on [0, 1], identified by its mode."""

    theta: float

    def __post_init__(self):
        theta = float(self.theta)
        if not 0.0 <= theta <= 1.0:
            raise DomainError(f"mode must lie in [0, 1]; got {theta!r}")
        object.__setattr__(self, "theta", theta)


def _frozen(arr):
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PolygonalParams:
    """Weights and modes of a ``g``-component polygonal mixture.

    Parameters
    ----------
    weights : array-like of shape (g,)
        Nonnegative mixing weights.
    modes : array-like of shape (g,)
        Component modes in [0, 1]. ``TriangularMode`` instances are accepted.
    normalized : bool, default=True
        When true the weights must sum to one (a density). When false the
        object is a nonnegative combination of triangles, used for
        approximating functions that are not densities.
    """

    weights: np.ndarray
    modes: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        modes = [m.theta if isinstance(m, TriangularMode) else m for m in np.atleast_1d(self.modes)]
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        modes = np.asarray(modes, dtype=float)
        if weights.ndim != 1 or modes.ndim != 1 or weights.size != modes.size:
            raise DomainError("weights and modes must be 1-d and of equal length")
        if weights.size == 0:
            raise DomainError("a mixture needs at least one component")
        if not np.isfinite(weights).all() or (weights < 0).any():
            raise DomainError("weights must be finite and nonnegative")
        check_unit_interval(modes, "modes")
        normalized = bool(self.normalized)
        if normalized and abs(weights.sum() - 1.0) > _NORMALIZATION_TOL:
            raise DomainError(f"weights sum to {weights.sum()!r}, expected 1")
        object.__setattr__(self, "weights", _frozen(weights))
        object.__setattr__(self, "modes", _frozen(modes))
        object.__setattr__(self, "normalized", normalized)

    @property
    def g(self) -> int:
        return int(self.weights.size)

    @property
    def components(self) -> tuple[TriangularMode, ...]:
        return tuple(TriangularMode(t) for t in self.modes)

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    def permuted(self, order: Sequence[int]) -> "PolygonalParams":
        order = np.asarray(order)
        return PolygonalParams(self.weights[order], self.modes[order], self.normalized)

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "modes": self.modes.tolist(),
            "normalized": self.normalized,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PolygonalParams":
        try:
            return cls(data["weights"], data["modes"], data.get("normalized", True))
        except (KeyError, TypeError) as exc:
            raise DomainError(f"malformed mixture description: {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "PolygonalParams":
        return cls.from_dict(json.loads(text))

    def __repr__(self):
        return (
            f"PolygonalParams(weights={self.weights.tolist()}, "
            f"modes={self.modes.tolist()}, normalized={self.normalized})"
        )


@dataclass(frozen=True, eq=False)
class PiecewiseLinear:
    """Continuous piecewise-linear function on [0, 1].

    Between consecutive knots the function is the chord joining the knot
    values. Knots must start at 0, end at 1 and increase strictly.
    """

    knots: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if knots.ndim != 1 or knots.shape != values.shape or knots.size < 2:
            raise DomainError("knots and values must be 1-d, equal length, at least 2")
        if knots[0] != 0.0 or knots[-1] != 1.0:
            raise DomainError("knots must start at 0 and end at 1")
        if (np.diff(knots) <= 0).any():
            raise DomainError("knots must be strictly increasing")
        if not np.isfinite(values).all():
            raise DomainError("values must be finite")
        object.__setattr__(self, "knots", _frozen(knots))
        object.__setattr__(self, "values", _frozen(values))

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.knots)

    def __call__(self, x):
        scalar = np.ndim(x) == 0
        x = check_unit_interval(x)
        return as_output(np.interp(x, self.knots, self.values), scalar)

    def scaled(self, factor: float) -> "PiecewiseLinear":
        return PiecewiseLinear(self.knots, self.values * factor)


@dataclass(frozen=True, eq=False)
class Sample:
    """Observations in the open unit interval.

    Use :func:`as_sample` to build one from raw data; it moves values that
    sit exactly on 0 or 1 inside by ``eps`` and records how many it moved.
    """

    points: np.ndarray
    n_nudged: int = 0

    def __post_init__(self):
        object.__setattr__(self, "points", _frozen(self.points))

    @property
    def n(self) -> int:
        return int(self.points.size)

    def __len__(self):
        return self.n


def as_sample(data, eps: float = BOUNDARY_EPS) -> Sample:
    """Validate raw observations and nudge exact boundary values inward."""
    if isinstance(data, Sample):
        return data
    x = check_sample_array(data, "sample").copy()
    at_zero = x == 0.0
    at_one = x == 1.0
    x[at_zero] = eps
    x[at_one] = 1.0 - eps
    return Sample(x, int(at_zero.sum() + at_one.sum()))


def _points(sample) -> np.ndarray:
    return sample.points if isinstance(sample, Sample) else as_sample(sample).points


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------


def derive_seed(master: int, *keys: int) -> int:
    """Derive a 64-bit seed for the stream identified by ``keys``."""
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


# ---------------------------------------------------------------------------
# Single triangle
# ---------------------------------------------------------------------------


def _theta(comp) -> float:
    return comp.theta if isinstance(comp, TriangularMode) else TriangularMode(comp).theta


def _tri_pdf(x, theta):
    """Broadcasting triangular density; ``x`` and ``theta`` already validated."""
    theta = np.asarray(theta, dtype=float)
    left = (x < theta) | (theta == 1.0)
    # The unused branch may overflow for modes within a few ulps of 0 or 1.
    with np.errstate(over="ignore"):
        up = 2.0 * x / np.where(theta > 0.0, theta, 1.0)
        down = 2.0 * (1.0 - x) / np.where(theta < 1.0, 1.0 - theta, 1.0)
    return np.where(left, up, down)


def _tri_cdf(x, theta):
    theta = np.asarray(theta, dtype=float)
    left = (x <= theta) & (theta > 0.0)
    with np.errstate(over="ignore"):
        up = x * x / np.where(theta > 0.0, theta, 1.0)
        down = 1.0 - (1.0 - x) ** 2 / np.where(theta < 1.0, 1.0 - theta, 1.0)
    return np.where(left, up, down)


def _tri_quantile(u, theta):
    theta = np.asarray(theta, dtype=float)
    return np.where(u <= theta, np.sqrt(u * theta), 1.0 - np.sqrt((1.0 - u) * (1.0 - theta)))


def tri_pdf(x, comp):
    """Density of the triangle with mode ``comp`` (a float or ``TriangularMode``).

    At ``x == theta`` both branches give 2; the descending branch is used.
    """
    scalar = np.ndim(x) == 0
    return as_output(_tri_pdf(check_unit_interval(x), _theta(comp)), scalar)


def tri_cdf(x, comp):
    scalar = np.ndim(x) == 0
    return as_output(_tri_cdf(check_unit_interval(x), _theta(comp)), scalar)


def tri_quantile(u, comp):
    scalar = np.ndim(u) == 0
    return as_output(_tri_quantile(check_unit_interval(u, "u"), _theta(comp)), scalar)


# ---------------------------------------------------------------------------
# Mixtures
# ---------------------------------------------------------------------------


def component_densities(x, params: PolygonalParams) -> np.ndarray:
    """Matrix of unweighted component densities, shape ``(len(x), g)``."""
    x = check_unit_interval(np.atleast_1d(x))
    return _tri_pdf(x[:, None], params.modes[None, :])


def poly_pdf(x, params: PolygonalParams):
    scalar = np.ndim(x) == 0
    return as_output(component_densities(x, params) @ params.weights, scalar)


def poly_cdf(x, params: PolygonalParams):
    scalar = np.ndim(x) == 0
    x = check_unit_interval(np.atleast_1d(x))
    out = _tri_cdf(x[:, None], params.modes[None, :]) @ params.weights
    return as_output(out, scalar)


def poly_quantile(u, params: PolygonalParams, n_iter: int = 64):
    """Invert :func:`poly_cdf` by vectorized bisection on [0, 1]."""
    if not params.normalized:
        raise DomainError("quantiles need a normalized mixture")
    scalar = np.ndim(u) == 0
    u = check_unit_interval(np.atleast_1d(u), "u")
    lo = np.zeros_like(u)
    hi = np.ones_like(u)
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        below = poly_cdf(mid, params) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return as_output(0.5 * (lo + hi), scalar)


def poly_sample(params: PolygonalParams, n: int, seed: int) -> Sample:
    """Draw ``n`` observations by composition: pick a component, invert its CDF."""
    if not params.normalized:
        raise DomainError("sampling needs a normalized mixture")
    n = check_count(n, "n")
    rng = make_rng(seed)
    p = params.weights / params.weights.sum()
    z = rng.choice(params.g, size=n, p=p)
    u = rng.random(n)
    return as_sample(_tri_quantile(u, params.modes[z]))


def log_likelihood(params: PolygonalParams, sample) -> float:
    """Sum of log densities; ``-inf`` when any observation has zero density."""
    dens = poly_pdf(_points(sample), params)
    if (dens <= 0.0).any():
        return float("-inf")
    return float(np.log(dens).sum())


# ---------------------------------------------------------------------------
# Piecewise-linear view
# ---------------------------------------------------------------------------


def to_piecewise_linear(params: PolygonalParams) -> PiecewiseLinear:
    knots = np.unique(np.concatenate([[0.0, 1.0], params.modes]))
    return PiecewiseLinear(knots, poly_pdf(knots, params))


def exact_integral(f: PiecewiseLinear) -> float:
    """Trapezoid sum over the panels, exact for a piecewise-linear function."""
    return float(np.sum(np.diff(f.knots) * (f.values[:-1] + f.values[1:]) * 0.5))


def is_concave(f: PiecewiseLinear, tol: float = 1e-10) -> bool:
    """True when panel slopes do not increase from left to right.

    The tolerance on each slope difference is widened by the rounding error
    a slope picks up from its two knot values on a narrow panel. Slopes are
    compared cross-multiplied by the panel widths, so tiny panels cannot
    overflow.
    """
    if f.knots.size <= 2:
        return True
    w = np.diff(f.knots)
    dv = np.diff(f.values)
    w0, w1 = w[:-1], w[1:]
    rise = dv[1:] * w0 - dv[:-1] * w1
    scale = np.abs(f.values).max()
    allowance = tol * w0 * w1 + 4.0 * np.finfo(float).eps * scale * np.maximum(w0, w1)
    return bool((rise <= allowance).all())
