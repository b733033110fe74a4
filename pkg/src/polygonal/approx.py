"""Polygonal approximation of nonnegative concave functions.

With modes on the uniform grid ``t_i = (i - 1) / g``, ``i = 1..g+1``, a
nonnegative combination of ``g + 1`` triangles reproduces the piecewise-linear
interpolant of ``h`` at those nodes. The weights are

    pi_1     = h(0) / 2,
    pi_{g+1} = h(1) / 2,
    pi_i     = (g - i + 1)(i - 1) / (2 g) * [2 h(t_i) - h(t_{i+1}) - h(t_{i-1})],

nonnegative whenever ``h`` is concave, and their sum is the trapezoid rule
for ``h`` on the grid. The interpolation error is at most
``sup|h''| / (8 g^2)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import PiecewiseLinear, PolygonalParams, make_rng, poly_pdf, tri_pdf
from .divergence import (
    DEFAULT_QUADRATURE,
    DensityFn,
    QuadratureConfig,
    integrate,
    l2_norm_piecewise_linear,
    sup_distance,
)
from .validation import DomainError, check_count

_NEG_WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class ConcaveTarget:
    """A nonnegative concave function on [0, 1] to approximate.

    Parameters
    ----------
    fn : callable
        Vectorized: float array in [0, 1] to array of values.
    sup_h2 : float, optional
        ``sup |h''|`` on [0, 1], when known; enables the error bound.
    name : str
    breakpoints : tuple of float
        Kinks of ``fn``, used when measuring errors and divergences.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    sup_h2: float | None = None
    name: str = ""
    breakpoints: tuple = ()

    def __call__(self, x):
        return np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float)

    def as_density(self) -> DensityFn:
        return DensityFn(self.fn, self.breakpoints, self.name)

    def sqrt(self) -> "ConcaveTarget":
        """``sqrt(h)``; concave whenever ``h`` is concave and nonnegative."""
        fn = self.fn
        return ConcaveTarget(lambda x: np.sqrt(np.maximum(fn(x), 0.0)), None, f"sqrt({self.name})", self.breakpoints)

    def check(self, n_grid: int = 1000, n_pairs: int = 1000, seed: int = 0) -> None:
        """Spot-check nonnegativity on a grid and midpoint concavity on random pairs."""
        grid = np.linspace(0.0, 1.0, n_grid)
        vals = self(grid)
        if (vals < -1e-12).any():
            raise DomainError(f"target {self.name!r} is negative at x={grid[np.argmin(vals)]!r}")
        ab = make_rng(seed).random((2, n_pairs))
        mid = self(0.5 * (ab[0] + ab[1]))
        chord = 0.5 * (self(ab[0]) + self(ab[1]))
        if (mid < chord - 1e-10).any():
            j = int(np.argmin(mid - chord))
            raise DomainError(
                f"target {self.name!r} fails midpoint concavity between {ab[0, j]!r} and {ab[1, j]!r}"
            )


def quadratic_target() -> ConcaveTarget:
    """``6 x (1 - x)``, a density with ``|h''| = 12``."""
    return ConcaveTarget(lambda x: 6.0 * x * (1.0 - x), 12.0, "quad6")


def uniform_target() -> ConcaveTarget:
    return ConcaveTarget(lambda x: np.ones_like(x), 0.0, "uniform")


def sine_target() -> ConcaveTarget:
    """``(pi / 2) sin(pi x)``, a density with ``sup|h''| = pi^3 / 2``."""
    return ConcaveTarget(lambda x: 0.5 * math.pi * np.sin(math.pi * x), math.pi**3 / 2.0, "sine")


def triangle_target(theta: float) -> ConcaveTarget:
    return ConcaveTarget(lambda x: tri_pdf(np.clip(x, 0.0, 1.0), theta), None, f"tri:{theta}", (theta,))


def tabulated_target(x, y, name: str = "table") -> ConcaveTarget:
    """Linear interpolation of tabulated values; the table must span [0, 1]."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    order = np.argsort(x)
    x, y = x[order], y[order]
    if x.size < 2 or x[0] != 0.0 or x[-1] != 1.0:
        raise DomainError("a tabulated target must include x = 0 and x = 1")
    return ConcaveTarget(lambda t: np.interp(t, x, y), None, name, tuple(x))


BUILTIN_TARGETS = {
    "quad6": quadratic_target,
    "uniform": uniform_target,
    "sine": sine_target,
}


def named_target(spec: str) -> ConcaveTarget:
    """Resolve ``quad6``, ``uniform``, ``sine`` or ``tri:<theta>``."""
    if spec in BUILTIN_TARGETS:
        return BUILTIN_TARGETS[spec]()
    if spec.startswith("tri:"):
        try:
            theta = float(spec[4:])
        except ValueError as exc:
            raise DomainError(f"bad triangle mode in {spec!r}") from exc
        if not 0.0 <= theta <= 1.0:
            raise DomainError(f"triangle mode must lie in [0, 1]; got {theta!r}")
        return triangle_target(theta)
    raise DomainError(f"unknown target {spec!r}")


@dataclass(frozen=True, eq=False)
class ApproxResult:
    g: int
    params: PolygonalParams
    interpolant: PiecewiseLinear
    bound: float | None
    sup_error: float | None

    @property
    def mass(self) -> float:
        return self.params.mass

    def to_dict(self) -> dict:
        return {
            "g": self.g,
            "weights": self.params.weights.tolist(),
            "modes": self.params.modes.tolist(),
            "mass": self.mass,
            "bound": self.bound,
            "sup_error": self.sup_error,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def grid_nodes(g: int) -> np.ndarray:
    return np.arange(g + 1) / g


def linear_interpolant(h: ConcaveTarget, g: int) -> PiecewiseLinear:
    g = check_count(g, "g")
    t = grid_nodes(g)
    return PiecewiseLinear(t, h(t))


def approx_error_bound(sup_h2: float, g: int) -> float:
    """Upper bound ``sup_h2 / (8 g^2)`` on the interpolation error."""
    g = check_count(g, "g")
    if sup_h2 < 0:
        raise DomainError(f"sup |h''| must be nonnegative; got {sup_h2!r}")
    return sup_h2 / (8.0 * g * g)


def grid_weights(values: np.ndarray) -> np.ndarray:
    """Triangle weights matching ``values`` at the ``g + 1`` grid nodes."""
    g = values.size - 1
    i = np.arange(2, g + 1)
    second = 2.0 * values[1:-1] - values[2:] - values[:-2]
    inner = (g - i + 1) * (i - 1) / (2.0 * g) * second
    return np.concatenate([[values[0] / 2.0], inner, [values[-1] / 2.0]])


def polygonal_from_concave(h: ConcaveTarget, g: int, check: bool = True, measure: bool = True) -> ApproxResult:
    """Polygonal approximation of ``h`` with ``g + 1`` triangles on the grid.

    Raises
    ------
    DomainError
        If ``g < 2``, if the concavity spot-check fails, or if a weight comes
        out below ``-1e-12`` (which only happens for non-concave input).
    """
    g = check_count(g, "g", minimum=2)
    if check:
        h.check()
    interp = linear_interpolant(h, g)
    weights = grid_weights(interp.values)
    if (weights < -_NEG_WEIGHT_TOL).any():
        i = int(np.argmin(weights))
        raise DomainError(f"weight {i + 1} is {weights[i]!r}; target is not concave on the grid")
    weights = np.maximum(weights, 0.0)
    params = PolygonalParams(weights, grid_nodes(g), normalized=False)
    bound = approx_error_bound(h.sup_h2, g) if h.sup_h2 is not None else None
    result = ApproxResult(g, params, interp, bound, None)
    if measure:
        result = ApproxResult(g, params, interp, bound, measured_sup_error(h, result))
    return result


def measured_sup_error(h: ConcaveTarget, result: ApproxResult) -> float:
    """``sup |h - f|`` for the mixture ``f`` built by :func:`polygonal_from_concave`."""
    params = result.params
    approx = DensityFn(lambda x: poly_pdf(x, params), tuple(params.modes))
    return sup_distance(h.as_density(), approx)


def sqrt_approximant(h: ConcaveTarget, g: int) -> PiecewiseLinear:
    """Unit-L2-norm polygonal approximation of ``sqrt(h)`` on ``g + 1`` nodes."""
    root = h.sqrt()
    u = polygonal_from_concave(root, g, check=True, measure=False)
    norm = l2_norm_piecewise_linear(u.interpolant)
    if norm == 0.0:
        raise DomainError("the approximation of sqrt(h) is identically zero")
    return u.interpolant.scaled(1.0 / norm)


def squared_polygonal(h: ConcaveTarget, g: int, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> DensityFn:
    """Density ``u^2`` where ``u`` approximates ``sqrt(h)`` and has unit L2 norm.

    ``h`` must integrate to one. The result integrates to one exactly, since
    its integral is the squared norm of ``u``.
    """
    edges = np.array(sorted({0.0, 1.0, *h.breakpoints}))
    mass = integrate(h, edges, cfg)
    if abs(mass - 1.0) > 1e-6:
        raise DomainError(f"h integrates to {mass!r}, not 1")
    u = sqrt_approximant(h, g)
    knots, values = u.knots, u.values
    return DensityFn(lambda x: np.interp(x, knots, values) ** 2, tuple(knots), f"squared[{g}]({h.name})")
