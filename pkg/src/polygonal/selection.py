"""Penalized choice of the number of components.

The penalty comes from bracketing-entropy bounds for polygonal mixtures and is
only known up to unknown constants. Those constants are carried in
:class:`PenaltyConstants` (all default to 1). The overall multiplier is
calibrated from data with the slope heuristic's dimension-jump rule.

The criterion minimized is ``-loglik(g) / n + kappa' * pen_shape(g, n)``.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .validation import DomainError, NumericalError, check_count, check_positive

logger = logging.getLogger(__name__)

_LOG_2PIE = math.log(2.0 * math.pi * math.e)
_J_LEAD = 4.0 / 3.0 ** (4.0 / 3.0)
PENALTY_MODES = ("solved", "closed_form")


@dataclass(frozen=True)
class PenaltyConstants:
    c1: float = 1.0
    c2: float = 1.0
    c3: float = 1.0
    kappa: float = 1.0

    def __post_init__(self):
        for name in ("c1", "c2", "c3", "kappa"):
            check_positive(getattr(self, name), name)

    @property
    def c5(self) -> float:
        return _J_LEAD * math.sqrt(2.0**0.25 * self.c3 + 1.0)


DEFAULT_CONSTANTS = PenaltyConstants()


def c4(g: int) -> float:
    """``log g + g log(2 pi e) / 2``."""
    g = check_count(g, "g")
    return math.log(g) + 0.5 * g * _LOG_2PIE


def entropy_bound_concave(epsilon: float, consts: PenaltyConstants = DEFAULT_CONSTANTS) -> float:
    """Bracketing-entropy bound ``2^(1/4) c2 eps^(-1/2)`` for bounded concave roots."""
    epsilon = check_positive(epsilon, "epsilon")
    return 2.0**0.25 * consts.c2 / math.sqrt(epsilon)


def entropy_bound_mixture(g: int, epsilon: float, consts: PenaltyConstants = DEFAULT_CONSTANTS) -> float:
    """Bracketing-entropy bound ``g (2^(1/4) c3 + 1) (3 / eps)^(1/2) + c4(g)``."""
    g = check_count(g, "g")
    epsilon = check_positive(epsilon, "epsilon")
    return g * (2.0**0.25 * consts.c3 + 1.0) * math.sqrt(3.0 / epsilon) + c4(g)


def j_concave(delta: float, consts: PenaltyConstants = DEFAULT_CONSTANTS) -> float:
    """``max(delta, 2^(17/8) sqrt(c2) / 3 * delta^(3/4))`` for ``0 < delta <= 1``."""
    delta = check_positive(delta, "delta")
    if delta > 1.0:
        raise DomainError(f"delta must lie in (0, 1]; got {delta!r}")
    return max(delta, 2.0 ** (17.0 / 8.0) * math.sqrt(consts.c2) / 3.0 * delta**0.75)


def j_mixture(delta: float, g: int, consts: PenaltyConstants = DEFAULT_CONSTANTS) -> float:
    """``4 / 3^(4/3) * sqrt(g (2^(1/4) c3 + 1)) * delta^(3/4) + delta * sqrt(c4(g))``."""
    delta = check_positive(delta, "delta")
    g = check_count(g, "g")
    lead = _J_LEAD * math.sqrt(g * (2.0**0.25 * consts.c3 + 1.0))
    return lead * delta**0.75 + delta * math.sqrt(c4(g))


def solve_delta_g(n: int, g: int, consts: PenaltyConstants = DEFAULT_CONSTANTS) -> float:
    """Positive root of ``sqrt(n) delta^2 = j_mixture(delta, g)``.

    ``j_mixture(delta) / delta^2`` falls strictly from infinity to zero, so
    the root is unique. Found by bisection in ``log delta`` on
    ``(1e-12, 1e3]`` to a relative width of 1e-14.
    """
    n = check_count(n, "n")
    g = check_count(g, "g")
    root_n = math.sqrt(n)

    def excess(d):
        return root_n * d * d - j_mixture(d, g, consts)

    lo, hi = 1e-12, 1e3
    if not (excess(lo) < 0.0 < excess(hi)):
        raise NumericalError(
            f"root not bracketed for n={n}, g={g}: excess({lo})={excess(lo)!r}, excess({hi})={excess(hi)!r}"
        )
    while hi - lo > 1e-14 * hi:
        mid = math.sqrt(lo * hi)
        if mid <= lo or mid >= hi:
            mid = 0.5 * (lo + hi)
        if excess(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _check_sample_size(n: int, g: int):
    if not math.sqrt(n) > math.sqrt(c4(g)):
        raise DomainError(f"sqrt(n) = {math.sqrt(n):.4g} must exceed sqrt(c4(g)) = {math.sqrt(c4(g)):.4g}")


def paper_delta_g(n: int, g: int, consts: PenaltyConstants = DEFAULT_CONSTANTS) -> float:
    """Closed-form ``(c5 sqrt(g) / (sqrt(n) - sqrt(c4(g)))^3)^(4/3)``.

    Kept for comparison with :func:`solve_delta_g`; it does not satisfy the
    defining equation, so it is not used by default.
    """
    n = check_count(n, "n")
    g = check_count(g, "g")
    _check_sample_size(n, g)
    base = consts.c5 * math.sqrt(g) / (math.sqrt(n) - math.sqrt(c4(g))) ** 3
    return base ** (4.0 / 3.0)


def pen_shape(
    g: int, n: int, consts: PenaltyConstants = DEFAULT_CONSTANTS, mode: str = "solved"
) -> float:
    """Penalty shape, the multiplier excluded.

    ``mode="solved"`` uses ``delta_g^2`` from :func:`solve_delta_g` plus
    ``g / n``. ``mode="closed_form"`` uses
    ``(sqrt(g) / (sqrt(n) - sqrt(c4(g)))^3)^(8/3) + g / n``.
    """
    g = check_count(g, "g")
    n = check_count(n, "n")
    _check_sample_size(n, g)
    if mode == "solved":
        first = solve_delta_g(n, g, consts) ** 2
    elif mode == "closed_form":
        first = (math.sqrt(g) / (math.sqrt(n) - math.sqrt(c4(g))) ** 3) ** (8.0 / 3.0)
    else:
        raise DomainError(f"mode must be one of {PENALTY_MODES}; got {mode!r}")
    return first + g / n


def sigma_gamma(gamma: int) -> float:
    """``(e^-1 - e^-(gamma+1)) / (1 - e^-1)``, the sum of ``e^-g`` for ``g = 1..gamma``."""
    gamma = check_count(gamma, "gamma")
    return (math.exp(-1.0) - math.exp(-gamma - 1.0)) / (1.0 - math.exp(-1.0))


# ---------------------------------------------------------------------------
# Selection
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SelectionResult:
    fits: tuple
    n: int
    penalties: np.ndarray
    kappa_prime: float
    chosen_g: int
    criterion: np.ndarray
    kappa_grid: np.ndarray | None = None
    g_path: np.ndarray | None = None

    @property
    def chosen_fit(self):
        return self.fits[self.chosen_g - 1]

    def to_dict(self) -> dict:
        rows = [
            {
                "g": g,
                "loglik": fit.loglik,
                "pen_shape": None if math.isnan(pen) else pen,
                "crit": None if math.isnan(crit) else crit,
                "params": fit.params.to_dict(),
            }
            for g, (fit, pen, crit) in enumerate(zip(self.fits, self.penalties, self.criterion), start=1)
        ]
        return {"n": self.n, "models": rows, "kappa_prime": self.kappa_prime, "chosen_g": self.chosen_g}

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    def path_csv(self) -> str:
        """The selected ``g`` along the calibration grid, as ``kappa,g_hat`` rows."""
        if self.kappa_grid is None:
            raise DomainError("no calibration path was recorded")
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["kappa", "g_hat"])
        for k, g in zip(self.kappa_grid, self.g_path):
            writer.writerow([repr(float(k)), int(g)])
        return buf.getvalue()


def _inputs(fits, n, consts, mode):
    if not fits:
        raise DomainError("no fits supplied")
    n = check_count(n, "n")
    loglik = np.array([float(f.loglik) for f in fits])
    gs = [f.params.g for f in fits]
    if gs != list(range(1, len(fits) + 1)):
        raise DomainError(f"fits must cover g = 1..gamma in order; got {gs}")
    pens = np.full(len(fits), np.nan)
    for i, g in enumerate(gs):
        try:
            pens[i] = pen_shape(g, n, consts, mode)
        except DomainError as exc:
            warnings.warn(f"g={g} excluded from selection: {exc}", stacklevel=3)
    if np.isnan(pens).all():
        raise DomainError(f"n={n} is too small for every candidate g")
    return loglik, pens


def _argmin_g(loglik, pens, n, kappa):
    """Smallest ``g`` minimizing the criterion (1-based)."""
    usable = ~np.isnan(pens)
    if math.isinf(kappa):
        return int(np.flatnonzero(usable)[0]) + 1
    crit = np.where(usable, -loglik / n + kappa * np.where(usable, pens, 0.0), np.inf)
    return int(np.argmin(crit)) + 1


def select_g(
    fits: Sequence,
    n: int,
    kappa_prime: float,
    consts: PenaltyConstants = DEFAULT_CONSTANTS,
    mode: str = "solved",
) -> SelectionResult:
    """Minimize ``-loglik(g) / n + kappa_prime * pen_shape(g, n)`` over the fits.

    ``fits[g - 1]`` must be the fit with ``g`` components. Candidates whose
    penalty is undefined for this ``n`` are skipped with a warning. Ties go to
    the smaller ``g``.
    """
    if not kappa_prime >= 0.0:
        raise DomainError(f"kappa_prime must be nonnegative; got {kappa_prime!r}")
    loglik, pens = _inputs(fits, n, consts, mode)
    if math.isinf(kappa_prime):
        crit = np.where(np.isnan(pens), np.nan, np.inf)
    else:
        crit = -loglik / n + kappa_prime * pens
    chosen = _argmin_g(loglik, pens, n, kappa_prime)
    return SelectionResult(tuple(fits), n, pens, float(kappa_prime), chosen, crit)


def dimension_jump(
    fits: Sequence,
    n: int,
    consts: PenaltyConstants = DEFAULT_CONSTANTS,
    mode: str = "solved",
    grid_size: int = 1000,
    span: tuple = (1e-6, 1e6),
):
    """Path of the selected ``g`` over a log grid of multipliers.

    The grid is centred on the ratio of the log-likelihood spread (per
    observation) to the penalty spread. Returns ``(grid, g_path, kappa_jump)``
    where ``kappa_jump`` is the first grid value after the largest single
    drop in the selected ``g``; among equal drops the earliest wins.
    """
    loglik, pens = _inputs(fits, n, consts, mode)
    usable = ~np.isnan(pens)
    ll_spread = np.ptp(loglik[usable]) / n
    pen_spread = np.ptp(pens[usable])
    if usable.sum() < 2 or ll_spread <= 0.0 or pen_spread <= 0.0:
        raise NumericalError("selected g never changes; use a larger gamma or more data")
    scale = ll_spread / pen_spread
    grid = scale * np.logspace(math.log10(span[0]), math.log10(span[1]), grid_size)
    path = np.array([_argmin_g(loglik, pens, n, k) for k in grid])
    drops = path[:-1] - path[1:]
    if drops.max() <= 0:
        raise NumericalError("selected g never changes; use a larger gamma or more data")
    k = int(np.argmax(drops))
    return grid, path, float(grid[k + 1])


def calibrate_kappa(
    fits: Sequence,
    n: int,
    consts: PenaltyConstants = DEFAULT_CONSTANTS,
    mode: str = "solved",
    factor: float = 2.0,
    grid_size: int = 1000,
    span: tuple = (1e-6, 1e6),
) -> float:
    """Slope-heuristic multiplier: ``factor`` times the dimension-jump location."""
    _, _, jump = dimension_jump(fits, n, consts, mode, grid_size, span)
    return factor * jump


def select_with_calibration(
    fits: Sequence,
    n: int,
    consts: PenaltyConstants = DEFAULT_CONSTANTS,
    mode: str = "solved",
    factor: float = 2.0,
    grid_size: int = 1000,
) -> SelectionResult:
    """Calibrate the multiplier by dimension jump, then select; keeps the path."""
    grid, path, jump = dimension_jump(fits, n, consts, mode, grid_size)
    res = select_g(fits, n, factor * jump, consts, mode)
    return SelectionResult(res.fits, n, res.penalties, res.kappa_prime, res.chosen_g, res.criterion, grid, path)
