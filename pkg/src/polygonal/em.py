"""Maximum-likelihood fitting of polygonal mixtures by EM.

The M-step is exact. Mixing weights have the usual closed form, and for a
single triangle the weighted log-likelihood in its mode,

    sum_{x_j < t} w_j log(2 x_j / t) + sum_{x_j >= t} w_j log(2 (1 - x_j) / (1 - t)),

is, between two consecutive data points, a constant minus
``A log t + B log(1 - t)`` with ``A, B >= 0``. That is convex in ``t``, so the
maximum over [0, 1] is attained at 0, 1 or an observation, and all of those
candidates can be scored at once with prefix sums over the sorted data.
"""

from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import PolygonalParams, _tri_pdf, as_sample, derive_seed, make_rng
from .validation import DomainError, check_count, check_positive

logger = logging.getLogger(__name__)

INIT_STRATEGIES = ("quantile", "random")
_TIE_TOL = 1e-12
_DEAD_COMPONENT = 1e-12


@dataclass(frozen=True)
class FitConfig:
    """Settings for :func:`em_fit`.

    The first run starts from ``init`` (quantile initialization by default);
    every further restart uses random modes and Dirichlet(1) weights.
    """

    g: int
    max_iter: int = 500
    tol: float = 1e-8
    restarts: int = 10
    init: str = "quantile"
    seed: int = 0
    weight_floor: float = 1e-6

    def __post_init__(self):
        check_count(self.g, "g")
        check_count(self.max_iter, "max_iter")
        check_count(self.restarts, "restarts")
        check_positive(self.tol, "tol")
        if self.init not in INIT_STRATEGIES:
            raise DomainError(f"init must be one of {INIT_STRATEGIES}; got {self.init!r}")


@dataclass(frozen=True, eq=False)
class FitResult:
    params: PolygonalParams
    loglik: float
    trace: tuple
    iterations: int
    converged: bool
    restart: int = 0
    n_resets: int = 0

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "loglik": self.loglik,
            "trace": list(self.trace),
            "iterations": self.iterations,
            "converged": self.converged,
            "restart": self.restart,
            "n_resets": self.n_resets,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "FitResult":
        return cls(
            params=PolygonalParams.from_dict(data["params"]),
            loglik=float(data["loglik"]),
            trace=tuple(float(v) for v in data.get("trace", ())),
            iterations=int(data.get("iterations", 0)),
            converged=bool(data.get("converged", True)),
            restart=int(data.get("restart", 0)),
            n_resets=int(data.get("n_resets", 0)),
        )


# ---------------------------------------------------------------------------
# E-step
# ---------------------------------------------------------------------------


def e_step(params: PolygonalParams, sample) -> np.ndarray:
    """Posterior component probabilities, shape ``(n, g)``; rows sum to one."""
    x = as_sample(sample).points
    joint = _tri_pdf(x[:, None], params.modes[None, :]) * params.weights[None, :]
    total = joint.sum(axis=1)
    zero = np.flatnonzero(total <= 0.0)
    if zero.size:
        j = int(zero[0])
        raise DomainError(f"observation {j} (x={x[j]!r}) has zero mixture density")
    return joint / total[:, None]


# ---------------------------------------------------------------------------
# M-step for one mode
# ---------------------------------------------------------------------------


class _SortedData:
    """Per-fit constants for the mode update on sorted interior points."""

    def __init__(self, xs):
        self.xs = xs
        self.log_up = np.log(2.0 * xs)
        self.log_down = np.log(2.0 * (1.0 - xs))
        self.log_x = np.log(xs)
        self.log_1mx = np.log1p(-xs)
        # index of the first copy of each value: the count of strictly smaller points
        self.first = np.searchsorted(xs, xs, side="left")

    def joint(self, weights, modes):
        """Weighted component densities, shape ``(n, g)``."""
        xs = self.xs
        out = np.empty((xs.size, modes.size))
        for i, (w, t) in enumerate(zip(weights, modes)):
            if t >= 1.0:
                out[:, i] = (2.0 * w) * xs
                continue
            k = int(np.searchsorted(xs, t, side="left"))
            if k:
                out[:k, i] = (2.0 * w / t) * xs[:k]
            out[k:, i] = (2.0 * w / (1.0 - t)) * (1.0 - xs[k:])
        return out


def _modes_sorted(data: _SortedData, w: np.ndarray) -> np.ndarray:
    """Exact weighted modes for each column of ``w`` (shape ``(n, g)``).

    ``data.xs`` is sorted with ``0 < xs < 1``. Candidates are 0, every
    observation with positive weight, and 1; ties within a relative 1e-12 go
    to the smallest candidate.
    """
    wt = np.ascontiguousarray(w.T)
    g = wt.shape[0]
    stacked = np.empty((3, g, wt.shape[1] + 1))
    stacked[:, :, 0] = 0.0
    np.cumsum(wt, axis=1, out=stacked[0, :, 1:])
    np.cumsum(wt * data.log_up, axis=1, out=stacked[1, :, 1:])
    np.cumsum(wt * data.log_down, axis=1, out=stacked[2, :, 1:])
    cw, ca, cb = stacked
    total_w, total_a, total_b = cw[:, -1:], ca[:, -1:], cb[:, -1:]

    k = data.first
    cwk = cw[:, k]
    inner = ca[:, k] + (total_b - cb[:, k]) - cwk * data.log_x - (total_w - cwk) * data.log_1mx
    inner[wt <= 0.0] = -np.inf
    objective = np.hstack([total_b, inner, total_a])
    best = objective.max(axis=1, keepdims=True)
    ok = objective >= best - _TIE_TOL * np.maximum(1.0, np.abs(best))
    candidates = np.concatenate([[0.0], data.xs, [1.0]])
    return candidates[np.argmax(ok, axis=1)]


def m_step_mode(points, weights) -> float:
    """Mode maximizing the weighted log-likelihood of a single triangle.

    Ties (within a relative 1e-12) go to the smallest candidate.
    """
    x = np.asarray(points, dtype=float).ravel()
    w = np.asarray(weights, dtype=float).ravel()
    if x.shape != w.shape:
        raise DomainError("points and weights must have the same length")
    if (w < 0).any() or not np.isfinite(w).all():
        raise DomainError("weights must be finite and nonnegative")
    keep = w > 0.0
    if not keep.any():
        raise DomainError("m_step_mode needs positive total weight")
    x, w = x[keep], w[keep]
    if x.min() < 0.0 or x.max() > 1.0:
        raise DomainError("points must lie in [0, 1]")
    # an observation at 0 forces mode 0 and one at 1 forces mode 1
    if (x == 0.0).any():
        return 0.0
    if (x == 1.0).any():
        return 1.0
    order = np.argsort(x, kind="stable")
    xs, ws = x[order], w[order]
    return float(_modes_sorted(_SortedData(xs), ws[:, None])[0])


# ---------------------------------------------------------------------------
# EM driver
# ---------------------------------------------------------------------------


def _initial(xs, g, strategy, rng):
    if strategy == "quantile":
        modes = np.quantile(xs, np.arange(1, g + 1) / (g + 1))
        weights = np.full(g, 1.0 / g)
    else:
        modes = rng.random(g)
        weights = rng.dirichlet(np.ones(g))
    return weights, modes


def _loglik(data, weights, modes):
    return float(np.log(data.joint(weights, modes).sum(axis=1)).sum())


def _run(data, weights, modes, cfg, rng):
    xs = data.xs
    n = xs.size
    weights = np.asarray(weights, dtype=float).copy()
    modes = np.asarray(modes, dtype=float).copy()
    resets = 0
    joint = data.joint(weights, modes)
    total = joint.sum(axis=1)
    ll = float(np.log(total).sum())
    trace = [ll]
    converged = False
    iterations = 0
    for iterations in range(1, cfg.max_iter + 1):
        resp = joint / total[:, None]
        mass = resp.sum(axis=0)
        weights = mass / n
        alive = mass >= _DEAD_COMPONENT
        modes[alive] = _modes_sorted(data, resp[:, alive])
        dead = np.flatnonzero(~alive)
        if dead.size:
            weights, modes, accepted = _reset(data, weights, modes, dead, cfg, rng)
            resets += accepted
        joint = data.joint(weights, modes)
        total = joint.sum(axis=1)
        new_ll = float(np.log(total).sum())
        trace.append(new_ll)
        if abs(new_ll - ll) <= cfg.tol * max(1.0, abs(ll)):
            converged = True
            ll = new_ll
            break
        ll = new_ll
    weights = weights / weights.sum()
    return weights, modes, ll, trace, iterations, converged, resets


def _reset(data, weights, modes, dead, cfg, rng):
    """Revive dead components at random modes, keeping the move only if it
    does not lower the likelihood (so the trace stays monotone)."""
    w_new = weights.copy()
    m_new = modes.copy()
    m_new[dead] = rng.random(dead.size)
    w_new[dead] = np.maximum(w_new[dead], cfg.weight_floor)
    w_new /= w_new.sum()
    if _loglik(data, w_new, m_new) >= _loglik(data, weights, modes):
        logger.info("revived %d dead component(s) at random modes", dead.size)
        return w_new, m_new, 1
    logger.info("left %d dead component(s) in place; revival lowered the likelihood", dead.size)
    return weights, modes, 0


def em_fit(sample, cfg: FitConfig, init: PolygonalParams | None = None) -> FitResult:
    """Fit a ``cfg.g``-component mixture; return the best of ``cfg.restarts`` runs.

    Parameters
    ----------
    sample : Sample or array-like
        Observations in [0, 1].
    cfg : FitConfig
    init : PolygonalParams, optional
        Starting point for the first run, replacing the configured strategy.

    Returns
    -------
    FitResult
        Highest final log-likelihood; ties go to the earliest restart.
    """
    sample = as_sample(sample)
    if sample.n < cfg.g:
        raise DomainError(f"need at least g={cfg.g} observations; got {sample.n}")
    if init is not None and init.g != cfg.g:
        raise DomainError(f"init has {init.g} components, expected {cfg.g}")
    data = _SortedData(np.sort(sample.points))
    xs = data.xs

    best = None
    for r in range(cfg.restarts):
        rng = make_rng(derive_seed(cfg.seed, r))
        if r == 0 and init is not None:
            w0, m0 = init.weights, init.modes
        else:
            w0, m0 = _initial(xs, cfg.g, cfg.init if r == 0 else "random", rng)
        w, m, ll, trace, its, conv, resets = _run(data, w0, m0, cfg, rng)
        if best is None or ll > best.loglik:
            best = FitResult(PolygonalParams(w, m), ll, tuple(trace), its, conv, r, resets)
    return best


def fit_nested(sample, gamma: int, cfg: FitConfig) -> list[FitResult]:
    """Fits for ``g = 1..gamma`` whose log-likelihoods never decrease in ``g``.

    Each ``g + 1`` fit also tries a warm start from the ``g`` fit plus one new
    component. If it still ends below the ``g`` fit, the ``g`` fit padded with
    a zero-weight component is returned instead, since it is a member of the
    larger model with the same likelihood.
    """
    sample = as_sample(sample)
    gamma = check_count(gamma, "gamma")
    fits: list[FitResult] = []
    for g in range(1, gamma + 1):
        gcfg = replace(cfg, g=g, seed=derive_seed(cfg.seed, g))
        fit = em_fit(sample, gcfg)
        if fits:
            prev = fits[-1]
            rng = make_rng(derive_seed(cfg.seed, g, 1))
            new_mode = float(rng.choice(sample.points))
            warm_w = np.append(prev.params.weights * (1.0 - 1.0 / g), 1.0 / g)
            warm = PolygonalParams(warm_w / warm_w.sum(), np.append(prev.params.modes, new_mode))
            warm_fit = em_fit(sample, replace(gcfg, restarts=1), init=warm)
            if warm_fit.loglik > fit.loglik:
                fit = warm_fit
            if fit.loglik < prev.loglik:
                padded = PolygonalParams(
                    np.append(prev.params.weights, 0.0),
                    np.append(prev.params.modes, prev.params.modes[-1]),
                )
                fit = replace(prev, params=padded)
        fits.append(fit)
    return fits


# ---------------------------------------------------------------------------
# Label-invariant parameter distance
# ---------------------------------------------------------------------------


def permutation_distance(a: PolygonalParams, b: PolygonalParams) -> float:
    """Euclidean distance between stacked (weights, modes), minimized over
    relabelings of ``b``.

    The cost separates over matched component pairs, so an optimal
    assignment gives the same answer as enumerating permutations; the
    enumeration is kept for ``g <= 7``.
    """
    if a.g != b.g:
        raise DomainError(f"component counts differ: {a.g} vs {b.g}")
    cost = (a.weights[:, None] - b.weights[None, :]) ** 2 + (
        a.modes[:, None] - b.modes[None, :]
    ) ** 2
    g = a.g
    if g <= 7:
        rows = np.arange(g)
        best = min(cost[rows, list(p)].sum() for p in itertools.permutations(range(g)))
    else:
        r, c = linear_sum_assignment(cost)
        best = cost[r, c].sum()
    return float(np.sqrt(best))
