"""scikit-learn compatible estimators wrapping the functional API."""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.base import BaseEstimator, DensityMixin
from sklearn.utils.validation import check_is_fitted

from .core import PolygonalParams, as_sample, poly_cdf, poly_pdf, poly_sample
from .em import FitConfig, e_step, em_fit, fit_nested
from .selection import DEFAULT_CONSTANTS, select_g, select_with_calibration
from .validation import DomainError, check_sample_array


def _seed(random_state) -> int:
    """Turn an sklearn-style ``random_state`` into a 64-bit seed."""
    if random_state is None:
        return int(np.random.SeedSequence().generate_state(1, dtype=np.uint64)[0])
    if isinstance(random_state, numbers.Integral):
        return int(random_state)
    if isinstance(random_state, np.random.RandomState):
        return int(random_state.randint(np.iinfo(np.int32).max))
    if isinstance(random_state, np.random.Generator):
        return int(random_state.integers(np.iinfo(np.int64).max))
    raise ValueError(f"{random_state!r} cannot be used to seed a generator")


class _PolygonalDensity(DensityMixin, BaseEstimator):
    """Shared density methods; subclasses set ``params_``."""

    def score_samples(self, X):
        """Log density at each observation (``-inf`` where it is zero)."""
        check_is_fitted(self, "params_")
        dens = poly_pdf(check_sample_array(X), self.params_)
        with np.errstate(divide="ignore"):
            return np.log(dens)

    def score(self, X, y=None):
        """Mean log-likelihood per observation."""
        return float(np.mean(self.score_samples(X)))

    def pdf(self, X):
        check_is_fitted(self, "params_")
        return poly_pdf(check_sample_array(X), self.params_)

    def cdf(self, X):
        check_is_fitted(self, "params_")
        return poly_cdf(check_sample_array(X), self.params_)

    def predict_proba(self, X):
        check_is_fitted(self, "params_")
        return e_step(self.params_, as_sample(check_sample_array(X), self.boundary_eps))

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)

    def sample(self, n_samples=1, random_state=None):
        check_is_fitted(self, "params_")
        return poly_sample(self.params_, n_samples, _seed(random_state)).points.copy()


class PolygonalMixture(_PolygonalDensity):
    """Polygonal mixture density on [0, 1] fitted by EM.

    Parameters
    ----------
    n_components : int, default=1
    max_iter : int, default=500
    tol : float, default=1e-8
        Stop when the relative change in log-likelihood falls below this.
    n_init : int, default=10
        Number of EM runs; the best log-likelihood is kept.
    init_params : {"quantile", "random"}, default="quantile"
        Initialization of the first run. Later runs are random.
    random_state : int, Generator, RandomState or None
    boundary_eps : float, default=1e-12
        Observations exactly at 0 or 1 are moved this far inside.

    Attributes
    ----------
    params_ : PolygonalParams
    weights_, modes_ : ndarray of shape (n_components,)
    fit_result_ : FitResult
    converged_ : bool
    n_iter_ : int
    loglik_ : float
        Total log-likelihood of the training data.
    n_boundary_nudged_ : int
    """

    def __init__(
        self,
        n_components=1,
        *,
        max_iter=500,
        tol=1e-8,
        n_init=10,
        init_params="quantile",
        random_state=None,
        boundary_eps=1e-12,
    ):
        self.n_components = n_components
        self.max_iter = max_iter
        self.tol = tol
        self.n_init = n_init
        self.init_params = init_params
        self.random_state = random_state
        self.boundary_eps = boundary_eps

    def _config(self, g=None):
        return FitConfig(
            g=self.n_components if g is None else g,
            max_iter=self.max_iter,
            tol=self.tol,
            restarts=self.n_init,
            init=self.init_params,
            seed=_seed(self.random_state),
        )

    def fit(self, X, y=None):
        sample = as_sample(check_sample_array(X), self.boundary_eps)
        result = em_fit(sample, self._config())
        self._set_result(result, sample)
        return self

    def _set_result(self, result, sample):
        self.fit_result_ = result
        self.params_ = result.params
        self.weights_ = result.params.weights.copy()
        self.modes_ = result.params.modes.copy()
        self.converged_ = result.converged
        self.n_iter_ = result.iterations
        self.loglik_ = result.loglik
        self.n_boundary_nudged_ = sample.n_nudged
        self.n_features_in_ = 1

    @classmethod
    def from_params(cls, params: PolygonalParams, **kwargs) -> "PolygonalMixture":
        """An already-fitted estimator with the given parameters."""
        if not params.normalized:
            raise DomainError("estimators need a normalized mixture")
        est = cls(n_components=params.g, **kwargs)
        est.params_ = params
        est.weights_ = params.weights.copy()
        est.modes_ = params.modes.copy()
        est.n_features_in_ = 1
        return est


class PolygonalOrderSelector(_PolygonalDensity):
    """Choose the number of components by penalized likelihood.

    Fits ``g = 1..max_components`` and minimizes
    ``-loglik / n + kappa * pen_shape(g, n)``. With ``kappa=None`` the
    multiplier is calibrated by the dimension-jump slope heuristic.

    Attributes
    ----------
    selection_ : SelectionResult
    n_components_ : int
    best_estimator_ : PolygonalMixture
    params_ : PolygonalParams
    """

    def __init__(
        self,
        max_components=5,
        *,
        kappa=None,
        penalty="solved",
        constants=DEFAULT_CONSTANTS,
        max_iter=500,
        tol=1e-8,
        n_init=10,
        random_state=None,
        boundary_eps=1e-12,
    ):
        self.max_components = max_components
        self.kappa = kappa
        self.penalty = penalty
        self.constants = constants
        self.max_iter = max_iter
        self.tol = tol
        self.n_init = n_init
        self.random_state = random_state
        self.boundary_eps = boundary_eps

    def fit(self, X, y=None):
        sample = as_sample(check_sample_array(X), self.boundary_eps)
        cfg = FitConfig(g=1, max_iter=self.max_iter, tol=self.tol, restarts=self.n_init, seed=_seed(self.random_state))
        fits = fit_nested(sample, self.max_components, cfg)
        if self.kappa is None:
            sel = select_with_calibration(fits, sample.n, self.constants, self.penalty)
        else:
            sel = select_g(fits, sample.n, self.kappa, self.constants, self.penalty)
        self.selection_ = sel
        self.fits_ = fits
        self.n_components_ = sel.chosen_g
        best = PolygonalMixture(
            sel.chosen_g, max_iter=self.max_iter, tol=self.tol, n_init=self.n_init, boundary_eps=self.boundary_eps
        )
        best._set_result(sel.chosen_fit, sample)
        self.best_estimator_ = best
        self.params_ = best.params_
        self.n_features_in_ = 1
        return self
