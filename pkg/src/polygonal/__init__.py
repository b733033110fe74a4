"""Polygonal densities on [0, 1]: finite mixtures of triangular densities.

The functional API lives in the submodules (``core``, ``divergence``, ``em``,
``approx``, ``selection``, ``harness``); the scikit-learn style estimators
are :class:`PolygonalMixture` and :class:`PolygonalOrderSelector`.
"""

from importlib.resources import files

from .approx import (
    ApproxResult,
    ConcaveTarget,
    named_target,
    polygonal_from_concave,
    squared_polygonal,
)
from .core import (
    PiecewiseLinear,
    PolygonalParams,
    Sample,
    TriangularMode,
    as_sample,
    derive_seed,
    is_concave,
    log_likelihood,
    poly_cdf,
    poly_pdf,
    poly_quantile,
    poly_sample,
    to_piecewise_linear,
    tri_cdf,
    tri_pdf,
    tri_quantile,
)
from .divergence import DensityFn, hellinger_sq, kl_divergence, sup_distance
from .em import FitConfig, FitResult, em_fit, fit_nested, m_step_mode, permutation_distance
from .estimator import PolygonalMixture, PolygonalOrderSelector
from .selection import PenaltyConstants, SelectionResult, calibrate_kappa, pen_shape, select_g
from .validation import DomainError, NumericalError, PolygonalError

__version__ = "0.1.0"


def data_path(name: str):
    """Path of a bundled data file (``tri05_sample.csv``, ``uniform.json``, ``tri05.json``)."""
    return files(__name__) / "data" / name


__all__ = [
    "ApproxResult",
    "ConcaveTarget",
    "DensityFn",
    "DomainError",
    "FitConfig",
    "FitResult",
    "NumericalError",
    "PenaltyConstants",
    "PiecewiseLinear",
    "PolygonalError",
    "PolygonalMixture",
    "PolygonalOrderSelector",
    "PolygonalParams",
    "Sample",
    "SelectionResult",
    "TriangularMode",
    "as_sample",
    "calibrate_kappa",
    "data_path",
    "derive_seed",
    "em_fit",
    "fit_nested",
    "hellinger_sq",
    "is_concave",
    "kl_divergence",
    "log_likelihood",
    "m_step_mode",
    "named_target",
    "pen_shape",
    "permutation_distance",
    "poly_cdf",
    "poly_pdf",
    "poly_quantile",
    "poly_sample",
    "polygonal_from_concave",
    "select_g",
    "squared_polygonal",
    "sup_distance",
    "to_piecewise_linear",
    "tri_cdf",
    "tri_pdf",
    "tri_quantile",
]
