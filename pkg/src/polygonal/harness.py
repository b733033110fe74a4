"""Seeded simulation experiments producing long-format result tables.

Every experiment writes rows ``experiment,replicate,n,metric,value,ms``. Raw
rows carry the replicate index. Summary rows use ``replicate = -1``, and
summaries across sample sizes also use ``n = 0``. Summaries are computed only
from the raw rows (see :func:`summarize`).

Each ``(n, replicate)`` cell draws its sample and fit seeds from the master
seed and its own indices, so the table does not depend on execution order.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass
from typing import Iterable

import numpy as np

from .approx import named_target, polygonal_from_concave, squared_polygonal
from .core import PolygonalParams, derive_seed, poly_sample
from .divergence import DensityFn, hellinger_sq, kl_divergence
from .em import FitConfig, em_fit, fit_nested, permutation_distance
from .selection import select_with_calibration
from .validation import DomainError, NumericalError, PolygonalError, check_count

logger = logging.getLogger(__name__)

EXPERIMENTS = ("consistency", "hellinger", "selection", "approx-report")
FORMATS = ("csv", "json")
CSV_FIELDS = ("experiment", "replicate", "n", "metric", "value", "ms")
APPROX_TARGETS = ("quad6", "uniform", "sine")

DEFAULT_TRUTH = PolygonalParams([0.5, 0.5], [0.2, 0.8])


@dataclass(frozen=True)
class ReplicateRecord:
    experiment: str
    replicate: int
    n: int
    metric: str
    value: float
    ms: float = 0.0


@dataclass(frozen=True)
class ExperimentConfig:
    """What to run. Loaded from JSON with the same field names.

    ``restarts``, ``tol`` and ``max_iter`` configure every EM fit; ``timing``
    fills the ``ms`` column with wall time (otherwise 0, which keeps the
    output a pure function of the configuration).
    """

    experiment: str
    truth: PolygonalParams = DEFAULT_TRUTH
    n_grid: tuple = (200, 2000, 20000)
    replicates: int = 50
    gamma: int = 5
    g_grid: tuple = (2, 4, 8, 16)
    seed: int = 0
    output: str | None = None
    format: str = "csv"
    restarts: int = 3
    tol: float = 1e-8
    max_iter: int = 500
    deltas: tuple = (0.05, 0.1, 0.2)
    timing: bool = False

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise DomainError(f"experiment must be one of {EXPERIMENTS}; got {self.experiment!r}")
        if self.format not in FORMATS:
            raise DomainError(f"format must be one of {FORMATS}; got {self.format!r}")
        if isinstance(self.truth, dict):
            object.__setattr__(self, "truth", PolygonalParams.from_dict(self.truth))
        if not self.truth.normalized:
            raise DomainError("the generating mixture must be normalized")
        for name in ("n_grid", "g_grid", "deltas"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not self.n_grid or not self.g_grid:
            raise DomainError("n_grid and g_grid must be non-empty")
        for n in self.n_grid:
            check_count(n, "n")
        check_count(self.replicates, "replicates")
        check_count(self.gamma, "gamma")
        check_count(self.restarts, "restarts")

    def fit_config(self, g: int, seed: int) -> FitConfig:
        return FitConfig(g=g, max_iter=self.max_iter, tol=self.tol, restarts=self.restarts, seed=seed)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["truth"] = self.truth.to_dict()
        for name in ("n_grid", "g_grid", "deltas"):
            data[name] = list(data[name])
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise DomainError(f"unknown configuration keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise DomainError(f"malformed experiment configuration: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# Per-cell work
# ---------------------------------------------------------------------------


def _seeds(cfg: ExperimentConfig, n_index: int, replicate: int):
    return derive_seed(cfg.seed, n_index, replicate, 0), derive_seed(cfg.seed, n_index, replicate, 1)


class _Cell:
    """Collects the records of one ``(n, replicate)`` cell."""

    def __init__(self, cfg: ExperimentConfig, replicate: int, n: int):
        self.cfg = cfg
        self.replicate = replicate
        self.n = n
        self.records: list[ReplicateRecord] = []
        self._start = time.perf_counter()

    def add(self, metric: str, value: float):
        ms = (time.perf_counter() - self._start) * 1e3 if self.cfg.timing else 0.0
        self.records.append(ReplicateRecord(self.cfg.experiment, self.replicate, self.n, metric, float(value), ms))


def _consistency_cell(cfg, cell, sample, fit_seed):
    fit = em_fit(sample, cfg.fit_config(cfg.truth.g, fit_seed))
    cell.add("perm_distance", permutation_distance(fit.params, cfg.truth))
    cell.add("loglik", fit.loglik)


def _hellinger_cell(cfg, cell, sample, fit_seed):
    fit = em_fit(sample, cfg.fit_config(cfg.truth.g, fit_seed))
    h2 = hellinger_sq(DensityFn.from_params(cfg.truth), DensityFn.from_params(fit.params))
    cell.add("hellinger", math.sqrt(h2))


def _selection_cell(cfg, cell, sample, fit_seed):
    fits = fit_nested(sample, cfg.gamma, cfg.fit_config(1, fit_seed))
    if cfg.gamma == 1:
        chosen, kappa = fits[0], math.nan
        g_hat = 1
    else:
        try:
            res = select_with_calibration(fits, sample.n)
        except NumericalError as exc:
            logger.warning("replicate %d, n=%d: calibration failed: %s", cell.replicate, cell.n, exc)
            cell.add("calibration_failed", 1.0)
            return
        chosen, kappa, g_hat = res.chosen_fit, res.kappa_prime, res.chosen_g
    cell.add("g_hat", g_hat)
    cell.add("kappa_prime", kappa)
    h2 = hellinger_sq(DensityFn.from_params(cfg.truth), DensityFn.from_params(chosen.params))
    cell.add("hellinger_sq", h2)


_CELLS = {
    "consistency": _consistency_cell,
    "hellinger": _hellinger_cell,
    "selection": _selection_cell,
}


def _run_replicates(cfg: ExperimentConfig) -> list[ReplicateRecord]:
    work = _CELLS[cfg.experiment]
    raw: list[ReplicateRecord] = []
    for i, n in enumerate(cfg.n_grid):
        for r in range(cfg.replicates):
            sample_seed, fit_seed = _seeds(cfg, i, r)
            cell = _Cell(cfg, r, n)
            try:
                work(cfg, cell, poly_sample(cfg.truth, n, sample_seed), fit_seed)
            except PolygonalError as exc:
                logger.warning("replicate %d, n=%d failed: %s", r, n, exc)
                cell.add("fit_error", 1.0)
            raw.extend(cell.records)
    return raw


# ---------------------------------------------------------------------------
# Summaries
# ---------------------------------------------------------------------------


def _by_n(raw: Iterable[ReplicateRecord], metric: str) -> dict:
    out = defaultdict(list)
    for rec in raw:
        if rec.metric == metric and rec.replicate >= 0:
            out[rec.n].append(rec.value)
    return out


def _summary(cfg, n, metric, value):
    return ReplicateRecord(cfg.experiment, -1, n, metric, float(value), 0.0)


def _summarize_consistency(cfg, raw):
    rows = []
    for n, vals in sorted(_by_n(raw, "perm_distance").items()):
        rows.append(_summary(cfg, n, "perm_distance_median", np.median(vals)))
        rows.append(_summary(cfg, n, "perm_distance_p90", np.percentile(vals, 90)))
    return rows


def exceedance_label(delta: float) -> str:
    return f"exceed_{delta:g}"


def _summarize_hellinger(cfg, raw):
    rows = []
    per_n = sorted(_by_n(raw, "hellinger").items())
    exceed = defaultdict(dict)
    for n, vals in per_n:
        vals = np.asarray(vals)
        rows.append(_summary(cfg, n, "hellinger_mean", vals.mean()))
        for d in cfg.deltas:
            frac = float(np.mean(vals >= d))
            exceed[d][n] = frac
            rows.append(_summary(cfg, n, exceedance_label(d), frac))
    for d in cfg.deltas:
        pts = [(n, p) for n, p in sorted(exceed[d].items()) if p > 0.0]
        if len(pts) >= 2:
            ns, ps = np.array(pts, dtype=float).T
            slope = np.polyfit(ns, np.log(ps), 1)[0]
            rows.append(_summary(cfg, 0, f"exceed_slope_{d:g}", slope))
    return rows


def _summarize_selection(cfg, raw):
    rows = []
    h2 = _by_n(raw, "hellinger_sq")
    for n, vals in sorted(_by_n(raw, "g_hat").items()):
        counts = Counter(int(v) for v in vals)
        for g in range(1, cfg.gamma + 1):
            rows.append(_summary(cfg, n, f"g_hat_count_{g}", counts.get(g, 0)))
        mode = max(sorted(counts), key=lambda g: counts[g])
        rows.append(_summary(cfg, n, "g_hat_mode", mode))
        rows.append(_summary(cfg, n, "hellinger_sq_mean", np.mean(h2[n])))
    return rows


_SUMMARIES = {
    "consistency": _summarize_consistency,
    "hellinger": _summarize_hellinger,
    "selection": _summarize_selection,
}


def summarize(cfg: ExperimentConfig, raw: list[ReplicateRecord]) -> list[ReplicateRecord]:
    """Summary rows recomputed from raw replicate rows alone."""
    fn = _SUMMARIES.get(cfg.experiment)
    return fn(cfg, [r for r in raw if r.replicate >= 0]) if fn else []


def canonical_order(records: list[ReplicateRecord]) -> list[ReplicateRecord]:
    """Sort by ``(n, replicate, metric)``, which makes the order independent of execution order."""
    return sorted(records, key=lambda r: (r.n, r.replicate, r.metric))


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


def run_consistency(cfg: ExperimentConfig) -> list[ReplicateRecord]:
    """Parameter distance (up to relabeling) between fit and truth, per ``n``."""
    cfg = replace_experiment(cfg, "consistency")
    raw = _run_replicates(cfg)
    return canonical_order(raw + summarize(cfg, raw))


def run_hellinger(cfg: ExperimentConfig) -> list[ReplicateRecord]:
    """Hellinger distance of the fit, with exceedance fractions per ``n``."""
    cfg = replace_experiment(cfg, "hellinger")
    raw = _run_replicates(cfg)
    return canonical_order(raw + summarize(cfg, raw))


def run_selection(cfg: ExperimentConfig) -> list[ReplicateRecord]:
    """Calibrated choice of ``g`` and the Hellinger risk of the chosen fit."""
    cfg = replace_experiment(cfg, "selection")
    raw = _run_replicates(cfg)
    return canonical_order(raw + summarize(cfg, raw))


def run_approx_report(cfg: ExperimentConfig) -> list[ReplicateRecord]:
    """Approximation error, bound, mass defect and KL of the squared family.

    Rows use the component-grid size ``g`` in the ``n`` column. Raises
    :class:`NumericalError` if an error exceeds its bound or if the error or
    the KL divergence grows with ``g``.
    """
    cfg = replace_experiment(cfg, "approx-report")
    records = []
    for name in APPROX_TARGETS:
        h = named_target(name)
        density = h.as_density()
        errors, kls = [], []
        for g in sorted(cfg.g_grid):
            start = time.perf_counter()
            res = polygonal_from_concave(h, g)
            kl = kl_divergence(density, squared_polygonal(h, g))
            ms = (time.perf_counter() - start) * 1e3 if cfg.timing else 0.0
            for metric, value in (
                ("sup_error", res.sup_error),
                ("bound", res.bound),
                ("mass_defect", abs(res.mass - 1.0)),
                ("kl", kl),
            ):
                records.append(ReplicateRecord(cfg.experiment, 0, g, f"{name}.{metric}", float(value), ms))
            if res.sup_error > res.bound + 1e-10:
                raise NumericalError(f"{name}, g={g}: error {res.sup_error!r} exceeds bound {res.bound!r}")
            errors.append(res.sup_error)
            kls.append(kl)
        if np.any(np.diff(errors) > 1e-12) or np.any(np.diff(kls) > 1e-10):
            raise NumericalError(f"{name}: error or KL does not decrease with g")
    return canonical_order(records)


def replace_experiment(cfg: ExperimentConfig, experiment: str) -> ExperimentConfig:
    if cfg.experiment == experiment:
        return cfg
    data = cfg.to_dict()
    data["experiment"] = experiment
    return ExperimentConfig.from_dict(data)


_RUNNERS = {
    "consistency": run_consistency,
    "hellinger": run_hellinger,
    "selection": run_selection,
    "approx-report": run_approx_report,
}


def run_experiment(cfg: ExperimentConfig) -> list[ReplicateRecord]:
    return _RUNNERS[cfg.experiment](cfg)


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def _fmt(value: float) -> str:
    return repr(float(value))


def table_to_csv(records: list[ReplicateRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for r in records:
        writer.writerow([r.experiment, r.replicate, r.n, r.metric, _fmt(r.value), f"{r.ms:.3f}"])
    return buf.getvalue()


def table_to_json(records: list[ReplicateRecord]) -> str:
    rows = [
        {**asdict(r), "value": r.value if math.isfinite(r.value) else _fmt(r.value)} for r in records
    ]
    return json.dumps(rows, indent=1) + "\n"


def format_table(records: list[ReplicateRecord], fmt: str = "csv") -> str:
    if fmt == "csv":
        return table_to_csv(records)
    if fmt == "json":
        return table_to_json(records)
    raise DomainError(f"format must be one of {FORMATS}; got {fmt!r}")


def read_csv_table(text: str) -> list[ReplicateRecord]:
    reader = csv.DictReader(io.StringIO(text))
    return [
        ReplicateRecord(row["experiment"], int(row["replicate"]), int(row["n"]), row["metric"], float(row["value"]), float(row["ms"]))
        for row in reader
    ]


def metric_values(records, metric: str, n: int | None = None, summary: bool = False) -> list[float]:
    """Values of ``metric``; ``summary`` selects summary rows instead of raw ones."""
    return [
        r.value
        for r in records
        if r.metric == metric and (n is None or r.n == n) and ((r.replicate < 0) == summary)
    ]
