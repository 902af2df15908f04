"""Per-series base forecasts and rolling one-step-ahead forecast records.

Three built-in model kinds are available:

* ``seasonal_naive`` repeats the last seasonal cycle.
* ``ar_ls`` regresses ``y_t`` on its ``order`` lags (plus an optional
  intercept and seasonal dummies) by ordinary least squares and iterates the
  fitted recursion for multi-step forecasts.
* ``ar_ls_exog`` adds one contemporaneous exogenous regressor to ``ar_ls``.

Forecasts produced elsewhere can be brought in with
:func:`load_external_forecasts`.
"""

import csv
import io
from dataclasses import dataclass
from functools import partial
from typing import NamedTuple

import numpy as np

from .errors import (
    ConfigError,
    DataError,
    DimensionMismatch,
    InsufficientHistory,
    MissingNode,
    NonNumericValue,
    RaggedHorizon,
    SingularDesign,
    UnknownNode,
)
from .fileio import fmt_float, read_text, write_text_atomic
from .hierarchy import Hierarchy, SeriesPanel
from .parallel import pmap

__all__ = [
    "BaseModelSpec",
    "BaseForecast",
    "ForecastPanel",
    "RollingOneStepRecord",
    "fit_forecast",
    "forecast_panel",
    "rolling_one_step",
    "rolling_residuals",
    "write_forecasts",
    "load_external_forecasts",
    "write_rolling_records",
]

KINDS = ("seasonal_naive", "ar_ls", "ar_ls_exog")


@dataclass(frozen=True)
class BaseModelSpec:
    kind: str = "seasonal_naive"
    order: int = 1
    intercept: bool = True
    seasonal_dummies: bool = False
    regressor: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown base model kind {self.kind!r}; expected one of {KINDS}")
        if self.order < 0:
            raise ConfigError("AR order must be >= 0")
        if self.kind == "ar_ls_exog" and not self.regressor:
            raise ConfigError("ar_ls_exog needs a regressor name")

    def min_history(self, s: int) -> int:
        q = 0 if self.kind == "seasonal_naive" else self.order
        return max(2 * s, q + 2)


class BaseForecast(NamedTuple):
    values: np.ndarray
    fallback: bool  # True when a singular design forced seasonal-naive


@dataclass(frozen=True, eq=False)
class ForecastPanel:
    """Forecasts for every node, ``m x h``, made from ``origin`` observations."""

    node_ids: tuple
    values: np.ndarray
    origin: int | None = None
    fallback: tuple = ()  # node ids whose model fell back to seasonal-naive

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != len(self.node_ids) or values.shape[1] < 1:
            raise DimensionMismatch(f"forecast panel has shape {values.shape} for {len(self.node_ids)} nodes")
        if not np.all(np.isfinite(values)):
            raise NonNumericValue("forecast panel contains non-finite values")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "node_ids", tuple(self.node_ids))

    @property
    def h(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class RollingOneStepRecord:
    """One-step-ahead forecasts of all ``m`` series made from the first ``origin`` periods.

    ``failed`` lists nodes whose model could not be fitted at this origin;
    their forecast is NaN and the record is unusable for training.
    """

    origin: int
    forecasts: np.ndarray
    actual_bottom: np.ndarray
    fallback: tuple = ()
    failed: tuple = ()

    @property
    def target_time(self) -> int:
        return self.origin + 1

    @property
    def ok(self) -> bool:
        return not self.failed


def _seasonal_naive(y: np.ndarray, h: int, s: int) -> np.ndarray:
    last = y[len(y) - s:]
    return np.array([last[j % s] for j in range(h)])


def _design(y, t_idx, spec: BaseModelSpec, s: int, x=None) -> np.ndarray:
    """Regressor row for each 0-based target index in ``t_idx``."""
    cols = [y[t_idx - lag] for lag in range(1, spec.order + 1)]
    if spec.intercept:
        cols.append(np.ones(len(t_idx)))
    if spec.seasonal_dummies and s > 1:
        season = t_idx % s
        first = 1 if spec.intercept else 0
        cols.extend((season == d).astype(float) for d in range(first, s))
    if spec.kind == "ar_ls_exog":
        cols.append(x[t_idx])
    return np.column_stack(cols) if cols else np.zeros((len(t_idx), 0))


def _fit_ar_ls(y, spec: BaseModelSpec, s: int, x=None) -> np.ndarray:
    """Least-squares coefficients, ordered as the columns of :func:`_design`."""
    n, q = len(y), spec.order
    t_idx = np.arange(q, n)
    X = _design(y, t_idx, spec, s, x)
    if X.shape[1] == 0:
        raise SingularDesign("model has no regressors")
    if X.shape[0] < X.shape[1]:
        raise InsufficientHistory(f"{X.shape[0]} usable rows for {X.shape[1]} coefficients")
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise SingularDesign("design matrix is rank deficient")
    beta, *_ = np.linalg.lstsq(X, y[t_idx], rcond=None)
    return beta


def fit_forecast(spec: BaseModelSpec, y, h: int, s: int = 1, x=None, x_future=None) -> BaseForecast:
    """Fit ``spec`` to history ``y`` and forecast ``h`` steps.

    Args:
        spec: model specification.
        y: observed history (1-D).
        h: forecast horizon.
        s: seasonal period.
        x: regressor history aligned with ``y`` (``ar_ls_exog`` only).
        x_future: regressor values for the ``h`` forecast periods.

    Raises:
        InsufficientHistory: fewer than ``spec.min_history(s)`` observations,
            or too few rows to estimate the coefficients.
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    if h < 1:
        raise ValueError("h must be >= 1")
    if n < spec.min_history(s):
        raise InsufficientHistory(f"{spec.kind} needs {spec.min_history(s)} observations, got {n}")
    if spec.kind == "seasonal_naive":
        return BaseForecast(_seasonal_naive(y, h, s), False)

    if spec.kind == "ar_ls_exog":
        if x is None or x_future is None:
            raise DataError(f"regressor {spec.regressor!r} values are required")
        x = np.asarray(x, dtype=float)[:n]
        x_future = np.asarray(x_future, dtype=float)
        if len(x) < n or len(x_future) < h:
            raise DataError(f"regressor {spec.regressor!r} does not cover the history and {h} future steps")
        x_all = np.concatenate([x, x_future[:h]])
    else:
        x_all = None

    try:
        beta = _fit_ar_ls(y, spec, s, x_all)
    except SingularDesign:
        return BaseForecast(_seasonal_naive(y, h, s), True)

    path = np.concatenate([y, np.zeros(h)])
    for j in range(h):
        t = n + j
        row = _design(path, np.array([t]), spec, s, x_all)[0]
        path[t] = row @ beta
    out = path[n:]
    if not np.all(np.isfinite(out)):
        return BaseForecast(_seasonal_naive(y, h, s), True)
    return BaseForecast(out, False)


def _spec_list(specs, hierarchy: Hierarchy) -> list[BaseModelSpec]:
    if isinstance(specs, BaseModelSpec):
        return [specs] * hierarchy.m
    if isinstance(specs, dict):
        unknown = set(specs) - set(hierarchy.ids)
        if unknown:
            raise UnknownNode(f"specs given for unknown nodes: {sorted(unknown)}")
        missing = [nid for nid in hierarchy.ids if nid not in specs]
        if missing:
            raise MissingNode(f"no base model spec for node {missing[0]!r}")
        return [specs[nid] for nid in hierarchy.ids]
    specs = list(specs)
    if len(specs) != hierarchy.m:
        raise DimensionMismatch(f"{len(specs)} specs for {hierarchy.m} nodes")
    return specs


def _regressor_slices(spec, panel: SeriesPanel, row: int, origin: int, h: int):
    if spec.kind != "ar_ls_exog":
        return None, None
    if spec.regressor not in panel.regressors:
        raise DataError(f"regressor {spec.regressor!r} not present in the panel")
    x = panel.regressors[spec.regressor][row]
    if origin + h > len(x):
        raise DataError(
            f"regressor {spec.regressor!r} has no values for periods {origin + 1}..{origin + h}"
        )
    return x[:origin], x[origin:origin + h]


def forecast_panel(specs, panel: SeriesPanel, origin: int, h: int) -> ForecastPanel:
    """Base forecasts for all nodes from the first ``origin`` observations."""
    hier = panel.hierarchy
    specs = _spec_list(specs, hier)
    if not 0 < origin <= panel.n:
        raise DataError(f"origin {origin} outside 1..{panel.n}")
    rows, fell_back = [], []
    for i, spec in enumerate(specs):
        x, xf = _regressor_slices(spec, panel, i, origin, h)
        fc = fit_forecast(spec, panel.values[i, :origin], h, panel.s, x, xf)
        rows.append(fc.values)
        if fc.fallback:
            fell_back.append(hier.ids[i])
    return ForecastPanel(tuple(hier.ids), np.vstack(rows), origin, tuple(fell_back))


def _one_record(p: int, specs, panel: SeriesPanel) -> RollingOneStepRecord:
    hier = panel.hierarchy
    out = np.full(hier.m, np.nan)
    fallback, failed = [], []
    for i, spec in enumerate(specs):
        try:
            x, xf = _regressor_slices(spec, panel, i, p, 1)
            fc = fit_forecast(spec, panel.values[i, :p], 1, panel.s, x, xf)
        except (InsufficientHistory, DataError):
            failed.append(hier.ids[i])
            continue
        out[i] = fc.values[0]
        if fc.fallback:
            fallback.append(hier.ids[i])
    actual = panel.values[hier.bottom_indices, p].copy()
    return RollingOneStepRecord(p, out, actual, tuple(fallback), tuple(failed))


def rolling_one_step(specs, panel: SeriesPanel, p_start: int, origin_end: int | None = None,
                     workers: int = 1) -> list[RollingOneStepRecord]:
    """One record per origin ``p`` in ``[p_start, origin_end]``.

    The record at ``p`` is built from observations ``1..p`` only and holds the
    forecasts for period ``p + 1`` together with the observed bottom values at
    ``p + 1``. Fit failures mark the record rather than dropping it.
    """
    if origin_end is None:
        origin_end = panel.n - 1
    if origin_end > panel.n - 1:
        raise DataError(f"origin_end {origin_end} leaves no target inside n={panel.n}")
    if p_start < 1 or p_start > origin_end:
        raise DataError(f"need 1 <= p_start <= origin_end, got {p_start}, {origin_end}")
    specs = _spec_list(specs, panel.hierarchy)
    return pmap(partial(_one_record, specs=specs, panel=panel), range(p_start, origin_end + 1), workers)


def rolling_residuals(records, S: np.ndarray) -> np.ndarray:
    """One-step errors (actual minus forecast) for all nodes, ``m x T``, usable records only."""
    cols = [S @ r.actual_bottom - r.forecasts for r in records if r.ok]
    if not cols:
        return np.zeros((S.shape[0], 0))
    return np.column_stack(cols)


def write_forecasts(fc: ForecastPanel, path):
    """CSV with header ``node_id,step,value``, one row per node and step."""
    lines = ["node_id,step,value"]
    for nid, row in zip(fc.node_ids, fc.values):
        lines.extend(f"{nid},{j + 1},{fmt_float(v)}" for j, v in enumerate(row))
    return write_text_atomic(path, "\n".join(lines) + "\n")


def load_external_forecasts(path, hierarchy: Hierarchy, origin: int | None = None) -> ForecastPanel:
    """Read a ``node_id,step,value`` CSV into a panel ordered like ``hierarchy``."""
    rows = list(csv.reader(io.StringIO(read_text(path))))
    if not rows or [c.strip() for c in rows[0]] != ["node_id", "step", "value"]:
        raise DataError(f"{path}: header must be 'node_id,step,value'")
    known = set(hierarchy.ids)
    cells: dict[str, dict[int, float]] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 3:
            raise DataError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
        nid = row[0].strip()
        if nid not in known:
            raise UnknownNode(f"{path}:{lineno}: node {nid!r} is not in the hierarchy")
        try:
            step = int(row[1])
        except ValueError:
            raise NonNumericValue(f"{path}:{lineno}: bad step {row[1]!r}") from None
        try:
            value = float(row[2])
        except ValueError:
            raise NonNumericValue(f"{path}:{lineno}: bad value {row[2]!r}") from None
        if step in cells.setdefault(nid, {}):
            raise DataError(f"{path}:{lineno}: duplicate step {step} for node {nid!r}")
        cells[nid][step] = value
    for nid in hierarchy.ids:
        if nid not in cells:
            raise MissingNode(f"{path}: no forecasts for node {nid!r}")
    h = len(cells[hierarchy.ids[0]])
    for nid in hierarchy.ids:
        if sorted(cells[nid]) != list(range(1, h + 1)):
            raise RaggedHorizon(f"{path}: node {nid!r} has steps {sorted(cells[nid])}, expected 1..{h}")
    values = np.array([[cells[nid][j] for j in range(1, h + 1)] for nid in hierarchy.ids])
    return ForecastPanel(tuple(hierarchy.ids), values, origin)


def write_rolling_records(records, hierarchy: Hierarchy, path):
    """CSV ``origin,node_id,forecast,actual``; ``actual`` is blank above the bottom level."""
    offset = hierarchy.m - hierarchy.m_k
    lines = ["origin,node_id,forecast,actual"]
    for r in records:
        for i, nid in enumerate(hierarchy.ids):
            actual = fmt_float(r.actual_bottom[i - offset]) if i >= offset else ""
            lines.append(f"{r.origin},{nid},{fmt_float(r.forecasts[i])},{actual}")
    return write_text_atomic(path, "\n".join(lines) + "\n")
