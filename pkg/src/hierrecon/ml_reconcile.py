"""Non-linear reconciliation with one tree ensemble per bottom series.

Workflow:

1. rolling one-step base forecasts for every series give, for each target
   period, ``m`` predictors and the observed bottom values;
2. one :class:`~hierrecon.ensemble.TrainingTable` per bottom series;
3. one ensemble per table, with fixed or tuned hyperparameters;
4. at forecast time each model maps the ``m`` base forecasts of a horizon
   step to its bottom series, and the summing matrix aggregates upward.

Because the upper levels are sums of predicted bottom values, the output is
coherent by construction.
"""

from dataclasses import dataclass
from functools import partial

import numpy as np

from .base_forecast import ForecastPanel, rolling_one_step
from .ensemble import (
    HyperParams,
    SearchSpace,
    TrainingTable,
    fit_ensemble,
    tune_hyperparameters,
)
from .errors import ConfigError, DimensionMismatch, EmptyRecords, ModelCountMismatch
from .hierarchy import SeriesPanel
from .parallel import pmap

__all__ = [
    "TuneConfig",
    "build_training_table",
    "build_training_tables",
    "fit_ml_reconciler",
    "ml_reconcile_forecast",
    "model_seed",
]


@dataclass(frozen=True)
class TuneConfig:
    budget: int = 20
    folds: int = 10
    scope: str = "hierarchy"  # "hierarchy": one shared setting; "series": per bottom model
    space: SearchSpace = SearchSpace()

    def __post_init__(self):
        if self.scope not in ("hierarchy", "series"):
            raise ConfigError(f"tuning scope must be 'hierarchy' or 'series', got {self.scope!r}")


def build_training_table(records, bottom_index: int) -> TrainingTable:
    """Rows ordered by target time; records with failed fits are skipped."""
    usable = sorted((r for r in records if r.ok), key=lambda r: r.target_time)
    if not usable:
        raise EmptyRecords("no usable rolling records")
    m_k = len(usable[0].actual_bottom)
    if not 0 <= bottom_index < m_k:
        raise DimensionMismatch(f"bottom index {bottom_index} outside 0..{m_k - 1}")
    X = np.vstack([r.forecasts for r in usable])
    y = np.array([r.actual_bottom[bottom_index] for r in usable])
    times = np.array([r.target_time for r in usable])
    return TrainingTable(X, y, bottom_index, times)


def build_training_tables(records, m_k: int) -> list[TrainingTable]:
    return [build_training_table(records, j) for j in range(m_k)]


def model_seed(seed: int, bottom_index: int) -> int:
    return int(np.random.SeedSequence([seed, bottom_index]).generate_state(1)[0])


def _fit_one(j, tables, kind, hps, seed):
    return fit_ensemble(kind, tables[j], hps[j], model_seed(seed, j))


def fit_ml_reconciler(panel: SeriesPanel, specs, p_start: int, kind: str = "random_forest",
                      hp: HyperParams = HyperParams(), tune: TuneConfig | None = None, seed: int = 0,
                      origin: int | None = None, records=None, workers: int = 1) -> list:
    """Fit one ensemble per bottom series from rolling one-step forecasts.

    Args:
        panel: observed data; only the first ``origin`` periods are used.
        specs: base model spec(s) for :func:`rolling_one_step`.
        p_start: first rolling origin.
        kind: ``random_forest`` or ``gradient_boosted``.
        hp: hyperparameters used verbatim when ``tune`` is None, and as the
            defaults for fields the tuner does not search.
        tune: tuning settings, or None to skip tuning.
        seed: master seed; bottom model ``j`` uses ``model_seed(seed, j)``.
        origin: forecast origin (default ``panel.n``). Training rows target
            periods ``p_start + 1 .. origin``.
        records: precomputed rolling records to reuse; those with origin at
            or beyond ``origin`` are ignored.
        workers: process count for fitting the bottom models.

    Returns:
        List of ``m_k`` fitted models in bottom-series order.
    """
    origin = panel.n if origin is None else origin
    if records is None:
        records = rolling_one_step(specs, panel, p_start, origin - 1)
    records = [r for r in records if p_start <= r.origin <= origin - 1]
    m_k = panel.hierarchy.m_k
    tables = build_training_tables(records, m_k)

    if tune is None:
        hps = [hp] * m_k
    elif tune.scope == "hierarchy":
        shared = tune_hyperparameters(tables, kind, tune.budget, tune.folds, seed, tune.space, hp, workers=workers)
        hps = [shared] * m_k
    else:
        hps = [tune_hyperparameters(t, kind, tune.budget, tune.folds, model_seed(seed, j), tune.space, hp)
               for j, t in enumerate(tables)]

    return pmap(partial(_fit_one, tables=tables, kind=kind, hps=hps, seed=seed), range(m_k), workers)


def ml_reconcile_forecast(models, base: ForecastPanel, S: np.ndarray) -> ForecastPanel:
    """Predict every bottom series from each horizon step's base forecasts, then aggregate.

    ``models`` needs one object per bottom series with a ``predict(X)``
    method taking an ``h x m`` matrix.
    """
    m, m_k = S.shape
    models = list(models)
    if len(models) != m_k:
        raise ModelCountMismatch(f"{len(models)} models for {m_k} bottom series")
    if base.values.shape[0] != m:
        raise DimensionMismatch(f"base panel has {base.values.shape[0]} rows, S has {m}")
    X = base.values.T
    bottom = np.vstack([np.asarray(mdl.predict(X), dtype=float) for mdl in models])
    return ForecastPanel(base.node_ids, S @ bottom, base.origin, base.fallback)
