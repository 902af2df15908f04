"""Named reconciliation methods and how to run them on one set of base forecasts."""

from dataclasses import dataclass

from .base_forecast import ForecastPanel
from .ensemble import HyperParams
from .errors import ConfigError, MissingResiduals
from .hierarchy import SeriesPanel
from .ml_reconcile import TuneConfig, ml_reconcile_forecast
from .reconcile import (
    estimate_w,
    g_bottom_up,
    g_middle_out,
    g_top_down,
    mint_g,
    mo_proportions,
    reconcile,
    td_proportions,
)

__all__ = [
    "METHODS",
    "MethodOptions",
    "canonical_method",
    "needs_residuals",
    "is_ml",
    "ml_kind",
    "linear_matrices",
    "apply_method",
]

METHODS = (
    "base",
    "bu",
    "td-td1",
    "td-td2",
    "td-fp",
    "mo",
    "mint-ols",
    "mint-wls",
    "mint-structural",
    "mint-shrinkage",
    "ml-rf",
    "ml-gbt",
)
_ALIASES = {"td": "td-td1", "mint": "mint-shrinkage", "ml": "ml-rf", "mint-shr": "mint-shrinkage",
            "mint-ss": "mint-structural", "ml-xgb": "ml-gbt"}
_TD_SCHEME = {"td-td1": "avg_hist", "td-td2": "hist_avg", "td-fp": "forecasted"}


@dataclass(frozen=True)
class MethodOptions:
    mo_level: int = 1
    mo_scheme: str = "avg_hist"
    hp: HyperParams = HyperParams()
    tune: TuneConfig | None = None
    refit_every: int = 1


def canonical_method(name: str) -> str:
    key = name.strip().lower()
    key = _ALIASES.get(key, key)
    if key not in METHODS:
        raise ConfigError(f"unknown method {name!r}; expected one of {', '.join(METHODS)}")
    return key


def needs_residuals(name: str) -> bool:
    return name in ("mint-wls", "mint-shrinkage")


def is_ml(name: str) -> bool:
    return name.startswith("ml-")


def ml_kind(name: str) -> str:
    return {"ml-rf": "random_forest", "ml-gbt": "gradient_boosted"}[name]


def linear_matrices(name: str, history: SeriesPanel, base: ForecastPanel, residuals=None,
                    opts: MethodOptions = MethodOptions()):
    """The combiner(s) for a linear method and, for MinT, the ``W`` estimate used.

    Returns ``(G, W)`` where ``G`` is a :class:`GMatrix` or, for forecasted
    proportions, a list with one per horizon step; ``W`` is None outside MinT.
    """
    h = history.hierarchy
    if name == "bu":
        return g_bottom_up(h), None
    if name in _TD_SCHEME:
        scheme = _TD_SCHEME[name]
        if scheme == "forecasted":
            return [g_top_down(h, td_proportions(history, scheme, base, j + 1)) for j in range(base.h)], None
        return g_top_down(h, td_proportions(history, scheme)), None
    if name == "mo":
        lvl, scheme = opts.mo_level, opts.mo_scheme
        if scheme == "forecasted":
            return [g_middle_out(h, lvl, mo_proportions(history, lvl, scheme, base, j + 1))
                    for j in range(base.h)], None
        return g_middle_out(h, lvl, mo_proportions(history, lvl, scheme)), None
    if name.startswith("mint-"):
        if needs_residuals(name) and residuals is None:
            raise MissingResiduals(
                f"{name} needs one-step residuals; enable rolling residual capture by setting p_start"
            )
        W = estimate_w(name[5:], h, residuals if needs_residuals(name) else None)
        return mint_g(h.S, W), W
    raise ConfigError(f"{name!r} is not a linear method")


def apply_method(name: str, history: SeriesPanel, base: ForecastPanel, residuals=None, models=None,
                 opts: MethodOptions = MethodOptions()) -> ForecastPanel:
    """Reconcile ``base`` with method ``name``.

    ``history`` is the observed panel up to the forecast origin. ``residuals``
    (``m x T`` one-step errors) are needed by ``mint-wls`` and
    ``mint-shrinkage``; ``models`` (fitted bottom ensembles) by ``ml-*``.
    """
    S = history.hierarchy.S
    if name == "base":
        return base
    if is_ml(name):
        if models is None:
            raise ConfigError(f"{name} needs fitted models")
        return ml_reconcile_forecast(models, base, S)
    G, _ = linear_matrices(name, history, base, residuals, opts)
    return reconcile(S, G, base)
