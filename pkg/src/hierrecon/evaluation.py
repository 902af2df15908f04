"""Rolling-origin evaluation of reconciliation methods.

At origin ``T = N + i`` (``i = 0..K-1``) base models are fitted on the first
``T`` observations and forecast ``h`` steps; every method reconciles those
forecasts and each series is scored against periods ``T+1..T+h`` with MASE,
RMSSE and AMSE, scaled by its own first ``T`` observations. Scores are
averaged over the series of a level, then over origins; the cross-level
average weights every level equally.
"""

import csv
import io
import json
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from functools import partial
from pathlib import Path
from typing import Callable

import numpy as np

from .base_forecast import BaseModelSpec, ForecastPanel, forecast_panel, rolling_one_step, rolling_residuals
from .errors import ConfigInfeasible, DataError, HierReconError, ZeroDenominator
from .fileio import fmt_float, read_text, write_text_atomic
from .hierarchy import SeriesPanel, coherence_check
from .methods import MethodOptions, apply_method, canonical_method, is_ml, ml_kind, needs_residuals
from .metrics import METRICS
from .ml_reconcile import fit_ml_reconciler
from .parallel import pmap

__all__ = [
    "EvalConfig",
    "EvalReport",
    "CustomMethod",
    "OriginContext",
    "rolling_origin_evaluate",
    "write_report",
    "read_report_csv",
    "render_table",
    "write_per_origin",
    "write_metadata",
    "write_report_files",
]

METRIC_NAMES = ("mase", "rmsse", "amse")


@dataclass(frozen=True)
class EvalConfig:
    """Rolling-origin protocol: ``K`` origins starting after ``N`` observations."""

    N: int
    h: int
    K: int
    s: int = 1
    p_start: int | None = None

    @classmethod
    def for_length(cls, n: int, N: int, h: int, s: int = 1, p_start: int | None = None,
                   K: int | None = None) -> "EvalConfig":
        """Use every available origin (``K = n - N - h + 1``) unless ``K`` is given."""
        cfg = cls(N, h, n - N - h + 1 if K is None else K, s, p_start)
        cfg.check(n)
        return cfg

    def check(self, n: int):
        if self.s < 1:
            raise ConfigInfeasible(f"violated s >= 1 (s = {self.s})")
        if self.h < 1:
            raise ConfigInfeasible(f"violated h >= 1 (h = {self.h})")
        if self.K < 1:
            raise ConfigInfeasible(f"violated K >= 1 (K = {self.K}; N + h = {self.N + self.h} exceeds n + 1 = {n + 1})")
        if self.N + self.h + self.K - 1 > n:
            raise ConfigInfeasible(
                f"violated N + h + K - 1 <= n: {self.N} + {self.h} + {self.K} - 1 = "
                f"{self.N + self.h + self.K - 1} > {n}"
            )
        if self.p_start is not None and not 1 <= self.p_start < self.N:
            raise ConfigInfeasible(f"violated p_start < N: p_start = {self.p_start}, N = {self.N}")
        if self.N <= 2 * self.s:
            raise ConfigInfeasible(f"violated N > 2s: N = {self.N}, s = {self.s}")

    @property
    def origins(self) -> range:
        return range(self.N, self.N + self.K)


@dataclass(frozen=True)
class OriginContext:
    origin: int
    history: SeriesPanel
    base: ForecastPanel
    records: list


@dataclass(frozen=True)
class CustomMethod:
    """A user-supplied method: ``fn(ctx: OriginContext)`` returns an ``m x h`` array or panel."""

    name: str
    fn: Callable


@dataclass
class EvalReport:
    methods: list
    levels: list
    scores: dict  # (method, level, metric) -> mean over origins
    per_origin: list = field(default_factory=list)  # (origin, method, level, metric, value)
    metadata: dict = field(default_factory=dict)
    metrics: tuple = METRIC_NAMES

    @property
    def averages(self) -> dict:
        """(method, metric) -> arithmetic mean of that method's level scores."""
        out = {}
        for method in self.methods:
            for metric in self.metrics:
                vals = [self.scores[(method, lv, metric)] for lv in self.levels if (method, lv, metric) in self.scores]
                if vals:
                    out[(method, metric)] = float(np.mean(vals))
        return out

    def rows(self):
        """(method, level, metric, value) in (metric, method, level) order."""
        for metric in self.metrics:
            for method in self.methods:
                for lv in self.levels:
                    key = (method, lv, metric)
                    if key in self.scores:
                        yield method, lv, metric, self.scores[key]


def _method_name(m) -> str:
    return m.name if isinstance(m, CustomMethod) else m


def _score_panel(panel: SeriesPanel, T: int, fc: np.ndarray, actual: np.ndarray, s: int):
    """Level means per metric plus the count of series skipped for a zero scale."""
    h = panel.hierarchy
    level_scores, skipped = {}, Counter()
    for lv in range(h.k + 1):
        for metric in METRIC_NAMES:
            vals = []
            for i in h.level_indices(lv):
                try:
                    vals.append(METRICS[metric](actual[i], fc[i], panel.values[i, :T], s))
                except ZeroDenominator:
                    skipped[(lv, metric)] += 1
            if vals:
                level_scores[(lv, metric)] = float(np.mean(vals))
    return level_scores, skipped


def _evaluate_origin(i: int, panel: SeriesPanel, methods, cfg: EvalConfig, specs, seed: int,
                     opts: MethodOptions, records, model_cache=None):
    T = cfg.N + i
    history = panel.head(T)
    base = forecast_panel(specs, panel, T, cfg.h)
    actual = panel.values[:, T:T + cfg.h]
    recs = [r for r in records if r.origin <= T - 1] if records is not None else None
    resid = rolling_residuals(recs, panel.hierarchy.S) if recs is not None else None
    out = {"scores": [], "skipped": [], "failures": [], "incoherent": [], "fallback": list(base.fallback)}
    for method in methods:
        name = _method_name(method)
        try:
            if isinstance(method, CustomMethod):
                res = method.fn(OriginContext(T, history, base, recs))
                fc = res.values if isinstance(res, ForecastPanel) else np.asarray(res, dtype=float)
            else:
                models = None
                if is_ml(name):
                    fit_i = i - i % opts.refit_every
                    key = (name, fit_i)
                    if model_cache is not None and key in model_cache:
                        models = model_cache[key]
                    else:
                        T_fit = cfg.N + fit_i
                        models = fit_ml_reconciler(panel.head(T_fit), specs, cfg.p_start, ml_kind(name),
                                                   opts.hp, opts.tune, seed, records=recs)
                        if model_cache is not None:
                            model_cache[key] = models
                fc = apply_method(name, history, base, resid if needs_residuals(name) else None, models, opts).values
        except HierReconError as exc:
            out["failures"].append({"method": name, "origin": T, "error": f"{type(exc).__name__}: {exc}"})
            continue
        if name != "base" and not coherence_check(panel.hierarchy.S, fc, 1e-9):
            out["incoherent"].append({"method": name, "origin": T})
        level_scores, skipped = _score_panel(panel, T, fc, actual, cfg.s)
        for (lv, metric), v in level_scores.items():
            out["scores"].append((T, name, lv, metric, v))
        for (lv, metric), c in skipped.items():
            out["skipped"].append((name, lv, metric, c))
    return out


def rolling_origin_evaluate(panel: SeriesPanel, methods, cfg: EvalConfig, specs=BaseModelSpec(),
                            seed: int = 0, opts: MethodOptions = MethodOptions(), workers: int = 1) -> EvalReport:
    """Score ``methods`` over ``cfg.K`` rolling origins.

    ``methods`` holds method names (see :data:`hierrecon.methods.METHODS`)
    and/or :class:`CustomMethod` objects. A method that raises at some
    origin is dropped from that origin only and the failure is recorded in
    ``metadata["failures"]``.
    """
    cfg.check(panel.n)
    if cfg.s != panel.s:
        raise DataError(f"config seasonal period {cfg.s} differs from the panel's {panel.s}")
    methods = [m if isinstance(m, CustomMethod) else canonical_method(m) for m in methods]
    names = [_method_name(m) for m in methods]
    if len(set(names)) != len(names):
        raise ConfigInfeasible("duplicate method names")
    wants_records = any(not isinstance(m, CustomMethod) and (is_ml(m) or needs_residuals(m)) for m in methods)
    if wants_records and cfg.p_start is None:
        raise ConfigInfeasible("ML and mint-wls/mint-shrinkage methods need p_start")
    records = None
    if cfg.p_start is not None:
        last = cfg.N + cfg.K - 2
        records = rolling_one_step(specs, panel, cfg.p_start, last, workers) if last >= cfg.p_start else []

    run = partial(_evaluate_origin, panel=panel, methods=methods, cfg=cfg, specs=specs, seed=seed,
                  opts=opts, records=records)
    if workers > 1:
        results = pmap(run, range(cfg.K), workers)
    else:
        cache: dict = {}
        results = [run(i, model_cache=cache) for i in range(cfg.K)]

    per_origin, failures, incoherent = [], [], []
    skipped = Counter()
    fallback = Counter()
    for res in results:
        per_origin.extend(res["scores"])
        failures.extend(res["failures"])
        incoherent.extend(res["incoherent"])
        for name, lv, metric, c in res["skipped"]:
            skipped[(name, lv, metric)] += c
        fallback.update(res["fallback"])

    grouped = defaultdict(list)
    for _, name, lv, metric, v in per_origin:
        grouped[(name, lv, metric)].append(v)
    scores = {key: float(np.mean(vals)) for key, vals in grouped.items()}

    levels = list(range(panel.hierarchy.k + 1))
    meta = {
        "config": asdict(cfg),
        "n": panel.n,
        "K": cfg.K,
        "seed": seed,
        "methods": names,
        "levels": levels,
        "zero_scale_exclusions": [
            {"method": n_, "level": lv, "metric": mt, "count": c} for (n_, lv, mt), c in sorted(skipped.items())
        ],
        "failures": failures,
        "incoherent": incoherent,
        "base_fallbacks": dict(sorted(fallback.items())),
        "options": {
            "mo_level": opts.mo_level,
            "mo_scheme": opts.mo_scheme,
            "refit_every": opts.refit_every,
            "hyperparams": asdict(opts.hp),
            "tune": None if opts.tune is None else {
                "budget": opts.tune.budget, "folds": opts.tune.folds, "scope": opts.tune.scope},
        },
    }
    return EvalReport(names, levels, scores, per_origin, meta)


# ---- output ---------------------------------------------------------------

def write_report(report: EvalReport, path):
    lines = ["method,level,metric,value"]
    lines.extend(f"{m},{lv},{mt},{fmt_float(v)}" for m, lv, mt, v in report.rows())
    return write_text_atomic(path, "\n".join(lines) + "\n")


def read_report_csv(path) -> dict:
    """(method, level, metric) -> value from a report CSV."""
    reader = csv.DictReader(io.StringIO(read_text(path)))
    return {(r["method"], int(r["level"]), r["metric"]): float(r["value"]) for r in reader}


def render_table(report: EvalReport, digits: int = 3) -> str:
    """Plain-text table per metric: one row per method, levels then the average as columns."""
    width = max([len("Method")] + [len(m) for m in report.methods]) + 2
    cols = [f"Level {lv}" for lv in report.levels] + ["Average"]
    colw = max(max(len(c) for c in cols), digits + 4) + 2
    avgs = report.averages
    out = []
    for metric in report.metrics:
        out.append(metric.upper())
        header = "Method".ljust(width) + "".join(c.rjust(colw) for c in cols)
        out.append(header)
        out.append("-" * len(header))
        for method in report.methods:
            cells = []
            for lv in report.levels:
                v = report.scores.get((method, lv, metric))
                cells.append("-" if v is None else f"{v:.{digits}f}")
            a = avgs.get((method, metric))
            cells.append("-" if a is None else f"{a:.{digits}f}")
            out.append(method.ljust(width) + "".join(c.rjust(colw) for c in cells))
        out.append("")
    return "\n".join(out)


def write_per_origin(report: EvalReport, path):
    lines = ["origin,method,level,metric,value"]
    lines.extend(f"{o},{m},{lv},{mt},{fmt_float(v)}" for o, m, lv, mt, v in report.per_origin)
    return write_text_atomic(path, "\n".join(lines) + "\n")


def write_metadata(report: EvalReport, path, extra: dict | None = None):
    meta = dict(report.metadata)
    if extra:
        meta.update(extra)
    return write_text_atomic(path, json.dumps(meta, indent=2, sort_keys=True) + "\n")


def write_report_files(report: EvalReport, outdir, extra_metadata: dict | None = None) -> dict:
    """Write ``report.csv``, ``report.txt``, ``per_origin.csv`` and ``metadata.json`` under ``outdir``."""
    outdir = Path(outdir)
    return {
        "report": write_report(report, outdir / "report.csv"),
        "table": write_text_atomic(outdir / "report.txt", render_table(report)),
        "per_origin": write_per_origin(report, outdir / "per_origin.csv"),
        "metadata": write_metadata(report, outdir / "metadata.json", extra_metadata),
    }
