"""Command-line entry point: ``hierrecon {forecast,reconcile,evaluate} --config run.ini``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime failure.
"""

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .base_forecast import (
    forecast_panel,
    load_external_forecasts,
    rolling_one_step,
    rolling_residuals,
    write_forecasts,
    write_rolling_records,
)
from .config import RunConfig, load_config, schema_hash
from .ensemble import save_model
from .errors import ComputationError, ConfigError, DataError, HierReconError, IoFailure
from .evaluation import EvalConfig, render_table, rolling_origin_evaluate, write_report_files
from .fileio import write_text_atomic
from .hierarchy import coherence_check, read_hierarchy_csv, read_series_csv
from .methods import apply_method, is_ml, linear_matrices, ml_kind, needs_residuals
from .ml_reconcile import fit_ml_reconciler
from .reconcile import reconcile, write_matrix_csv

__all__ = ["main", "build_parser", "cmd_forecast", "cmd_reconcile", "cmd_evaluate"]

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4


def _load_panel(cfg: RunConfig):
    hier = read_hierarchy_csv(cfg.hierarchy)
    unknown = sorted(set(cfg.node_specs) - set(hier.ids))
    if unknown:
        raise ConfigError(f"[base] overrides name unknown nodes: {', '.join(unknown)}")
    panel = read_series_csv(cfg.series, hier, cfg.seasonal_period, cfg.regressors)
    return hier, panel


def _origin(cfg: RunConfig, panel) -> int:
    origin = panel.n if cfg.origin is None else cfg.origin
    if not 2 * panel.s < origin <= panel.n:
        raise ConfigError(f"[forecast] origin must satisfy 2s < origin <= n={panel.n}, got {origin}")
    return origin


def _records(cfg: RunConfig, panel, origin: int):
    if cfg.p_start is None:
        return None
    if not 1 <= cfg.p_start < origin:
        raise ConfigError(f"[forecast] p_start must satisfy 1 <= p_start < origin={origin}, got {cfg.p_start}")
    return rolling_one_step(cfg.specs(panel.node_ids), panel.head(origin), cfg.p_start, origin - 1, cfg.workers)


def cmd_forecast(cfg: RunConfig) -> dict:
    """Base forecasts at the origin, plus the rolling one-step records when ``p_start`` is set."""
    _, panel = _load_panel(cfg)
    origin = _origin(cfg, panel)
    base = forecast_panel(cfg.specs(panel.node_ids), panel, origin, cfg.horizon)
    out = {"forecasts": write_forecasts(base, cfg.output / "forecasts.csv")}
    records = _records(cfg, panel, origin)
    if records is not None:
        out["rolling"] = write_rolling_records(records, panel.hierarchy, cfg.output / "rolling.csv")
    return out


def cmd_reconcile(cfg: RunConfig) -> dict:
    """One coherent forecast file per method; a failing method is reported and skipped."""
    hier, panel = _load_panel(cfg)
    origin = _origin(cfg, panel)
    specs = cfg.specs(panel.node_ids)
    if cfg.external_forecasts is not None:
        base = load_external_forecasts(cfg.external_forecasts, hier, origin)
    else:
        base = forecast_panel(specs, panel, origin, cfg.horizon)
    history = panel.head(origin)
    records = _records(cfg, panel, origin)
    resid = rolling_residuals(records, hier.S) if records is not None else None

    out, failures = {}, []
    for name in cfg.methods:
        try:
            if is_ml(name):
                if records is None:
                    raise ConfigError(f"{name} needs rolling one-step records; set [forecast] p_start")
                models = fit_ml_reconciler(history, specs, cfg.p_start, ml_kind(name), cfg.options.hp,
                                           cfg.options.tune, cfg.seed, records=records, workers=cfg.workers)
                fc = apply_method(name, history, base, models=models, opts=cfg.options)
                for j, mdl in enumerate(models):
                    out[f"{name}.model.{j}"] = save_model(mdl, cfg.output / f"{name}_model_{j}.txt")
            elif name == "base":
                fc = base
            else:
                G, W = linear_matrices(name, history, base, resid if needs_residuals(name) else None, cfg.options)
                fc = reconcile(hier.S, G, base)
                for j, g in enumerate(G if isinstance(G, list) else [G]):
                    suffix = f"_step{j + 1}" if isinstance(G, list) else ""
                    out[f"{name}.G{suffix}"] = write_matrix_csv(g, cfg.output / f"{name}_G{suffix}.csv")
                if W is not None:
                    out[f"{name}.W"] = write_matrix_csv(W, cfg.output / f"{name}_W.csv")
            if name != "base" and not coherence_check(hier.S, fc.values, 1e-9):
                raise ComputationError(f"{name} produced incoherent forecasts")
        except HierReconError as exc:
            failures.append({"method": name, "error": f"{type(exc).__name__}: {exc}"})
            print(f"error: {name}: {exc}", file=sys.stderr)
            continue
        out[name] = write_forecasts(fc, cfg.output / f"reconciled_{name}.csv")
    if failures:
        out["failures"] = write_text_atomic(cfg.output / "failures.json",
                                            json.dumps(failures, indent=2, sort_keys=True) + "\n")
    return out


def cmd_evaluate(cfg: RunConfig):
    _, panel = _load_panel(cfg)
    if cfg.N is None:
        raise ConfigError("[evaluate] N is required")
    ecfg = EvalConfig.for_length(panel.n, cfg.N, cfg.horizon, panel.s, cfg.p_start, cfg.K)
    report = rolling_origin_evaluate(panel, cfg.methods, ecfg, cfg.specs(panel.node_ids),
                                     0 if cfg.seed is None else cfg.seed, cfg.options, cfg.workers)
    files = write_report_files(report, cfg.output, {"version": __version__, "schema": schema_hash()})
    return files, report


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hierrecon", description="Hierarchical forecast reconciliation.")
    p.add_argument("--version", action="version", version=f"hierrecon {__version__} (config schema {schema_hash()})")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("forecast", "write base forecasts"),
                        ("reconcile", "write reconciled forecasts per method"),
                        ("evaluate", "rolling-origin evaluation report")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--workers", type=int)
        sp.add_argument("--out", type=Path)
        sp.add_argument("--method", action="append", default=[], help="repeatable; replaces [methods] names")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, {"seed": args.seed, "workers": args.workers,
                                        "output": args.out, "methods": args.method})
        if args.command == "forecast":
            files = cmd_forecast(cfg)
        elif args.command == "reconcile":
            files = cmd_reconcile(cfg)
        else:
            files, report = cmd_evaluate(cfg)
            print(render_table(report))
        for f in files.values():
            print(f)
        if "failures" in files:
            return EXIT_RUNTIME
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ComputationError, IoFailure, HierReconError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
